#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "geesub/family.hpp"

namespace geesub {

/// Balanced longitudinal design: n subjects, m observations each, p
/// covariates. Immutable after construction; subject blocks are contiguous
/// row-major m x p slices, so access by subject index is O(1).
class PanelDataset {
 public:
  /// Validates and takes ownership. `x` holds n*m*p values (subject-major,
  /// then observation, then covariate); `y` holds n*m values. `obs` may be
  /// empty, in which case observations are numbered 1..m.
  PanelDataset(std::vector<std::string> ids, std::size_t m, std::size_t p,
               Family family, std::vector<double> x, std::vector<double> y,
               std::vector<double> obs = {},
               std::vector<std::string> covariate_names = {});

  std::size_t n() const { return ids_.size(); }
  std::size_t m() const { return m_; }
  std::size_t p() const { return p_; }
  Family family() const { return family_; }

  std::span<const double> subject_x(std::size_t i) const {
    return {x_.data() + i * m_ * p_, m_ * p_};
  }
  std::span<const double> subject_y(std::size_t i) const {
    return {y_.data() + i * m_, m_};
  }
  std::span<const double> subject_obs(std::size_t i) const {
    return {obs_.data() + i * m_, m_};
  }
  const std::string& subject_id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  std::span<const double> x() const { return x_; }
  std::span<const double> y() const { return y_; }

 private:
  std::vector<std::string> ids_;
  std::size_t m_;
  std::size_t p_;
  Family family_;
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> obs_;
  std::vector<std::string> names_;
};

/// Reads the long format `id,obs,y,x1,...,xp`. Subjects keep their order of
/// first appearance; rows within a subject are ordered by `obs`.
PanelDataset read_csv(std::istream& in, Family family);
PanelDataset load_csv(const std::filesystem::path& path, Family family);

void write_csv(const PanelDataset& data, std::ostream& out);
void write_csv(const PanelDataset& data, const std::filesystem::path& path);

struct ConditionReport {
  double max_row_norm = 0.0;       // max over i, j of ||x_ij||
  double min_eigenvalue = 0.0;     // of (1/n) sum_i X_i^T X_i
  double max_eigenvalue = 0.0;
  bool near_singular = false;      // min_eigenvalue < 1e-8
};

/// Advisory design diagnostics; never throws on a valid dataset.
ConditionReport validate_conditions(const PanelDataset& data);

inline constexpr double kNearSingularEigenvalue = 1e-8;

}  // namespace geesub
