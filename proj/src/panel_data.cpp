#include "geesub/panel_data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>
#include <unordered_map>

#include "geesub/error.hpp"

namespace geesub {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) {
      field.remove_prefix(1);
    }
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) {
      field.remove_suffix(1);
    }
    fields.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorKind::kParse, "row " + std::to_string(line_no) + ", column '" +
                                       std::string(column) + "': non-numeric value '" +
                                       std::string(field) + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::kParse, "row " + std::to_string(line_no) + ", column '" +
                                       std::string(column) + "': non-finite value");
  }
  return value;
}

void append_number(std::string& out, double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, res.ptr);
}

}  // namespace

PanelDataset::PanelDataset(std::vector<std::string> ids, std::size_t m, std::size_t p,
                           Family family, std::vector<double> x, std::vector<double> y,
                           std::vector<double> obs,
                           std::vector<std::string> covariate_names)
    : ids_(std::move(ids)),
      m_(m),
      p_(p),
      family_(family),
      x_(std::move(x)),
      y_(std::move(y)),
      obs_(std::move(obs)),
      names_(std::move(covariate_names)) {
  const std::size_t n = ids_.size();
  if (n < 2) throw Error(ErrorKind::kStructure, "panel needs at least 2 subjects");
  if (m_ < 1) throw Error(ErrorKind::kStructure, "panel needs at least 1 observation per subject");
  if (p_ < 1) throw Error(ErrorKind::kStructure, "panel needs at least 1 covariate");
  if (x_.size() != n * m_ * p_ || y_.size() != n * m_) {
    throw Error(ErrorKind::kStructure, "design/response sizes do not match n*m*p / n*m");
  }
  if (obs_.empty()) {
    obs_.resize(n * m_);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m_; ++j) obs_[i * m_ + j] = static_cast<double>(j + 1);
    }
  } else if (obs_.size() != n * m_) {
    throw Error(ErrorKind::kStructure, "observation index size does not match n*m");
  }
  if (names_.empty()) {
    for (std::size_t k = 0; k < p_; ++k) names_.push_back("x" + std::to_string(k + 1));
  } else if (names_.size() != p_) {
    throw Error(ErrorKind::kStructure, "covariate name count does not match p");
  }
  for (double v : x_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kData, "non-finite covariate value");
  }
  const ResponseFamily fam{family_};
  for (std::size_t k = 0; k < y_.size(); ++k) {
    if (!fam.in_support(y_[k])) {
      throw Error(ErrorKind::kData,
                  "response " + std::to_string(y_[k]) + " of subject '" + ids_[k / m_] +
                      "' is outside the support of " + std::string(to_string(family_)));
    }
  }
}

PanelDataset read_csv(std::istream& in, Family family) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    for (auto f : split_fields(line)) header.emplace_back(f);
    break;
  }
  if (header.size() < 4 || header[0] != "id" || header[1] != "obs" || header[2] != "y") {
    throw Error(ErrorKind::kStructure, "header must be 'id,obs,y,x1,...,xp'");
  }
  const std::size_t p = header.size() - 3;

  struct Row {
    double obs;
    double y;
    std::size_t line_no;
    std::vector<double> x;
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<Row>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::kParse, "row " + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      throw Error(ErrorKind::kParse, "row " + std::to_string(line_no) + ": empty id");
    }
    Row row;
    row.line_no = line_no;
    row.obs = parse_number(fields[1], line_no, "obs");
    row.y = parse_number(fields[2], line_no, "y");
    row.x.reserve(p);
    for (std::size_t k = 0; k < p; ++k) {
      row.x.push_back(parse_number(fields[3 + k], line_no, header[3 + k]));
    }
    std::string id(fields[0]);
    auto [it, inserted] = index.try_emplace(id, ids.size());
    if (inserted) {
      ids.push_back(id);
      rows.emplace_back();
    }
    rows[it->second].push_back(std::move(row));
  }
  if (ids.empty()) throw Error(ErrorKind::kStructure, "no data rows");

  const std::size_t m = rows.front().size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (rows[i].size() != m) {
      throw Error(ErrorKind::kStructure,
                  "unbalanced panel: subject '" + ids[i] + "' has " +
                      std::to_string(rows[i].size()) + " rows, expected " + std::to_string(m));
    }
    std::stable_sort(rows[i].begin(), rows[i].end(),
                     [](const Row& a, const Row& b) { return a.obs < b.obs; });
    for (std::size_t j = 1; j < m; ++j) {
      if (rows[i][j].obs == rows[i][j - 1].obs) {
        throw Error(ErrorKind::kStructure, "subject '" + ids[i] + "' repeats obs value at row " +
                                               std::to_string(rows[i][j].line_no));
      }
    }
  }

  const std::size_t n = ids.size();
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> obs;
  x.reserve(n * m * p);
  y.reserve(n * m);
  obs.reserve(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (const Row& row : rows[i]) {
      const ResponseFamily fam{family};
      if (!fam.in_support(row.y)) {
        throw Error(ErrorKind::kData, "row " + std::to_string(row.line_no) + ": response " +
                                          std::to_string(row.y) + " outside the support of " +
                                          std::string(to_string(family)));
      }
      x.insert(x.end(), row.x.begin(), row.x.end());
      y.push_back(row.y);
      obs.push_back(row.obs);
    }
  }
  std::vector<std::string> names(header.begin() + 3, header.end());
  return PanelDataset(std::move(ids), m, p, family, std::move(x), std::move(y), std::move(obs),
                      std::move(names));
}

PanelDataset load_csv(const std::filesystem::path& path, Family family) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  return read_csv(in, family);
}

void write_csv(const PanelDataset& data, std::ostream& out) {
  std::string buf = "id,obs,y";
  for (const auto& name : data.covariate_names()) buf += "," + name;
  buf += '\n';
  const std::size_t m = data.m();
  const std::size_t p = data.p();
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto xi = data.subject_x(i);
    const auto yi = data.subject_y(i);
    const auto oi = data.subject_obs(i);
    for (std::size_t j = 0; j < m; ++j) {
      buf += data.subject_id(i);
      buf += ',';
      append_number(buf, oi[j]);
      buf += ',';
      append_number(buf, yi[j]);
      for (std::size_t k = 0; k < p; ++k) {
        buf += ',';
        append_number(buf, xi[j * p + k]);
      }
      buf += '\n';
    }
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

void write_csv(const PanelDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  write_csv(data, out);
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

ConditionReport validate_conditions(const PanelDataset& data) {
  const std::size_t p = data.p();
  const std::size_t rows = data.n() * data.m();
  ConditionReport report;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      data.x().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  report.max_row_norm = x.rowwise().norm().maxCoeff();
  const Eigen::MatrixXd gram = (x.transpose() * x) / static_cast<double>(data.n());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.max_eigenvalue = eig.eigenvalues().maxCoeff();
  report.near_singular = report.min_eigenvalue < kNearSingularEigenvalue;
  return report;
}

}  // namespace geesub
