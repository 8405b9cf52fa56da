#include "countmix/data.hpp"

#include "countmix/errors.hpp"
#include "countmix/format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace countmix {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

CovariateMask CovariateMask::from_indices(std::size_t p, const std::vector<int>& one_based) {
  std::vector<bool> bits(p, false);
  for (int j : one_based) {
    if (j < 1 || static_cast<std::size_t>(j) > p)
      throw DimensionError("covariate index " + std::to_string(j) + " outside 1.." +
                           std::to_string(p));
    bits[static_cast<std::size_t>(j - 1)] = true;
  }
  return CovariateMask(std::move(bits));
}

CovariateMask CovariateMask::parse(std::string_view text, std::size_t p) {
  text = trim(text);
  if (text == "none") return none(p);
  if (text == "all") return all(p);
  std::vector<int> idx;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto stop = std::min(text.find(',', start), text.size());
    const auto tok = trim(text.substr(start, stop - start));
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
      throw InputError("malformed covariate mask '" + std::string(text) + "'");
    idx.push_back(v);
    start = stop + 1;
  }
  return from_indices(p, idx);
}

std::size_t CovariateMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

std::vector<int> CovariateMask::indices() const {
  std::vector<int> out;
  for (std::size_t j = 0; j < bits_.size(); ++j)
    if (bits_[j]) out.push_back(static_cast<int>(j + 1));
  return out;
}

std::string CovariateMask::label(std::string_view sep) const {
  const auto idx = indices();
  if (idx.empty()) return "none";
  std::string out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k) out += sep;
    out += std::to_string(idx[k]);
  }
  return out;
}

std::string CovariateMask::bitstring() const {
  std::string s;
  for (bool b : bits_) s += b ? '1' : '0';
  return s;
}

Dataset make_dataset(Vector y, const Matrix& covariates, std::vector<std::string> names,
                     std::string outcome_name) {
  if (covariates.rows() != y.size())
    throw DimensionError("covariate rows do not match outcome length");
  if (static_cast<Eigen::Index>(names.size()) != covariates.cols())
    throw DimensionError("covariate names do not match covariate columns");
  if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
    throw SchemaError("covariate names must be unique");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y[i] >= 0) || y[i] != std::floor(y[i]) || !std::isfinite(y[i]))
      throw ParseError("outcome must be a non-negative integer", static_cast<std::size_t>(i));
  }
  if (!covariates.allFinite()) throw InputError("covariates contain non-finite values");
  Dataset d;
  d.y = std::move(y);
  d.X.resize(covariates.rows(), covariates.cols() + 1);
  d.X.col(0).setOnes();
  d.X.rightCols(covariates.cols()) = covariates;
  d.names = std::move(names);
  d.outcome_name = std::move(outcome_name);
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& outcome_col,
                 const std::vector<std::string>& covariate_cols) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty())
    throw EmptyDataError("data file " + path.string() + " is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = std::string(trim(h));
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ycol = column_of(outcome_col);
  std::vector<std::size_t> xcols;
  for (const auto& c : covariate_cols) xcols.push_back(column_of(c));

  std::vector<double> ys;
  std::vector<std::vector<double>> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       row);
    double yv = 0;
    if (!parse_double(fields[ycol], yv) || yv < 0 || yv != std::floor(yv))
      throw ParseError("outcome '" + fields[ycol] + "' is not a non-negative integer", row);
    ys.push_back(yv);
    std::vector<double> xs(xcols.size());
    for (std::size_t k = 0; k < xcols.size(); ++k) {
      if (!parse_double(fields[xcols[k]], xs[k]))
        throw ParseError("covariate '" + covariate_cols[k] + "' value '" + fields[xcols[k]] +
                             "' is missing or not a number",
                         row);
    }
    rows.push_back(std::move(xs));
  }
  if (ys.empty()) throw EmptyDataError("data file " + path.string() + " has no rows");

  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto p = static_cast<Eigen::Index>(xcols.size());
  Vector y = Eigen::Map<const Vector>(ys.data(), n);
  Matrix cov(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) cov(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return make_dataset(std::move(y), cov, covariate_cols, outcome_col);
}

std::string to_csv(const Dataset& d) {
  std::ostringstream out;
  out << d.outcome_name;
  for (const auto& n : d.names) out << ',' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    out << format_shortest(d.y[i]);
    for (Eigen::Index j = 1; j < d.X.cols(); ++j) out << ',' << format_shortest(d.X(i, j));
    out << '\n';
  }
  return out.str();
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, to_csv(d));
}

Dataset apply_mask(const Dataset& d, const CovariateMask& m) {
  if (static_cast<Eigen::Index>(m.size()) != d.p())
    throw DimensionError("mask length " + std::to_string(m.size()) + " does not match p=" +
                         std::to_string(d.p()));
  Dataset out;
  out.y = d.y;
  out.outcome_name = d.outcome_name;
  const auto keep = static_cast<Eigen::Index>(m.count());
  out.X.resize(d.n(), keep + 1);
  out.X.col(0) = d.X.col(0);
  Eigen::Index k = 1;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!m[j]) continue;
    out.X.col(k++) = d.X.col(static_cast<Eigen::Index>(j) + 1);
    out.names.push_back(d.names[j]);
  }
  return out;
}

Dataset select_rows(const Dataset& d, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.names = d.names;
  out.outcome_name = d.outcome_name;
  out.y = d.y(rows);
  out.X = d.X(rows, Eigen::all);
  return out;
}

std::vector<ColumnStats> summary_stats(const Dataset& d) {
  if (d.n() == 0) throw EmptyDataError("summary of an empty dataset");
  auto stats = [&](const std::string& name, const Vector& v) {
    ColumnStats s;
    s.name = name;
    s.mean = v.mean();
    s.sd = v.size() > 1
               ? std::sqrt((v.array() - s.mean).square().sum() / static_cast<double>(v.size() - 1))
               : 0.0;
    s.min = v.minCoeff();
    s.max = v.maxCoeff();
    return s;
  };
  std::vector<ColumnStats> out;
  out.push_back(stats(d.outcome_name, d.y));
  for (Eigen::Index j = 1; j < d.X.cols(); ++j)
    out.push_back(stats(d.names[static_cast<std::size_t>(j - 1)], d.X.col(j)));
  return out;
}

Dataset standardize(const Dataset& d) {
  Dataset out = d;
  for (Eigen::Index j = 1; j < out.X.cols(); ++j) {
    auto col = out.X.col(j);
    const double mean = col.mean();
    const double var = d.n() > 1 ? (col.array() - mean).square().sum() / (d.n() - 1) : 0.0;
    if (var <= 0) continue;
    col = (col.array() - mean) / std::sqrt(var);
  }
  return out;
}

}  // namespace countmix
