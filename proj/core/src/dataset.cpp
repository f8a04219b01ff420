#include "cqc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

void Dataset::add(double y, std::span<const double> x, int a) {
  if (x.size() != dim_) {
    throw DataError("sample has " + std::to_string(x.size()) + " covariates, dataset expects " +
                    std::to_string(dim_));
  }
  if (a != 0 && a != 1) throw DataError("treatment must be 0 or 1, got " + std::to_string(a));
  if (!std::isfinite(y)) throw DataError("non-finite outcome");
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("non-finite covariate");
  }
  y_.push_back(y);
  x_.insert(x_.end(), x.begin(), x.end());
  a_.push_back(a);
}

void Dataset::reserve(std::size_t n) {
  y_.reserve(n);
  x_.reserve(n * dim_);
  a_.reserve(n);
}

std::vector<double> Dataset::arm_outcomes(int arm) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (a_[i] == arm) out.push_back(y_[i]);
  }
  return out;
}

std::size_t Dataset::arm_count(int arm) const {
  return static_cast<std::size_t>(std::count(a_.begin(), a_.end(), arm));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(dim_);
  out.reserve(indices.size());
  for (auto i : indices) {
    out.y_.push_back(y_.at(i));
    auto xi = x(i);
    out.x_.insert(out.x_.end(), xi.begin(), xi.end());
    out.a_.push_back(a_[i]);
  }
  return out;
}

SplitPair split_half(const Dataset& data, std::uint64_t seed, bool shuffle) {
  const std::size_t n = data.size();
  if (n < 2) throw DataError("insufficient data to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  const std::size_t first = (n + 1) / 2;
  SplitPair split;
  split.nuisance_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  split.fit_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  return split;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_cell(const std::string& text, std::size_t row, const std::string& column) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto* begin = t.data();
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (t.empty() || ec != std::errc() || ptr != end) {
    throw DataError("row " + std::to_string(row) + ": cannot parse column '" + column +
                    "' value '" + t + "'");
  }
  if (!std::isfinite(v)) {
    throw DataError("row " + std::to_string(row) + ": non-finite value in column '" + column +
                    "'");
  }
  return v;
}

}  // namespace

Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema,
                 std::vector<std::string>* covariate_names) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw DataError(path.string() + ": empty file");
  }
  auto header = split_fields(line);
  for (auto& h : header) h = trim(h);

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);
  auto find = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw DataError(path.string() + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t y_col = find(schema.outcome);
  const std::size_t a_col = find(schema.treatment);
  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
  if (schema.covariates.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != y_col && i != a_col) {
        x_cols.push_back(i);
        x_names.push_back(header[i]);
      }
    }
  } else {
    for (const auto& name : schema.covariates) {
      x_cols.push_back(find(name));
      x_names.push_back(name);
    }
  }
  if (x_cols.empty()) throw DataError(path.string() + ": no covariate columns");

  Dataset data(x_cols.size());
  std::vector<double> x(x_cols.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    const double y = parse_cell(fields[y_col], row, schema.outcome);
    const double a = parse_cell(fields[a_col], row, schema.treatment);
    if (a != 0.0 && a != 1.0) {
      throw DataError("row " + std::to_string(row) + ": treatment must be 0 or 1, got '" +
                      trim(fields[a_col]) + "'");
    }
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      x[j] = parse_cell(fields[x_cols[j]], row, x_names[j]);
    }
    data.add(y, x, static_cast<int>(a));
  }
  if (covariate_names != nullptr) *covariate_names = x_names;
  return data;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "y,a";
  for (std::size_t j = 0; j < data.dim(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.y(i)) << ',' << data.a(i);
    for (double v : data.x(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace cqc
