#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cqc {

// One observation (y, x, a). Non-owning view; covariates live in a Dataset or
// caller-owned buffer.
struct Sample {
  double y = 0.0;
  std::span<const double> x;
  int a = 0;
};

// Row-major container of observational triples with fixed covariate dimension.
// Rows are validated on insertion: finite values, treatment in {0, 1}.
class Dataset {
 public:
  explicit Dataset(std::size_t dim = 0) : dim_(dim) {}

  void add(double y, std::span<const double> x, int a);
  void reserve(std::size_t n);

  std::size_t size() const { return y_.size(); }
  bool empty() const { return y_.empty(); }
  std::size_t dim() const { return dim_; }

  double y(std::size_t i) const { return y_[i]; }
  int a(std::size_t i) const { return a_[i]; }
  std::span<const double> x(std::size_t i) const {
    return {x_.data() + i * dim_, dim_};
  }
  Sample operator[](std::size_t i) const { return {y_[i], x(i), a_[i]}; }

  std::span<const double> outcomes() const { return y_; }
  std::span<const int> treatments() const { return a_; }

  // Outcomes of the rows with a == arm.
  std::vector<double> arm_outcomes(int arm) const;
  std::size_t arm_count(int arm) const;

  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_;
  std::vector<double> y_;
  std::vector<double> x_;
  std::vector<int> a_;
};

// Index halves for sample splitting: nuisances on the first, CQC on the second.
struct SplitPair {
  std::vector<std::size_t> nuisance_idx;
  std::vector<std::size_t> fit_idx;
};

// First ceil(N/2) indices go to nuisance_idx. With shuffle on, a seeded
// permutation is applied first.
SplitPair split_half(const Dataset& data, std::uint64_t seed, bool shuffle);

// Column names used when reading a CSV. An empty covariate list means "every
// other column, in header order".
struct CsvSchema {
  std::string outcome = "y";
  std::string treatment = "a";
  std::vector<std::string> covariates;
};

// covariate_names, when given, receives the covariate column names in order.
Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                 std::vector<std::string>* covariate_names = nullptr);

// Writes header y,a,x1..xd and values at 17 significant digits.
void write_csv(const Dataset& data, const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace cqc
