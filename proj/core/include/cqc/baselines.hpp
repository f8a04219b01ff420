#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "cqc/dataset.hpp"
#include "cqc/nuisance.hpp"

namespace cqc {

// L2 projection onto nondecreasing sequences (pool adjacent violators).
std::vector<double> isotonic_project(std::span<const double> values);

// m equispaced points on [lo, hi].
struct GridSpec {
  double lo = -5.0;
  double hi = 5.0;
  std::size_t m = 1001;

  void validate() const;
  double spacing() const { return (hi - lo) / static_cast<double>(m - 1); }
  double at(std::size_t k) const;
  std::vector<double> points() const;
};

// [min - 3 sd, max + 3 sd] of the observed outcomes, m points.
GridSpec default_grid(const Dataset& data, std::size_t m = 1001);

// Candidate treated outcomes with the contrast F1(y1|x) - F0(y0|x) on each.
struct ContrastGrid {
  std::vector<double> y1_grid;
  std::vector<double> values;
};

ContrastGrid contrast_grid(const ConditionalCdf& f1, double f0_at_y0, const GridSpec& grid);

// Grid point whose isotonically projected contrast has the smallest absolute
// value; ties go to the smaller y1.
double root_closest_to_zero(std::span<const double> y1_grid, std::span<const double> contrast);

// Smallest grid point whose projected contrast is >= 0; the last point when none is.
double root_first_nonnegative(std::span<const double> y1_grid, std::span<const double> contrast);

// Inversion estimate from the plug-in contrast F1-hat(y1|x) - F0-hat(y0|x).
double invert_cqc(const NuisanceSet& nuisances, double y0, std::span<const double> x,
                  const GridSpec& grid);

// Quantile-style inversion of independently fitted CCDFs.
double s_learner_cqc(const CcdfFunction& ccdf0, const CcdfFunction& ccdf1, double y0,
                     std::span<const double> x, const GridSpec& grid);

// Evaluation queries (y0_k, x_k), covariates row-major.
struct EvalPoints {
  std::size_t dim = 0;
  std::vector<double> y0;
  std::vector<double> x;

  std::size_t size() const { return y0.size(); }
  std::span<const double> xs(std::size_t k) const { return {x.data() + k * dim, dim}; }
};

// Inversion of a doubly robust contrast. On the fit half, each observation i
// carries the pseudo-outcome curves
//   G1_i(y1) = F1-hat(y1|x_i) + a_i/pi_i (1{y_i <= y1} - F1-hat(y1|x_i))
//   G0_i(y0) = F0-hat(y0|x_i) + (1-a_i)/(1-pi_i) (1{y_i <= y0} - F0-hat(y0|x_i))
// and the contrast at x is their Nadaraya-Watson regression on x (RBF
// bandwidth h): C(y1, y0, x) = sum_i w_i(x) (G1_i(y1) - G0_i(y0)).
class DrInversion {
 public:
  DrInversion(const NuisanceSet& nuisances, const Dataset& fit_data, GridSpec grid,
              double bandwidth);

  double operator()(double y0, std::span<const double> x) const;
  std::vector<double> predict(const EvalPoints& points) const;

  double bandwidth() const { return bandwidth_; }
  const GridSpec& grid() const { return grid_; }

 private:
  std::vector<double> weights(std::span<const double> x) const;
  double g0_term(std::span<const double> w, double y0) const;
  double solve(std::span<const double> h1, double h0) const;

  Dataset data_;
  GridSpec grid_;
  double bandwidth_;
  std::vector<double> y1_;
  std::vector<double> pi_;
  std::vector<std::unique_ptr<ConditionalCdf>> f0_;
  std::vector<double> g1_;  // n x m, row-major
};

// Rule-of-thumb regression bandwidth 1.06 sd n^(-1/5), sd averaged over coordinates.
double rule_of_thumb_bandwidth(const Dataset& data);

const std::vector<double>& default_inversion_bandwidth_grid();

}  // namespace cqc
