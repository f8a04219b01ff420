#include "cqc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

std::vector<double> isotonic_project(std::span<const double> values) {
  if (values.empty()) throw ConfigError("isotonic_project: empty input");
  // Blocks of pooled values: running sums and sizes.
  std::vector<double> sum;
  std::vector<std::size_t> count;
  sum.reserve(values.size());
  count.reserve(values.size());
  for (const double v : values) {
    sum.push_back(v);
    count.push_back(1);
    while (sum.size() > 1) {
      const std::size_t k = sum.size() - 1;
      if (sum[k - 1] / static_cast<double>(count[k - 1]) <= sum[k] / static_cast<double>(count[k])) {
        break;
      }
      sum[k - 1] += sum[k];
      count[k - 1] += count[k];
      sum.pop_back();
      count.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t b = 0; b < sum.size(); ++b) {
    out.insert(out.end(), count[b], sum[b] / static_cast<double>(count[b]));
  }
  return out;
}

void GridSpec::validate() const {
  if (m < 2) throw ConfigError("inversion grid needs at least 2 points");
  if (!(lo < hi)) throw ConfigError("inversion grid needs lo < hi");
}

double GridSpec::at(std::size_t k) const {
  if (k + 1 == m) return hi;
  return lo + static_cast<double>(k) * spacing();
}

std::vector<double> GridSpec::points() const {
  validate();
  std::vector<double> out(m);
  for (std::size_t k = 0; k < m; ++k) out[k] = at(k);
  return out;
}

GridSpec default_grid(const Dataset& data, std::size_t m) {
  if (data.empty()) throw DataError("default_grid: no outcomes");
  const auto y = data.outcomes();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double sd = y.size() > 1 ? sample_sd(y) : 1.0;
  GridSpec g{*lo - 3.0 * sd, *hi + 3.0 * sd, m};
  if (!(g.lo < g.hi)) {
    g.lo -= 1.0;
    g.hi += 1.0;
  }
  g.validate();
  return g;
}

ContrastGrid contrast_grid(const ConditionalCdf& f1, double f0_at_y0, const GridSpec& grid) {
  ContrastGrid c;
  c.y1_grid = grid.points();
  c.values.resize(grid.m);
  for (std::size_t k = 0; k < grid.m; ++k) c.values[k] = f1(c.y1_grid[k]) - f0_at_y0;
  return c;
}

double root_closest_to_zero(std::span<const double> y1_grid, std::span<const double> contrast) {
  const auto projected = isotonic_project(contrast);
  std::size_t best = 0;
  for (std::size_t k = 1; k < projected.size(); ++k) {
    if (std::abs(projected[k]) < std::abs(projected[best])) best = k;
  }
  return y1_grid[best];
}

double root_first_nonnegative(std::span<const double> y1_grid, std::span<const double> contrast) {
  const auto projected = isotonic_project(contrast);
  for (std::size_t k = 0; k < projected.size(); ++k) {
    if (projected[k] >= 0.0) return y1_grid[k];
  }
  return y1_grid.back();
}

double invert_cqc(const NuisanceSet& nuisances, double y0, std::span<const double> x,
                  const GridSpec& grid) {
  grid.validate();
  const auto f1 = nuisances.ccdf1->at(x);
  const auto c = contrast_grid(*f1, (*nuisances.ccdf0)(y0, x), grid);
  return root_closest_to_zero(c.y1_grid, c.values);
}

double s_learner_cqc(const CcdfFunction& ccdf0, const CcdfFunction& ccdf1, double y0,
                     std::span<const double> x, const GridSpec& grid) {
  grid.validate();
  const auto f1 = ccdf1.at(x);
  const auto c = contrast_grid(*f1, ccdf0(y0, x), grid);
  return root_first_nonnegative(c.y1_grid, c.values);
}

// ---------------------------------------------------------------------------

DrInversion::DrInversion(const NuisanceSet& nuisances, const Dataset& fit_data, GridSpec grid,
                         double bandwidth)
    : data_(fit_data), grid_(grid), bandwidth_(bandwidth) {
  grid_.validate();
  if (data_.empty()) throw DataError("DrInversion: fit data is empty");
  if (!(bandwidth_ > 0.0)) throw ConfigError("DrInversion: bandwidth must be positive");
  const std::size_t n = data_.size();
  const std::size_t m = grid_.m;
  y1_ = grid_.points();
  const auto& y1 = y1_;
  pi_.resize(n);
  f0_.reserve(n);
  g1_.resize(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data_.x(i);
    pi_[i] = (*nuisances.propensity)(x);
    if (!(pi_[i] > 0.0 && pi_[i] < 1.0)) throw NumericError("propensity outside (0, 1)");
    f0_.push_back(nuisances.ccdf0->at(x));
    const auto f1 = nuisances.ccdf1->at(x);
    const double w = data_.a(i) == 1 ? 1.0 / pi_[i] : 0.0;
    double* row = g1_.data() + i * m;
    for (std::size_t k = 0; k < m; ++k) {
      const double f = (*f1)(y1[k]);
      row[k] = f + w * ((data_.y(i) <= y1[k] ? 1.0 : 0.0) - f);
    }
  }
}

std::vector<double> DrInversion::weights(std::span<const double> x) const {
  const std::size_t n = data_.size();
  std::vector<double> d2(n);
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = data_.x(i);
    double s = 0.0;
    for (std::size_t j = 0; j < xi.size(); ++j) s += (x[j] - xi[j]) * (x[j] - xi[j]);
    d2[i] = s;
    dmin = std::min(dmin, s);
  }
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  double total = 0.0;
  for (double& v : d2) {
    v = std::exp(-(v - dmin) * inv);
    total += v;
  }
  for (double& v : d2) v /= total;
  return d2;
}

double DrInversion::g0_term(std::span<const double> w, double y0) const {
  double s = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double f = (*f0_[i])(y0);
    const double c = data_.a(i) == 0 ? 1.0 / (1.0 - pi_[i]) : 0.0;
    s += w[i] * (f + c * ((data_.y(i) <= y0 ? 1.0 : 0.0) - f));
  }
  return s;
}

double DrInversion::solve(std::span<const double> h1, double h0) const {
  std::vector<double> contrast(h1.size());
  for (std::size_t k = 0; k < h1.size(); ++k) contrast[k] = h1[k] - h0;
  return root_closest_to_zero(y1_, contrast);
}

double DrInversion::operator()(double y0, std::span<const double> x) const {
  if (x.size() != data_.dim()) throw ConfigError("DrInversion: covariate dimension mismatch");
  const auto w = weights(x);
  const std::size_t m = grid_.m;
  std::vector<double> h1(m, 0.0);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double* row = g1_.data() + i * m;
    for (std::size_t k = 0; k < m; ++k) h1[k] += w[i] * row[k];
  }
  return solve(h1, g0_term(w, y0));
}

std::vector<double> DrInversion::predict(const EvalPoints& points) const {
  if (points.dim != data_.dim()) throw ConfigError("DrInversion: covariate dimension mismatch");
  const std::size_t q = points.size();
  const std::size_t n = data_.size();
  const std::size_t m = grid_.m;
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMatrix w(q, n);
  std::vector<double> h0(q);
  for (std::size_t k = 0; k < q; ++k) {
    const auto wk = weights(points.xs(k));
    for (std::size_t i = 0; i < n; ++i) w(k, i) = wk[i];
    h0[k] = g0_term(wk, points.y0[k]);
  }
  const Eigen::Map<const RowMatrix> g1(g1_.data(), n, m);
  const RowMatrix h1 = w * g1;
  std::vector<double> out(q);
  for (std::size_t k = 0; k < q; ++k) {
    out[k] = solve(std::span<const double>(h1.data() + k * m, m), h0[k]);
  }
  return out;
}

double rule_of_thumb_bandwidth(const Dataset& data) {
  if (data.size() < 2) throw DataError("bandwidth rule needs at least 2 rows");
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  double sd_sum = 0.0;
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = data.x(i)[j];
    sd_sum += sample_sd(col);
  }
  const double sd = d > 0 ? sd_sum / static_cast<double>(d) : 1.0;
  return std::max(1.06 * sd * std::pow(static_cast<double>(n), -0.2), 1e-3);
}

const std::vector<double>& default_inversion_bandwidth_grid() {
  static const std::vector<double> grid{0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0};
  return grid;
}

}  // namespace cqc
