#include "cqc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace cqc {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double pairwise_sum_range(const double* p, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_range(p, half) + pairwise_sum_range(p + half, n - half);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = splitmix64(base);
  for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::domain_error("normal_quantile: probability outside [0, 1]");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double normal_cdf_antiderivative(double t) { return t * normal_cdf(t) + normal_pdf(t); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

double integrate_simpson(const std::function<double(double)>& f, double a, double b,
                         int nodes) {
  if (nodes < 2) throw std::invalid_argument("integrate_simpson: need at least 2 nodes");
  if (a == b) return 0.0;
  const int panels = nodes - 1;
  const double h = (b - a) / panels;
  if (panels == 1) return 0.5 * h * (f(a) + f(b));

  auto x = [&](int i) { return i == panels ? b : a + h * i; };
  const int simpson_panels = (panels % 2 == 0) ? panels : panels - 3;
  double total = 0.0;
  if (simpson_panels > 0) {
    double odd = 0.0;
    double even = 0.0;
    for (int i = 1; i < simpson_panels; ++i) {
      (i % 2 ? odd : even) += f(x(i));
    }
    total += h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(x(simpson_panels)));
  }
  if (simpson_panels != panels) {
    const int s = simpson_panels;
    total += 3.0 * h / 8.0 * (f(x(s)) + 3.0 * f(x(s + 1)) + 3.0 * f(x(s + 2)) + f(x(s + 3)));
  }
  return total;
}

double pairwise_sum(std::span<const double> values) {
  return pairwise_sum_range(values.data(), values.size());
}

double mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return pairwise_sum(values) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(values);
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - m) * (values[i] - m);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size() - 1));
}

double trimmed_mean(std::span<const double> values, double trim) {
  if (!(trim >= 0.0 && trim < 0.5)) throw std::invalid_argument("trim must lie in [0, 0.5)");
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto cut = static_cast<std::size_t>(std::floor(trim * static_cast<double>(sorted.size())));
  return mean(std::span<const double>(sorted).subspan(cut, sorted.size() - 2 * cut));
}

double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, q);
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace cqc
