#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace cqc {

using Rng = std::mt19937_64;

// Mixes a base seed with a list of stream identifiers (splitmix64 finaliser).
// Used to give every (cell, replication, phase) its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids);

double normal_cdf(double z);
double normal_pdf(double z);
double normal_quantile(double p);

// Integral of Phi(t) dt, i.e. t*Phi(t) + phi(t).
double normal_cdf_antiderivative(double t);

inline double sigmoid(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);

// Composite Simpson rule on `nodes` equispaced points (nodes - 1 panels).
// An odd panel count closes with Simpson's 3/8 rule on the last three panels;
// two nodes degrade to the trapezoid rule. Integration with b < a follows the
// usual orientation convention.
double integrate_simpson(const std::function<double(double)>& f, double a, double b,
                         int nodes);

// Pairwise (tree) summation: fixed reduction order independent of threading.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);
double sample_sd(std::span<const double> values);

// Mean after dropping floor(trim * n) values from each tail.
double trimmed_mean(std::span<const double> values, double trim);

// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::span<const double> values, double q);
// Same, for input already in ascending order.
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace cqc
