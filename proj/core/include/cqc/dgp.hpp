#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cqc/dataset.hpp"
#include "cqc/stats.hpp"

namespace cqc {

// Registry of Gaussian data-generating processes with closed-form nuisances.
//
//   sin_linear  X ~ N(0, I_d), Y|x,a ~ N(sin(pi v'x) + a*gamma*v'x, 1), pi(x) = sigmoid(v'x)
//   cos_linear  X ~ N(0, 1),   Y|x,0 ~ N(cos 6x, 1), Y|x,1 ~ N(2 cos 6x + gamma*x, 4),
//               pi(x) = sigmoid(x)
//   fig1        X ~ N(0, 1),   Y|x,0 ~ N(sin 10x, 1), Y|x,1 ~ N(2 sin 10x, 4), pi(x) = sigmoid(x)
//   affine      mu_a(x) = b_a + w_a'x, sigma_a free, logit pi(x) = c + u'x
enum class DgpKind { sin_linear, cos_linear, fig1, affine };

struct AffineArm {
  double intercept = 0.0;
  std::vector<double> slope;
};

struct DgpSpec {
  DgpKind kind = DgpKind::sin_linear;
  std::size_t d = 10;
  double gamma = 0.0;
  std::vector<double> v;  // direction for sin_linear, norm sqrt(d)
  double sigma0 = 1.0;
  double sigma1 = 1.0;
  AffineArm mu0_affine;
  AffineArm mu1_affine;
  AffineArm logit_affine;

  double mu(int arm, std::span<const double> x) const;
  double sigma(int arm) const { return arm == 1 ? sigma1 : sigma0; }
  double propensity_logit(std::span<const double> x) const;
  double propensity(std::span<const double> x) const;

  // Exact conditional CDF of Y | X=x, A=arm.
  double ccdf(int arm, double y, std::span<const double> x) const;

  // Quantile-preserving transport mu1 + (sigma1/sigma0)(y0 - mu0).
  double cqc(double y0, std::span<const double> x) const;

  void validate() const;
};

// Builders for the registered processes. v is drawn as sqrt(d) u/|u|, u ~ N(0, I).
DgpSpec make_sin_linear(std::size_t d, double gamma, std::uint64_t v_seed);
DgpSpec make_cos_linear(double gamma);
DgpSpec make_fig1();

DgpSpec make_dgp(const std::string& name, double gamma, std::size_t d, std::uint64_t v_seed);
std::string dgp_name(DgpKind kind);
const std::vector<std::string>& dgp_registry();

// Draws X ~ N(0, I_d), A ~ Bernoulli(pi(X)), Y ~ N(mu_A(X), sigma_A^2).
Dataset generate(const DgpSpec& dgp, std::size_t n, std::uint64_t seed);

void draw_covariates(const DgpSpec& dgp, Rng& rng, std::span<double> out);

}  // namespace cqc
