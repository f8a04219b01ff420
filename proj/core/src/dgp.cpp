#include "cqc/dgp.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "cqc/error.hpp"

namespace cqc {

namespace {

double affine(const AffineArm& arm, std::span<const double> x) {
  double s = arm.intercept;
  for (std::size_t j = 0; j < arm.slope.size() && j < x.size(); ++j) s += arm.slope[j] * x[j];
  return s;
}

}  // namespace

double DgpSpec::mu(int arm, std::span<const double> x) const {
  switch (kind) {
    case DgpKind::sin_linear: {
      const double vx = dot(v, x);
      return std::sin(std::numbers::pi * vx) + (arm == 1 ? gamma * vx : 0.0);
    }
    case DgpKind::cos_linear: {
      const double c = std::cos(6.0 * x[0]);
      return arm == 1 ? 2.0 * c + gamma * x[0] : c;
    }
    case DgpKind::fig1: {
      const double s = std::sin(10.0 * x[0]);
      return arm == 1 ? 2.0 * s : s;
    }
    case DgpKind::affine:
      return affine(arm == 1 ? mu1_affine : mu0_affine, x);
  }
  return 0.0;
}

double DgpSpec::propensity_logit(std::span<const double> x) const {
  switch (kind) {
    case DgpKind::sin_linear:
      return dot(v, x);
    case DgpKind::cos_linear:
    case DgpKind::fig1:
      return x[0];
    case DgpKind::affine:
      return affine(logit_affine, x);
  }
  return 0.0;
}

double DgpSpec::propensity(std::span<const double> x) const {
  return sigmoid(propensity_logit(x));
}

double DgpSpec::ccdf(int arm, double y, std::span<const double> x) const {
  return normal_cdf((y - mu(arm, x)) / sigma(arm));
}

double DgpSpec::cqc(double y0, std::span<const double> x) const {
  return mu(1, x) + (sigma1 / sigma0) * (y0 - mu(0, x));
}

void DgpSpec::validate() const {
  if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) throw ConfigError("DGP standard deviations must be > 0");
  if (d == 0) throw ConfigError("DGP dimension must be >= 1");
  if (kind == DgpKind::sin_linear && v.size() != d) {
    throw ConfigError("sin_linear DGP needs a direction vector of length d");
  }
  if ((kind == DgpKind::cos_linear || kind == DgpKind::fig1) && d != 1) {
    throw ConfigError(dgp_name(kind) + " DGP is one-dimensional");
  }
}

DgpSpec make_sin_linear(std::size_t d, double gamma, std::uint64_t v_seed) {
  DgpSpec spec;
  spec.kind = DgpKind::sin_linear;
  spec.d = d;
  spec.gamma = gamma;
  Rng rng(v_seed);
  std::normal_distribution<double> z;
  std::vector<double> u(d);
  double n2 = 0.0;
  while (n2 == 0.0) {
    for (auto& ui : u) ui = z(rng);
    n2 = squared_norm(u);
  }
  const double scale = std::sqrt(static_cast<double>(d) / n2);
  spec.v.resize(d);
  for (std::size_t j = 0; j < d; ++j) spec.v[j] = u[j] * scale;
  return spec;
}

DgpSpec make_cos_linear(double gamma) {
  DgpSpec spec;
  spec.kind = DgpKind::cos_linear;
  spec.d = 1;
  spec.gamma = gamma;
  spec.sigma1 = 2.0;
  return spec;
}

DgpSpec make_fig1() {
  DgpSpec spec;
  spec.kind = DgpKind::fig1;
  spec.d = 1;
  spec.sigma1 = 2.0;
  return spec;
}

const std::vector<std::string>& dgp_registry() {
  static const std::vector<std::string> names{"sec4", "appD1", "fig1"};
  return names;
}

DgpSpec make_dgp(const std::string& name, double gamma, std::size_t d, std::uint64_t v_seed) {
  if (name == "sec4" || name == "sin_linear") return make_sin_linear(d, gamma, v_seed);
  if (name == "appD1" || name == "cos_linear") return make_cos_linear(gamma);
  if (name == "fig1") return make_fig1();
  std::string known;
  for (const auto& n : dgp_registry()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown DGP '" + name + "'; registered: " + known);
}

std::string dgp_name(DgpKind kind) {
  switch (kind) {
    case DgpKind::sin_linear: return "sec4";
    case DgpKind::cos_linear: return "appD1";
    case DgpKind::fig1: return "fig1";
    case DgpKind::affine: return "affine";
  }
  return "unknown";
}

void draw_covariates(const DgpSpec& dgp, Rng& rng, std::span<double> out) {
  std::normal_distribution<double> z;
  for (std::size_t j = 0; j < dgp.d; ++j) out[j] = z(rng);
}

Dataset generate(const DgpSpec& dgp, std::size_t n, std::uint64_t seed) {
  dgp.validate();
  Rng rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset data(dgp.d);
  data.reserve(n);
  std::vector<double> x(dgp.d);
  for (std::size_t i = 0; i < n; ++i) {
    draw_covariates(dgp, rng, x);
    const int a = u(rng) < dgp.propensity(x) ? 1 : 0;
    const double y = dgp.mu(a, x) + dgp.sigma(a) * z(rng);
    data.add(y, x, a);
  }
  return data;
}

}  // namespace cqc
