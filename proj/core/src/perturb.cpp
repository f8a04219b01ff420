#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cqc/nuisance.hpp"
#include "cqc/stats.hpp"

namespace cqc {

NoiseField::NoiseField(std::size_t dim, std::uint64_t seed, double centre, double scale)
    : centre_(centre), scale_(scale > 0.0 ? scale : 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1))));
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  w_.resize(dim);
  for (auto& wj : w_) wj = z(rng);
  phase_ = u(rng);
}

double NoiseField::operator()(std::span<const double> x) const {
  return std::sin(dot(w_, x) + phase_);
}

double NoiseField::operator()(double y, std::span<const double> x) const {
  const double s = std::atan((y - centre_) / scale_);
  return std::sin(dot(w_, x) + phase_ + s) + s;
}

double shift_logit(double p, double shift) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  return sigmoid(logit(p) + shift);
}

namespace {

class PerturbedPropensity final : public PropensityFunction {
 public:
  PerturbedPropensity(std::shared_ptr<const PropensityFunction> base, NoiseField field,
                      double level, double bias, double clip)
      : base_(std::move(base)), field_(std::move(field)), level_(level), bias_(bias),
        clip_(clip) {}

  double operator()(std::span<const double> x) const override {
    const double p = shift_logit((*base_)(x), level_ * (bias_ + field_(x)));
    return std::clamp(p, clip_, 1.0 - clip_);
  }

 private:
  std::shared_ptr<const PropensityFunction> base_;
  NoiseField field_;
  double level_;
  double bias_;
  double clip_;
};

class PerturbedCondCdf final : public ConditionalCdf {
 public:
  PerturbedCondCdf(std::unique_ptr<ConditionalCdf> base, NoiseField field,
                   std::vector<double> x, double level, double bias)
      : base_(std::move(base)), field_(std::move(field)), x_(std::move(x)), level_(level),
        bias_(bias) {}

  double operator()(double y) const override {
    return shift_logit((*base_)(y), level_ * (bias_ + field_(y, x_)));
  }

 private:
  std::unique_ptr<ConditionalCdf> base_;
  NoiseField field_;
  std::vector<double> x_;
  double level_;
  double bias_;
};

class PerturbedCcdf final : public CcdfFunction {
 public:
  PerturbedCcdf(std::shared_ptr<const CcdfFunction> base, NoiseField field, double level,
                double bias)
      : base_(std::move(base)), field_(std::move(field)), level_(level), bias_(bias) {}

  std::unique_ptr<ConditionalCdf> at(std::span<const double> x) const override {
    return std::make_unique<PerturbedCondCdf>(base_->at(x), field_,
                                              std::vector<double>(x.begin(), x.end()), level_,
                                              bias_);
  }

  double operator()(double y, std::span<const double> x) const override {
    return shift_logit((*base_)(y, x), level_ * (bias_ + field_(y, x)));
  }

 private:
  std::shared_ptr<const CcdfFunction> base_;
  NoiseField field_;
  double level_;
  double bias_;
};

}  // namespace

NuisanceSet perturb(const NuisanceSet& nuisances, const LogitNoise& noise, std::size_t dim,
                    const Dataset* reference) {
  if (noise.level == 0.0) return nuisances;
  NuisanceSet out = nuisances;
  if (noise.targets_any(NoiseTarget::propensity)) {
    NoiseField field(dim, derive_seed(noise.seed, {0}));
    out.propensity = std::make_shared<PerturbedPropensity>(nuisances.propensity, std::move(field),
                                                           noise.level, noise.bias, noise.clip);
    out.propensity_provenance.noise_level = noise.level;
    out.propensity_provenance.noise_seed = noise.seed;
  }
  for (int arm = 0; arm <= 1; ++arm) {
    const auto target = arm == 0 ? NoiseTarget::ccdf0 : NoiseTarget::ccdf1;
    if (!noise.targets_any(target)) continue;
    double centre = 0.0;
    double scale = 1.0;
    if (reference) {
      const auto ys = reference->arm_outcomes(arm);
      if (!ys.empty()) centre = cqc::mean(ys);
      if (ys.size() > 1) scale = sample_sd(ys);
    }
    NoiseField field(dim, derive_seed(noise.seed, {static_cast<std::uint64_t>(arm) + 1}), centre,
                     scale);
    auto& slot = arm == 0 ? out.ccdf0 : out.ccdf1;
    slot = std::make_shared<PerturbedCcdf>(arm == 0 ? nuisances.ccdf0 : nuisances.ccdf1,
                                           std::move(field), noise.level, noise.bias);
    out.ccdf_provenance.noise_level = noise.level;
    out.ccdf_provenance.noise_seed = noise.seed;
  }
  return out;
}

}  // namespace cqc
