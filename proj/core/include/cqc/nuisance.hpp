#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cqc/dataset.hpp"
#include "cqc/dgp.hpp"

namespace cqc {

// F(. | x) for one fixed covariate value. Built once per x and queried many
// times, which is what the optimisers and the inversion baseline need.
class ConditionalCdf {
 public:
  virtual ~ConditionalCdf() = default;
  virtual double operator()(double y) const = 0;
};

class PropensityFunction {
 public:
  virtual ~PropensityFunction() = default;
  virtual double operator()(std::span<const double> x) const = 0;
};

class CcdfFunction {
 public:
  virtual ~CcdfFunction() = default;
  virtual std::unique_ptr<ConditionalCdf> at(std::span<const double> x) const = 0;
  virtual double operator()(double y, std::span<const double> x) const { return (*at(x))(y); }
};

enum class NuisanceSource { fitted, oracle };

struct Provenance {
  NuisanceSource source = NuisanceSource::fitted;
  double noise_level = 0.0;
  std::uint64_t noise_seed = 0;

  bool perturbed() const { return noise_level != 0.0; }
  std::string label() const;  // "fitted", "oracle", "fitted+noise(0.5)", ...
};

// pi-hat, F0-hat and F1-hat behind one evaluation interface.
struct NuisanceSet {
  std::shared_ptr<const PropensityFunction> propensity;
  std::shared_ptr<const CcdfFunction> ccdf0;
  std::shared_ptr<const CcdfFunction> ccdf1;
  Provenance propensity_provenance;
  Provenance ccdf_provenance;

  const CcdfFunction& ccdf(int arm) const { return arm == 1 ? *ccdf1 : *ccdf0; }
};

// ---------------------------------------------------------------------------
// Propensity: L2-penalised logistic regression, evaluations clipped to
// [clip, 1 - clip].

class PropensityModel final : public PropensityFunction {
 public:
  PropensityModel(std::vector<double> beta, double beta0, double clip);

  double operator()(std::span<const double> x) const override;
  double unclipped(std::span<const double> x) const;

  const std::vector<double>& beta() const { return beta_; }
  double beta0() const { return beta0_; }
  double clip() const { return clip_; }

 private:
  std::vector<double> beta_;
  double beta0_;
  double clip_;
};

struct PropensityFitOptions {
  double l2 = -1.0;  // negative: use 1/n
  double clip = 0.01;
  double tolerance = 1e-8;
  int max_iterations = 100;
};

struct PropensityFitTrace {
  std::vector<double> objective;  // penalised mean log-likelihood per iterate
  double final_gradient_norm = 0.0;
  int iterations = 0;
};

// Maximises (1/n) sum loglik - (l2/2)|beta|^2 (intercept unpenalised) with
// Newton/IRLS steps and step halving.
PropensityModel fit_propensity(const Dataset& data, const PropensityFitOptions& options = {},
                               PropensityFitTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Kernel CCDF: Nadaraya-Watson on indicators with an RBF kernel,
//   F(y|x) = sum k(x, xi) 1{yi <= y} / sum k(x, xi),
//   k(x, x') = exp(-|x - x'|^2 / (2 h^2)).

class StepCdf final : public ConditionalCdf {
 public:
  StepCdf(std::vector<double> sorted_y, std::vector<double> cumulative)
      : y_(std::move(sorted_y)), cum_(std::move(cumulative)) {}
  double operator()(double y) const override;
  std::span<const double> knots() const { return y_; }
  std::span<const double> cumulative() const { return cum_; }

 private:
  std::vector<double> y_;
  std::vector<double> cum_;
};

class CcdfModel final : public CcdfFunction {
 public:
  CcdfModel(int arm, double bandwidth, std::vector<double> y, std::vector<double> x,
            std::size_t dim);

  std::unique_ptr<ConditionalCdf> at(std::span<const double> x) const override;
  double operator()(double y, std::span<const double> x) const override;

  // Normalised kernel weights over training points (in sorted-outcome order).
  std::vector<double> weights(std::span<const double> x) const;

  int arm() const { return arm_; }
  double bandwidth() const { return bandwidth_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return y_.size(); }
  // Training points, sorted by outcome.
  std::span<const double> outcomes() const { return y_; }
  std::span<const double> covariates(std::size_t i) const { return {x_.data() + i * dim_, dim_}; }

 private:
  int arm_;
  double bandwidth_;
  std::size_t dim_;
  std::vector<double> y_;
  std::vector<double> x_;
};

CcdfModel fit_ccdf(const Dataset& data, int arm, double bandwidth);

// Validation target for bandwidth search: either held-out observations
// (scored against one-hot indicators) or the exact conditional CDF.
struct BandwidthValidation {
  const Dataset* data = nullptr;
  const CcdfFunction* oracle = nullptr;
};

// Grid element minimising mean squared CCDF discrepancy on the validation
// arm's (y, x) pairs, using that arm's outcomes as thresholds. Ties go to the
// smaller bandwidth.
double select_bandwidth(const Dataset& data, int arm, std::span<const double> grid,
                        const BandwidthValidation& validation);

const std::vector<double>& default_bandwidth_grid();

// ---------------------------------------------------------------------------
// Oracles: closed-form Gaussian nuisances from a DGP.

class GaussianCondCdf final : public ConditionalCdf {
 public:
  GaussianCondCdf(double mu, double sigma) : mu_(mu), sigma_(sigma) {}
  double operator()(double y) const override;
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

 private:
  double mu_;
  double sigma_;
};

class OracleCcdf final : public CcdfFunction {
 public:
  OracleCcdf(DgpSpec dgp, int arm) : dgp_(std::move(dgp)), arm_(arm) {}
  std::unique_ptr<ConditionalCdf> at(std::span<const double> x) const override;
  double operator()(double y, std::span<const double> x) const override;

 private:
  DgpSpec dgp_;
  int arm_;
};

class OraclePropensity final : public PropensityFunction {
 public:
  OraclePropensity(DgpSpec dgp, double clip) : dgp_(std::move(dgp)), clip_(clip) {}
  double operator()(std::span<const double> x) const override;

 private:
  DgpSpec dgp_;
  double clip_;
};

// Exact pi, F0, F1 for a Gaussian DGP. The propensity is clipped to
// [clip, 1 - clip] like every other propensity.
NuisanceSet oracle_nuisances(const DgpSpec& dgp, double clip = 0.01);

struct NuisanceFitOptions {
  PropensityFitOptions propensity;
  std::vector<double> bandwidth_grid;  // empty: default grid
  std::optional<double> bandwidth;     // fixed bandwidth skips the search
  double validation_fraction = 0.2;    // held-out share of the nuisance half
  std::uint64_t seed = 0;
};

// Fits pi-hat on all of `data` and each arm's kernel CCDF with a bandwidth
// chosen by grid search. With `oracle` set the search scores against the exact
// CCDFs; otherwise against held-out indicators.
NuisanceSet fit_nuisances(const Dataset& data, const NuisanceFitOptions& options,
                          const DgpSpec* oracle = nullptr);

// ---------------------------------------------------------------------------
// Logit-scale perturbation.

enum class NoiseTarget : unsigned { propensity = 1u, ccdf0 = 2u, ccdf1 = 4u };

struct LogitNoise {
  double level = 0.0;
  double bias = 1.0;
  std::uint64_t seed = 0;
  unsigned targets = 7u;  // bitmask of NoiseTarget
  double clip = 0.01;     // perturbed propensities are re-clipped to [clip, 1 - clip]

  bool targets_any(NoiseTarget t) const { return (targets & static_cast<unsigned>(t)) != 0; }
};

// Smooth bounded field used for the logit shifts. For propensity targets it is
// sin(w'x + phase); for CCDF targets a monotone-in-y variant
//   sin(w'x + phase + s) + s,   s = atan((y - centre) / scale),
// whose derivative in s is 1 + cos(.) >= 0, so perturbed CDFs stay monotone.
class NoiseField {
 public:
  NoiseField(std::size_t dim, std::uint64_t seed, double centre = 0.0, double scale = 1.0);
  double operator()(std::span<const double> x) const;
  double operator()(double y, std::span<const double> x) const;

 private:
  std::vector<double> w_;
  double phase_;
  double centre_;
  double scale_;
};

// sigmoid(logit(p) + shift); exact 0 and 1 are fixed points.
double shift_logit(double p, double shift);

// g -> sigmoid(logit(g) + level * (bias + eps)) for every targeted function.
// Untargeted functions are passed through; level 0 is the identity. Outcome
// centre and scale for the CCDF fields come from `reference` when given.
NuisanceSet perturb(const NuisanceSet& nuisances, const LogitNoise& noise, std::size_t dim,
                    const Dataset* reference = nullptr);

}  // namespace cqc
