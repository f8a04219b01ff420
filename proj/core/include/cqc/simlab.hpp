#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cqc/baselines.hpp"
#include "cqc/cqc_model.hpp"
#include "cqc/dgp.hpp"
#include "cqc/nuisance.hpp"
#include "cqc/objective.hpp"
#include "cqc/optimizer.hpp"

namespace cqc {

// True comparator of a Gaussian DGP: mu1(x) + (sigma1/sigma0)(y0 - mu0(x)).
struct OracleCqc {
  DgpSpec dgp;
  double operator()(double y0, std::span<const double> x) const { return dgp.cqc(y0, x); }
};

double oracle_cqc_eval(const OracleCqc& oracle, double y0, std::span<const double> x);

struct EvalSpec {
  std::size_t num_points = 2000;
  Y0Sampler sampler;  // default: unconditional resample
  std::uint64_t seed = 0;
};

// Fresh x ~ N(0, I_d) with y0 drawn by the sampler from `untreated` (ignored
// by the conditional kind).
EvalPoints make_eval_points(const DgpSpec& dgp, const EvalSpec& spec,
                            std::span<const double> untreated);

double mae(std::span<const double> predictions, const EvalPoints& points, const OracleCqc& oracle);
double mae(const CqcModel& model, const EvalPoints& points, const OracleCqc& oracle);
double mae(const std::function<double(double, std::span<const double>)>& predictor,
           const OracleCqc& oracle, const EvalPoints& points);

// Mean over the points of int_{cqc*}^{cqc} (F1(t|x) - F0(y0|x)) dt, in closed
// form for Gaussian arms.
double population_loss(const CqcModel& model, const DgpSpec& dgp, const EvalPoints& points);
double population_loss_at(double c, double y0, std::span<const double> x, const DgpSpec& dgp);

// ---------------------------------------------------------------------------
// Experiment plans.

enum class Axis { slope, nuisance_noise, sample_size, lr_sweep, y0_sampler_sweep };

Axis parse_axis(const std::string& name);
std::string axis_name(Axis axis);

enum class MethodKind { dr_lin, dr_nn, ipw, invert_dr, s_learner };

struct MethodTag {
  MethodKind kind = MethodKind::dr_lin;
  bool oracle = false;

  // "dr_lin:oracle", "invert_dr:estimated", ...
  std::string label() const;
  static MethodTag parse(const std::string& tag);
};

enum class OptimizerKind { adam, sgd_theorem };

struct ExperimentDefaults {
  std::string dgp = "sec4";
  double gamma = 2.0;
  std::size_t d = 10;
  std::size_t n = 500;

  // Nuisances
  NuisanceFitOptions nuisance;
  bool oracle_bandwidth = true;  // score CCDF bandwidths against the exact CCDFs
  double clip = 0.01;
  double noise_bias = 1.0;

  // Fitting
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamOptions adam;
  // Non-empty: Adam's lr is chosen per fit by 80/20 validation loss over this
  // grid (ignored on the lr_sweep axis, where the axis value is the lr).
  std::vector<double> lr_grid{0.01, 0.03, 0.1};
  SgdOptions sgd;
  Y0Sampler train_sampler;
  std::vector<std::size_t> mlp_hidden{20, 20};
  Activation mlp_activation = Activation::relu;

  // Baselines
  std::size_t grid_points = 1001;
  std::vector<double> inversion_bandwidths;  // empty: default grid
  std::size_t inversion_selection_points = 200;

  // Evaluation
  std::size_t eval_points = 2000;
  Y0Sampler eval_sampler;
  bool truncated_mean = false;
  bool timing = false;
};

struct ExperimentPlan {
  Axis axis = Axis::slope;
  // Axis values as written: gammas, noise levels, sample sizes, learning rates
  // or sampler names.
  std::vector<std::string> values;
  unsigned noise_targets = 7u;  // nuisance_noise axis, bitmask of NoiseTarget
  std::vector<MethodTag> methods;
  std::size_t replications = 1;
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct ResultRow {
  std::string axis;
  std::string axis_value;
  std::string method;
  std::size_t replication = 0;
  double mae = 0.0;  // NaN when the replication failed
  double seconds = 0.0;
  std::string propensity_provenance;
  std::string ccdf_provenance;
  std::string error;
};

struct MetricsRecord {
  std::string axis;
  std::string axis_value;
  std::string method;
  std::vector<double> maes;  // successful replications, in replication order
  std::size_t failures = 0;
  double mean = 0.0;
  double ci_half_width = 0.0;  // 1.96 sd / sqrt(R); NaN when fewer than 2
  double truncated_mean = 0.0; // 2.5% dropped from each tail
  double seconds = 0.0;        // mean wall-clock per replication
  std::string propensity_provenance;
  std::string ccdf_provenance;

  // Plain mean, or the truncated mean when requested.
  double centre(bool truncated) const { return truncated ? truncated_mean : mean; }
};

struct ExperimentResult {
  std::vector<ResultRow> rows;         // stable-sorted by (value order, method order, replication)
  std::vector<MetricsRecord> records;  // one per (value, method)
};

struct RunOptions {
  unsigned jobs = 1;
  std::function<void(std::size_t done, std::size_t total, const std::string& cell)> progress;
};

ExperimentResult run_experiment(const ExperimentPlan& plan, const ExperimentDefaults& defaults,
                                const RunOptions& options = {});

MetricsRecord aggregate(const std::vector<ResultRow>& rows);

// mean +- 1.96 sd / sqrt(R).
double ci_half_width(std::span<const double> values);

void write_results_csv(const ExperimentResult& result, const std::filesystem::path& path);
void write_aggregate_csv(const ExperimentResult& result, const std::filesystem::path& path,
                         bool truncated_mean = false);

}  // namespace cqc
