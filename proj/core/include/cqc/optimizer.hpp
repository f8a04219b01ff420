#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cqc/cqc_model.hpp"
#include "cqc/dataset.hpp"
#include "cqc/nuisance.hpp"
#include "cqc/objective.hpp"

namespace cqc {

enum class ScheduleKind { theorem_convex, theorem_strong, constant, constant_with_decay };

// Strongly convex step sizes: 1/(mu t), or the constant 1/(mu n).
enum class StrongForm { per_t, per_n };

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::theorem_convex;
  // theorem_convex: eta = B a_clip / (2 rho sqrt(n)). Unset values are
  // computed from the fit data (see fit_sgd).
  std::optional<double> a_clip;
  std::optional<double> rho;
  // theorem_strong
  double mu = 1.0;
  StrongForm strong_form = StrongForm::per_t;
  // constant / constant_with_decay: eta / (1 + rate t)
  double eta = 0.01;
  double rate = 0.0;

  static ScheduleSpec theorem_convex(std::optional<double> a_clip = {},
                                     std::optional<double> rho = {});
  static ScheduleSpec theorem_strong(double mu, StrongForm form = StrongForm::per_t);
  static ScheduleSpec constant(double eta);
  static ScheduleSpec constant_with_decay(double eta, double rate);

  bool theorem() const {
    return kind == ScheduleKind::theorem_convex || kind == ScheduleKind::theorem_strong;
  }
  // Step size at iteration t (1-based) out of n total, with radius B.
  double step(std::size_t t, std::size_t n, double radius) const;
  std::string name() const;
  nlohmann::json to_json() const;
};

ScheduleKind parse_schedule_kind(const std::string& name);

struct FitResult {
  std::vector<double> theta;       // primary estimate: theta_avg for SGD, theta_last for Adam
  std::vector<double> theta_avg;   // SGD: mean of every iterate including theta(1)
  std::vector<double> theta_last;
  std::vector<double> losses;      // trimmed training loss at recorded points (last = final)
  std::vector<std::uint64_t> seeds;
  std::string optimizer;
  nlohmann::json schedule;
  std::size_t steps = 0;
  double radius = 0.0;  // projection radius; +inf when inactive
  double rho = 0.0;     // SGD theorem schedules
  double a_clip = 0.0;  // SGD theorem schedules

  nlohmann::json to_json() const;
};

struct SgdOptions {
  ScheduleSpec schedule;
  std::optional<double> radius;  // unset: default_radius for linear models, none otherwise
  std::size_t epochs = 1;        // 1 is a single pass
  GradientKind grad = GradientKind::dr;
  std::uint64_t seed = 0;
  bool track_loss = true;
};

// Projected SGD. Linear-in-parameter models start at theta = 0, others at
// model0's parameters. Each epoch visits every row once in a seeded order, with
// a fresh y0 per row; theta is projected onto the radius ball after every step.
FitResult fit_sgd(const CqcModel& model0, const NuisanceSet& nuisances, const Dataset& fit_data,
                  const Y0Sampler& sampler, const SgdOptions& options);

enum class BatchMode { full, minibatch };

struct AdamOptions {
  double lr = 0.1;
  std::size_t iterations = 1000;
  BatchMode batch = BatchMode::full;
  std::size_t batch_size = 64;
  double decay_rate = 0.0;  // lr_t = lr / (1 + decay_rate t)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GradientKind grad = GradientKind::dr;
  std::uint64_t seed = 0;
  bool track_loss = true;
  std::size_t loss_every = 0;  // 0: final loss only
};

// Adam from model0's parameters on mc gradients; returns the last iterate.
FitResult fit_adam(const CqcModel& model0, const NuisanceSet& nuisances, const Dataset& fit_data,
                   const Y0Sampler& sampler, const AdamOptions& options);

// Radius for the projection ball: 10 |theta_ridge|, where theta_ridge is a
// ridge fit of rank-matched treated outcomes on phi(y0, x). Each y0 is paired
// with the treated outcome at the same empirical quantile.
double default_radius(const LinearCqc& model, const Dataset& fit_data, std::span<const double> y0,
                      double ridge = 1.0);

// Trimmed-mean quadrature loss on a held-out batch.
double validate(const CqcModel& model, const NuisanceSet& nuisances,
                std::span<const Query> holdout, double trim = 0.05, int nodes = 129);

// Holdout batch for validation: every row of `data` paired with a y0 draw.
struct Holdout {
  std::vector<std::size_t> rows;
  std::vector<double> y0;
};

Holdout make_holdout(const Dataset& data, const Y0Source& source, std::uint64_t seed);

struct LrSearchResult {
  double best_lr = 0.0;
  std::vector<double> grid;
  std::vector<double> losses;  // validation loss per grid entry (NaN on failure)
  FitResult fit;               // refit on all fit data at best_lr
};

// 80-20 split of fit_data; Adam per grid entry on the 80, trimmed loss on the
// 20, argmin (first on ties), refit on everything.
LrSearchResult fit_adam_lr_search(const CqcModel& model0, const NuisanceSet& nuisances,
                                  const Dataset& fit_data, const Y0Sampler& sampler,
                                  const AdamOptions& options, std::span<const double> lr_grid);

// Index of the smallest finite loss (first on ties). Throws NumericError when
// none is finite.
std::size_t argmin_loss(std::span<const double> losses);

// model0 with its parameters replaced by result.theta.
std::unique_ptr<CqcModel> fitted_model(const CqcModel& model0, const FitResult& result);

}  // namespace cqc
