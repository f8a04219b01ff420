#include "cqc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream tags for derive_seed, so order, y0 and split draws never share a stream.
constexpr std::uint64_t kY0Stream = 1;
constexpr std::uint64_t kOrderStream = 2;
constexpr std::uint64_t kSplitStream = 3;

double factor_at(GradientKind kind, const PreparedData& prepared, std::size_t i, double c,
                 double y0) {
  const Dataset& data = prepared.data();
  const double pi = prepared.propensity(i);
  if (kind == GradientKind::dr) {
    return dr_factor(data.a(i), data.y(i), c, y0, pi, prepared.ccdf(1, i)(c),
                     prepared.ccdf(0, i)(y0));
  }
  return ipw_factor(data.a(i), data.y(i), c, y0, pi);
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

std::vector<std::size_t> shuffled_rows(std::size_t n, std::uint64_t seed) {
  auto rows = all_rows(n);
  Rng rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " is not finite");
  }
}

double trimmed_loss(const CqcModel& model, std::span<const double> theta,
                    const PreparedData& prepared, std::span<const std::size_t> rows,
                    std::span<const double> y0) {
  auto m = model.clone();
  m->set_params(theta);
  return loss_quadrature(*m, prepared, rows, y0).trimmed_mean_loss;
}

}  // namespace

ScheduleSpec ScheduleSpec::theorem_convex(std::optional<double> a_clip,
                                          std::optional<double> rho) {
  ScheduleSpec s;
  s.kind = ScheduleKind::theorem_convex;
  s.a_clip = a_clip;
  s.rho = rho;
  return s;
}

ScheduleSpec ScheduleSpec::theorem_strong(double mu, StrongForm form) {
  if (!(mu > 0.0)) throw ConfigError("strong-convexity constant mu must be positive");
  ScheduleSpec s;
  s.kind = ScheduleKind::theorem_strong;
  s.mu = mu;
  s.strong_form = form;
  return s;
}

ScheduleSpec ScheduleSpec::constant(double eta) {
  if (!(eta > 0.0)) throw ConfigError("step size must be positive");
  ScheduleSpec s;
  s.kind = ScheduleKind::constant;
  s.eta = eta;
  return s;
}

ScheduleSpec ScheduleSpec::constant_with_decay(double eta, double rate) {
  if (!(eta > 0.0)) throw ConfigError("step size must be positive");
  if (!(rate >= 0.0)) throw ConfigError("decay rate must be nonnegative");
  ScheduleSpec s;
  s.kind = ScheduleKind::constant_with_decay;
  s.eta = eta;
  s.rate = rate;
  return s;
}

double ScheduleSpec::step(std::size_t t, std::size_t n, double radius) const {
  switch (kind) {
    case ScheduleKind::theorem_convex:
      return radius * a_clip.value() / (2.0 * rho.value() * std::sqrt(static_cast<double>(n)));
    case ScheduleKind::theorem_strong:
      return strong_form == StrongForm::per_t ? 1.0 / (mu * static_cast<double>(t))
                                              : 1.0 / (mu * static_cast<double>(n));
    case ScheduleKind::constant:
      return eta;
    case ScheduleKind::constant_with_decay:
      return eta / (1.0 + rate * static_cast<double>(t));
  }
  return 0.0;
}

std::string ScheduleSpec::name() const {
  switch (kind) {
    case ScheduleKind::theorem_convex: return "theorem_convex";
    case ScheduleKind::theorem_strong: return "theorem_strong";
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::constant_with_decay: return "constant_with_decay";
  }
  return "unknown";
}

nlohmann::json ScheduleSpec::to_json() const {
  nlohmann::json j{{"kind", name()}};
  switch (kind) {
    case ScheduleKind::theorem_convex:
      if (a_clip) j["a_clip"] = *a_clip;
      if (rho) j["rho"] = *rho;
      break;
    case ScheduleKind::theorem_strong:
      j["mu"] = mu;
      j["form"] = strong_form == StrongForm::per_t ? "per_t" : "per_n";
      break;
    case ScheduleKind::constant:
      j["eta"] = eta;
      break;
    case ScheduleKind::constant_with_decay:
      j["eta"] = eta;
      j["rate"] = rate;
      break;
  }
  return j;
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "theorem_convex") return ScheduleKind::theorem_convex;
  if (name == "theorem_strong") return ScheduleKind::theorem_strong;
  if (name == "constant") return ScheduleKind::constant;
  if (name == "constant_with_decay") return ScheduleKind::constant_with_decay;
  throw ConfigError("unknown schedule '" + name + "'");
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json j{{"optimizer", optimizer},
                   {"theta", theta},
                   {"theta_avg", theta_avg},
                   {"theta_last", theta_last},
                   {"losses", losses},
                   {"seeds", seeds},
                   {"schedule", schedule},
                   {"steps", steps}};
  if (std::isfinite(radius)) j["radius"] = radius;
  if (rho > 0.0) j["rho"] = rho;
  if (a_clip > 0.0) j["a_clip"] = a_clip;
  return j;
}

double default_radius(const LinearCqc& model, const Dataset& fit_data, std::span<const double> y0,
                      double ridge) {
  if (y0.size() != fit_data.size()) throw ConfigError("default_radius: y0 and data differ in length");
  auto treated = fit_data.arm_outcomes(1);
  auto untreated = fit_data.arm_outcomes(0);
  if (treated.empty() || untreated.empty()) {
    throw DataError("default_radius: both arms must be present in the fit data");
  }
  std::sort(untreated.begin(), untreated.end());
  std::sort(treated.begin(), treated.end());
  const auto p = model.num_params();
  const auto n = fit_data.size();
  Eigen::MatrixXd phi(n, p);
  Eigen::VectorXd target(n);
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    model.features().compute(y0[i], fit_data.x(i), row);
    for (std::size_t j = 0; j < p; ++j) phi(i, j) = row[j];
    const auto rank = std::upper_bound(untreated.begin(), untreated.end(), y0[i]) - untreated.begin();
    const double q = static_cast<double>(rank) / static_cast<double>(untreated.size());
    target(i) = sorted_quantile(treated, q);
  }
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd theta = gram.ldlt().solve(phi.transpose() * target);
  // Floor of 1 keeps the ball from collapsing when the ridge fit is near zero.
  return std::max(10.0 * theta.norm(), 1.0);
}

FitResult fit_sgd(const CqcModel& model0, const NuisanceSet& nuisances, const Dataset& fit_data,
                  const Y0Sampler& sampler, const SgdOptions& options) {
  if (fit_data.empty()) throw DataError("fit_sgd: fit data is empty");
  if (options.epochs < 1) throw ConfigError("fit_sgd: epochs must be at least 1");
  const ScheduleSpec& schedule = options.schedule;
  if (schedule.theorem() && !model0.linear_in_params()) {
    throw ConfigError("theorem step-size schedules require a model linear in its parameters");
  }

  const std::size_t n = fit_data.size();
  const std::size_t p = model0.num_params();
  const std::size_t total = n * options.epochs;
  const Y0Source source(sampler, fit_data.arm_outcomes(0));
  const PreparedData prepared(nuisances, fit_data);
  const auto rows = all_rows(n);
  const std::uint64_t y0_seed = derive_seed(options.seed, {kY0Stream});

  std::vector<std::vector<double>> y0(options.epochs);
  for (std::size_t e = 0; e < options.epochs; ++e) {
    y0[e] = draw_y0_epoch(source, fit_data, rows, y0_seed, e);
  }

  FitResult result;
  result.optimizer = "sgd";
  result.seeds = {options.seed};
  result.steps = total;

  std::vector<double> theta(p, 0.0);
  if (!model0.linear_in_params()) {
    const auto init = model0.params();
    theta.assign(init.begin(), init.end());
  }

  const auto* linear = dynamic_cast<const LinearCqc*>(&model0);
  double radius = kInf;
  if (options.radius) {
    radius = *options.radius;
    if (!(radius > 0.0)) throw ConfigError("projection radius must be positive");
  } else if (linear != nullptr) {
    radius = default_radius(*linear, fit_data, y0[0]);
  }
  result.radius = radius;

  ScheduleSpec resolved = schedule;
  if (schedule.kind == ScheduleKind::theorem_convex) {
    if (!std::isfinite(radius)) throw ConfigError("theorem_convex schedule needs a finite radius");
    if (!resolved.a_clip) {
      double a = 0.5;
      for (std::size_t i = 0; i < n; ++i) {
        const double pi = prepared.propensity(i);
        a = std::min(a, std::min(pi, 1.0 - pi));
      }
      resolved.a_clip = a;
    }
    if (!resolved.rho) {
      double rho = 0.0;
      std::vector<double> phi(p);
      for (std::size_t e = 0; e < options.epochs; ++e) {
        for (std::size_t i = 0; i < n; ++i) {
          linear->features().compute(y0[e][i], fit_data.x(i), phi);
          rho = std::max(rho, norm(phi));
        }
      }
      resolved.rho = rho;
    }
    if (!std::isfinite(*resolved.rho) || !(*resolved.rho > 0.0)) {
      throw NumericError(
          "feature-norm bound rho is not finite; compute it empirically from the fit data");
    }
    if (!(*resolved.a_clip > 0.0)) throw NumericError("propensity clip bound must be positive");
    result.rho = *resolved.rho;
    result.a_clip = *resolved.a_clip;
  }
  result.schedule = resolved.to_json();

  auto model = model0.clone();
  std::vector<double> grad(p);
  std::vector<double> sum(theta);
  std::size_t t = 0;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const auto order = shuffled_rows(n, derive_seed(options.seed, {kOrderStream, e}));
    for (const std::size_t i : order) {
      ++t;
      model->set_params(theta);
      const double c = model->value_and_grad(y0[e][i], fit_data.x(i), grad);
      const double factor = factor_at(options.grad, prepared, i, c, y0[e][i]);
      const double eta = resolved.step(t, total, radius);
      for (std::size_t j = 0; j < p; ++j) theta[j] -= eta * factor * grad[j];
      if (std::isfinite(radius)) project_ball_inplace(theta, radius);
      check_finite(theta, "SGD iterate");
      for (std::size_t j = 0; j < p; ++j) sum[j] += theta[j];
    }
    if (options.track_loss) {
      std::vector<double> avg(sum);
      for (double& v : avg) v /= static_cast<double>(t + 1);
      result.losses.push_back(trimmed_loss(model0, avg, prepared, rows, y0[e]));
    }
  }

  result.theta_avg = sum;
  for (double& v : result.theta_avg) v /= static_cast<double>(total + 1);
  result.theta_last = theta;
  result.theta = result.theta_avg;
  return result;
}

FitResult fit_adam(const CqcModel& model0, const NuisanceSet& nuisances, const Dataset& fit_data,
                   const Y0Sampler& sampler, const AdamOptions& options) {
  if (!(options.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  if (options.iterations < 1) throw ConfigError("Adam needs at least one iteration");
  if (fit_data.empty()) throw DataError("fit_adam: fit data is empty");
  if (options.batch == BatchMode::minibatch && options.batch_size < 1) {
    throw ConfigError("Adam batch size must be at least 1");
  }

  const std::size_t n = fit_data.size();
  const std::size_t p = model0.num_params();
  const Y0Source source(sampler, fit_data.arm_outcomes(0));
  const PreparedData prepared(nuisances, fit_data);
  const auto rows = all_rows(n);
  const std::uint64_t y0_seed = derive_seed(options.seed, {kY0Stream});

  FitResult result;
  result.optimizer = "adam";
  result.seeds = {options.seed};
  result.steps = options.iterations;
  result.radius = kInf;
  result.schedule = {{"kind", "adam"},
                     {"lr", options.lr},
                     {"decay_rate", options.decay_rate},
                     {"iterations", options.iterations},
                     {"batch", options.batch == BatchMode::full ? "full" : "minibatch"}};
  if (options.batch == BatchMode::minibatch) result.schedule["batch_size"] = options.batch_size;

  auto model = model0.clone();
  const auto init = model0.params();
  std::vector<double> theta(init.begin(), init.end());
  std::vector<double> m(p, 0.0), v(p, 0.0), grad(p);

  // Epoch state. Full batch: one epoch per iteration.
  std::size_t epoch = 0;
  std::size_t cursor = n;
  std::vector<std::size_t> order;
  std::vector<double> y0_epoch;
  std::vector<std::size_t> batch_rows;
  std::vector<double> batch_y0;

  const std::size_t bsz = options.batch == BatchMode::full ? n : std::min(options.batch_size, n);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t t = 1; t <= options.iterations; ++t) {
    if (cursor + bsz > n) {
      order = options.batch == BatchMode::full
                  ? rows
                  : shuffled_rows(n, derive_seed(options.seed, {kOrderStream, epoch}));
      y0_epoch = draw_y0_epoch(source, fit_data, rows, y0_seed, epoch);
      ++epoch;
      cursor = 0;
    }
    batch_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                      order.begin() + static_cast<std::ptrdiff_t>(cursor + bsz));
    batch_y0.resize(bsz);
    for (std::size_t k = 0; k < bsz; ++k) batch_y0[k] = y0_epoch[batch_rows[k]];
    cursor += bsz;

    model->set_params(theta);
    batch_gradient(*model, prepared, batch_rows, batch_y0, options.grad, grad);
    check_finite(grad, "Adam gradient");

    b1t *= options.beta1;
    b2t *= options.beta2;
    const double lr = options.lr / (1.0 + options.decay_rate * static_cast<double>(t - 1));
    for (std::size_t j = 0; j < p; ++j) {
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * grad[j];
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * grad[j] * grad[j];
      const double mhat = m[j] / (1.0 - b1t);
      const double vhat = v[j] / (1.0 - b2t);
      theta[j] -= lr * mhat / (std::sqrt(vhat) + options.epsilon);
    }
    check_finite(theta, "Adam iterate");

    const bool last = t == options.iterations;
    if (options.track_loss &&
        (last || (options.loss_every > 0 && t % options.loss_every == 0))) {
      result.losses.push_back(trimmed_loss(model0, theta, prepared, batch_rows, batch_y0));
    }
  }

  result.theta_last = theta;
  result.theta = theta;
  return result;
}

double validate(const CqcModel& model, const NuisanceSet& nuisances,
                std::span<const Query> holdout, double trim, int nodes) {
  if (holdout.empty()) throw ConfigError("validate: empty holdout");
  return loss_quadrature(model, nuisances, holdout, nodes, trim).trimmed_mean_loss;
}

Holdout make_holdout(const Dataset& data, const Y0Source& source, std::uint64_t seed) {
  Holdout h;
  h.rows = all_rows(data.size());
  h.y0 = draw_y0_epoch(source, data, h.rows, seed, 0);
  return h;
}

std::size_t argmin_loss(std::span<const double> losses) {
  std::size_t best = losses.size();
  for (std::size_t k = 0; k < losses.size(); ++k) {
    if (!std::isfinite(losses[k])) continue;
    if (best == losses.size() || losses[k] < losses[best]) best = k;
  }
  if (best == losses.size()) throw NumericError("every candidate produced a non-finite loss");
  return best;
}

LrSearchResult fit_adam_lr_search(const CqcModel& model0, const NuisanceSet& nuisances,
                                  const Dataset& fit_data, const Y0Sampler& sampler,
                                  const AdamOptions& options, std::span<const double> lr_grid) {
  if (lr_grid.empty()) throw ConfigError("learning-rate grid is empty");
  const std::size_t n = fit_data.size();
  if (n < 5) throw DataError("learning-rate search needs at least 5 fit rows");

  const auto perm = shuffled_rows(n, derive_seed(options.seed, {kSplitStream}));
  const std::size_t n_train = (4 * n) / 5;
  const std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> valid_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  const Dataset train = fit_data.subset(train_idx);
  const Dataset valid = fit_data.subset(valid_idx);

  const Y0Source source(sampler, fit_data.arm_outcomes(0));
  const PreparedData prepared(nuisances, valid);
  const Holdout holdout = make_holdout(valid, source, derive_seed(options.seed, {kSplitStream, 1}));

  LrSearchResult out;
  out.grid.assign(lr_grid.begin(), lr_grid.end());
  for (const double lr : lr_grid) {
    AdamOptions o = options;
    o.lr = lr;
    o.track_loss = false;
    try {
      const FitResult fit = fit_adam(model0, nuisances, train, sampler, o);
      out.losses.push_back(trimmed_loss(model0, fit.theta, prepared, holdout.rows, holdout.y0));
    } catch (const NumericError&) {
      out.losses.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  out.best_lr = out.grid[argmin_loss(out.losses)];
  AdamOptions o = options;
  o.lr = out.best_lr;
  out.fit = fit_adam(model0, nuisances, fit_data, sampler, o);
  return out;
}

std::unique_ptr<CqcModel> fitted_model(const CqcModel& model0, const FitResult& result) {
  auto m = model0.clone();
  m->set_params(result.theta);
  return m;
}

}  // namespace cqc
