#include "cqc/nuisance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

std::string Provenance::label() const {
  std::string base = source == NuisanceSource::oracle ? "oracle" : "fitted";
  if (perturbed()) {
    std::ostringstream os;
    os << base << "+noise(" << noise_level << ")";
    return os.str();
  }
  return base;
}

// ---------------------------------------------------------------------------

PropensityModel::PropensityModel(std::vector<double> beta, double beta0, double clip)
    : beta_(std::move(beta)), beta0_(beta0), clip_(clip) {
  if (!(clip > 0.0 && clip < 0.5)) throw ConfigError("propensity clip must lie in (0, 0.5)");
}

double PropensityModel::unclipped(std::span<const double> x) const {
  return sigmoid(beta0_ + dot(beta_, x));
}

double PropensityModel::operator()(std::span<const double> x) const {
  return std::clamp(unclipped(x), clip_, 1.0 - clip_);
}

namespace {

// Penalised mean log-likelihood. params = [beta0, beta...].
double logistic_objective(const Eigen::MatrixXd& design, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& params, double l2) {
  const Eigen::VectorXd eta = design * params;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log sigmoid(eta) = -log1p(exp(-eta)), computed stably
    const double e = eta[i];
    const double log_p = e >= 0 ? -std::log1p(std::exp(-e)) : e - std::log1p(std::exp(e));
    const double log_q = log_p - e;
    ll += a[i] * log_p + (1.0 - a[i]) * log_q;
  }
  const double n = static_cast<double>(eta.size());
  return ll / n - 0.5 * l2 * params.tail(params.size() - 1).squaredNorm();
}

}  // namespace

PropensityModel fit_propensity(const Dataset& data, const PropensityFitOptions& options,
                               PropensityFitTrace* trace) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<Eigen::Index>(data.dim());
  if (n == 0) throw DataError("fit_propensity: empty data");
  const std::size_t treated = data.arm_count(1);
  if (treated == 0 || treated == data.size()) throw DataError("degenerate treatment assignment");

  const double l2 = options.l2 >= 0.0 ? options.l2 : 1.0 / static_cast<double>(n);
  Eigen::MatrixXd design(n, d + 1);
  Eigen::VectorXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    auto xi = data.x(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < d; ++j) design(i, j + 1) = xi[static_cast<std::size_t>(j)];
    a[i] = data.a(static_cast<std::size_t>(i));
  }
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, l2);
  penalty[0] = 0.0;

  Eigen::VectorXd params = Eigen::VectorXd::Zero(d + 1);
  const double frac = static_cast<double>(treated) / static_cast<double>(n);
  params[0] = std::log(frac / (1.0 - frac));

  double objective = logistic_objective(design, a, params, l2);
  if (trace) trace->objective.push_back(objective);
  double grad_norm = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd eta = design * params;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(eta[i]);
      w[i] = p[i] * (1.0 - p[i]);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::VectorXd grad =
        inv_n * design.transpose() * (a - p) - penalty.cwiseProduct(params);
    grad_norm = grad.norm();
    if (grad_norm <= options.tolerance) break;

    Eigen::MatrixXd hessian = inv_n * design.transpose() * w.asDiagonal() * design;
    hessian.diagonal() += penalty;
    // A tiny ridge keeps the intercept-only direction solvable when w vanishes.
    hessian.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);

    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Eigen::VectorXd candidate = params + t * step;
      const double value = logistic_objective(design, a, candidate, l2);
      if (value >= objective) {
        params = candidate;
        objective = value;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (trace) trace->objective.push_back(objective);
    if (!improved) break;
  }
  if (trace) {
    trace->final_gradient_norm = grad_norm;
    trace->iterations = iter;
  }
  if (!(grad_norm <= options.tolerance)) {
    // One more gradient evaluation at the final point for an accurate report.
    Eigen::VectorXd p(n);
    const Eigen::VectorXd eta = design * params;
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(eta[i]);
    grad_norm = (design.transpose() * (a - p) / static_cast<double>(n) -
                 penalty.cwiseProduct(params))
                    .norm();
    if (trace) trace->final_gradient_norm = grad_norm;
    if (!(grad_norm <= options.tolerance)) {
      std::ostringstream os;
      os << "logistic regression did not converge; final gradient norm " << grad_norm;
      throw NumericError(os.str());
    }
  }
  std::vector<double> beta(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) beta[static_cast<std::size_t>(j)] = params[j + 1];
  return PropensityModel(std::move(beta), params[0], options.clip);
}

// ---------------------------------------------------------------------------

double StepCdf::operator()(double y) const {
  const auto it = std::upper_bound(y_.begin(), y_.end(), y);
  if (it == y_.begin()) return 0.0;
  return cum_[static_cast<std::size_t>(it - y_.begin()) - 1];
}

CcdfModel::CcdfModel(int arm, double bandwidth, std::vector<double> y, std::vector<double> x,
                     std::size_t dim)
    : arm_(arm), bandwidth_(bandwidth), dim_(dim) {
  if (!(bandwidth > 0.0)) throw ConfigError("CCDF bandwidth must be > 0");
  if (y.empty()) throw DataError("kernel CCDF needs at least one training point in arm " +
                                 std::to_string(arm));
  if (x.size() != y.size() * dim) throw DataError("kernel CCDF covariate size mismatch");
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return y[i] < y[j]; });
  y_.reserve(y.size());
  x_.reserve(x.size());
  for (auto i : order) {
    y_.push_back(y[i]);
    x_.insert(x_.end(), x.begin() + static_cast<std::ptrdiff_t>(i * dim),
              x.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
}

std::vector<double> CcdfModel::weights(std::span<const double> x) const {
  if (x.size() != dim_) throw DataError("kernel CCDF query has wrong covariate dimension");
  const std::size_t n = y_.size();
  std::vector<double> d2(n);
  double d2_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x_.data() + i * dim_;
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double diff = x[j] - xi[j];
      s += diff * diff;
    }
    d2[i] = s;
    d2_min = std::min(d2_min, s);
  }
  // Shifting by the nearest distance leaves the ratio unchanged and avoids
  // underflow to 0/0 far from the data.
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  double total = 0.0;
  for (auto& w : d2) {
    w = std::exp(-(w - d2_min) * inv);
    total += w;
  }
  for (auto& w : d2) w /= total;
  return d2;
}

std::unique_ptr<ConditionalCdf> CcdfModel::at(std::span<const double> x) const {
  auto w = weights(x);
  // Collapse tied outcomes so each knot carries the full mass at that value.
  std::vector<double> knots;
  std::vector<double> cum;
  knots.reserve(w.size());
  cum.reserve(w.size());
  double running = 0.0;
  for (std::size_t i = 0; i < y_.size(); ++i) {
    running += w[i];
    if (!knots.empty() && knots.back() == y_[i]) {
      cum.back() = std::min(running, 1.0);
    } else {
      knots.push_back(y_[i]);
      cum.push_back(std::min(running, 1.0));
    }
  }
  cum.back() = 1.0;
  return std::make_unique<StepCdf>(std::move(knots), std::move(cum));
}

double CcdfModel::operator()(double y, std::span<const double> x) const {
  if (y < y_.front()) return 0.0;
  if (y >= y_.back()) return 1.0;
  auto w = weights(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y_.size() && y_[i] <= y; ++i) s += w[i];
  return std::min(s, 1.0);
}

CcdfModel fit_ccdf(const Dataset& data, int arm, double bandwidth) {
  if (arm != 0 && arm != 1) throw ConfigError("arm must be 0 or 1");
  if (!(bandwidth > 0.0)) throw ConfigError("CCDF bandwidth must be > 0");
  std::vector<double> y;
  std::vector<double> x;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.a(i) != arm) continue;
    y.push_back(data.y(i));
    auto xi = data.x(i);
    x.insert(x.end(), xi.begin(), xi.end());
  }
  if (y.empty()) throw DataError("arm " + std::to_string(arm) + " has no samples");
  return CcdfModel(arm, bandwidth, std::move(y), std::move(x), data.dim());
}

const std::vector<double>& default_bandwidth_grid() {
  static const std::vector<double> grid{0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0};
  return grid;
}

double select_bandwidth(const Dataset& data, int arm, std::span<const double> grid,
                        const BandwidthValidation& validation) {
  if (grid.empty()) throw ConfigError("bandwidth grid is empty");
  for (double h : grid) {
    if (!(h > 0.0)) throw ConfigError("bandwidth grid entries must be > 0");
  }
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() == 1) return sorted.front();

  const Dataset& val = validation.data ? *validation.data : data;
  if (!validation.data && !validation.oracle) {
    throw ConfigError("select_bandwidth needs validation data or an oracle CCDF");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (val.a(i) == arm) rows.push_back(i);
  }
  if (rows.empty()) throw DataError("no validation rows in arm " + std::to_string(arm));
  std::vector<double> thresholds;
  for (auto i : rows) thresholds.push_back(val.y(i));

  // Targets are fixed across candidates: one-hot indicators or exact CDF values.
  std::vector<double> target(rows.size() * thresholds.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::unique_ptr<ConditionalCdf> exact;
    if (validation.oracle) exact = validation.oracle->at(val.x(rows[r]));
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      target[r * thresholds.size() + t] =
          exact ? (*exact)(thresholds[t]) : (val.y(rows[r]) <= thresholds[t] ? 1.0 : 0.0);
    }
  }

  double best_h = sorted.front();
  double best_score = std::numeric_limits<double>::infinity();
  for (double h : sorted) {
    const CcdfModel model = fit_ccdf(data, arm, h);
    std::vector<double> errors(target.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto cond = model.at(val.x(rows[r]));
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        const double e = (*cond)(thresholds[t]) - target[r * thresholds.size() + t];
        errors[r * thresholds.size() + t] = e * e;
      }
    }
    const double score = mean(errors);
    if (score < best_score) {
      best_score = score;
      best_h = h;
    }
  }
  return best_h;
}

// ---------------------------------------------------------------------------

double GaussianCondCdf::operator()(double y) const { return normal_cdf((y - mu_) / sigma_); }

std::unique_ptr<ConditionalCdf> OracleCcdf::at(std::span<const double> x) const {
  return std::make_unique<GaussianCondCdf>(dgp_.mu(arm_, x), dgp_.sigma(arm_));
}

double OracleCcdf::operator()(double y, std::span<const double> x) const {
  return dgp_.ccdf(arm_, y, x);
}

double OraclePropensity::operator()(std::span<const double> x) const {
  return std::clamp(dgp_.propensity(x), clip_, 1.0 - clip_);
}

NuisanceSet oracle_nuisances(const DgpSpec& dgp, double clip) {
  dgp.validate();
  NuisanceSet set;
  set.propensity = std::make_shared<OraclePropensity>(dgp, clip);
  set.ccdf0 = std::make_shared<OracleCcdf>(dgp, 0);
  set.ccdf1 = std::make_shared<OracleCcdf>(dgp, 1);
  set.propensity_provenance.source = NuisanceSource::oracle;
  set.ccdf_provenance.source = NuisanceSource::oracle;
  return set;
}

NuisanceSet fit_nuisances(const Dataset& data, const NuisanceFitOptions& options,
                          const DgpSpec* oracle) {
  NuisanceSet set;
  set.propensity = std::make_shared<PropensityModel>(fit_propensity(data, options.propensity));
  const auto& grid = options.bandwidth_grid.empty() ? default_bandwidth_grid()
                                                    : options.bandwidth_grid;

  // Held-out split for bandwidth search; the final model uses all rows.
  Dataset train = data;
  Dataset held_out(data.dim());
  if (!options.bandwidth) {
    auto order = split_half(data, options.seed, true);
    std::vector<std::size_t> all = order.nuisance_idx;
    all.insert(all.end(), order.fit_idx.begin(), order.fit_idx.end());
    const auto n_val = static_cast<std::size_t>(
        std::round(options.validation_fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> val_idx(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr_idx(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
    train = data.subset(tr_idx);
    held_out = data.subset(val_idx);
  }

  for (int arm = 0; arm <= 1; ++arm) {
    double h = 1.0;
    if (options.bandwidth) {
      h = *options.bandwidth;
    } else if (train.arm_count(arm) > 0 && held_out.arm_count(arm) > 0) {
      if (oracle) {
        const OracleCcdf exact(*oracle, arm);
        h = select_bandwidth(train, arm, grid, {&held_out, &exact});
      } else {
        h = select_bandwidth(train, arm, grid, {&held_out, nullptr});
      }
    }
    auto model = std::make_shared<CcdfModel>(fit_ccdf(data, arm, h));
    (arm == 0 ? set.ccdf0 : set.ccdf1) = std::move(model);
  }
  set.propensity_provenance.source = NuisanceSource::fitted;
  set.ccdf_provenance.source = NuisanceSource::fitted;
  return set;
}

}  // namespace cqc
