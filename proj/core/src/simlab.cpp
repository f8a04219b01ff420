#include "cqc/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream tags for derive_seed.
constexpr std::uint64_t kDirectionStream = 11;
constexpr std::uint64_t kDataStream = 12;
constexpr std::uint64_t kNoiseStream = 13;
constexpr std::uint64_t kEvalStream = 14;
constexpr std::uint64_t kSelectStream = 15;
constexpr std::uint64_t kCellStream = 16;
constexpr std::uint64_t kNuisanceStream = 17;

double parse_number(const std::string& s, const char* what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& s, const char* what) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
  }
  return v;
}

Y0Sampler bind_sampler(Y0Sampler s, const DgpSpec& dgp) {
  if (s.kind == Y0Kind::conditional) s.dgp = dgp;
  return s;
}

}  // namespace

double oracle_cqc_eval(const OracleCqc& oracle, double y0, std::span<const double> x) {
  return oracle(y0, x);
}

EvalPoints make_eval_points(const DgpSpec& dgp, const EvalSpec& spec,
                            std::span<const double> untreated) {
  if (spec.num_points < 1) throw ConfigError("evaluation needs at least one point");
  const Y0Source source(bind_sampler(spec.sampler, dgp), untreated);
  EvalPoints points;
  points.dim = dgp.d;
  points.y0.resize(spec.num_points);
  points.x.resize(spec.num_points * dgp.d);
  Rng rng(spec.seed);
  for (std::size_t k = 0; k < spec.num_points; ++k) {
    std::span<double> x(points.x.data() + k * dgp.d, dgp.d);
    draw_covariates(dgp, rng, x);
    points.y0[k] = source.draw(x, rng);
  }
  return points;
}

double mae(std::span<const double> predictions, const EvalPoints& points,
           const OracleCqc& oracle) {
  if (predictions.size() != points.size()) throw ConfigError("mae: prediction count mismatch");
  if (points.size() == 0) throw ConfigError("mae: no evaluation points");
  std::vector<double> err(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    err[k] = std::abs(predictions[k] - oracle(points.y0[k], points.xs(k)));
  }
  return mean(err);
}

double mae(const CqcModel& model, const EvalPoints& points, const OracleCqc& oracle) {
  std::vector<double> pred(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) pred[k] = model.value(points.y0[k], points.xs(k));
  return mae(pred, points, oracle);
}

double mae(const std::function<double(double, std::span<const double>)>& predictor,
           const OracleCqc& oracle, const EvalPoints& points) {
  std::vector<double> pred(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) pred[k] = predictor(points.y0[k], points.xs(k));
  return mae(pred, points, oracle);
}

double population_loss_at(double c, double y0, std::span<const double> x, const DgpSpec& dgp) {
  const double mu1 = dgp.mu(1, x);
  const double s1 = dgp.sigma1;
  const double star = dgp.cqc(y0, x);
  const double f0 = dgp.ccdf(0, y0, x);
  // int_{star}^{c} Phi((t - mu1)/s1) dt - f0 (c - star)
  const double integral = s1 * (normal_cdf_antiderivative((c - mu1) / s1) -
                                normal_cdf_antiderivative((star - mu1) / s1));
  return integral - f0 * (c - star);
}

double population_loss(const CqcModel& model, const DgpSpec& dgp, const EvalPoints& points) {
  std::vector<double> per(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto x = points.xs(k);
    per[k] = population_loss_at(model.value(points.y0[k], x), points.y0[k], x, dgp);
  }
  return mean(per);
}

// ---------------------------------------------------------------------------

Axis parse_axis(const std::string& name) {
  if (name == "slope") return Axis::slope;
  if (name == "nuisance_noise") return Axis::nuisance_noise;
  if (name == "sample_size") return Axis::sample_size;
  if (name == "lr_sweep") return Axis::lr_sweep;
  if (name == "y0_sampler_sweep") return Axis::y0_sampler_sweep;
  throw ConfigError("unknown axis '" + name +
                    "' (expected slope, nuisance_noise, sample_size, lr_sweep, y0_sampler_sweep)");
}

std::string axis_name(Axis axis) {
  switch (axis) {
    case Axis::slope: return "slope";
    case Axis::nuisance_noise: return "nuisance_noise";
    case Axis::sample_size: return "sample_size";
    case Axis::lr_sweep: return "lr_sweep";
    case Axis::y0_sampler_sweep: return "y0_sampler_sweep";
  }
  return "unknown";
}

std::string MethodTag::label() const {
  std::string k;
  switch (kind) {
    case MethodKind::dr_lin: k = "dr_lin"; break;
    case MethodKind::dr_nn: k = "dr_nn"; break;
    case MethodKind::ipw: k = "ipw"; break;
    case MethodKind::invert_dr: k = "invert_dr"; break;
    case MethodKind::s_learner: k = "s_learner"; break;
  }
  return k + (oracle ? ":oracle" : ":estimated");
}

MethodTag MethodTag::parse(const std::string& tag) {
  const auto colon = tag.find(':');
  const std::string kind = tag.substr(0, colon);
  const std::string source = colon == std::string::npos ? "estimated" : tag.substr(colon + 1);
  MethodTag m;
  if (kind == "dr_lin") m.kind = MethodKind::dr_lin;
  else if (kind == "dr_nn") m.kind = MethodKind::dr_nn;
  else if (kind == "ipw") m.kind = MethodKind::ipw;
  else if (kind == "invert_dr" || kind == "invert") m.kind = MethodKind::invert_dr;
  else if (kind == "s_learner") m.kind = MethodKind::s_learner;
  else
    throw ConfigError("unknown method '" + kind +
                      "' (expected dr_lin, dr_nn, ipw, invert_dr or s_learner)");
  if (source == "oracle") m.oracle = true;
  else if (source == "estimated" || source == "est") m.oracle = false;
  else throw ConfigError("unknown nuisance source '" + source + "' (expected oracle or estimated)");
  return m;
}

void ExperimentPlan::validate() const {
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (values.empty()) throw ConfigError("experiment axis has no values");
  if (methods.empty()) throw ConfigError("experiment has no methods");
  if (axis == Axis::nuisance_noise && (noise_targets == 0u || noise_targets > 7u)) {
    throw ConfigError("noise targets must be a nonempty subset of propensity, ccdf0, ccdf1");
  }
  for (const auto& v : values) {
    switch (axis) {
      case Axis::slope: parse_number(v, "slope"); break;
      case Axis::nuisance_noise:
        if (parse_number(v, "noise level") < 0.0) throw ConfigError("noise level must be >= 0");
        break;
      case Axis::sample_size:
        if (parse_count(v, "sample size") < 4) throw ConfigError("sample size must be at least 4");
        break;
      case Axis::lr_sweep:
        if (!(parse_number(v, "learning rate") > 0.0)) throw ConfigError("learning rate must be > 0");
        break;
      case Axis::y0_sampler_sweep: parse_y0_kind(v); break;
    }
  }
}

double ci_half_width(std::span<const double> values) {
  if (values.size() < 2) return kNaN;
  return 1.96 * sample_sd(values) / std::sqrt(static_cast<double>(values.size()));
}

MetricsRecord aggregate(const std::vector<ResultRow>& rows) {
  MetricsRecord rec;
  if (rows.empty()) return rec;
  rec.axis = rows.front().axis;
  rec.axis_value = rows.front().axis_value;
  rec.method = rows.front().method;
  rec.propensity_provenance = rows.front().propensity_provenance;
  rec.ccdf_provenance = rows.front().ccdf_provenance;
  std::vector<double> secs;
  for (const auto& r : rows) {
    if (std::isnan(r.mae)) {
      ++rec.failures;
      continue;
    }
    rec.maes.push_back(r.mae);
    secs.push_back(r.seconds);
  }
  if (rec.maes.empty()) {
    rec.mean = rec.truncated_mean = rec.ci_half_width = rec.seconds = kNaN;
    return rec;
  }
  rec.mean = mean(rec.maes);
  rec.ci_half_width = ci_half_width(rec.maes);
  rec.truncated_mean = trimmed_mean(rec.maes, 0.025);
  rec.seconds = mean(secs);
  return rec;
}

// ---------------------------------------------------------------------------

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!on_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

// Nuisances for one method tag in one cell, plus their provenance.
NuisanceSet nuisances_for(const MethodTag& tag, const NuisanceSet& oracle,
                          const NuisanceSet* fitted, const ExperimentPlan& plan, double noise,
                          std::uint64_t noise_seed, double noise_bias, double clip,
                          std::size_t dim, const Dataset& reference) {
  const NuisanceSet& base = tag.oracle ? oracle : *fitted;
  if (plan.axis != Axis::nuisance_noise) return base;
  NuisanceSet start = base;
  if (plan.noise_targets != 7u) {
    // Untargeted nuisances are exact, so only the targeted ones carry error.
    const auto has = [&](NoiseTarget t) { return (plan.noise_targets & static_cast<unsigned>(t)) != 0; };
    if (!has(NoiseTarget::propensity)) {
      start.propensity = oracle.propensity;
      start.propensity_provenance = oracle.propensity_provenance;
    }
    if (!has(NoiseTarget::ccdf0) && !has(NoiseTarget::ccdf1)) {
      start.ccdf0 = oracle.ccdf0;
      start.ccdf1 = oracle.ccdf1;
      start.ccdf_provenance = oracle.ccdf_provenance;
    } else {
      if (!has(NoiseTarget::ccdf0)) start.ccdf0 = oracle.ccdf0;
      if (!has(NoiseTarget::ccdf1)) start.ccdf1 = oracle.ccdf1;
    }
  }
  LogitNoise ln;
  ln.level = noise;
  ln.bias = noise_bias;
  ln.seed = noise_seed;
  ln.targets = plan.noise_targets;
  ln.clip = clip;
  return perturb(start, ln, dim, &reference);
}

FitResult run_adam(const CqcModel& model0, const NuisanceSet& nuisances, const Dataset& fit,
                   const Y0Sampler& sampler, const AdamOptions& o, std::span<const double> lr_grid) {
  if (lr_grid.empty()) return fit_adam(model0, nuisances, fit, sampler, o);
  return fit_adam_lr_search(model0, nuisances, fit, sampler, o, lr_grid).fit;
}

std::unique_ptr<CqcModel> fit_linear(const MethodTag& tag, const NuisanceSet& nuisances,
                                     const Dataset& fit, const Y0Sampler& sampler,
                                     const ExperimentDefaults& defaults, double lr,
                                     std::span<const double> lr_grid, std::uint64_t seed) {
  const GradientKind grad = tag.kind == MethodKind::ipw ? GradientKind::ipw : GradientKind::dr;
  auto features = std::make_shared<AffineFeatures>(fit.dim());
  const LinearCqc model0(features);
  FitResult result;
  if (defaults.optimizer == OptimizerKind::adam) {
    AdamOptions o = defaults.adam;
    o.lr = lr;
    o.grad = grad;
    o.seed = seed;
    o.track_loss = false;
    result = run_adam(model0, nuisances, fit, sampler, o, lr_grid);
  } else {
    SgdOptions o = defaults.sgd;
    o.grad = grad;
    o.seed = seed;
    o.track_loss = false;
    result = fit_sgd(model0, nuisances, fit, sampler, o);
  }
  return fitted_model(model0, result);
}

std::vector<double> predict_model(const CqcModel& model, const EvalPoints& points) {
  std::vector<double> out(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) out[k] = model.value(points.y0[k], points.xs(k));
  return out;
}

std::vector<double> predict_inversion(const NuisanceSet& nuisances, const Dataset& fit,
                                      const GridSpec& grid, const OracleCqc& oracle,
                                      const EvalPoints& select, const EvalPoints& points,
                                      const ExperimentDefaults& defaults) {
  const auto& bandwidths = defaults.inversion_bandwidths.empty()
                               ? default_inversion_bandwidth_grid()
                               : defaults.inversion_bandwidths;
  std::vector<double> sorted(bandwidths);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> losses;
  for (const double h : sorted) {
    const DrInversion inv(nuisances, fit, grid, h);
    losses.push_back(mae(inv.predict(select), select, oracle));
  }
  const double h = sorted[argmin_loss(losses)];
  return DrInversion(nuisances, fit, grid, h).predict(points);
}

std::vector<ResultRow> run_task(const ExperimentPlan& plan, const ExperimentDefaults& base,
                                std::size_t value_index, std::size_t rep) {
  const std::string& value = plan.values[value_index];
  ExperimentDefaults cfg = base;
  double noise = 0.0;
  double lr = cfg.adam.lr;
  switch (plan.axis) {
    case Axis::slope: cfg.gamma = parse_number(value, "slope"); break;
    case Axis::nuisance_noise: noise = parse_number(value, "noise level"); break;
    case Axis::sample_size: cfg.n = parse_count(value, "sample size"); break;
    case Axis::lr_sweep: lr = parse_number(value, "learning rate"); break;
    case Axis::y0_sampler_sweep: cfg.train_sampler.kind = parse_y0_kind(value); break;
  }
  const std::span<const double> lr_grid =
      plan.axis == Axis::lr_sweep ? std::span<const double>{} : std::span<const double>(cfg.lr_grid);

  const std::uint64_t seed = plan.base_seed;
  const std::uint64_t cell_seed = derive_seed(seed, {kCellStream, value_index, rep});
  const bool timing = cfg.timing;

  std::vector<ResultRow> rows;
  rows.reserve(plan.methods.size());
  for (const auto& tag : plan.methods) {
    ResultRow row;
    row.axis = axis_name(plan.axis);
    row.axis_value = value;
    row.method = tag.label();
    row.replication = rep;
    row.mae = kNaN;
    rows.push_back(std::move(row));
  }

  try {
    const DgpSpec dgp = make_dgp(cfg.dgp, cfg.gamma, cfg.d, derive_seed(seed, {kDirectionStream, rep}));
    const OracleCqc oracle{dgp};
    const Dataset data = generate(dgp, cfg.n, derive_seed(seed, {kDataStream, rep}));
    const SplitPair split = split_half(data, 0, false);
    const Dataset nuis = data.subset(split.nuisance_idx);
    const Dataset fit = data.subset(split.fit_idx);
    const auto untreated = data.arm_outcomes(0);
    const EvalPoints points = make_eval_points(
        dgp, EvalSpec{cfg.eval_points, cfg.eval_sampler, derive_seed(seed, {kEvalStream, rep})},
        untreated);
    const Y0Sampler train_sampler = bind_sampler(cfg.train_sampler, dgp);
    const GridSpec grid = default_grid(data, cfg.grid_points);
    const NuisanceSet oracle_set = oracle_nuisances(dgp, cfg.clip);
    const std::uint64_t noise_seed = derive_seed(seed, {kNoiseStream, rep});

    std::optional<NuisanceSet> fitted;
    double fitted_seconds = 0.0;
    std::optional<EvalPoints> select;

    for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
      const MethodTag& tag = plan.methods[mi];
      ResultRow& row = rows[mi];
      try {
        double extra_seconds = 0.0;
        if (!tag.oracle && !fitted) {
          Stopwatch sw(timing);
          NuisanceFitOptions o = cfg.nuisance;
          o.propensity.clip = cfg.clip;
          o.seed = derive_seed(seed, {kNuisanceStream, rep});
          fitted = fit_nuisances(nuis, o, cfg.oracle_bandwidth ? &dgp : nullptr);
          fitted_seconds = sw.seconds();
        }
        if (!tag.oracle) extra_seconds = fitted_seconds;
        const NuisanceSet nuisances =
            nuisances_for(tag, oracle_set, fitted ? &*fitted : nullptr, plan, noise, noise_seed,
                          cfg.noise_bias, cfg.clip, dgp.d, nuis);
        row.propensity_provenance = nuisances.propensity_provenance.label();
        row.ccdf_provenance = nuisances.ccdf_provenance.label();

        Stopwatch sw(timing);
        const std::uint64_t method_seed = derive_seed(cell_seed, {mi});
        std::vector<double> pred;
        switch (tag.kind) {
          case MethodKind::dr_lin:
          case MethodKind::ipw: {
            const auto model = fit_linear(tag, nuisances, fit, train_sampler, cfg, lr, lr_grid,
                                          method_seed);
            pred = predict_model(*model, points);
            break;
          }
          case MethodKind::dr_nn: {
            const MlpCqc model0(dgp.d, cfg.mlp_hidden, cfg.mlp_activation,
                                derive_seed(method_seed, {1}));
            AdamOptions o = cfg.adam;
            o.lr = lr;
            o.seed = method_seed;
            o.track_loss = false;
            const FitResult r = run_adam(model0, nuisances, fit, train_sampler, o, lr_grid);
            pred = predict_model(*fitted_model(model0, r), points);
            break;
          }
          case MethodKind::invert_dr: {
            if (!select) {
              select = make_eval_points(dgp,
                                        EvalSpec{cfg.inversion_selection_points, cfg.eval_sampler,
                                                 derive_seed(seed, {kSelectStream, rep})},
                                        untreated);
            }
            pred = predict_inversion(nuisances, fit, grid, oracle, *select, points, cfg);
            break;
          }
          case MethodKind::s_learner: {
            pred.resize(points.size());
            for (std::size_t k = 0; k < points.size(); ++k) {
              pred[k] = s_learner_cqc(*nuisances.ccdf0, *nuisances.ccdf1, points.y0[k],
                                      points.xs(k), grid);
            }
            break;
          }
        }
        row.mae = mae(pred, points, oracle);
        row.seconds = sw.seconds() + extra_seconds;
      } catch (const std::exception& e) {
        row.mae = kNaN;
        row.error = e.what();
      }
    }
  } catch (const std::exception& e) {
    for (auto& row : rows) {
      row.mae = kNaN;
      row.error = e.what();
    }
  }
  return rows;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan, const ExperimentDefaults& defaults,
                                const RunOptions& options) {
  plan.validate();
  for (const auto* s : {&defaults.train_sampler, &defaults.eval_sampler}) {
    if (s->kind == Y0Kind::uniform) s->validate();
  }
  const std::size_t nv = plan.values.size();
  const std::size_t nr = plan.replications;
  const std::size_t total = nv * nr;
  std::vector<std::vector<ResultRow>> outputs(total);

  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= total) return;
      const std::size_t v = k / nr;
      const std::size_t r = k % nr;
      outputs[k] = run_task(plan, defaults, v, r);
      if (options.progress) {
        std::lock_guard lock(mu);
        ++done;
        options.progress(done, total, axis_name(plan.axis) + "=" + plan.values[v] + " rep " +
                                          std::to_string(r));
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(total)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  ExperimentResult result;
  for (std::size_t v = 0; v < nv; ++v) {
    for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
      std::vector<ResultRow> cell;
      for (std::size_t r = 0; r < nr; ++r) {
        cell.push_back(outputs[v * nr + r][mi]);
        result.rows.push_back(outputs[v * nr + r][mi]);
      }
      result.records.push_back(aggregate(cell));
    }
  }
  return result;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

std::string num(double v) { return std::isnan(v) ? "nan" : format_double(v); }

}  // namespace

void write_results_csv(const ExperimentResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "axis,axis_value,method,replication,mae,seconds\n";
  for (const auto& r : result.rows) {
    out << r.axis << ',' << r.axis_value << ',' << r.method << ',' << r.replication << ','
        << num(r.mae) << ',' << num(r.seconds) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void write_aggregate_csv(const ExperimentResult& result, const std::filesystem::path& path,
                         bool truncated_mean) {
  auto out = open_out(path);
  out << "axis,axis_value,method,replications,failures,mean,ci,truncated_mean,seconds,"
         "propensity,ccdf\n";
  for (const auto& r : result.records) {
    out << r.axis << ',' << r.axis_value << ',' << r.method << ',' << r.maes.size() << ','
        << r.failures << ',' << num(r.centre(truncated_mean)) << ',' << num(r.ci_half_width) << ','
        << num(r.truncated_mean) << ',' << num(r.seconds) << ',' << r.propensity_provenance << ','
        << r.ccdf_provenance << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace cqc
