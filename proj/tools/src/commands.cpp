#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <memory>

#include "cqc/baselines.hpp"
#include "cqc/cqc_model.hpp"
#include "cqc/dataset.hpp"
#include "cqc/dgp.hpp"
#include "cqc/error.hpp"
#include "cqc/nuisance.hpp"
#include "cqc/objective.hpp"
#include "cqc/optimizer.hpp"
#include "cqc/serialize.hpp"
#include "cqc/simlab.hpp"
#include "cqc_cli/cli.hpp"

namespace cqc::cli {

namespace {

namespace fs = std::filesystem;

fs::path require_path(const Json& c, const std::string& key) {
  const auto p = get_optional_string(c, key);
  if (!p || p->empty()) throw ConfigError("--" + key + " is required");
  return *p;
}

fs::path require_input(const Json& c, const std::string& key) {
  const fs::path p = require_path(c, key);
  if (!fs::exists(p)) throw DataError(key + " file '" + p.string() + "' does not exist");
  return p;
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

Json data_keys() {
  return {{"data", nullptr}, {"outcome", "y"}, {"treatment", "a"},
          {"covariates", Json::array()}};
}

Json oracle_keys() {
  return {{"oracle_dgp", nullptr}, {"gamma", 0.0}, {"dgp_seed", 0}};
}

Json sampler_keys() {
  return {{"y0_sampler", "unconditional"}, {"q_lo", 0.05}, {"q_hi", 0.95}};
}

Json nuisance_keys() {
  return {{"clip", 0.01}, {"bandwidth", nullptr}};
}

void add_all(Json& target, const Json& source) {
  for (const auto& [k, v] : source.items()) target[k] = v;
}

Dataset load_data(const Json& c, std::vector<std::string>* names = nullptr) {
  CsvSchema schema;
  schema.outcome = get_string(c, "outcome");
  schema.treatment = get_string(c, "treatment");
  schema.covariates = get_strings(c, "covariates");
  return read_csv(require_input(c, "data"), schema, names);
}

// Same direction stream as `simulate`, so --dgp-seed reproduces its process.
DgpSpec build_dgp(const std::string& name, double gamma, std::size_t d, std::uint64_t seed) {
  return make_dgp(name, gamma, d, derive_seed(seed, {1}));
}

std::optional<DgpSpec> oracle_dgp(const Json& c, std::size_t d) {
  const auto name = get_optional_string(c, "oracle_dgp");
  if (!name) return std::nullopt;
  DgpSpec dgp = build_dgp(*name, get_double(c, "gamma"), d, get_u64(c, "dgp_seed"));
  if (dgp.d != d) {
    throw ConfigError("oracle process '" + *name + "' has dimension " + std::to_string(dgp.d) +
                      " but the data has " + std::to_string(d) + " covariates");
  }
  return dgp;
}

Y0Sampler make_sampler(const Json& c, const std::optional<DgpSpec>& dgp) {
  Y0Sampler s;
  s.kind = parse_y0_kind(get_string(c, "y0_sampler"));
  s.q_lo = get_double(c, "q_lo");
  s.q_hi = get_double(c, "q_hi");
  if (s.kind == Y0Kind::conditional) {
    if (!dgp) throw ConfigError("the conditional y0 sampler needs --oracle-dgp");
    s.dgp = *dgp;
  }
  s.validate();
  return s;
}

NuisanceSet make_nuisances(const Json& c, const Dataset& nuisance_half,
                           const std::optional<DgpSpec>& dgp, std::uint64_t seed) {
  const double clip = get_double(c, "clip");
  if (!(clip > 0.0 && clip < 0.5)) throw ConfigError("clip must lie in (0, 0.5)");
  if (dgp) return oracle_nuisances(*dgp, clip);
  NuisanceFitOptions o;
  o.propensity.clip = clip;
  o.bandwidth = get_optional_double(c, "bandwidth");
  o.seed = seed;
  return fit_nuisances(nuisance_half, o);
}

std::unique_ptr<CqcModel> zero_model(const CqcModel& model) {
  auto m = model.clone();
  m->set_params(std::vector<double>(model.num_params(), 0.0));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

Json simulate_defaults() {
  return {{"dgp", "appD1"}, {"gamma", 0.0}, {"d", 10}, {"n", 500}, {"seed", 0}, {"out", nullptr}};
}

int cmd_simulate(const Json& c, std::ostream& out, std::ostream&) {
  const auto n = get_count(c, "n");
  if (n < 1) throw ConfigError("--n must be at least 1");
  const fs::path path = require_path(c, "out");
  const auto seed = get_u64(c, "seed");
  const DgpSpec dgp = build_dgp(get_string(c, "dgp"), get_double(c, "gamma"), get_count(c, "d"), seed);
  const Dataset data = generate(dgp, n, seed);
  write_csv(data, path);
  echo_config(c, path);
  out << "wrote " << data.size() << " rows (d=" << data.dim() << ", dgp=" << dgp_name(dgp.kind)
      << ", seed=" << seed << ") to " << path.string() << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------

Json fit_defaults() {
  Json j = {{"model", "lin"},
            {"rff_features", 100},
            {"rff_lengthscale", 1.0},
            {"mlp_hidden", {20, 20}},
            {"activation", "relu"},
            {"optimizer", "adam"},
            {"grad", "dr"},
            {"lr", 0.1},
            {"lr_grid", Json::array()},
            {"iterations", 1000},
            {"batch_size", 0},
            {"lr_decay", 0.0},
            {"epochs", 1},
            {"radius", nullptr},
            {"seed", 0},
            {"validation_fraction", 0.2},
            {"trim", 0.05},
            {"nodes", 129},
            {"model_out", "model.json"},
            {"report_out", nullptr}};
  add_all(j, data_keys());
  add_all(j, oracle_keys());
  add_all(j, sampler_keys());
  add_all(j, nuisance_keys());
  return j;
}

int cmd_fit(const Json& c, std::ostream& out, std::ostream& err) {
  // Validate the configuration before touching the data.
  const std::string model_kind = get_string(c, "model");
  if (model_kind != "lin" && model_kind != "rff" && model_kind != "mlp") {
    throw ConfigError("unknown model '" + model_kind + "' (expected lin, rff or mlp)");
  }
  const std::string optimizer = get_string(c, "optimizer");
  if (optimizer != "adam" && optimizer != "sgd_theorem") {
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected sgd_theorem or adam)");
  }
  const GradientKind grad = parse_gradient_kind(get_string(c, "grad"));
  const double vf = get_double(c, "validation_fraction");
  if (!(vf > 0.0 && vf < 1.0)) throw ConfigError("validation_fraction must lie in (0, 1)");
  const double trim = get_double(c, "trim");
  const int nodes = static_cast<int>(get_count(c, "nodes"));
  const auto lr_grid = get_doubles(c, "lr_grid");
  const auto seed = get_u64(c, "seed");
  const fs::path model_out = require_path(c, "model_out");
  const fs::path report_out =
      get_optional_string(c, "report_out").value_or(with_suffix(model_out, ".report.json").string());
  if (optimizer == "sgd_theorem" && model_kind == "mlp") {
    throw ConfigError("sgd_theorem needs a model linear in its parameters (lin or rff)");
  }

  std::vector<std::string> names;
  const Dataset data = load_data(c, &names);
  const auto dgp = oracle_dgp(c, data.dim());
  const Y0Sampler sampler = make_sampler(c, dgp);

  // Sample splitting: nuisances on the first half, the comparator on the second.
  const SplitPair split = split_half(data, derive_seed(seed, {1}), true);
  const Dataset nuis = data.subset(split.nuisance_idx);
  const Dataset fit_all = data.subset(split.fit_idx);
  const NuisanceSet nuisances = make_nuisances(c, nuis, dgp, derive_seed(seed, {2}));

  // 80-20 split of the fit half for validation.
  std::vector<std::size_t> perm(fit_all.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {3}));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(vf * static_cast<double>(perm.size()))));
  if (n_valid >= perm.size()) throw DataError("too few rows to hold out a validation set");
  const std::vector<std::size_t> valid_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_valid));
  const std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_valid), perm.end());
  const Dataset train = fit_all.subset(train_idx);
  const Dataset valid = fit_all.subset(valid_idx);

  std::unique_ptr<CqcModel> model0;
  const std::size_t d = data.dim();
  if (model_kind == "lin") {
    model0 = std::make_unique<LinearCqc>(std::make_shared<AffineFeatures>(d));
  } else if (model_kind == "rff") {
    model0 = std::make_unique<LinearCqc>(std::make_shared<RandomFourierFeatures>(
        d, get_count(c, "rff_features"), get_double(c, "rff_lengthscale"), derive_seed(seed, {4})));
  } else {
    model0 = std::make_unique<MlpCqc>(d, get_counts(c, "mlp_hidden"),
                                      parse_activation(get_string(c, "activation")),
                                      derive_seed(seed, {4}));
  }

  const Y0Source source(sampler, fit_all.arm_outcomes(0));
  const PreparedData prepared(nuisances, valid);
  const Holdout holdout = make_holdout(valid, source, derive_seed(seed, {5}));
  auto validation_loss = [&](const CqcModel& m) {
    return loss_quadrature(m, prepared, holdout.rows, holdout.y0, nodes, trim).trimmed_mean_loss;
  };

  const std::uint64_t fit_seed = derive_seed(seed, {6});
  auto run_fit = [&](double lr) {
    if (optimizer == "adam") {
      AdamOptions o;
      o.lr = lr;
      o.iterations = get_count(c, "iterations");
      const auto bs = get_count(c, "batch_size");
      o.batch = bs == 0 ? BatchMode::full : BatchMode::minibatch;
      o.batch_size = bs;
      o.decay_rate = get_double(c, "lr_decay");
      o.grad = grad;
      o.seed = fit_seed;
      return fit_adam(*model0, nuisances, train, sampler, o);
    }
    SgdOptions o;
    o.schedule = ScheduleSpec::theorem_convex();
    o.radius = get_optional_double(c, "radius");
    o.epochs = get_count(c, "epochs");
    o.grad = grad;
    o.seed = fit_seed;
    return fit_sgd(*model0, nuisances, train, sampler, o);
  };

  Json lr_search = nullptr;
  FitResult result;
  double lr = get_double(c, "lr");
  if (!lr_grid.empty() && optimizer == "adam") {
    std::vector<double> losses;
    std::vector<FitResult> fits;
    for (const double candidate : lr_grid) {
      try {
        fits.push_back(run_fit(candidate));
        losses.push_back(validation_loss(*fitted_model(*model0, fits.back())));
      } catch (const NumericError& e) {
        err << "lr " << candidate << " failed: " << e.what() << '\n';
        fits.emplace_back();
        losses.push_back(std::nan(""));
      }
    }
    const std::size_t best = argmin_loss(losses);
    lr = lr_grid[best];
    result = fits[best];
    lr_search = {{"grid", lr_grid}, {"losses", Json::array()}, {"selected", lr}};
    for (double l : losses) lr_search["losses"].push_back(std::isnan(l) ? Json(nullptr) : Json(l));
  } else {
    result = run_fit(lr);
  }

  const auto model = fitted_model(*model0, result);
  const double loss = validation_loss(*model);
  const double zero_loss = validation_loss(*zero_model(*model0));

  Json model_json = model->to_json();
  model_json["covariates"] = names;
  write_json(model_json, model_out);

  Json report = {{"validation_loss", loss},
                 {"zero_model_validation_loss", zero_loss},
                 {"trim", trim},
                 {"quadrature_nodes", nodes},
                 {"optimizer", optimizer},
                 {"grad", gradient_kind_name(grad)},
                 {"lr", lr},
                 {"lr_search", lr_search},
                 {"nuisance_rows", nuis.size()},
                 {"train_rows", train.size()},
                 {"validation_rows", valid.size()},
                 {"propensity", nuisances.propensity_provenance.label()},
                 {"ccdf", nuisances.ccdf_provenance.label()},
                 {"fit", result.to_json()}};
  write_json(report, report_out);
  echo_config(c, model_out);
  out << "validation loss " << format_double(loss) << " (zero model " << format_double(zero_loss)
      << "); model written to " << model_out.string() << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------

Json delta_surface_defaults() {
  return {{"model", nullptr},  {"axis", 0},        {"x_lo", -2.0},     {"x_hi", 2.0},
          {"x_points", 41},    {"y0_lo", -2.0},    {"y0_hi", 2.0},     {"y0_points", 41},
          {"x_fixed", Json::array()}, {"names", Json::array()}, {"out", nullptr},
          {"params_out", nullptr}};
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t m) {
  if (m < 1) throw ConfigError("grid needs at least one point");
  if (m == 1) return {lo};
  if (!(lo < hi)) throw ConfigError("grid needs lo < hi");
  std::vector<double> v(m);
  for (std::size_t k = 0; k < m; ++k) {
    v[k] = k + 1 == m ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m - 1);
  }
  return v;
}

}  // namespace

int cmd_delta_surface(const Json& c, std::ostream& out, std::ostream&) {
  const fs::path model_path = require_input(c, "model");
  const fs::path out_path = require_path(c, "out");
  const Json model_json = read_json(model_path);
  const auto model = model_from_json(model_json);
  const std::size_t d = model->input_dim();
  const std::size_t axis = get_count(c, "axis");
  if (axis >= d) {
    throw ConfigError("covariate axis " + std::to_string(axis) + " is out of range for d = " +
                      std::to_string(d));
  }
  std::vector<double> x = get_doubles(c, "x_fixed");
  if (x.empty()) x.assign(d, 0.0);
  if (x.size() != d) throw ConfigError("x_fixed must have " + std::to_string(d) + " entries");
  const auto xs = linspace(get_double(c, "x_lo"), get_double(c, "x_hi"), get_count(c, "x_points"));
  const auto y0s = linspace(get_double(c, "y0_lo"), get_double(c, "y0_hi"), get_count(c, "y0_points"));

  std::ofstream csv(out_path);
  if (!csv) throw DataError("cannot write '" + out_path.string() + "'");
  csv << "y0,x_axis_value,delta\n";
  for (const double y0 : y0s) {
    for (const double xv : xs) {
      x[axis] = xv;
      csv << format_double(y0) << ',' << format_double(xv) << ','
          << format_double(model->value(y0, x) - y0) << '\n';
    }
  }
  if (!csv) throw DataError("failed writing '" + out_path.string() + "'");

  // Shift/scale table for the affine model: cqc = shift(x) + scale(x) y0.
  const auto* linear = dynamic_cast<const LinearCqc*>(model.get());
  if (linear != nullptr && linear->features().kind() == "affine") {
    std::vector<std::string> names = get_strings(c, "names");
    if (names.empty() && model_json.contains("covariates")) {
      names = model_json.at("covariates").get<std::vector<std::string>>();
    }
    if (names.empty()) {
      for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
    }
    if (names.size() != d) throw ConfigError("names must have " + std::to_string(d) + " entries");
    const fs::path params_path = get_optional_string(c, "params_out")
                                     .value_or(with_suffix(out_path, ".params.csv").string());
    std::ofstream pcsv(params_path);
    if (!pcsv) throw DataError("cannot write '" + params_path.string() + "'");
    const auto theta = linear->params();
    pcsv << "covariate,shift,scale\n";
    pcsv << "Intercept," << format_double(theta[2 * d + 1]) << ',' << format_double(theta[d]) << '\n';
    for (std::size_t j = 0; j < d; ++j) {
      pcsv << names[j] << ',' << format_double(theta[d + 1 + j]) << ',' << format_double(theta[j])
           << '\n';
    }
  }
  echo_config(c, out_path);
  out << "wrote " << y0s.size() * xs.size() << " surface points to " << out_path.string() << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------

Json experiment_defaults() {
  return {{"axis", "slope"},
          {"values", Json::array()},
          {"targets", {"propensity", "ccdf0", "ccdf1"}},
          {"methods", {"dr_lin:estimated"}},
          {"replications", 5},
          {"base_seed", 0},
          {"jobs", default_jobs()},
          {"out", "results.csv"},
          {"aggregate_out", nullptr},
          {"truncated", false},
          {"timing", false},
          {"dgp", "sec4"},
          {"gamma", 2.0},
          {"d", 10},
          {"n", 500},
          {"clip", 0.01},
          {"noise_bias", 1.0},
          {"oracle_bandwidth", true},
          {"optimizer", "adam"},
          {"lr", 0.1},
          {"lr_grid", {0.01, 0.03, 0.1}},
          {"iterations", 1000},
          {"epochs", 1},
          {"mlp_hidden", {20, 20}},
          {"activation", "relu"},
          {"y0_sampler", "unconditional"},
          {"q_lo", 0.05},
          {"q_hi", 0.95},
          {"eval_sampler", "unconditional"},
          {"eval_points", 2000},
          {"grid_points", 1001}};
}

int cmd_experiment(const Json& c, std::ostream& out, std::ostream& err) {
  ExperimentPlan plan;
  plan.axis = parse_axis(get_string(c, "axis"));
  plan.values = get_labels(c, "values");
  plan.noise_targets = 0;
  for (const auto& t : get_strings(c, "targets")) {
    if (t == "propensity") plan.noise_targets |= static_cast<unsigned>(NoiseTarget::propensity);
    else if (t == "ccdf0") plan.noise_targets |= static_cast<unsigned>(NoiseTarget::ccdf0);
    else if (t == "ccdf1") plan.noise_targets |= static_cast<unsigned>(NoiseTarget::ccdf1);
    else if (t == "ccdf") plan.noise_targets |= static_cast<unsigned>(NoiseTarget::ccdf0) |
                                               static_cast<unsigned>(NoiseTarget::ccdf1);
    else throw ConfigError("unknown noise target '" + t + "' (expected propensity, ccdf0, ccdf1, ccdf)");
  }
  for (const auto& m : get_strings(c, "methods")) plan.methods.push_back(MethodTag::parse(m));
  plan.replications = get_count(c, "replications");
  plan.base_seed = get_u64(c, "base_seed");
  plan.validate();

  ExperimentDefaults d;
  d.dgp = get_string(c, "dgp");
  d.gamma = get_double(c, "gamma");
  d.d = get_count(c, "d");
  d.n = get_count(c, "n");
  d.clip = get_double(c, "clip");
  d.noise_bias = get_double(c, "noise_bias");
  d.oracle_bandwidth = get_bool(c, "oracle_bandwidth");
  const std::string optimizer = get_string(c, "optimizer");
  if (optimizer == "adam") d.optimizer = OptimizerKind::adam;
  else if (optimizer == "sgd_theorem") d.optimizer = OptimizerKind::sgd_theorem;
  else throw ConfigError("unknown optimizer '" + optimizer + "' (expected sgd_theorem or adam)");
  d.adam.lr = get_double(c, "lr");
  d.lr_grid = get_doubles(c, "lr_grid");
  d.adam.iterations = get_count(c, "iterations");
  d.sgd.schedule = ScheduleSpec::theorem_convex();
  d.sgd.epochs = get_count(c, "epochs");
  d.mlp_hidden = get_counts(c, "mlp_hidden");
  d.mlp_activation = parse_activation(get_string(c, "activation"));
  d.train_sampler.kind = parse_y0_kind(get_string(c, "y0_sampler"));
  d.train_sampler.q_lo = get_double(c, "q_lo");
  d.train_sampler.q_hi = get_double(c, "q_hi");
  d.eval_sampler.kind = parse_y0_kind(get_string(c, "eval_sampler"));
  d.eval_points = get_count(c, "eval_points");
  d.grid_points = get_count(c, "grid_points");
  d.truncated_mean = get_bool(c, "truncated");
  d.timing = get_bool(c, "timing");
  make_dgp(d.dgp, d.gamma, d.d, 0);  // rejects unknown process names up front

  const fs::path results = require_path(c, "out");
  const fs::path aggregate_path = get_optional_string(c, "aggregate_out")
                                      .value_or(with_suffix(results, ".aggregate.csv").string());
  RunOptions ro;
  ro.jobs = static_cast<unsigned>(std::max<std::size_t>(1, get_count(c, "jobs")));
  ro.progress = [&err](std::size_t done, std::size_t total, const std::string& cell) {
    err << "[" << done << "/" << total << "] " << cell << '\n';
  };
  const ExperimentResult result = run_experiment(plan, d, ro);
  write_results_csv(result, results);
  write_aggregate_csv(result, aggregate_path, d.truncated_mean);
  echo_config(c, results);

  std::size_t dead = 0;
  for (const auto& r : result.records) {
    out << r.axis << '=' << r.axis_value << ' ' << r.method << ": mae "
        << format_double(r.centre(d.truncated_mean)) << " +- " << format_double(r.ci_half_width)
        << " (" << r.maes.size() << " ok, " << r.failures << " failed)\n";
    if (r.maes.empty()) ++dead;
  }
  for (const auto& row : result.rows) {
    if (!row.error.empty()) {
      err << "failure: " << row.axis_value << ' ' << row.method << " rep " << row.replication
          << ": " << row.error << '\n';
    }
  }
  if (dead > 0) {
    err << dead << " cell(s) failed in every replication\n";
    return kNumericError;
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------

Json validate_model_defaults() {
  Json j = {{"model", nullptr}, {"seed", 0}, {"trim", 0.05}, {"nodes", 129}, {"out", nullptr}};
  add_all(j, data_keys());
  add_all(j, oracle_keys());
  add_all(j, sampler_keys());
  add_all(j, nuisance_keys());
  return j;
}

int cmd_validate_model(const Json& c, std::ostream& out, std::ostream&) {
  const fs::path model_path = require_input(c, "model");
  const auto seed = get_u64(c, "seed");
  const double trim = get_double(c, "trim");
  const int nodes = static_cast<int>(get_count(c, "nodes"));
  const auto model = load_model(model_path);
  const Dataset data = load_data(c);
  if (data.dim() != model->input_dim()) {
    throw DataError("model expects " + std::to_string(model->input_dim()) +
                    " covariates, data has " + std::to_string(data.dim()));
  }
  const auto dgp = oracle_dgp(c, data.dim());
  const Y0Sampler sampler = make_sampler(c, dgp);
  const SplitPair split = split_half(data, derive_seed(seed, {1}), true);
  const Dataset nuis = data.subset(split.nuisance_idx);
  const Dataset eval = data.subset(split.fit_idx);
  const NuisanceSet nuisances = make_nuisances(c, nuis, dgp, derive_seed(seed, {2}));
  const Y0Source source(sampler, eval.arm_outcomes(0));
  const PreparedData prepared(nuisances, eval);
  const Holdout holdout = make_holdout(eval, source, derive_seed(seed, {5}));
  const LossReport report = loss_quadrature(*model, prepared, holdout.rows, holdout.y0, nodes, trim);

  Json summary = {{"validation_loss", report.trimmed_mean_loss},
                  {"mean_loss", report.mean_loss},
                  {"rows", eval.size()},
                  {"propensity", nuisances.propensity_provenance.label()},
                  {"ccdf", nuisances.ccdf_provenance.label()}};
  if (const auto path = get_optional_string(c, "out")) {
    Json full = summary;
    full["report"] = to_json(report);
    write_json(full, *path);
    echo_config(c, *path);
  }
  out << summary.dump(2) << '\n';
  return kSuccess;
}

}  // namespace cqc::cli
