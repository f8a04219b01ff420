#include "cqc_cli/cli.hpp"

#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "cqc/error.hpp"

namespace cqc::cli {

namespace {

using Handler = std::function<int(const Json&, std::ostream&, std::ostream&)>;

struct Command {
  CLI::App* app = nullptr;
  Json defaults;
  Handler handler;
  Json flags = Json::object();
  std::optional<std::string> config;
};

// Registers --name bound to config key `key`.
template <class T>
CLI::Option* flag(Command& cmd, const std::string& name, const std::string& key,
                  const std::string& help) {
  Json* flags = &cmd.flags;
  return cmd.app->add_option_function<T>(
      name, [flags, key](const T& v) { (*flags)[key] = v; }, help);
}

template <class T>
CLI::Option* list_flag(Command& cmd, const std::string& name, const std::string& key,
                       const std::string& help) {
  return flag<std::vector<T>>(cmd, name, key, help)->delimiter(',');
}

void data_flags(Command& cmd) {
  flag<std::string>(cmd, "--data", "data", "input CSV");
  flag<std::string>(cmd, "--outcome", "outcome", "outcome column (default y)");
  flag<std::string>(cmd, "--treatment", "treatment", "treatment column (default a)");
  list_flag<std::string>(cmd, "--covariates", "covariates", "covariate columns (default: all others)");
}

void oracle_flags(Command& cmd) {
  flag<std::string>(cmd, "--oracle-dgp", "oracle_dgp", "use exact nuisances of this process");
  flag<double>(cmd, "--gamma", "gamma", "slope of the oracle process");
  flag<long long>(cmd, "--dgp-seed", "dgp_seed", "seed the data were simulated with");
}

void sampler_flags(Command& cmd) {
  flag<std::string>(cmd, "--y0-sampler", "y0_sampler", "uniform | unconditional | conditional");
  flag<double>(cmd, "--q-lo", "q_lo", "lower quantile for the uniform sampler");
  flag<double>(cmd, "--q-hi", "q_hi", "upper quantile for the uniform sampler");
}

void nuisance_flags(Command& cmd) {
  flag<double>(cmd, "--clip", "clip", "propensity clip");
  flag<double>(cmd, "--bandwidth", "bandwidth", "fixed CCDF bandwidth (default: grid search)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Direct doubly robust estimation of conditional quantile comparators"};
  app.require_subcommand(1);

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help, Json defaults,
                 Handler handler) -> Command& {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    cmd.defaults = std::move(defaults);
    cmd.handler = std::move(handler);
    cmd.app->add_option("--config", cmd.config, "JSON config file; flags override it");
    return cmd;
  };

  {
    Command& c = add("simulate", "simulate a dataset from a registered process",
                     simulate_defaults(), cmd_simulate);
    flag<std::string>(c, "--dgp", "dgp", "process name (sec4, appD1, fig1)");
    flag<double>(c, "--gamma", "gamma", "slope");
    flag<long long>(c, "--d", "d", "dimension (sec4 only)");
    flag<long long>(c, "--n", "n", "number of rows");
    flag<long long>(c, "--seed", "seed", "random seed");
    flag<std::string>(c, "--out", "out", "output CSV");
  }
  {
    Command& c = add("fit", "fit a comparator model on a CSV dataset", fit_defaults(), cmd_fit);
    data_flags(c);
    oracle_flags(c);
    sampler_flags(c);
    nuisance_flags(c);
    flag<std::string>(c, "--model", "model", "lin | rff | mlp");
    flag<long long>(c, "--rff-features", "rff_features", "number of random Fourier features");
    flag<double>(c, "--rff-lengthscale", "rff_lengthscale", "random Fourier lengthscale");
    list_flag<long long>(c, "--hidden", "mlp_hidden", "hidden layer widths");
    flag<std::string>(c, "--activation", "activation", "relu | tanh");
    flag<std::string>(c, "--optimizer", "optimizer", "adam | sgd_theorem");
    flag<std::string>(c, "--grad", "grad", "dr | ipw");
    flag<double>(c, "--lr", "lr", "Adam learning rate");
    list_flag<double>(c, "--lr-grid", "lr_grid", "learning rates chosen by validation");
    flag<long long>(c, "--iterations", "iterations", "Adam iterations");
    flag<long long>(c, "--batch-size", "batch_size", "Adam minibatch size (0: full batch)");
    flag<double>(c, "--lr-decay", "lr_decay", "Adam decay: lr / (1 + rate t)");
    flag<long long>(c, "--epochs", "epochs", "SGD passes");
    flag<double>(c, "--radius", "radius", "SGD projection radius");
    flag<long long>(c, "--seed", "seed", "random seed");
    flag<double>(c, "--validation-fraction", "validation_fraction", "held-out share of the fit half");
    flag<double>(c, "--trim", "trim", "trimmed-mean fraction per tail");
    flag<long long>(c, "--nodes", "nodes", "quadrature nodes");
    flag<std::string>(c, "--model-out", "model_out", "model JSON output");
    flag<std::string>(c, "--report-out", "report_out", "fit report output");
  }
  {
    Command& c = add("delta-surface", "tabulate delta(y0|x) = cqc(y0|x) - y0 on a grid",
                     delta_surface_defaults(), cmd_delta_surface);
    flag<std::string>(c, "--model", "model", "model JSON");
    flag<long long>(c, "--axis", "axis", "covariate index varied along the grid");
    flag<double>(c, "--x-lo", "x_lo", "covariate grid start");
    flag<double>(c, "--x-hi", "x_hi", "covariate grid end");
    flag<long long>(c, "--x-points", "x_points", "covariate grid size");
    flag<double>(c, "--y0-lo", "y0_lo", "y0 grid start");
    flag<double>(c, "--y0-hi", "y0_hi", "y0 grid end");
    flag<long long>(c, "--y0-points", "y0_points", "y0 grid size");
    list_flag<double>(c, "--x-fixed", "x_fixed", "values of the other covariates (default 0)");
    list_flag<std::string>(c, "--names", "names", "covariate names for the parameter table");
    flag<std::string>(c, "--out", "out", "surface CSV");
    flag<std::string>(c, "--params-out", "params_out", "parameter table CSV (linear models)");
  }
  {
    Command& c = add("experiment", "run a simulation sweep", experiment_defaults(), cmd_experiment);
    flag<std::string>(c, "--axis", "axis",
                      "slope | nuisance_noise | sample_size | lr_sweep | y0_sampler_sweep");
    list_flag<std::string>(c, "--values", "values", "axis values");
    list_flag<std::string>(c, "--targets", "targets", "noise targets: propensity, ccdf0, ccdf1, ccdf");
    list_flag<std::string>(c, "--methods", "methods", "method:source tags, e.g. dr_lin:oracle");
    flag<long long>(c, "--replications", "replications", "replications per cell");
    flag<long long>(c, "--base-seed", "base_seed", "base seed");
    flag<long long>(c, "--jobs", "jobs", "worker threads (default: CQC_JOBS or 1)");
    flag<std::string>(c, "--out", "out", "results CSV");
    flag<std::string>(c, "--aggregate-out", "aggregate_out", "aggregate CSV");
    c.app->add_flag_function("--truncated", [&c](std::int64_t) { c.flags["truncated"] = true; },
                             "report 2.5% truncated means");
    c.app->add_flag_function("--timing", [&c](std::int64_t) { c.flags["timing"] = true; },
                             "record wall-clock seconds");
    c.app->add_flag_function("--oracle-bandwidth,!--no-oracle-bandwidth",
                             [&c](std::int64_t v) { c.flags["oracle_bandwidth"] = v > 0; },
                             "score CCDF bandwidths against the exact CCDFs (default on)");
    flag<std::string>(c, "--dgp", "dgp", "process name");
    flag<double>(c, "--gamma", "gamma", "slope");
    flag<long long>(c, "--d", "d", "dimension");
    flag<long long>(c, "--n", "n", "sample size");
    flag<std::string>(c, "--optimizer", "optimizer", "adam | sgd_theorem");
    flag<double>(c, "--lr", "lr", "Adam learning rate");
    list_flag<double>(c, "--lr-grid", "lr_grid", "learning rates chosen by validation per fit");
    flag<long long>(c, "--iterations", "iterations", "Adam iterations");
    flag<std::string>(c, "--y0-sampler", "y0_sampler", "training y0 sampler");
    flag<long long>(c, "--eval-points", "eval_points", "evaluation points per replication");
    flag<long long>(c, "--grid-points", "grid_points", "inversion grid size");
  }
  {
    Command& c = add("validate-model", "held-out quadrature loss of a fitted model",
                     validate_model_defaults(), cmd_validate_model);
    data_flags(c);
    oracle_flags(c);
    sampler_flags(c);
    nuisance_flags(c);
    flag<std::string>(c, "--model", "model", "model JSON");
    flag<long long>(c, "--seed", "seed", "random seed");
    flag<double>(c, "--trim", "trim", "trimmed-mean fraction per tail");
    flag<long long>(c, "--nodes", "nodes", "quadrature nodes");
    flag<std::string>(c, "--out", "out", "report JSON");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  for (auto& [name, cmd] : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      std::optional<std::filesystem::path> file;
      if (cmd.config) file = *cmd.config;
      const Json config = merge_config(cmd.defaults, file, cmd.flags);
      return cmd.handler(config, out, err);
    } catch (const ConfigError& e) {
      err << name << ": " << e.what() << '\n';
      return kConfigError;
    } catch (const DataError& e) {
      err << name << ": " << e.what() << '\n';
      return kDataError;
    } catch (const NumericError& e) {
      err << name << ": " << e.what() << '\n';
      return kNumericError;
    } catch (const std::exception& e) {
      err << name << ": " << e.what() << '\n';
      return kUnexpected;
    }
  }
  return kConfigError;
}

}  // namespace cqc::cli
