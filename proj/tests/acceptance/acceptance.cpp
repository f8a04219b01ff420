// Acceptance gate: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion, followed by property lines for
// the module invariants that need experiment-scale runs.
//
//   cqc_acceptance [--out DIR] [--only 1,2,...]
//
// Result CSVs go to DIR/run1; criterion 11 reruns everything into DIR/run2
// and compares the files byte for byte. Exit status is 0 only when every
// printed line passes.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cqc/baselines.hpp"
#include "cqc/cqc_model.hpp"
#include "cqc/dataset.hpp"
#include "cqc/dgp.hpp"
#include "cqc/nuisance.hpp"
#include "cqc/objective.hpp"
#include "cqc/optimizer.hpp"
#include "cqc/simlab.hpp"
#include "cqc/stats.hpp"
#include "oracles.hpp"

namespace {

using namespace cqc;
namespace fs = std::filesystem;

constexpr std::uint64_t kBaseSeed = 20240601;

struct Line {
  std::string id;  // "criterion 4" or "property"
  std::string label;
  bool pass = false;
  std::string detail;
};
using Lines = std::vector<Line>;

std::string fmt(const char* f, ...) {
  va_list args;
  va_start(args, f);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Criterion line that also enforces the stated runtime budget.
Line timed(int number, const std::string& label, bool ok, std::string detail, double seconds,
           double budget) {
  const bool in_time = seconds <= budget;
  detail += fmt("; %.1f s of %.0f s budget%s", seconds, budget, in_time ? "" : " EXCEEDED");
  return {"criterion " + std::to_string(number), label, ok && in_time, detail};
}

Line property(const std::string& label, bool ok, const std::string& detail) {
  return {"property", label, ok, detail};
}

class Csv {
 public:
  Csv(const fs::path& path, const std::string& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << '\n';
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

double sq(double v) { return v * v; }

// Independent description of the one-dimensional cosine process.
struct CosProcess {
  double gamma;
  double mu0(double x) const { return std::cos(6.0 * x); }
  double mu1(double x) const { return 2.0 * std::cos(6.0 * x) + gamma * x; }
  static constexpr double sigma0 = 1.0;
  static constexpr double sigma1 = 2.0;
  double cqc(double y0, double x) const { return mu1(x) + (sigma1 / sigma0) * (y0 - mu0(x)); }
  double level(double y0, double x) const { return cqc_test::phi_cdf((y0 - mu0(x)) / sigma0); }
};

// Affine comparator in the library's parameter order
// [scale_x, scale_0, shift_x, shift_0].
double affine_cqc(std::span<const double> theta, double y0, double x) {
  return (theta[0] * x + theta[1]) * y0 + theta[2] * x + theta[3];
}

// ---------------------------------------------------------------- 1

Lines gradient_unbiasedness(const fs::path& dir) {
  Stopwatch clock;
  const CosProcess proc{2.0};
  const DgpSpec dgp = make_cos_linear(proc.gamma);
  const NuisanceSet nuis = oracle_nuisances(dgp);
  std::mt19937_64 rng(derive_seed(kBaseSeed, {1}));
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_real_distribution<double> u01;
  std::normal_distribution<double> z;
  constexpr int kPoints = 20;
  constexpr std::size_t kDraws = 1'000'000;

  Csv csv(dir / "c1_gradient.csv", "point,coordinate,mc_mean,mc_se,oracle");
  double worst = 0.0;
  for (int p = 0; p < kPoints; ++p) {
    std::vector<double> theta(4);
    for (auto& t : theta) t = coef(rng);
    const double x = z(rng);
    const double y0 = proc.mu0(x) + z(rng);
    const std::vector<double> xv{x};
    const LinearCqc model(std::make_shared<AffineFeatures>(1), theta);
    const double pi = 1.0 / (1.0 + std::exp(-x));

    std::array<double, 4> sum{}, sum2{};
    for (std::size_t k = 0; k < kDraws; ++k) {
      Sample s;
      s.x = xv;
      s.a = u01(rng) < pi ? 1 : 0;
      s.y = s.a == 1 ? proc.mu1(x) + CosProcess::sigma1 * z(rng) : proc.mu0(x) + z(rng);
      const auto g = dr_gradient(model, nuis, y0, s);
      for (std::size_t j = 0; j < 4; ++j) {
        sum[j] += g.grad[j];
        sum2[j] += g.grad[j] * g.grad[j];
      }
    }

    // Central differences of the closed-form pointwise loss.
    const double c_star = proc.cqc(y0, x);
    const double level = proc.level(y0, x);
    auto loss = [&](const std::vector<double>& th) {
      return cqc_test::gaussian_pointwise_loss(affine_cqc(th, y0, x), c_star, proc.mu1(x),
                                               CosProcess::sigma1, level);
    };
    for (std::size_t j = 0; j < 4; ++j) {
      const double h = 1e-6;
      auto up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      const double oracle = (loss(up) - loss(down)) / (2.0 * h);
      const double n = static_cast<double>(kDraws);
      const double mean = sum[j] / n;
      const double var = std::max(0.0, (sum2[j] - n * mean * mean) / (n - 1.0));
      const double se = std::sqrt(var / n);
      const double zscore = se > 0.0 ? std::abs(mean - oracle) / se
                                     : (std::abs(mean - oracle) < 1e-12 ? 0.0 : INFINITY);
      worst = std::max(worst, zscore);
      csv.row({std::to_string(p), std::to_string(j), num(mean), num(se), num(oracle)});
    }
  }
  return {timed(1, "DR gradient unbiasedness", worst <= 4.0,
                fmt("max |mean - oracle| = %.2f SE over %d points x 4 coordinates (limit 4)", worst,
                    kPoints),
                clock.seconds(), 120.0)};
}

// ---------------------------------------------------------------- 2

DgpSpec standard_normal_arms() {
  DgpSpec dgp;
  dgp.kind = DgpKind::affine;
  dgp.d = 1;
  dgp.mu0_affine = {0.0, {0.0}};
  dgp.mu1_affine = {0.0, {0.0}};
  dgp.logit_affine = {0.0, {0.0}};
  return dgp;
}

Lines loss_oracle(const fs::path& dir) {
  Stopwatch clock;
  const DgpSpec dgp = standard_normal_arms();
  const NuisanceSet nuis = oracle_nuisances(dgp);
  constexpr std::size_t kSamples = 1'000'000;
  const Dataset data = generate(dgp, kSamples, derive_seed(kBaseSeed, {2}));
  std::vector<Query> batch(kSamples);
  for (std::size_t i = 0; i < kSamples; ++i) batch[i] = {0.0, data[i]};
  const LinearCqc model(std::make_shared<AffineFeatures>(1), std::vector<double>{0, 0, 0, 1});
  const LossReport report = loss_quadrature(model, nuis, batch, 129, 0.0);

  double s = 0.0, s2 = 0.0;
  for (double v : report.per_sample) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(kSamples);
  const double mc = s / n;
  const double se = std::sqrt(std::max(0.0, (s2 - n * mc * mc) / (n - 1.0)) / n);
  const double quoted = 0.18436;
  const double closed =
      cqc_test::phi_cdf(1.0) + cqc_test::phi_pdf(1.0) - cqc_test::phi_pdf(0.0) - 0.5;
  const bool mean_ok = std::abs(report.mean_loss - quoted) <= 3.0 * se;

  // Simpson on the exact Gaussian CDF against its antiderivative, intervals of
  // length up to 10 in either orientation.
  std::mt19937_64 rng(derive_seed(kBaseSeed, {2, 1}));
  std::uniform_real_distribution<double> centre(-3.0, 3.0), start(-8.0, 8.0), length(0.0, 10.0);
  std::uniform_real_distribution<double> u01;
  double worst = 0.0, worst_short = 0.0, worst_length = 0.0;
  constexpr int kIntervals = 10000;
  for (int k = 0; k < kIntervals; ++k) {
    const double mu = centre(rng);
    double a = start(rng);
    double b = a + length(rng);
    if (u01(rng) < 0.5) std::swap(a, b);
    const GaussianCondCdf f(mu, 1.0);
    const double simpson = integrate_simpson([&](double t) { return f(t); }, a, b, 129);
    const double exact = cqc_test::gaussian_cdf_integral(a, b, mu, 1.0);
    const double err = std::abs(simpson - exact);
    if (err > worst) {
      worst = err;
      worst_length = std::abs(b - a);
    }
    if (std::abs(b - a) <= 4.0) worst_short = std::max(worst_short, err);
  }
  Csv csv(dir / "c2_loss.csv", "quantity,value");
  csv.row({"mc_mean", num(report.mean_loss)});
  csv.row({"mc_se", num(se)});
  csv.row({"closed_form", num(closed)});
  csv.row({"simpson_max_error", num(worst)});
  csv.row({"simpson_max_error_length_le_4", num(worst_short)});

  const bool simpson_ok = worst <= 1e-8;
  return {timed(2, "loss oracle agreement", mean_ok && simpson_ok,
                fmt("MC mean %.6f, SE %.2g, |mean - 0.18436| = %.2f SE (closed form %.6f); Simpson "
                    "max error %.2g at length %.2f (limit 1e-8; %.2g on lengths <= 4)",
                    report.mean_loss, se, std::abs(report.mean_loss - quoted) / se, closed, worst,
                    worst_length, worst_short),
                clock.seconds(), 60.0)};
}

// ---------------------------------------------------------------- 3

class UniformCdf final : public ConditionalCdf {
 public:
  UniformCdf(double lo, double hi) : lo_(lo), hi_(hi) {}
  double operator()(double y) const override {
    return std::clamp((y - lo_) / (hi_ - lo_), 0.0, 1.0);
  }

 private:
  double lo_, hi_;
};

class ExponentialCdf final : public ConditionalCdf {
 public:
  explicit ExponentialCdf(double rate) : rate_(rate) {}
  double operator()(double y) const override { return y <= 0.0 ? 0.0 : -std::expm1(-rate_ * y); }

 private:
  double rate_;
};

Lines loss_bounds(const fs::path& dir) {
  Stopwatch clock;
  constexpr int kTriples = 10000;
  constexpr double kSlack = 1e-9;
  std::mt19937_64 rng(derive_seed(kBaseSeed, {3}));
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  std::uniform_real_distribution<double> u01;
  std::normal_distribution<double> z;
  Csv csv(dir / "c3_bounds.csv", "family,bound,violations,triples");

  // Gaussian arms: upper bound and (a).
  const CosProcess proc{2.0};
  const DgpSpec dgp = make_cos_linear(proc.gamma);
  const double density_max = 1.0 / (CosProcess::sigma1 * std::sqrt(2.0 * std::numbers::pi));
  int gauss_upper = 0, gauss_a = 0;
  for (int k = 0; k < kTriples; ++k) {
    std::vector<double> theta(4);
    for (auto& t : theta) t = coef(rng);
    const double x = z(rng);
    const double y0 = proc.mu0(x) + z(rng);
    const std::vector<double> xv{x};
    const double c = LinearCqc(std::make_shared<AffineFeatures>(1), theta).value(y0, xv);
    const double c_star = proc.cqc(y0, x);
    const GaussianCondCdf f1(dgp.mu(1, xv), dgp.sigma1);
    const double loss = pointwise_population_loss(c, c_star, dgp.ccdf(0, y0, xv), f1, 129);
    const double beta = f1(c) - f1(c_star);
    if (loss > std::abs(c - c_star) * std::abs(beta) + kSlack) ++gauss_upper;
    if (beta * beta > 2.0 * density_max * loss + kSlack) ++gauss_a;
  }

  // Uniform arms on [x - 1, x] and [x, x + 2]: density 1/2 on the treated
  // support, so (b) applies while c stays inside it.
  int unif_upper = 0, unif_b = 0, unif_drawn = 0;
  for (int k = 0; k < kTriples;) {
    std::vector<double> theta(4);
    for (auto& t : theta) t = coef(rng);
    const double x = z(rng);
    const double y0 = x - 1.0 + u01(rng);
    ++unif_drawn;
    const double c = affine_cqc(theta, y0, x);
    if (c < x || c > x + 2.0) continue;
    ++k;
    const double level = y0 - (x - 1.0);
    const double c_star = x + 2.0 * level;
    const UniformCdf f1(x, x + 2.0);
    const double loss = pointwise_population_loss(c, c_star, level, f1, 129);
    const double beta = f1(c) - f1(c_star);
    if (loss > std::abs(c - c_star) * std::abs(beta) + kSlack) ++unif_upper;
    if (0.5 * sq(c - c_star) > 2.0 * loss + kSlack) ++unif_b;
  }

  // Exponential arms: Y0 ~ Exp(1), Y1 ~ Exp(1 / (1 + x^2 / 2)), decreasing
  // densities on the positive half-line; c is kept inside the support.
  int exp_upper = 0, exp_c = 0, exp_c_above = 0, exp_c_below = 0, above = 0;
  std::exponential_distribution<double> expo(1.0);
  for (int k = 0; k < kTriples;) {
    std::vector<double> theta(4);
    for (auto& t : theta) t = coef(rng);
    const double x = z(rng);
    const double y0 = expo(rng);
    const double c = affine_cqc(theta, y0, x);
    if (!(c > 0.0)) continue;
    ++k;
    const double rate = 1.0 / (1.0 + 0.5 * x * x);
    const double level = -std::expm1(-y0);
    const double c_star = y0 / rate;
    const ExponentialCdf f1(rate);
    const double loss = pointwise_population_loss(c, c_star, level, f1, 129);
    const double lhs = std::abs(c - c_star) * std::abs(f1(c) - f1(c_star));
    if (loss > lhs + kSlack) ++exp_upper;
    const bool violated = lhs > 2.0 * loss + kSlack;
    if (c > c_star) ++above;
    if (violated) {
      ++exp_c;
      (c > c_star ? exp_c_above : exp_c_below)++;
    }
  }

  csv.row({"gaussian", "upper", std::to_string(gauss_upper), std::to_string(kTriples)});
  csv.row({"gaussian", "a", std::to_string(gauss_a), std::to_string(kTriples)});
  csv.row({"uniform", "upper", std::to_string(unif_upper), std::to_string(kTriples)});
  csv.row({"uniform", "b", std::to_string(unif_b), std::to_string(kTriples)});
  csv.row({"exponential", "upper", std::to_string(exp_upper), std::to_string(kTriples)});
  csv.row({"exponential", "c", std::to_string(exp_c), std::to_string(kTriples)});

  const bool ok = gauss_upper + gauss_a + unif_upper + unif_b + exp_upper + exp_c == 0;
  Lines out;
  out.push_back(timed(3, "loss bound suite", ok,
                      fmt("violations of %d triples each: upper %d/%d/%d (gaussian/uniform/"
                          "exponential), (a) %d, (b) %d, (c) %d of which %d with c < c*",
                          kTriples, gauss_upper, unif_upper, exp_upper, gauss_a, unif_b, exp_c,
                          exp_c_below),
                      clock.seconds(), 60.0));
  out.push_back(property("bound (c) on the c > c* side", exp_c_above == 0,
                         fmt("%d violations among %d triples with c > c*", exp_c_above, above)));
  return out;
}

// ---------------------------------------------------------------- 4

// Excess population loss of a fitted affine comparator on the cosine process,
// averaged over y0 drawn from the untreated outcomes and an independent x.
struct ExcessLossPanel {
  CosProcess proc;
  std::vector<double> x, y0;

  ExcessLossPanel(double gamma, std::size_t m, std::uint64_t seed) : proc{gamma} {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u01;
    while (y0.size() < m) {
      const double xs = z(rng);
      if (u01(rng) < 1.0 / (1.0 + std::exp(-xs))) continue;  // treated: not an untreated draw
      y0.push_back(proc.mu0(xs) + z(rng));
      x.push_back(z(rng));
    }
  }

  double operator()(std::span<const double> theta) const {
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      total += cqc_test::gaussian_pointwise_loss(affine_cqc(theta, y0[k], x[k]),
                                                 proc.cqc(y0[k], x[k]), proc.mu1(x[k]),
                                                 CosProcess::sigma1, proc.level(y0[k], x[k]));
    }
    return total / static_cast<double>(x.size());
  }
};

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Lines sgd_rate(const fs::path& dir) {
  Stopwatch clock;
  const double gamma = 2.0;
  const DgpSpec dgp = make_cos_linear(gamma);
  const NuisanceSet nuis = oracle_nuisances(dgp);
  const ExcessLossPanel excess(gamma, 4000, derive_seed(kBaseSeed, {4, 0}));
  const LinearCqc model0(std::make_shared<AffineFeatures>(1));

  Csv csv(dir / "c4_excess.csv", "n,replication,excess_loss,step_size,radius");
  std::map<std::size_t, std::vector<double>> losses;
  const std::vector<std::pair<std::size_t, std::size_t>> runs{{500, 200}, {2000, 100}, {8000, 100}};
  double step500 = 0.0;
  for (const auto& [n, reps] : runs) {
    for (std::size_t r = 0; r < reps; ++r) {
      const Dataset data = generate(dgp, n, derive_seed(kBaseSeed, {4, n, r}));
      SgdOptions o;
      o.schedule = ScheduleSpec::theorem_convex();
      o.seed = derive_seed(kBaseSeed, {4, n, r, 1});
      o.track_loss = false;
      const FitResult fit = fit_sgd(model0, nuis, data, Y0Sampler{}, o);
      const double step =
          ScheduleSpec::theorem_convex(fit.a_clip, fit.rho).step(1, n, fit.radius);
      if (n == 500 && r == 0) step500 = step;
      const double e = excess(fit.theta);
      losses[n].push_back(e);
      csv.row({num(n), num(r), num(e), num(step), num(fit.radius)});
    }
  }
  const std::vector<double> first500(losses[500].begin(), losses[500].begin() + 100);
  const double m500 = mean_of(first500), m2000 = mean_of(losses[2000]),
               m8000 = mean_of(losses[8000]);
  const double ratio = m8000 / m500;
  const double ratio4 = m2000 / m500;
  const std::vector<double> zero(4, 0.0);

  Lines out;
  out.push_back(timed(4, "SGD rate check", ratio >= 0.15 && ratio <= 0.6,
                      fmt("mean excess loss %.4f (n=500) vs %.4f (n=8000), ratio %.3f (limits "
                          "[0.15, 0.6]); theta = 0 scores %.4f; step %.2g at n=500",
                          m500, m8000, ratio, excess(zero), step500),
                      clock.seconds(), 600.0));
  out.push_back(property("SGD excess loss ratio n=2000 vs n=500 in [0.35, 0.75]",
                         ratio4 >= 0.35 && ratio4 <= 0.75,
                         fmt("%.4f vs %.4f, ratio %.3f", m2000, m500, ratio4)));
  out.push_back(property("SGD excess loss at n=8000 below half of n=500", m8000 < 0.5 * m500,
                         fmt("%.4f vs %.4f", m8000, m500)));
  const double med = median_of(losses[500]);
  const double p95 = empirical_quantile(losses[500], 0.95);
  out.push_back(property("SGD excess loss p95 <= 3 x median over 200 replications",
                         p95 <= 3.0 * med, fmt("p95 %.4f, median %.4f", p95, med)));
  return out;
}

// ---------------------------------------------------------------- experiments

struct Sweep {
  ExperimentResult result;

  const MetricsRecord& at(const std::string& value, const std::string& method) const {
    const std::string label = MethodTag::parse(method).label();
    for (const auto& r : result.records) {
      if (r.axis_value == value && r.method == label) return r;
    }
    throw std::runtime_error("no record for " + value + " " + method);
  }
};

Sweep sweep(const fs::path& dir, const std::string& stem, Axis axis,
            std::vector<std::string> values, const std::vector<std::string>& methods,
            std::size_t replications, std::uint64_t seed, const ExperimentDefaults& defaults,
            unsigned targets = 7u) {
  ExperimentPlan plan;
  plan.axis = axis;
  plan.values = std::move(values);
  plan.noise_targets = targets;
  for (const auto& m : methods) plan.methods.push_back(MethodTag::parse(m));
  plan.replications = replications;
  plan.base_seed = seed;
  Sweep s{run_experiment(plan, defaults)};
  write_results_csv(s.result, dir / (stem + "_results.csv"));
  write_aggregate_csv(s.result, dir / (stem + "_aggregate.csv"));
  return s;
}

std::string cell(const MetricsRecord& r) { return fmt("%.3f +- %.3f", r.mean, r.ci_half_width); }

Lines slope_sweep(const fs::path& dir) {
  Stopwatch clock;
  const ExperimentDefaults d;  // sec4, d = 10, n = 500
  const std::vector<std::string> gammas{"0", "2", "4", "6"};
  const auto s = sweep(dir, "c5_slope", Axis::slope, gammas,
                       {"dr_lin:estimated", "invert_dr:estimated"}, 30, 7, d);
  const auto& lin6 = s.at("6", "dr_lin:estimated");
  const auto& inv6 = s.at("6", "invert_dr:estimated");
  const bool separated = lin6.mean + lin6.ci_half_width < inv6.mean - inv6.ci_half_width;
  double lo = INFINITY, hi = 0.0, lo3 = INFINITY, hi3 = 0.0;
  std::string lin_path;
  for (const auto& g : gammas) {
    const double m = s.at(g, "dr_lin:estimated").mean;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    if (g != "6") {
      lo3 = std::min(lo3, m);
      hi3 = std::max(hi3, m);
    }
    lin_path += (lin_path.empty() ? "" : ", ") + fmt("%.2f", m);
  }
  const bool flat = hi < 2.0 * lo;
  Lines out;
  out.push_back(timed(5, "slope sweep (R=30)", separated && flat,
                      fmt("gamma=6: DR-Lin %s vs Inv-DR %s (%s); DR-Lin over gamma {%s}, max/min "
                          "%.2f (limit 2)",
                          cell(lin6).c_str(), cell(inv6).c_str(),
                          separated ? "CIs disjoint" : "CIs overlap", lin_path.c_str(), hi / lo),
                      clock.seconds(), 3600.0));
  const double inv0 = s.at("0", "invert_dr:estimated").mean;
  const double inv4 = s.at("4", "invert_dr:estimated").mean;
  out.push_back(property("DR-Lin MAE over gamma {0, 2, 4} within a factor of 2", hi3 < 2.0 * lo3,
                         fmt("max/min %.2f", hi3 / lo3)));
  out.push_back(property("Inv-DR MAE at gamma=4 above gamma=0", inv4 > inv0,
                         fmt("%.3f vs %.3f", inv4, inv0)));
  return out;
}

constexpr unsigned kPropensity = static_cast<unsigned>(NoiseTarget::propensity);
constexpr unsigned kCcdfs =
    static_cast<unsigned>(NoiseTarget::ccdf0) | static_cast<unsigned>(NoiseTarget::ccdf1);

Lines noise_sweep(const fs::path& dir) {
  Stopwatch clock;
  const ExperimentDefaults d;
  const std::vector<std::string> levels{"0", "0.5"};
  const auto both = sweep(dir, "c6_both", Axis::nuisance_noise, levels,
                          {"dr_lin:estimated", "ipw:estimated"}, 30, 3, d, 7u);
  const auto ccdf = sweep(dir, "c6_ccdf", Axis::nuisance_noise, levels, {"dr_lin:estimated"}, 30,
                          3, d, kCcdfs);
  const double dr_infl =
      both.at("0.5", "dr_lin:estimated").mean - both.at("0", "dr_lin:estimated").mean;
  const double ipw_infl = both.at("0.5", "ipw:estimated").mean - both.at("0", "ipw:estimated").mean;
  const auto& c0 = ccdf.at("0", "dr_lin:estimated");
  const auto& c5 = ccdf.at("0.5", "dr_lin:estimated");
  const bool robust = dr_infl < ipw_infl;
  const bool ccdf_ok = std::abs(c5.mean - c0.mean) <= 2.0 * c0.ci_half_width;
  const double seconds = clock.seconds();

  // Module invariant: exact nuisances, one of them perturbed.
  const auto prop = sweep(dir, "c6_oracle_propensity", Axis::nuisance_noise, levels,
                          {"dr_lin:oracle", "ipw:oracle"}, 30, 3, d, kPropensity);
  const auto occdf = sweep(dir, "c6_oracle_ccdf", Axis::nuisance_noise, levels, {"dr_lin:oracle"},
                           30, 3, d, kCcdfs);
  const auto& p0 = prop.at("0", "dr_lin:oracle");
  const auto& p5 = prop.at("0.5", "dr_lin:oracle");
  const double ipw_deg = prop.at("0.5", "ipw:oracle").mean - prop.at("0", "ipw:oracle").mean;
  const auto& q0 = occdf.at("0", "dr_lin:oracle");
  const auto& q5 = occdf.at("0.5", "dr_lin:oracle");

  Lines out;
  out.push_back(timed(6, "nuisance noise robustness", robust && ccdf_ok,
                      fmt("inflation at 0.5: DR %.3f vs IPW %.3f; CCDF-only DR %s -> %.3f "
                          "(shift %.2f half-widths, limit 2)",
                          dr_infl, ipw_infl, cell(c0).c_str(), c5.mean,
                          std::abs(c5.mean - c0.mean) / c0.ci_half_width),
                      seconds, 1800.0));
  out.push_back(property("oracle DR under propensity-only noise within 2 half-widths",
                         std::abs(p5.mean - p0.mean) <= 2.0 * p0.ci_half_width,
                         fmt("%s -> %.3f", cell(p0).c_str(), p5.mean)));
  out.push_back(property("oracle DR under CCDF-only noise within 2 half-widths",
                         std::abs(q5.mean - q0.mean) <= 2.0 * q0.ci_half_width,
                         fmt("%s -> %.3f", cell(q0).c_str(), q5.mean)));
  out.push_back(property("IPW degrades more than DR under propensity-only noise",
                         ipw_deg > p5.mean - p0.mean,
                         fmt("IPW %+.3f vs DR %+.3f", ipw_deg, p5.mean - p0.mean)));
  return out;
}

Lines sample_size_sweep(const fs::path& dir) {
  Stopwatch clock;
  const ExperimentDefaults d;
  const std::vector<std::string> sizes{"250", "500", "1000", "2000"};
  const auto s = sweep(dir, "c7_sample_size", Axis::sample_size, sizes, {"dr_lin:estimated"}, 50,
                       5, d);
  bool decreasing = true;
  std::string path;
  double prev = INFINITY;
  for (const auto& n : sizes) {
    const double m = s.at(n, "dr_lin:estimated").mean;
    decreasing = decreasing && m < prev;
    prev = m;
    path += (path.empty() ? "" : " > ") + fmt("%.3f", m);
  }
  return {timed(7, "sample-size monotonicity (R=50)", decreasing,
                "DR-Lin MAE over n {250, 500, 1000, 2000}: " + path, clock.seconds(), 1800.0)};
}

Lines sampler_sweep(const fs::path& dir) {
  Stopwatch clock;
  ExperimentDefaults d;
  d.dgp = "appD1";
  d.d = 1;
  d.n = 2000;
  const std::vector<std::string> samplers{"uniform", "unconditional", "conditional"};
  const auto s = sweep(dir, "c10_y0_sampler", Axis::y0_sampler_sweep, samplers,
                       {"dr_lin:estimated"}, 30, 6, d);
  bool overlap = true;
  std::string cells;
  for (std::size_t i = 0; i < samplers.size(); ++i) {
    const auto& a = s.at(samplers[i], "dr_lin:estimated");
    cells += (cells.empty() ? "" : ", ") + samplers[i] + " " + cell(a);
    for (std::size_t j = i + 1; j < samplers.size(); ++j) {
      const auto& b = s.at(samplers[j], "dr_lin:estimated");
      overlap = overlap && std::abs(a.mean - b.mean) <= a.ci_half_width + b.ci_half_width;
    }
  }
  return {timed(10, "y0 sampler insensitivity (R=30)", overlap,
                cells + (overlap ? "; all pairs overlap" : "; a pair is disjoint"),
                clock.seconds(), 1200.0)};
}

// ---------------------------------------------------------------- 8

Lines baseline_recovery(const fs::path& dir) {
  Stopwatch clock;
  constexpr std::size_t kQueries = 1000;
  Csv csv(dir / "c8_baselines.csv", "dgp,query,y0,truth,invert,s_learner,spacing");
  std::string detail;
  bool ok = true;
  for (const std::string name : {"sec4", "appD1", "fig1"}) {
    const DgpSpec dgp = make_dgp(name, 2.0, 10, derive_seed(kBaseSeed, {8}));
    const NuisanceSet nuis = oracle_nuisances(dgp);
    const OracleCcdf f0(dgp, 0), f1(dgp, 1);
    const GridSpec grid = default_grid(generate(dgp, 2000, derive_seed(kBaseSeed, {8, 1})), 1001);
    const double h = grid.spacing();
    Rng rng(derive_seed(kBaseSeed, {8, 2}));
    std::normal_distribution<double> z;
    std::vector<double> x(dgp.d);
    double worst = 0.0;
    for (std::size_t q = 0; q < kQueries; ++q) {
      draw_covariates(dgp, rng, x);
      const double y0 = dgp.mu(0, x) + dgp.sigma0 * z(rng);
      const double truth = dgp.cqc(y0, x);
      const double inv = invert_cqc(nuis, y0, x, grid);
      const double sl = s_learner_cqc(f0, f1, y0, x, grid);
      worst = std::max({worst, std::abs(inv - truth), std::abs(sl - truth)});
      csv.row({name, num(q), num(y0), num(truth), num(inv), num(sl), num(h)});
    }
    ok = ok && worst <= h * (1.0 + 1e-9);
    detail += (detail.empty() ? "" : "; ") + fmt("%s max error %.4f vs spacing %.4f", name.c_str(),
                                                 worst, h);
  }
  return {timed(8, "baseline recovery with exact nuisances", ok, detail, clock.seconds(), 60.0)};
}

// ---------------------------------------------------------------- 9

Lines mlp_gradients(const fs::path& dir) {
  Stopwatch clock;
  constexpr int kPoints = 100;
  constexpr std::size_t kDim = 3;
  Csv csv(dir / "c9_mlp.csv", "activation,point,relative_error");
  std::map<Activation, double> worst;
  for (const Activation act : {Activation::tanh, Activation::relu}) {
    std::mt19937_64 rng(derive_seed(kBaseSeed, {9, static_cast<std::uint64_t>(act)}));
    std::normal_distribution<double> z;
    double w = 0.0;
    for (int p = 0; p < kPoints; ++p) {
      MlpCqc net(kDim, {16, 8}, act, derive_seed(kBaseSeed, {9, 1, static_cast<std::uint64_t>(p)}));
      // Nonzero biases so relu units are not all switched at the same place.
      std::vector<double> theta(net.params().begin(), net.params().end());
      for (auto& t : theta) t += 0.1 * z(rng);
      net.set_params(theta);
      const double y0 = z(rng);
      std::vector<double> x(kDim);
      for (auto& v : x) v = z(rng);
      std::vector<double> grad(theta.size());
      net.value_and_grad(y0, x, grad);

      double diff2 = 0.0, ref2 = 0.0, fd2 = 0.0;
      MlpCqc probe = net;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
        auto moved = theta;
        moved[j] = theta[j] + h;
        probe.set_params(moved);
        const double up = probe.value(y0, x);
        moved[j] = theta[j] - h;
        probe.set_params(moved);
        const double down = probe.value(y0, x);
        const double fd = (up - down) / (2.0 * h);
        diff2 += sq(fd - grad[j]);
        ref2 += sq(grad[j]);
        fd2 += sq(fd);
      }
      const double rel = std::sqrt(diff2) / std::max({std::sqrt(ref2), std::sqrt(fd2), 1e-300});
      w = std::max(w, rel);
      csv.row({activation_name(act), std::to_string(p), num(rel)});
    }
    worst[act] = w;
  }
  const bool ok = worst[Activation::tanh] <= 1e-4 && worst[Activation::relu] <= 1e-2;
  return {timed(9, "MLP gradient check", ok,
                fmt("max relative error over %d points: tanh %.2g (limit 1e-4), relu %.2g (limit "
                    "1e-2)",
                    kPoints, worst[Activation::tanh], worst[Activation::relu]),
                clock.seconds(), 10.0)};
}

// ---------------------------------------------------------------- driver

using Criterion = Lines (*)(const fs::path&);

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> table{
      {1, gradient_unbiasedness}, {2, loss_oracle},   {3, loss_bounds},
      {4, sgd_rate},              {5, slope_sweep},   {6, noise_sweep},
      {7, sample_size_sweep},     {8, baseline_recovery}, {9, mlp_gradients},
      {10, sampler_sweep}};
  return table;
}

Lines run_all(const std::set<int>& selected, const fs::path& dir, const std::string& tag) {
  fs::create_directories(dir);
  Lines lines;
  for (const auto& [number, fn] : criteria()) {
    if (!selected.count(number)) continue;
    std::cerr << tag << ": criterion " << number << " ..." << std::endl;
    Lines got;
    try {
      got = fn(dir);
    } catch (const std::exception& e) {
      got = {{"criterion " + std::to_string(number), "aborted", false, e.what()}};
    }
    for (const auto& l : got) std::cerr << tag << ":   " << l.label << (l.pass ? " PASS" : " FAIL") << std::endl;
    lines.insert(lines.end(), got.begin(), got.end());
  }
  return lines;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> csv_names(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

Line compare_runs(const fs::path& a, const fs::path& b) {
  const auto names = csv_names(a);
  std::vector<std::string> differing;
  if (names != csv_names(b)) differing.push_back("<file sets differ>");
  for (const auto& n : names) {
    if (!fs::exists(b / n) || slurp(a / n) != slurp(b / n)) differing.push_back(n);
  }
  std::string detail = fmt("%zu result CSVs compared", names.size());
  if (!differing.empty()) {
    detail += "; differing:";
    for (const auto& n : differing) detail += " " + n;
  }
  return {"criterion 11", "bit-identical reruns", differing.empty() && !names.empty(), detail};
}

std::set<int> parse_only(const std::string& list) {
  std::set<int> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::set<int> selected;
  for (int k = 1; k <= 11; ++k) selected.insert(k);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      selected = parse_only(argv[++i]);
    } else {
      std::cerr << "usage: cqc_acceptance [--out DIR] [--only 1,2,...]\n";
      return 2;
    }
  }

  fs::remove_all(out / "run1");
  fs::remove_all(out / "run2");
  Lines lines = run_all(selected, out / "run1", "run 1");
  if (selected.count(11)) {
    run_all(selected, out / "run2", "run 2");
    lines.push_back(compare_runs(out / "run1", out / "run2"));
  }

  std::stable_partition(lines.begin(), lines.end(),
                        [](const Line& l) { return l.id != "property"; });
  bool all = true;
  for (const auto& l : lines) {
    std::cout << l.id << " (" << l.label << "): " << (l.pass ? "PASS" : "FAIL") << " [" << l.detail
              << "]\n";
    all = all && l.pass;
  }
  return all ? 0 : 1;
}
