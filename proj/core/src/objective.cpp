#include "cqc/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

namespace {

void check_propensity(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) {
    throw NumericError("propensity " + format_double(pi) + " outside (0, 1)");
  }
}

double indicator(bool b) { return b ? 1.0 : 0.0; }

// Adds src into dst.
void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
}

// Sum of per-item vectors over [lo, hi) by a fixed binary tree. Leaves of up to
// 8 items are summed left to right.
template <class Fill>
void tree_sum(std::size_t lo, std::size_t hi, std::size_t p, const Fill& fill,
              std::span<double> out, std::vector<double>& scratch) {
  std::fill(out.begin(), out.end(), 0.0);
  if (hi - lo <= 8) {
    if (scratch.size() < p) scratch.resize(p);
    std::span<double> item(scratch.data(), p);
    for (std::size_t k = lo; k < hi; ++k) {
      fill(k, item);
      accumulate(out, item);
    }
    return;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  tree_sum(lo, mid, p, fill, out, scratch);
  std::vector<double> right(p);
  tree_sum(mid, hi, p, fill, std::span<double>(right), scratch);
  accumulate(out, right);
}

}  // namespace

GradientKind parse_gradient_kind(const std::string& name) {
  if (name == "dr") return GradientKind::dr;
  if (name == "ipw") return GradientKind::ipw;
  throw ConfigError("unknown gradient kind '" + name + "' (expected dr or ipw)");
}

std::string gradient_kind_name(GradientKind kind) {
  return kind == GradientKind::dr ? "dr" : "ipw";
}

double dr_factor(int a, double y, double c, double y0, double pi, double f1_at_c,
                 double f0_at_y0) {
  check_propensity(pi);
  const double w1 = a == 1 ? 1.0 / pi : 0.0;
  const double w0 = a == 0 ? 1.0 / (1.0 - pi) : 0.0;
  return w1 * (indicator(y <= c) - f1_at_c) - w0 * (indicator(y <= y0) - f0_at_y0) +
         f1_at_c - f0_at_y0;
}

double ipw_factor(int a, double y, double c, double y0, double pi) {
  check_propensity(pi);
  const double w1 = a == 1 ? 1.0 / pi : 0.0;
  const double w0 = a == 0 ? 1.0 / (1.0 - pi) : 0.0;
  return w1 * indicator(y <= c) - w0 * indicator(y <= y0);
}

namespace {

GradContribution contribution(const CqcModel& model, const NuisanceSet& nuisances, double y0,
                              const Sample& z, std::size_t index, GradientKind kind) {
  GradContribution out;
  out.index = index;
  out.grad.resize(model.num_params());
  const double c = model.value_and_grad(y0, z.x, out.grad);
  const double pi = (*nuisances.propensity)(z.x);
  if (kind == GradientKind::dr) {
    const double f1 = (*nuisances.ccdf1)(c, z.x);
    const double f0 = (*nuisances.ccdf0)(y0, z.x);
    out.scalar_factor = dr_factor(z.a, z.y, c, y0, pi, f1, f0);
  } else {
    out.scalar_factor = ipw_factor(z.a, z.y, c, y0, pi);
  }
  for (double& g : out.grad) g *= out.scalar_factor;
  return out;
}

}  // namespace

GradContribution dr_gradient(const CqcModel& model, const NuisanceSet& nuisances, double y0,
                             const Sample& z, std::size_t index) {
  return contribution(model, nuisances, y0, z, index, GradientKind::dr);
}

GradContribution ipw_gradient(const CqcModel& model, const NuisanceSet& nuisances, double y0,
                              const Sample& z, std::size_t index) {
  return contribution(model, nuisances, y0, z, index, GradientKind::ipw);
}

std::vector<double> mc_gradient(const CqcModel& model, const NuisanceSet& nuisances,
                                std::span<const Query> batch, GradientKind kind) {
  if (batch.empty()) throw ConfigError("mc_gradient: empty batch");
  const std::size_t p = model.num_params();
  std::vector<double> out(p);
  std::vector<double> scratch;
  auto fill = [&](std::size_t k, std::span<double> item) {
    const GradContribution g = contribution(model, nuisances, batch[k].y0, batch[k].z, k, kind);
    std::copy(g.grad.begin(), g.grad.end(), item.begin());
  };
  tree_sum(0, batch.size(), p, fill, std::span<double>(out), scratch);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : out) v *= inv;
  return out;
}

PreparedData::PreparedData(const NuisanceSet& nuisances, const Dataset& data) : data_(&data) {
  const std::size_t n = data.size();
  pi_.resize(n);
  f0_.reserve(n);
  f1_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.x(i);
    pi_[i] = (*nuisances.propensity)(x);
    check_propensity(pi_[i]);
    f0_.push_back(nuisances.ccdf0->at(x));
    f1_.push_back(nuisances.ccdf1->at(x));
  }
}

void batch_gradient(const CqcModel& model, const PreparedData& prepared,
                    std::span<const std::size_t> rows, std::span<const double> y0,
                    GradientKind kind, std::span<double> out) {
  if (rows.empty()) throw ConfigError("batch_gradient: empty batch");
  if (rows.size() != y0.size()) throw ConfigError("batch_gradient: rows and y0 differ in length");
  const std::size_t p = model.num_params();
  const Dataset& data = prepared.data();
  std::vector<double> scratch;
  auto fill = [&](std::size_t k, std::span<double> item) {
    const std::size_t i = rows[k];
    const double c = model.value_and_grad(y0[k], data.x(i), item);
    const double pi = prepared.propensity(i);
    double factor;
    if (kind == GradientKind::dr) {
      factor = dr_factor(data.a(i), data.y(i), c, y0[k], pi, prepared.ccdf(1, i)(c),
                         prepared.ccdf(0, i)(y0[k]));
    } else {
      factor = ipw_factor(data.a(i), data.y(i), c, y0[k], pi);
    }
    for (double& g : item) g *= factor;
  };
  tree_sum(0, rows.size(), p, fill, out, scratch);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : out) v *= inv;
}

// ---------------------------------------------------------------------------

void Y0Sampler::validate() const {
  if (kind == Y0Kind::uniform && !(q_lo >= 0.0 && q_lo < q_hi && q_hi <= 1.0)) {
    throw ConfigError("uniform y0 sampler needs 0 <= q_lo < q_hi <= 1");
  }
  if (kind == Y0Kind::conditional && !dgp) {
    throw ConfigError("conditional y0 sampler needs a data-generating process");
  }
}

Y0Kind parse_y0_kind(const std::string& name) {
  if (name == "uniform") return Y0Kind::uniform;
  if (name == "unconditional") return Y0Kind::unconditional;
  if (name == "conditional") return Y0Kind::conditional;
  throw ConfigError("unknown y0 sampler '" + name +
                    "' (expected uniform, unconditional or conditional)");
}

std::string y0_kind_name(Y0Kind kind) {
  switch (kind) {
    case Y0Kind::uniform: return "uniform";
    case Y0Kind::unconditional: return "unconditional";
    case Y0Kind::conditional: return "conditional";
  }
  return "unknown";
}

Y0Source::Y0Source(const Y0Sampler& sampler, std::span<const double> untreated_outcomes)
    : sampler_(sampler), untreated_(untreated_outcomes.begin(), untreated_outcomes.end()) {
  sampler_.validate();
  if (sampler_.kind != Y0Kind::conditional && untreated_.empty()) {
    throw DataError("y0 sampler: no untreated outcomes available");
  }
  if (sampler_.kind == Y0Kind::uniform) {
    lo_ = empirical_quantile(untreated_, sampler_.q_lo);
    hi_ = empirical_quantile(untreated_, sampler_.q_hi);
  }
}

double Y0Source::from_uniform(double u, std::span<const double> x) const {
  switch (sampler_.kind) {
    case Y0Kind::uniform:
      return lo_ + u * (hi_ - lo_);
    case Y0Kind::unconditional: {
      const auto m = untreated_.size();
      const auto k = std::min(m - 1, static_cast<std::size_t>(u * static_cast<double>(m)));
      return untreated_[k];
    }
    case Y0Kind::conditional: {
      const DgpSpec& dgp = *sampler_.dgp;
      return dgp.mu(0, x) + dgp.sigma(0) * normal_quantile(u);
    }
  }
  return 0.0;
}

double Y0Source::draw(std::span<const double> x, Rng& rng) const {
  return from_uniform(keyed_uniform(rng()), x);
}

double Y0Source::draw_keyed(std::span<const double> x, std::uint64_t key) const {
  return from_uniform(keyed_uniform(key), x);
}

double sample_y0(const Y0Sampler& sampler, std::span<const double> untreated_outcomes,
                 std::span<const double> x, Rng& rng) {
  return Y0Source(sampler, untreated_outcomes).draw(x, rng);
}

double keyed_uniform(std::uint64_t key) {
  // 52 random bits, offset by half a unit so 0 and 1 are never returned.
  return (static_cast<double>(key >> 12) + 0.5) * 0x1.0p-52;
}

std::vector<double> draw_y0_epoch(const Y0Source& source, const Dataset& data,
                                  std::span<const std::size_t> rows, std::uint64_t seed,
                                  std::uint64_t epoch) {
  std::vector<double> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    out[k] = source.draw_keyed(data.x(i), derive_seed(seed, {epoch, i}));
  }
  return out;
}

// ---------------------------------------------------------------------------

double dr_sample_loss(int a, double y, double c, double y0, double pi, double f0_at_y0,
                      const ConditionalCdf& f1, int nodes) {
  check_propensity(pi);
  const double w1 = a == 1 ? 1.0 / pi : 0.0;
  const double w0 = a == 0 ? 1.0 / (1.0 - pi) : 0.0;
  const double bracket =
      w1 * indicator(y <= c) - w0 * (indicator(y <= y0) - f0_at_y0) - f0_at_y0;
  double loss = (c - y) * bracket;
  const double prefactor = (pi - a) / pi;
  if (c != y) {
    loss += prefactor * integrate_simpson([&f1](double t) { return f1(t); }, y, c, nodes);
  }
  return loss;
}

namespace {

void check_loss_args(int nodes, double trim) {
  if (nodes < 2) throw ConfigError("quadrature needs at least 2 nodes");
  if (!(trim >= 0.0 && trim < 0.5)) throw ConfigError("trim fraction must lie in [0, 0.5)");
}

LossReport finish_report(std::vector<double> per_sample, int nodes, double trim) {
  LossReport r;
  r.mean_loss = mean(per_sample);
  r.trimmed_mean_loss = trimmed_mean(per_sample, trim);
  r.per_sample = std::move(per_sample);
  r.quadrature_nodes = nodes;
  r.trim = trim;
  return r;
}

}  // namespace

LossReport loss_quadrature(const CqcModel& model, const NuisanceSet& nuisances,
                           std::span<const Query> batch, int nodes, double trim) {
  check_loss_args(nodes, trim);
  if (batch.empty()) throw ConfigError("loss_quadrature: empty batch");
  std::vector<double> per(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Query& q = batch[k];
    const double c = model.value(q.y0, q.z.x);
    const double pi = (*nuisances.propensity)(q.z.x);
    const double f0 = (*nuisances.ccdf0)(q.y0, q.z.x);
    const auto f1 = nuisances.ccdf1->at(q.z.x);
    per[k] = dr_sample_loss(q.z.a, q.z.y, c, q.y0, pi, f0, *f1, nodes);
  }
  return finish_report(std::move(per), nodes, trim);
}

LossReport loss_quadrature(const CqcModel& model, const PreparedData& prepared,
                           std::span<const std::size_t> rows, std::span<const double> y0,
                           int nodes, double trim) {
  check_loss_args(nodes, trim);
  if (rows.empty()) throw ConfigError("loss_quadrature: empty batch");
  if (rows.size() != y0.size()) throw ConfigError("loss_quadrature: rows and y0 differ in length");
  const Dataset& data = prepared.data();
  std::vector<double> per(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    const double c = model.value(y0[k], data.x(i));
    per[k] = dr_sample_loss(data.a(i), data.y(i), c, y0[k], prepared.propensity(i),
                            prepared.ccdf(0, i)(y0[k]), prepared.ccdf(1, i), nodes);
  }
  return finish_report(std::move(per), nodes, trim);
}

double pointwise_population_loss(double c, double cqc_star, double f0_at_y0,
                                 const ConditionalCdf& f1, int nodes) {
  if (c == cqc_star) return 0.0;
  return integrate_simpson([&](double t) { return f1(t) - f0_at_y0; }, cqc_star, c, nodes);
}

nlohmann::json to_json(const LossReport& report) {
  return {{"mean_loss", report.mean_loss},
          {"trimmed_mean_loss", report.trimmed_mean_loss},
          {"trim", report.trim},
          {"quadrature_nodes", report.quadrature_nodes},
          {"per_sample", report.per_sample}};
}

}  // namespace cqc
