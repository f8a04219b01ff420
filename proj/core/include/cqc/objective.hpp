#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cqc/cqc_model.hpp"
#include "cqc/dataset.hpp"
#include "cqc/dgp.hpp"
#include "cqc/nuisance.hpp"

namespace cqc {

enum class GradientKind { dr, ipw };

GradientKind parse_gradient_kind(const std::string& name);
std::string gradient_kind_name(GradientKind kind);

// One per-sample gradient term: grad = (d cqc / d theta) * scalar_factor.
struct GradContribution {
  std::vector<double> grad;
  double scalar_factor = 0.0;
  std::size_t index = 0;
};

// Bracketed factors of the per-sample gradients, from plain scalars.
//   dr : (a/pi)(1{y<=c} - F1(c)) - ((1-a)/(1-pi))(1{y<=y0} - F0(y0)) + F1(c) - F0(y0)
//   ipw: (a/pi) 1{y<=c} - ((1-a)/(1-pi)) 1{y<=y0}
double dr_factor(int a, double y, double c, double y0, double pi, double f1_at_c,
                 double f0_at_y0);
double ipw_factor(int a, double y, double c, double y0, double pi);

GradContribution dr_gradient(const CqcModel& model, const NuisanceSet& nuisances, double y0,
                             const Sample& z, std::size_t index = 0);
GradContribution ipw_gradient(const CqcModel& model, const NuisanceSet& nuisances, double y0,
                              const Sample& z, std::size_t index = 0);

// A test point y0 paired with an observation.
struct Query {
  double y0 = 0.0;
  Sample z;
};

// Mean of the per-sample contributions, reduced pairwise in index order.
std::vector<double> mc_gradient(const CqcModel& model, const NuisanceSet& nuisances,
                                std::span<const Query> batch, GradientKind kind);

// Nuisance values cached per observation of a dataset: pi-hat(x_i) and the
// conditional CDFs F0-hat(.|x_i), F1-hat(.|x_i). Built once, then shared by
// every optimiser iteration and every validation pass over the same rows.
class PreparedData {
 public:
  PreparedData(const NuisanceSet& nuisances, const Dataset& data);

  const Dataset& data() const { return *data_; }
  std::size_t size() const { return pi_.size(); }
  double propensity(std::size_t i) const { return pi_[i]; }
  const ConditionalCdf& ccdf(int arm, std::size_t i) const {
    return arm == 1 ? *f1_[i] : *f0_[i];
  }

 private:
  const Dataset* data_;
  std::vector<double> pi_;
  std::vector<std::unique_ptr<ConditionalCdf>> f0_;
  std::vector<std::unique_ptr<ConditionalCdf>> f1_;
};

// Mean gradient over pairs (y0[k], rows[k]) of a prepared dataset; written to out.
void batch_gradient(const CqcModel& model, const PreparedData& prepared,
                    std::span<const std::size_t> rows, std::span<const double> y0,
                    GradientKind kind, std::span<double> out);

// ---------------------------------------------------------------------------
// Y0 samplers.

enum class Y0Kind { uniform, unconditional, conditional };

struct Y0Sampler {
  Y0Kind kind = Y0Kind::unconditional;
  double q_lo = 0.05;
  double q_hi = 0.95;
  std::optional<DgpSpec> dgp;  // conditional kind only

  void validate() const;
};

Y0Kind parse_y0_kind(const std::string& name);
std::string y0_kind_name(Y0Kind kind);

// A sampler bound to its data context (the untreated outcomes).
//   uniform       U[q_lo-quantile, q_hi-quantile] of the untreated outcomes
//   unconditional uniform resample of the untreated outcomes, independent of x
//   conditional   exact inverse-CDF draw from Y | X=x, A=0 of the DGP
class Y0Source {
 public:
  Y0Source(const Y0Sampler& sampler, std::span<const double> untreated_outcomes);

  // Draw from a uniform variate u in (0, 1).
  double from_uniform(double u, std::span<const double> x) const;
  double draw(std::span<const double> x, Rng& rng) const;
  // Counter-based draw keyed by a derived seed, e.g. derive_seed(base, {epoch, i}).
  double draw_keyed(std::span<const double> x, std::uint64_t key) const;

 private:
  Y0Sampler sampler_;
  std::vector<double> untreated_;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

double sample_y0(const Y0Sampler& sampler, std::span<const double> untreated_outcomes,
                 std::span<const double> x, Rng& rng);

// Uniform in (0, 1) from a 64-bit key.
double keyed_uniform(std::uint64_t key);

// y0 for every row, keyed by (seed, epoch, row).
std::vector<double> draw_y0_epoch(const Y0Source& source, const Dataset& data,
                                  std::span<const std::size_t> rows, std::uint64_t seed,
                                  std::uint64_t epoch);

// ---------------------------------------------------------------------------
// Loss evaluation by quadrature.

struct LossReport {
  double mean_loss = 0.0;
  double trimmed_mean_loss = 0.0;
  std::vector<double> per_sample;
  int quadrature_nodes = 129;
  double trim = 0.05;
};

// Per-sample DR loss at y1 = c:
//   (c - y){(a/pi) 1{y<=c} - ((1-a)/(1-pi))(1{y<=y0} - F0(y0)) - F0(y0)}
//     + ((pi - a)/pi) * int_y^c F1(t) dt
// with the integral by composite Simpson on `nodes` points.
double dr_sample_loss(int a, double y, double c, double y0, double pi, double f0_at_y0,
                      const ConditionalCdf& f1, int nodes);

LossReport loss_quadrature(const CqcModel& model, const NuisanceSet& nuisances,
                           std::span<const Query> batch, int nodes = 129, double trim = 0.05);

LossReport loss_quadrature(const CqcModel& model, const PreparedData& prepared,
                           std::span<const std::size_t> rows, std::span<const double> y0,
                           int nodes = 129, double trim = 0.05);

// int_{c*}^{c} (F1(t|x) - F0(y0|x)) dt for an exact F1.
double pointwise_population_loss(double c, double cqc_star, double f0_at_y0,
                                 const ConditionalCdf& f1, int nodes = 129);

nlohmann::json to_json(const LossReport& report);

}  // namespace cqc
