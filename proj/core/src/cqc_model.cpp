#include "cqc/cqc_model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace cqc {

std::vector<double> FeatureMap::operator()(double y0, std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw DataError("feature map expects " + std::to_string(input_dim()) + " covariates, got " +
                    std::to_string(x.size()));
  }
  std::vector<double> out(output_dim());
  compute(y0, x, out);
  if (rho_bound && norm(out) > *rho_bound) {
    std::ostringstream os;
    os << "feature norm " << norm(out) << " exceeds rho bound " << *rho_bound;
    throw NumericError(os.str());
  }
  return out;
}

void AffineFeatures::compute(double y0, std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < d_; ++j) out[j] = x[j] * y0;
  out[d_] = y0;
  for (std::size_t j = 0; j < d_; ++j) out[d_ + 1 + j] = x[j];
  out[2 * d_ + 1] = 1.0;
}

nlohmann::json AffineFeatures::to_json() const { return {{"kind", "affine"}, {"d", d_}}; }

RandomFourierFeatures::RandomFourierFeatures(std::size_t d, std::size_t num_features,
                                             double lengthscale, std::uint64_t seed)
    : d_(d), p_(num_features), lengthscale_(lengthscale), seed_(seed) {
  if (num_features == 0) throw ConfigError("random Fourier features need p > 0");
  if (!(lengthscale > 0.0)) throw ConfigError("random Fourier lengthscale must be > 0");
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0 / lengthscale);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  omega_.resize(p_ * (d_ + 1));
  phase_.resize(p_);
  for (std::size_t j = 0; j < p_; ++j) {
    for (std::size_t k = 0; k <= d_; ++k) omega_[j * (d_ + 1) + k] = z(rng);
    phase_[j] = u(rng);
  }
  rho_bound = std::numbers::sqrt2;
}

void RandomFourierFeatures::compute(double y0, std::span<const double> x,
                                    std::span<double> out) const {
  const double scale = std::sqrt(2.0 / static_cast<double>(p_));
  for (std::size_t j = 0; j < p_; ++j) {
    const double* w = omega_.data() + j * (d_ + 1);
    double arg = w[0] * y0 + phase_[j];
    for (std::size_t k = 0; k < d_; ++k) arg += w[k + 1] * x[k];
    out[j] = scale * std::cos(arg);
  }
}

nlohmann::json RandomFourierFeatures::to_json() const {
  return {{"kind", "random_fourier"},
          {"d", d_},
          {"num_features", p_},
          {"lengthscale", lengthscale_},
          {"seed", seed_}};
}

nlohmann::json CustomFeatures::to_json() const {
  throw ConfigError("custom feature maps are not serialisable");
}

std::vector<double> affine_features(double y0, std::span<const double> x) {
  return AffineFeatures(x.size())(y0, x);
}

std::vector<double> rff_features(double y0, std::span<const double> x,
                                 const RandomFourierFeatures& spec) {
  return spec(y0, x);
}

// ---------------------------------------------------------------------------

LinearCqc::LinearCqc(std::shared_ptr<const FeatureMap> features)
    : features_(std::move(features)), theta_(features_->output_dim(), 0.0) {}

LinearCqc::LinearCqc(std::shared_ptr<const FeatureMap> features, std::vector<double> theta)
    : features_(std::move(features)), theta_(std::move(theta)) {
  if (theta_.size() != features_->output_dim()) {
    throw ConfigError("theta length does not match the feature dimension");
  }
}

void LinearCqc::set_params(std::span<const double> theta) {
  if (theta.size() != theta_.size()) throw ConfigError("theta length mismatch");
  theta_.assign(theta.begin(), theta.end());
}

double LinearCqc::value(double y0, std::span<const double> x) const {
  return dot(theta_, (*features_)(y0, x));
}

double LinearCqc::value_and_grad(double y0, std::span<const double> x,
                                 std::span<double> grad) const {
  const auto phi = (*features_)(y0, x);
  std::copy(phi.begin(), phi.end(), grad.begin());
  return dot(theta_, phi);
}

nlohmann::json LinearCqc::to_json() const {
  return {{"kind", "linear"}, {"features", features_->to_json()}, {"theta", theta_}};
}

// ---------------------------------------------------------------------------

std::size_t MlpCqc::count_params(const std::vector<std::size_t>& widths) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) n += widths[l] * widths[l - 1] + widths[l];
  return n;
}

MlpCqc::MlpCqc(std::size_t d, std::vector<std::size_t> hidden, Activation activation,
               std::uint64_t seed)
    : activation_(activation) {
  widths_.push_back(d + 1);
  widths_.insert(widths_.end(), hidden.begin(), hidden.end());
  widths_.push_back(1);
  params_.assign(count_params(widths_), 0.0);
  Rng rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    const auto fan_in = static_cast<double>(widths_[l - 1]);
    const auto fan_out = static_cast<double>(widths_[l]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    const std::size_t nw = widths_[l] * widths_[l - 1];
    for (std::size_t k = 0; k < nw; ++k) params_[offset + k] = u(rng);
    offset += nw + widths_[l];
  }
}

MlpCqc::MlpCqc(std::size_t d, std::vector<std::size_t> hidden, Activation activation,
               std::vector<double> params)
    : activation_(activation) {
  widths_.push_back(d + 1);
  widths_.insert(widths_.end(), hidden.begin(), hidden.end());
  widths_.push_back(1);
  if (params.size() != count_params(widths_)) throw ConfigError("MLP parameter count mismatch");
  params_ = std::move(params);
}

void MlpCqc::set_params(std::span<const double> theta) {
  if (theta.size() != params_.size()) throw ConfigError("MLP parameter count mismatch");
  params_.assign(theta.begin(), theta.end());
}

double MlpCqc::forward(double y0, std::span<const double> x,
                       std::vector<std::vector<double>>* pre_activations,
                       std::vector<std::vector<double>>* activations) const {
  if (x.size() + 1 != widths_.front()) throw DataError("MLP input dimension mismatch");
  std::vector<double> h(widths_.front());
  h[0] = y0;
  std::copy(x.begin(), x.end(), h.begin() + 1);
  if (activations) activations->push_back(h);

  std::size_t offset = 0;
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 1; l <= layers; ++l) {
    const std::size_t in = widths_[l - 1];
    const std::size_t out = widths_[l];
    const double* w = params_.data() + offset;
    const double* b = w + out * in;
    std::vector<double> z(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < in; ++k) s += w[i * in + k] * h[k];
      z[i] = s;
    }
    offset += out * in + out;
    if (l == layers) {
      if (pre_activations) pre_activations->push_back(z);
      return z[0];
    }
    std::vector<double> next(out);
    for (std::size_t i = 0; i < out; ++i) {
      next[i] = activation_ == Activation::relu ? (z[i] > 0.0 ? z[i] : 0.0) : std::tanh(z[i]);
    }
    if (pre_activations) pre_activations->push_back(std::move(z));
    if (activations) activations->push_back(next);
    h = std::move(next);
  }
  return 0.0;
}

double MlpCqc::value(double y0, std::span<const double> x) const {
  return forward(y0, x, nullptr, nullptr);
}

double MlpCqc::value_and_grad(double y0, std::span<const double> x,
                              std::span<double> grad) const {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> act;
  const double out = forward(y0, x, &pre, &act);

  const std::size_t layers = widths_.size() - 1;
  std::vector<std::size_t> offsets(layers + 1, 0);
  for (std::size_t l = 1; l <= layers; ++l) {
    offsets[l] = offsets[l - 1] + widths_[l] * widths_[l - 1] + widths_[l];
  }

  std::vector<double> delta{1.0};  // d out / d z at the output layer
  for (std::size_t l = layers; l >= 1; --l) {
    const std::size_t in = widths_[l - 1];
    const std::size_t outw = widths_[l];
    const std::size_t off = offsets[l - 1];
    const double* w = params_.data() + off;
    const auto& h = act[l - 1];
    for (std::size_t i = 0; i < outw; ++i) {
      for (std::size_t k = 0; k < in; ++k) grad[off + i * in + k] = delta[i] * h[k];
      grad[off + outw * in + i] = delta[i];
    }
    if (l == 1) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t k = 0; k < in; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < outw; ++i) s += w[i * in + k] * delta[i];
      const double z = pre[l - 2][k];
      double deriv = 0.0;
      if (activation_ == Activation::relu) {
        deriv = z > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
      } else {
        const double t = std::tanh(z);
        deriv = 1.0 - t * t;
      }
      prev[k] = s * deriv;
    }
    delta = std::move(prev);
  }
  return out;
}

nlohmann::json MlpCqc::to_json() const {
  std::vector<std::size_t> hidden(widths_.begin() + 1, widths_.end() - 1);
  return {{"kind", "mlp"},
          {"d", input_dim()},
          {"hidden", hidden},
          {"activation", activation_name(activation_)},
          {"params", params_}};
}

// ---------------------------------------------------------------------------

ValueGrad eval_and_grad(const CqcModel& model, double y0, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw DataError("model expects " + std::to_string(model.input_dim()) +
                    " covariates, got " + std::to_string(x.size()));
  }
  ValueGrad out;
  out.grad.resize(model.num_params());
  out.value = model.value_and_grad(y0, x, out.grad);
  return out;
}

std::vector<double> project_ball(std::span<const double> theta, double radius) {
  std::vector<double> out(theta.begin(), theta.end());
  project_ball_inplace(out, radius);
  return out;
}

void project_ball_inplace(std::span<double> theta, double radius) {
  if (!(radius > 0.0)) throw ConfigError("projection radius must be > 0");
  const double n = norm(theta);
  if (n <= radius) return;
  const double scale = radius / n;
  for (auto& t : theta) t *= scale;
}

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

std::shared_ptr<const FeatureMap> features_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "affine") return std::make_shared<AffineFeatures>(j.at("d").get<std::size_t>());
  if (kind == "random_fourier") {
    return std::make_shared<RandomFourierFeatures>(
        j.at("d").get<std::size_t>(), j.at("num_features").get<std::size_t>(),
        j.at("lengthscale").get<double>(), j.at("seed").get<std::uint64_t>());
  }
  throw ConfigError("unknown feature map kind '" + kind + "'");
}

std::unique_ptr<CqcModel> model_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") {
      return std::make_unique<LinearCqc>(features_from_json(j.at("features")),
                                         j.at("theta").get<std::vector<double>>());
    }
    if (kind == "mlp") {
      return std::make_unique<MlpCqc>(j.at("d").get<std::size_t>(),
                                      j.at("hidden").get<std::vector<std::size_t>>(),
                                      parse_activation(j.at("activation").get<std::string>()),
                                      j.at("params").get<std::vector<double>>());
    }
    throw ConfigError("unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace cqc
