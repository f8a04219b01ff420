#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cqc {

// phi(y0, x) for models linear in their parameters, cqc(y0|x) = theta' phi(y0, x).
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::string kind() const = 0;
  virtual void compute(double y0, std::span<const double> x, std::span<double> out) const = 0;
  virtual nlohmann::json to_json() const = 0;

  // Checked evaluation: dimension and, when set, the norm bound.
  std::vector<double> operator()(double y0, std::span<const double> x) const;

  std::optional<double> rho_bound;
};

// [x*y0, y0, x, 1]: theta = [theta_scale, theta_scale0, theta_shift, theta_shift0]
// gives cqc(y0|x) = (theta_scale'x + theta_scale0) y0 + theta_shift'x + theta_shift0.
class AffineFeatures final : public FeatureMap {
 public:
  explicit AffineFeatures(std::size_t d) : d_(d) {}
  std::size_t input_dim() const override { return d_; }
  std::size_t output_dim() const override { return 2 * (d_ + 1); }
  std::string kind() const override { return "affine"; }
  void compute(double y0, std::span<const double> x, std::span<double> out) const override;
  nlohmann::json to_json() const override;

 private:
  std::size_t d_;
};

// sqrt(2/p) cos(omega_j'[y0; x] + b_j), omega ~ N(0, lengthscale^-2 I), b ~ U[0, 2pi).
// |phi| <= sqrt(2) for every input.
class RandomFourierFeatures final : public FeatureMap {
 public:
  RandomFourierFeatures(std::size_t d, std::size_t num_features, double lengthscale,
                        std::uint64_t seed);
  std::size_t input_dim() const override { return d_; }
  std::size_t output_dim() const override { return p_; }
  std::string kind() const override { return "random_fourier"; }
  void compute(double y0, std::span<const double> x, std::span<double> out) const override;
  nlohmann::json to_json() const override;

  double lengthscale() const { return lengthscale_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::size_t d_;
  std::size_t p_;
  double lengthscale_;
  std::uint64_t seed_;
  std::vector<double> omega_;  // p x (d + 1), row-major
  std::vector<double> phase_;
};

class CustomFeatures final : public FeatureMap {
 public:
  using Fn = std::function<void(double, std::span<const double>, std::span<double>)>;
  CustomFeatures(std::size_t d, std::size_t p, Fn fn) : d_(d), p_(p), fn_(std::move(fn)) {}
  std::size_t input_dim() const override { return d_; }
  std::size_t output_dim() const override { return p_; }
  std::string kind() const override { return "custom"; }
  void compute(double y0, std::span<const double> x, std::span<double> out) const override {
    fn_(y0, x, out);
  }
  nlohmann::json to_json() const override;

 private:
  std::size_t d_;
  std::size_t p_;
  Fn fn_;
};

std::vector<double> affine_features(double y0, std::span<const double> x);
std::vector<double> rff_features(double y0, std::span<const double> x,
                                 const RandomFourierFeatures& spec);

// Parameterised CQC function cqc_theta(y0 | x) with exact parameter gradient.
class CqcModel {
 public:
  virtual ~CqcModel() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t num_params() const = 0;
  virtual std::span<const double> params() const = 0;
  virtual void set_params(std::span<const double> theta) = 0;

  virtual double value(double y0, std::span<const double> x) const = 0;
  // Writes d cqc / d theta into grad (length num_params) and returns the value.
  virtual double value_and_grad(double y0, std::span<const double> x,
                                std::span<double> grad) const = 0;

  virtual bool linear_in_params() const { return false; }
  virtual std::unique_ptr<CqcModel> clone() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

class LinearCqc final : public CqcModel {
 public:
  explicit LinearCqc(std::shared_ptr<const FeatureMap> features);
  LinearCqc(std::shared_ptr<const FeatureMap> features, std::vector<double> theta);

  std::size_t input_dim() const override { return features_->input_dim(); }
  std::size_t num_params() const override { return theta_.size(); }
  std::span<const double> params() const override { return theta_; }
  void set_params(std::span<const double> theta) override;
  double value(double y0, std::span<const double> x) const override;
  double value_and_grad(double y0, std::span<const double> x,
                        std::span<double> grad) const override;
  bool linear_in_params() const override { return true; }
  std::unique_ptr<CqcModel> clone() const override { return std::make_unique<LinearCqc>(*this); }
  nlohmann::json to_json() const override;

  const FeatureMap& features() const { return *features_; }
  std::shared_ptr<const FeatureMap> feature_map() const { return features_; }

 private:
  std::shared_ptr<const FeatureMap> features_;
  std::vector<double> theta_;
};

enum class Activation { relu, tanh };

// Fully connected network on [y0, x] with scalar linear output. Parameters are
// stored layer by layer as W (out x in, row-major) followed by b.
class MlpCqc final : public CqcModel {
 public:
  // hidden: widths of the hidden layers. Weights drawn Glorot-uniform from
  // seed, biases zero.
  MlpCqc(std::size_t d, std::vector<std::size_t> hidden, Activation activation,
         std::uint64_t seed);
  MlpCqc(std::size_t d, std::vector<std::size_t> hidden, Activation activation,
         std::vector<double> params);

  std::size_t input_dim() const override { return widths_.front() - 1; }
  std::size_t num_params() const override { return params_.size(); }
  std::span<const double> params() const override { return params_; }
  void set_params(std::span<const double> theta) override;
  double value(double y0, std::span<const double> x) const override;
  double value_and_grad(double y0, std::span<const double> x,
                        std::span<double> grad) const override;
  std::unique_ptr<CqcModel> clone() const override { return std::make_unique<MlpCqc>(*this); }
  nlohmann::json to_json() const override;

  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }

 private:
  static std::size_t count_params(const std::vector<std::size_t>& widths);
  double forward(double y0, std::span<const double> x,
                 std::vector<std::vector<double>>* pre_activations,
                 std::vector<std::vector<double>>* activations) const;

  std::vector<std::size_t> widths_;  // d + 1, hidden..., 1
  Activation activation_;
  std::vector<double> params_;
};

struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

ValueGrad eval_and_grad(const CqcModel& model, double y0, std::span<const double> x);

// Euclidean projection onto {|theta| <= radius}.
std::vector<double> project_ball(std::span<const double> theta, double radius);
void project_ball_inplace(std::span<double> theta, double radius);

std::unique_ptr<CqcModel> model_from_json(const nlohmann::json& j);
std::shared_ptr<const FeatureMap> features_from_json(const nlohmann::json& j);

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

}  // namespace cqc
