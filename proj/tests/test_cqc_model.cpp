#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cqc/cqc_model.hpp"
#include "cqc/error.hpp"
#include "cqc/stats.hpp"

namespace {

using namespace cqc;

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  std::vector<double> v(n);
  for (auto& e : v) e = z(rng);
  return v;
}

// Relative error of an analytic gradient against central differences of value().
double gradient_relative_error(CqcModel& model, double y0, std::span<const double> x, double h) {
  std::vector<double> grad(model.num_params());
  model.value_and_grad(y0, x, grad);
  std::vector<double> theta(model.params().begin(), model.params().end());
  std::vector<double> fd(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    model.set_params(theta);
    const double up = model.value(y0, x);
    theta[k] = keep - h;
    model.set_params(theta);
    const double down = model.value(y0, x);
    theta[k] = keep;
    fd[k] = (up - down) / (2.0 * h);
  }
  model.set_params(theta);
  std::vector<double> diff(fd.size());
  for (std::size_t k = 0; k < fd.size(); ++k) diff[k] = grad[k] - fd[k];
  const double scale = std::max({norm(grad), norm(fd), 1e-12});
  return norm(diff) / scale;
}

// ---------------------------------------------------------------- features

TEST(AffineFeatures, ZeroOutcomeKillsScaleBlock) {
  const std::vector<double> x{1.5, -2.0, 0.25};
  EXPECT_EQ(affine_features(0.0, x), (std::vector<double>{0, 0, 0, 0, 1.5, -2.0, 0.25, 1}));
}

TEST(AffineFeatures, OneDimensionalArithmetic) {
  const std::vector<double> x{3.0};
  EXPECT_EQ(affine_features(2.0, x), (std::vector<double>{6, 2, 3, 1}));
}

TEST(AffineFeatures, RepresentsDoublingPlusSlope) {
  const double gamma = 1.7;
  const LinearCqc model(std::make_shared<AffineFeatures>(1), {0.0, 2.0, gamma, 0.0});
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto x = random_vector(rng, 1);
    const double y0 = random_vector(rng, 1, 3.0)[0];
    EXPECT_NEAR(model.value(y0, x), 2.0 * y0 + gamma * x[0], 1e-14);
  }
}

TEST(AffineFeatures, DimensionChecked) {
  const AffineFeatures f(2);
  const std::vector<double> x{1.0};
  EXPECT_THROW(f(0.0, x), DataError);
}

TEST(RandomFourier, NormBoundedBySqrtTwo) {
  const RandomFourierFeatures rff(3, 64, 0.8, 7);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10000; ++k) {
    const auto x = random_vector(rng, 3, 5.0);
    const double y0 = random_vector(rng, 1, 5.0)[0];
    EXPECT_LE(norm(rff_features(y0, x, rff)), std::sqrt(2.0) + 1e-12);
  }
}

TEST(RandomFourier, SameSeedSameVector) {
  const RandomFourierFeatures a(2, 16, 1.0, 5);
  const RandomFourierFeatures b(2, 16, 1.0, 5);
  const RandomFourierFeatures c(2, 16, 1.0, 6);
  const std::vector<double> x{0.3, -0.7};
  EXPECT_EQ(rff_features(1.2, x, a), rff_features(1.2, x, b));
  EXPECT_NE(rff_features(1.2, x, a), rff_features(1.2, x, c));
}

TEST(RandomFourier, ApproximatesRbfKernel) {
  const std::size_t p = 20000;
  const double ell = 1.3;
  const RandomFourierFeatures rff(2, p, ell, 11);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto u = random_vector(rng, 3);
    const auto v = random_vector(rng, 3);
    const auto fu = rff_features(u[0], std::span<const double>(u).subspan(1), rff);
    const auto fv = rff_features(v[0], std::span<const double>(v).subspan(1), rff);
    // Each coordinate pair contributes p * fu_j * fv_j with mean k(u, v).
    std::vector<double> terms(p);
    for (std::size_t j = 0; j < p; ++j) terms[j] = static_cast<double>(p) * fu[j] * fv[j];
    const double estimate = mean(terms);
    const double se = sample_sd(terms) / std::sqrt(static_cast<double>(p));
    double d2 = 0.0;
    for (int j = 0; j < 3; ++j) d2 += (u[j] - v[j]) * (u[j] - v[j]);
    const double exact = std::exp(-d2 / (2.0 * ell * ell));
    EXPECT_NEAR(estimate, exact, 3.0 * se) << "trial " << trial;
  }
}

TEST(RandomFourier, InvalidSpec) {
  EXPECT_THROW(RandomFourierFeatures(2, 0, 1.0, 1), ConfigError);
  EXPECT_THROW(RandomFourierFeatures(2, 4, 0.0, 1), ConfigError);
}

TEST(FeatureMap, RhoBoundIsEnforced) {
  auto f = std::make_shared<AffineFeatures>(1);
  f->rho_bound = 2.0;
  const std::vector<double> x{0.5};
  EXPECT_NO_THROW((*f)(0.5, x));
  EXPECT_THROW((*f)(10.0, x), NumericError);
}

// ---------------------------------------------------------------- linear model

TEST(LinearCqc, ZeroThetaGivesFeaturesAsGradient) {
  const LinearCqc model(std::make_shared<AffineFeatures>(2));
  const std::vector<double> x{0.5, -1.0};
  const auto vg = eval_and_grad(model, 3.0, x);
  EXPECT_EQ(vg.value, 0.0);
  EXPECT_EQ(vg.grad, affine_features(3.0, x));
}

TEST(LinearCqc, LinearInTheta) {
  auto features = std::make_shared<RandomFourierFeatures>(2, 12, 0.9, 3);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    const auto t1 = random_vector(rng, 12);
    const auto t2 = random_vector(rng, 12);
    const double alpha = random_vector(rng, 1)[0];
    const double beta = random_vector(rng, 1)[0];
    std::vector<double> mix(12);
    for (std::size_t j = 0; j < 12; ++j) mix[j] = alpha * t1[j] + beta * t2[j];
    const auto x = random_vector(rng, 2);
    const double y0 = random_vector(rng, 1)[0];
    const double lhs = LinearCqc(features, mix).value(y0, x);
    const double rhs =
        alpha * LinearCqc(features, t1).value(y0, x) + beta * LinearCqc(features, t2).value(y0, x);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs)));
  }
}

TEST(LinearCqc, ThetaLengthChecked) {
  EXPECT_THROW(LinearCqc(std::make_shared<AffineFeatures>(1), {1.0}), ConfigError);
}

// ---------------------------------------------------------------- MLP

TEST(Mlp, ZeroNetworkIsZero) {
  const MlpCqc shape(2, {5, 5}, Activation::relu, 1);
  const MlpCqc zero(2, {5, 5}, Activation::relu, std::vector<double>(shape.num_params(), 0.0));
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto x = random_vector(rng, 2, 10.0);
    EXPECT_EQ(zero.value(random_vector(rng, 1, 10.0)[0], x), 0.0);
  }
}

TEST(Mlp, ParameterCountAndDeterminism) {
  const MlpCqc a(10, {20, 20}, Activation::relu, 3);
  EXPECT_EQ(a.num_params(), (11u * 20 + 20) + (20u * 20 + 20) + (20u + 1));
  const MlpCqc b(10, {20, 20}, Activation::relu, 3);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST(Mlp, GlorotInitialisationRange) {
  const MlpCqc m(3, {7}, Activation::tanh, 9);
  const auto p = m.params();
  const double bound1 = std::sqrt(6.0 / (4 + 7));
  for (std::size_t k = 0; k < 28; ++k) EXPECT_LE(std::abs(p[k]), bound1);
  for (std::size_t k = 28; k < 35; ++k) EXPECT_EQ(p[k], 0.0);  // hidden biases
}

TEST(Mlp, TanhGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 100; ++k) {
    MlpCqc model(3, {8, 6}, Activation::tanh, 100 + k);
    const auto x = random_vector(rng, 3);
    const double y0 = random_vector(rng, 1)[0];
    EXPECT_LE(gradient_relative_error(model, y0, x, 1e-5), 1e-4) << "point " << k;
  }
}

TEST(Mlp, ReluGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    MlpCqc model(3, {8, 6}, Activation::relu, 200 + k);
    const auto x = random_vector(rng, 3);
    const double y0 = random_vector(rng, 1)[0];
    EXPECT_LE(gradient_relative_error(model, y0, x, 1e-5), 1e-2) << "point " << k;
  }
}

TEST(Mlp, InputDimensionChecked) {
  const MlpCqc m(2, {3}, Activation::relu, 1);
  const std::vector<double> x{1.0};
  EXPECT_THROW(m.value(0.0, x), DataError);
}

// ---------------------------------------------------------------- projection

TEST(ProjectBall, RadialScaling) {
  const auto p = project_ball(std::vector<double>{3.0, 4.0}, 1.0);
  EXPECT_DOUBLE_EQ(p[0], 0.6);
  EXPECT_DOUBLE_EQ(p[1], 0.8);
}

TEST(ProjectBall, InteriorAndOriginFixed) {
  const std::vector<double> inside{0.1, -0.2};
  EXPECT_EQ(project_ball(inside, 1.0), inside);
  const std::vector<double> origin{0.0, 0.0};
  EXPECT_EQ(project_ball(origin, 0.5), origin);
  EXPECT_THROW(project_ball(inside, 0.0), ConfigError);
}

TEST(ProjectBall, NormBoundAndIdempotence) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> radius(0.01, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const auto v = random_vector(rng, 5, 4.0);
    const double b = radius(rng);
    const auto p = project_ball(v, b);
    EXPECT_LE(norm(p), b + 1e-12);
    const auto again = project_ball(p, b);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(again[i], p[i], 1e-14 * b);
  }
}

// ---------------------------------------------------------------- JSON

TEST(ModelJson, RoundTripsEveryKind) {
  std::vector<std::unique_ptr<CqcModel>> models;
  models.push_back(std::make_unique<LinearCqc>(std::make_shared<AffineFeatures>(2),
                                               std::vector<double>{1, 2, 3, 4, 5, 6}));
  models.push_back(std::make_unique<LinearCqc>(std::make_shared<RandomFourierFeatures>(2, 5, 0.7, 3),
                                               std::vector<double>{1, -1, 0.5, 2, 0.25}));
  models.push_back(std::make_unique<MlpCqc>(2, std::vector<std::size_t>{4, 3}, Activation::tanh, 8));
  const std::vector<double> x{0.3, -0.4};
  for (const auto& m : models) {
    const auto back = model_from_json(m->to_json());
    EXPECT_EQ(back->value(1.1, x), m->value(1.1, x));
    EXPECT_EQ(back->num_params(), m->num_params());
  }
  EXPECT_THROW(model_from_json(nlohmann::json{{"kind", "forest"}}), ConfigError);
}

TEST(Activation, Names) {
  EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
  EXPECT_EQ(activation_name(Activation::relu), "relu");
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
}

}  // namespace
