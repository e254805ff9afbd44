#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "scnet/experiments.hpp"
#include "scnet/training.hpp"

using namespace scnet;

namespace {

std::vector<TrainingSample> noisy_pairs(const ProblemConfig& pc, const SpectralOperator& op,
                                        std::size_t count, double noise, std::uint64_t seed) {
  Engine rng = SeedSequence(seed).stream("pairs");
  std::vector<TrainingSample> out;
  for (std::size_t k = 0; k < count; ++k) {
    auto f = sample_source(pc, rng);
    auto y = forward(op, f);
    for (auto& v : y.coeffs) v += noise * standard_normal(rng);
    out.push_back({y, f});
  }
  return out;
}

FilterNet small_net(const SpectralOperator& op, const std::vector<TrainingSample>& data,
                    std::uint64_t seed) {
  std::vector<SpectralCoeffs> ys;
  for (const auto& d : data) ys.push_back(d.y_noisy);
  NetArchitecture arch;
  arch.hidden = {6, 5};
  Engine rng = SeedSequence(seed).stream("net");
  return FilterNet::glorot(arch, FeatureNormalizer::fit(op, ys), rng);
}

}  // namespace

TEST(Loss, HandComputedExamples) {
  const auto op = build_operator({1.5, 1.5, 2});
  const SpectralCoeffs zero(2);
  SpectralCoeffs e1 = SpectralCoeffs::unit(2, 1);
  // (1 + 0.1 pi^2) for the first mode.
  EXPECT_NEAR(sobolev_loss(e1, zero, op, 0.1), 1.0 + 0.1 * M_PI * M_PI, 1e-14);
  SpectralCoeffs e2 = SpectralCoeffs::unit(2, 2);
  EXPECT_NEAR(sobolev_loss(e2, zero, op, 0.1), 1.0 + 0.1 * 4.0 * M_PI * M_PI, 1e-13);
  EXPECT_EQ(sobolev_loss(e2, e2, op, 0.1), 0.0);
  EXPECT_NEAR(sobolev_loss(e2, zero, op, 0.0), 1.0, 0.0);
}

TEST(Loss, PositiveUnlessExact) {
  const ProblemConfig pc{1.5, 1.5, 16};
  const auto op = build_operator(pc);
  Engine rng = SeedSequence(1).stream("loss");
  for (int k = 0; k < 100; ++k) {
    const auto a = sample_source(pc, rng), b = sample_source(pc, rng);
    EXPECT_GT(sobolev_loss(a, b, op, 0.1), 0.0);
    EXPECT_EQ(sobolev_loss(a, a, op, 0.1), 0.0);
  }
}

TEST(Loss, TailOfTruncatedModes) {
  SpectralCoeffs f(4);
  f.coeffs = {1.0, 2.0, 3.0, 4.0};
  // lambda_3 * 9 + lambda_4 * 16 = pi^2 (81 + 256)
  EXPECT_NEAR(sobolev_tail(f, 2), 337.0 * M_PI * M_PI, 1e-11);
  EXPECT_DOUBLE_EQ(sobolev_tail(f, 4), 0.0);
}

TEST(Gradient, ZeroForPerfectlyFitBatchOfZeros) {
  const auto op = build_operator({1.5, 1.5, 4});
  std::vector<TrainingSample> batch(3, {SpectralCoeffs(4), SpectralCoeffs(4)});
  NetArchitecture arch;
  arch.hidden = {4};
  Engine rng = SeedSequence(2).stream("net");
  const auto net = FilterNet::glorot(arch, FeatureNormalizer::for_spectrum(op), rng);
  const auto lg = loss_gradient(net, batch, op, 0.1);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = standard_gradient_check();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(r.max_rel_error, 1e-5);
  EXPECT_LT(seconds, 1.0);
  EXPECT_EQ(r.analytic.size(), r.numeric.size());
}

TEST(Gradient, LargerNetworkAgreesToo) {
  const ProblemConfig pc{1.5, 1.5, 8};
  const auto op = build_operator(pc);
  const auto data = noisy_pairs(pc, op, 4, 0.01, 3);
  const auto r = gradient_check(small_net(op, data, 4), data, op, 0.1);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Gradient, InvariantUnderBatchReordering) {
  const ProblemConfig pc{1.5, 1.5, 8};
  const auto op = build_operator(pc);
  auto data = noisy_pairs(pc, op, 7, 0.01, 5);
  const auto net = small_net(op, data, 6);
  const auto a = loss_gradient(net, data, op, 0.1);
  std::reverse(data.begin(), data.end());
  const auto b = loss_gradient(net, data, op, 0.1);
  EXPECT_NEAR(a.loss, b.loss, 1e-12 * a.loss);
  EXPECT_LT((a.grad - b.grad).cwiseAbs().maxCoeff(), 1e-12 * a.grad.cwiseAbs().maxCoeff());
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  Vector p = Vector::LinSpaced(5, -1.0, 1.0);
  const Vector before = p;
  AdamState st;
  for (int k = 0; k < 10; ++k) adam_step(p, Vector::Zero(5), st, {});
  EXPECT_EQ(p, before);
}

TEST(Adam, ConstantGradientMovesAtLearningRate) {
  // With a constant gradient the bias-corrected ratio is exactly g/|g|.
  Vector p = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  AdamState st;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.eps = 0.0;
  for (int k = 0; k < 100; ++k) adam_step(p, g, st, cfg);
  EXPECT_NEAR(p[0], -1.0, 1e-12);
  EXPECT_NEAR(p[1], 1.0, 1e-12);
  EXPECT_NEAR(p[2], -1.0, 1e-12);
}

TEST(Adam, RejectsSizeMismatch) {
  Vector p = Vector::Zero(3);
  AdamState st;
  EXPECT_THROW(adam_step(p, Vector::Zero(2), st, {}), ConfigError);
}

TEST(Train, BitwiseDeterministic) {
  const ProblemConfig pc{1.5, 1.5, 8};
  const auto op = build_operator(pc);
  const auto data = noisy_pairs(pc, op, 40, 0.01, 7);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.arch.hidden = {8, 8};
  const auto a = train(data, cfg, op), b = train(data, cfg, op);
  EXPECT_EQ(a.net.parameters(), b.net.parameters());
  ASSERT_EQ(a.history.size(), 6u);
  for (std::size_t k = 0; k < a.history.size(); ++k)
    EXPECT_EQ(a.history[k].train_loss, b.history[k].train_loss);
}

TEST(Train, NoiseFreeDataIsLearned) {
  const ProblemConfig pc{1.5, 1.5, 16};
  const auto op = build_operator(pc);
  const auto data = noisy_pairs(pc, op, 200, 0.0, 8);
  const auto test = noisy_pairs(pc, op, 50, 0.0, 9);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.arch.hidden = {16, 16};
  const auto r = train(data, cfg, op);
  EXPECT_LT(mean_relative_error(r.net, test, op), 0.05);
  EXPECT_LE(r.final_loss(), r.initial_loss());
}

TEST(Train, LossDecreasesOnNoisyData) {
  const ProblemConfig pc{1.5, 1.5, 16};
  const auto op = build_operator(pc);
  const auto data = noisy_pairs(pc, op, 200, 0.01, 10);
  const auto test = noisy_pairs(pc, op, 50, 0.01, 11);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.arch.hidden = {8, 8};
  const auto r = train(data, cfg, op, test);
  EXPECT_LE(r.final_loss(), r.initial_loss());
  for (const auto& h : r.history) EXPECT_TRUE(std::isfinite(h.test_rel_error));
}

TEST(Train, NonFiniteDataIsReported) {
  const ProblemConfig pc{1.5, 1.5, 4};
  const auto op = build_operator(pc);
  auto data = noisy_pairs(pc, op, 4, 0.01, 12);
  data[1].f_true[0] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.epochs = 2;
  EXPECT_THROW(train(data, cfg, op), NumericalError);
}

TEST(Train, InvalidConfigRejected) {
  const ProblemConfig pc{1.5, 1.5, 8};
  const auto op = build_operator(pc);
  const auto data = noisy_pairs(pc, op, 16, 0.01, 13);
  TrainConfig cfg;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(train(data, cfg, op), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(train(data, cfg, op), ConfigError);
  EXPECT_THROW(train(std::vector<TrainingSample>{}, TrainConfig{}, op), ConfigError);
}

TEST(Train, ShuffleSeedChangesLittle) {
  const ProblemConfig pc{1.5, 1.5, 16};
  const auto op = build_operator(pc);
  const auto data = noisy_pairs(pc, op, 300, 0.01, 14);
  const auto test = noisy_pairs(pc, op, 100, 0.01, 15);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.arch.hidden = {16, 16};
  const double e1 = mean_relative_error(train(data, cfg, op).net, test, op);
  // Same data presented in reverse order: the shuffle permutes indices, so
  // this changes the batch composition in every epoch.
  std::vector<TrainingSample> reversed(data.rbegin(), data.rend());
  const double e2 = mean_relative_error(train(reversed, cfg, op).net, test, op);
  EXPECT_NEAR(e1, e2, 0.1 * e1);
}

TEST(TargetFit, ConstantHalfNeedsNoTraining) {
  NetArchitecture arch;
  arch.hidden = {4};
  const auto net = FilterNet::zeros(arch);
  EXPECT_EQ(target_sup_error(net, [](double) { return 0.5; }, 1e-3, 1.0), 0.0);
}

TEST(TargetFit, TikhonovReachedAndWidthHelps) {
  const auto op = build_operator({1.5, 1.5, 64});
  const double alpha = std::pow(op.sigma(32), 2);
  const auto spec = FilterSpec::tikhonov(alpha);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t width : {8, 32, 128}) {
    TargetFitConfig cfg;
    cfg.width = width;
    cfg.max_iterations = 4000;
    const auto r = fit_to_target_filter(spec, op.sigma(64), 1.0, 0.0, cfg);
    EXPECT_LE(r.sup_error, previous * 1.05) << "width " << width;
    previous = r.sup_error;
  }
  EXPECT_LT(previous, 0.05);
}
