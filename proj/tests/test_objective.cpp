#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grad_check.hpp"
#include "test_util.hpp"
#include "tpg/errors.hpp"
#include "tpg/objective.hpp"

using namespace tpg;
using tpg::testing::tiny_model;

namespace {

ClipBatch batch_of(int n, int64_t length, uint64_t seed = 100, int64_t frame_size = 16) {
  SynthOptions options;
  options.frame_size = frame_size;
  std::vector<VideoClip> clips;
  for (int i = 0; i < n; ++i) clips.push_back(generate_synthetic_clip(i % 4, seed + i, length, options));
  return make_batch(clips, 0, length, 4);
}

TrainingConfig small_training(int64_t T = 6, int64_t t_p = 3) {
  TrainingConfig c;
  c.T = T;
  c.t_p = t_p;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  return c;
}

double kl_monte_carlo(const std::vector<double>& mq, const std::vector<double>& lvq,
                      const std::vector<double>& mp, const std::vector<double>& lvp, int samples,
                      uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    double log_ratio = 0.0;
    for (size_t d = 0; d < mq.size(); ++d) {
      const double sq = std::exp(0.5 * lvq[d]);
      const double sp = std::exp(0.5 * lvp[d]);
      const double x = mq[d] + sq * n01(rng);
      const double zq = (x - mq[d]) / sq;
      const double zp = (x - mp[d]) / sp;
      log_ratio += -std::log(sq) - 0.5 * zq * zq + std::log(sp) + 0.5 * zp * zp;
    }
    total += log_ratio;
  }
  return total / samples;
}

}  // namespace

TEST(KlDiagGaussian, ClosedFormCases) {
  const LatentGaussian q{torch::randn({3, 5}, torch::kFloat64), torch::randn({3, 5}, torch::kFloat64)};
  EXPECT_LT(kl_diag_gaussian(q, q).abs().max().item<double>(), 1e-15);

  const LatentGaussian shifted{torch::ones({1, 1}, torch::kFloat64), torch::zeros({1, 1}, torch::kFloat64)};
  const LatentGaussian standard{torch::zeros({1, 1}, torch::kFloat64), torch::zeros({1, 1}, torch::kFloat64)};
  EXPECT_NEAR(kl_diag_gaussian(shifted, standard).item<double>(), 0.5, 1e-15);

  // Sums over dimensions: 4 independent copies give 4x.
  const LatentGaussian four{torch::ones({1, 4}, torch::kFloat64), torch::zeros({1, 4}, torch::kFloat64)};
  const LatentGaussian std4{torch::zeros({1, 4}, torch::kFloat64), torch::zeros({1, 4}, torch::kFloat64)};
  EXPECT_NEAR(kl_diag_gaussian(four, std4).item<double>(), 2.0, 1e-15);

  EXPECT_THROW(kl_diag_gaussian(q, LatentGaussian{torch::zeros({3, 4}), torch::zeros({3, 4})}), ShapeError);
}

TEST(KlDiagGaussian, MatchesMonteCarloOracle) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n01;
  for (int pair = 0; pair < 10; ++pair) {
    std::vector<double> mq(4), lvq(4), mp(4), lvp(4);
    for (int d = 0; d < 4; ++d) {
      mq[d] = n01(rng);
      mp[d] = n01(rng);
      lvq[d] = 0.5 * n01(rng);
      lvp[d] = 0.5 * n01(rng);
    }
    const auto t = [](const std::vector<double>& v) {
      return torch::tensor(v, torch::kFloat64).unsqueeze(0);
    };
    const double closed = kl_diag_gaussian({t(mq), t(lvq)}, {t(mp), t(lvp)}).item<double>();
    const double mc = kl_monte_carlo(mq, lvq, mp, lvp, 200000, 100 + pair);
    EXPECT_NEAR(mc, closed, 2e-2 * std::max(1.0, closed)) << "pair " << pair;
  }
}

TEST(KlDiagGaussian, NonNegative) {
  for (int i = 0; i < 20; ++i) {
    const LatentGaussian q{torch::randn({8, 6}) * 3, torch::randn({8, 6}) * 2};
    const LatentGaussian p{torch::randn({8, 6}) * 3, torch::randn({8, 6}) * 2};
    EXPECT_GE(kl_diag_gaussian(q, p).min().item<double>(), -1e-6);
  }
}

TEST(Reparameterize, ZeroAndUnitNoise) {
  const LatentGaussian g{torch::randn({2, 3}, torch::kFloat64), torch::randn({2, 3}, torch::kFloat64)};
  EXPECT_TRUE(torch::equal(reparameterize(g, torch::zeros({2, 3}, torch::kFloat64)), g.mean));
  const LatentGaussian unit{g.mean, torch::zeros({2, 3}, torch::kFloat64)};
  EXPECT_TRUE(torch::allclose(reparameterize(unit, torch::ones({2, 3}, torch::kFloat64)), g.mean + 1.0,
                              0.0, 1e-15));
  EXPECT_THROW(reparameterize(g, torch::zeros({3, 2})), ShapeError);
}

TEST(Reparameterize, GradientMatchesFiniteDifferences) {
  const auto r = tpg::testing::check_reparameterize_gradient(3, 4, 5, 1e-6);
  EXPECT_EQ(r.checked, 24);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(SequenceLoss, GradientMatchesFiniteDifferences) {
  auto config = tiny_model(8);
  config.encoder_widths = {4, 8};
  config.latent_dim = 2;
  auto model = make_model(config, VariantSpec::named(VariantName::TPG_VAE), 3);
  model->to(torch::kFloat64);
  tpg::testing::jitter_parameters(model, 6, 0.05);
  auto batch = batch_of(2, 4, 30, 8).to(torch::TensorOptions().dtype(torch::kFloat64));
  auto training = small_training(4, 2);
  training.beta = 0.5;
  const auto r = tpg::testing::check_sequence_loss_gradient(model, batch, training, 9, 1e-5, 150, 4);
  EXPECT_GT(r.checked, 100);
  EXPECT_LT(r.max_rel_error, 1e-4) << "max abs error " << r.max_abs_error;
}

TEST(RolloutLoss, BetaZeroAndPerfectPrediction) {
  auto model = make_model(tiny_model(), VariantSpec::named(VariantName::TPG_VAE), 1);
  const auto batch = batch_of(2, 6);
  GaussianNoise noise(3);
  const auto r = teacher_forced_pass(model, batch, 3, noise);
  const auto zero_beta = rollout_loss(batch.frames, r, 0.0);
  EXPECT_EQ(zero_beta.total.item<double>(), zero_beta.recon_l1.item<double>());
  EXPECT_GT(zero_beta.kl_content.item<double>(), 0.0);

  RolloutResult perfect;
  perfect.mode = RolloutMode::teacher_forced;
  perfect.reconstructions = batch.frames.narrow(1, 1, 2);
  perfect.predicted = batch.frames.narrow(1, 3, 3);
  for (int i = 0; i < 5; ++i) {
    StepLatents s;
    const LatentGaussian g{torch::randn({2, 4}), torch::randn({2, 4})};
    s.posterior_content = g;
    s.prior_content = g;
    perfect.latents.push_back(s);
  }
  const auto terms = rollout_loss(batch.frames, perfect, 1.0);
  EXPECT_EQ(terms.recon_l1.item<double>(), 0.0);
  EXPECT_LT(std::abs(terms.total.item<double>()), 1e-6);
  EXPECT_EQ(terms.kl_motion.item<double>(), 0.0);

  perfect.predicted = perfect.predicted.narrow(1, 0, 2);
  EXPECT_THROW(rollout_loss(batch.frames, perfect, 1.0), ShapeError);
}

TEST(RolloutLoss, MatchesLoopOracle) {
  const int64_t B = 2, T = 5, C = 3, H = 4, W = 4, D = 3;
  torch::manual_seed(21);
  const auto targets = torch::rand({B, T, C, H, W}, torch::kFloat64);
  RolloutResult r;
  r.reconstructions = torch::rand({B, 1, C, H, W}, torch::kFloat64);
  r.predicted = torch::rand({B, T - 2, C, H, W}, torch::kFloat64);
  for (int t = 0; t < T - 1; ++t) {
    StepLatents s;
    s.posterior_content = {torch::randn({B, D}, torch::kFloat64), torch::randn({B, D}, torch::kFloat64)};
    s.prior_content = {torch::randn({B, D}, torch::kFloat64), torch::randn({B, D}, torch::kFloat64)};
    s.posterior_motion = {torch::randn({B, D}, torch::kFloat64), torch::randn({B, D}, torch::kFloat64)};
    s.prior_motion = {torch::randn({B, D}, torch::kFloat64), torch::randn({B, D}, torch::kFloat64)};
    r.latents.push_back(s);
  }
  const double beta = 0.3;
  const auto terms = rollout_loss(targets, r, beta);

  const auto gen = torch::cat({r.reconstructions, r.predicted}, 1);
  auto g = gen.accessor<double, 5>();
  auto x = targets.accessor<double, 5>();
  double recon = 0.0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 1; t < T; ++t) {
      double frame = 0.0;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) frame += std::abs(g[b][t - 1][c][h][w] - x[b][t][c][h][w]);
      recon += frame / (C * H * W);
    }
  recon /= B;
  auto kl_sum = [&](auto pick) {
    double total = 0.0;
    for (const auto& s : r.latents) {
      const auto& [q, p] = pick(s);
      auto mq = q.mean.template accessor<double, 2>();
      auto lq = q.log_var.template accessor<double, 2>();
      auto mp = p.mean.template accessor<double, 2>();
      auto lp = p.log_var.template accessor<double, 2>();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t d = 0; d < D; ++d) {
          const double diff = mq[b][d] - mp[b][d];
          total += 0.5 * (lp[b][d] - lq[b][d] + (std::exp(lq[b][d]) + diff * diff) / std::exp(lp[b][d]) - 1.0);
        }
    }
    return total / B;
  };
  const double klc = kl_sum([](const StepLatents& s) { return std::pair{s.posterior_content, s.prior_content}; });
  const double klm = kl_sum([](const StepLatents& s) { return std::pair{s.posterior_motion, s.prior_motion}; });
  EXPECT_NEAR(terms.recon_l1.item<double>(), recon, 1e-12);
  EXPECT_NEAR(terms.kl_content.item<double>(), klc, 1e-9);
  EXPECT_NEAR(terms.kl_motion.item<double>(), klm, 1e-9);
  EXPECT_NEAR(terms.total.item<double>(), recon + beta * (klc + klm), 1e-9);
  const auto b = terms.breakdown();
  EXPECT_EQ(b.beta, beta);
  EXPECT_NEAR(b.total, recon + beta * (klc + klm), 1e-9);
}

TEST(SequenceLoss, ShortClipAndPermutation) {
  auto model = make_model(tiny_model(), VariantSpec::named(VariantName::TPG_VAE), 1);
  const auto training = small_training(6, 3);
  ZeroNoise zero;
  EXPECT_THROW(sequence_loss(batch_of(2, 5), model, training, zero), ArgumentError);

  const auto batch = batch_of(4, 7);
  const auto a = sequence_loss(batch, model, training, zero).total.item<double>();
  const auto b = sequence_loss(batch.index({2, 0, 3, 1}), model, training, zero).total.item<double>();
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(TrainStep, ZeroLearningRateLeavesWeights) {
  auto model = make_model(tiny_model(), VariantSpec::named(VariantName::TPG_VAE), 1);
  auto training = small_training();
  training.learning_rate = 0.0;
  auto optimizer = make_optimizer(model, training);
  std::vector<torch::Tensor> before;
  for (const auto& p : model->parameters()) before.push_back(p.detach().clone());
  GaussianNoise noise(1);
  train_step(model, batch_of(2, 6), training, *optimizer, noise);
  const auto after = model->parameters();
  for (size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(torch::equal(before[i], after[i]));
}

TEST(TrainStep, OverfitsOneBatchAndIsReproducible) {
  auto run = [](int steps) {
    auto model = make_model(tiny_model(), VariantSpec::named(VariantName::TPG_VAE), 4);
    auto training = small_training();
    training.learning_rate = 3e-3;
    auto optimizer = make_optimizer(model, training);
    const auto batch = batch_of(2, 6, 55);
    GaussianNoise noise(17);
    std::vector<double> recon;
    for (int i = 0; i < steps; ++i) recon.push_back(train_step(model, batch, training, *optimizer, noise).recon_l1);
    return recon;
  };
  const auto first = run(500);
  ASSERT_EQ(first.size(), 500u);
  for (double v : first) ASSERT_TRUE(std::isfinite(v));
  double tail = 0.0;
  for (size_t i = 490; i < 500; ++i) tail += first[i] / 10.0;
  EXPECT_LT(tail, 0.5 * first.front());

  const auto a = run(20);
  const auto b = run(20);
  EXPECT_EQ(a, b);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], first[i]);
}

TEST(TrainingConfig, Validation) {
  TrainingConfig c;
  EXPECT_NO_THROW(c.validate());
  c.t_p = c.T;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = TrainingConfig{};
  c.beta = -1;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = TrainingConfig{};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = TrainingConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}
