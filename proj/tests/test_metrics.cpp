#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "tpg/errors.hpp"
#include "tpg/metrics.hpp"

using namespace tpg;

namespace {

torch::Tensor random_frame(std::mt19937_64& rng, int64_t c, int64_t h, int64_t w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto t = torch::empty({c, h, w}, torch::kFloat64);
  auto a = t.accessor<double, 3>();
  for (int64_t i = 0; i < c; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) a[i][y][x] = u(rng);
  return t;
}

double naive_psnr(const torch::Tensor& a, const torch::Tensor& b) {
  auto pa = a.accessor<double, 3>();
  auto pb = b.accessor<double, 3>();
  double se = 0.0;
  int64_t n = 0;
  for (int64_t c = 0; c < a.size(0); ++c)
    for (int64_t y = 0; y < a.size(1); ++y)
      for (int64_t x = 0; x < a.size(2); ++x) {
        se += (pa[c][y][x] - pb[c][y][x]) * (pa[c][y][x] - pb[c][y][x]);
        ++n;
      }
  return 10.0 * std::log10(1.0 / (se / n));
}

// Direct 2-D windowed statistics with explicit centred moments.
double naive_ssim(const torch::Tensor& a, const torch::Tensor& b) {
  const int64_t h = a.size(1), w = a.size(2);
  std::vector<double> ga(h * w), gb(h * w);
  auto pa = a.accessor<double, 3>();
  auto pb = b.accessor<double, 3>();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      if (a.size(0) == 3) {
        ga[y * w + x] = 0.299 * pa[0][y][x] + 0.587 * pa[1][y][x] + 0.114 * pa[2][y][x];
        gb[y * w + x] = 0.299 * pb[0][y][x] + 0.587 * pb[1][y][x] + 0.114 * pb[2][y][x];
      } else {
        ga[y * w + x] = pa[0][y][x];
        gb[y * w + x] = pb[0][y][x];
      }
    }
  double win[11][11];
  double total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += win[i][j];
    }
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t y = 0; y + 11 <= h; ++y)
    for (int64_t x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += win[i][j] / total * ga[(y + i) * w + x + j];
          mb += win[i][j] / total * gb[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = ga[(y + i) * w + x + j] - ma;
          const double db = gb[(y + i) * w + x + j] - mb;
          va += win[i][j] / total * da * da;
          vb += win[i][j] / total * db * db;
          cov += win[i][j] / total * da * db;
        }
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

std::pair<torch::Tensor, torch::Tensor> wave_pair(int64_t h, int64_t w) {
  auto a = torch::empty({1, h, w}, torch::kFloat64);
  auto b = torch::empty({1, h, w}, torch::kFloat64);
  auto pa = a.accessor<double, 3>();
  auto pb = b.accessor<double, 3>();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      pa[0][y][x] = 0.5 + 0.45 * std::sin(0.31 * x + 0.17 * y);
      pb[0][y][x] = std::clamp(pa[0][y][x] + 0.2 * std::cos(0.23 * x - 0.41 * y), 0.0, 1.0);
    }
  return {a, b};
}

class StubEmbedder : public FrameEmbedder {
 public:
  // Frames with mean brightness < 0.5 map to e0, others to e1.
  torch::Tensor embed(const torch::Tensor& frames) override {
    auto out = torch::zeros({frames.size(0), 2}, torch::kFloat64);
    for (int64_t i = 0; i < frames.size(0); ++i) {
      out[i][frames[i].mean().item<double>() < 0.5 ? 0 : 1] = 1.0;
    }
    return out;
  }
};

RolloutResult sample_with(const torch::Tensor& frames) {
  RolloutResult r;
  r.predicted = frames.unsqueeze(0);
  r.mode = RolloutMode::sampled;
  return r;
}

}  // namespace

TEST(Psnr, IdenticalFramesHitTheCap) {
  std::mt19937_64 rng(1);
  const auto a = random_frame(rng, 3, 8, 8);
  EXPECT_EQ(psnr(a, a), kPsnrCapDb);
}

TEST(Psnr, MseOfOneHundredthIsTwentyDecibels) {
  EXPECT_EQ(psnr_from_mse(0.01), 20.0);
  const auto a = torch::zeros({1, 4, 4}, torch::kFloat64);
  const auto b = torch::full({1, 4, 4}, 0.1, torch::kFloat64);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
}

TEST(Psnr, MatchesNaiveLoopOnRandomPairs) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_frame(rng, 3, 12, 10);
    const auto b = random_frame(rng, 3, 12, 10);
    EXPECT_NEAR(psnr(a, b), naive_psnr(a, b), 1e-9);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
  }
}

TEST(Psnr, MatchesScikitImageOnWavePattern) {
  const auto [a, b] = wave_pair(32, 32);
  EXPECT_NEAR(psnr(a, b), 17.725968278107036, 1e-9);
}

TEST(Psnr, StrictlyDecreasesWithNoiseAmplitude) {
  std::mt19937_64 rng(3);
  const auto a = random_frame(rng, 3, 16, 16) * 0.5 + 0.25;
  const auto noise = random_frame(rng, 3, 16, 16) * 2.0 - 1.0;
  double previous = kPsnrCapDb + 1.0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double value = psnr(a, a + amp * noise);
    EXPECT_LT(value, previous);
    previous = value;
  }
}

TEST(Psnr, RejectsMismatchedShapes) {
  EXPECT_THROW(psnr(torch::zeros({3, 4, 4}), torch::zeros({3, 4, 5})), ShapeError);
  EXPECT_THROW(psnr(torch::zeros({4, 4}), torch::zeros({4, 4})), ShapeError);
}

TEST(Ssim, SelfSimilarityIsExactlyOne) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    const auto a = random_frame(rng, 3, 16, 20);
    EXPECT_EQ(ssim(a, a), 1.0);
  }
}

TEST(Ssim, ConstantBlackVersusWhite) {
  const auto a = torch::zeros({1, 16, 16}, torch::kFloat64);
  const auto b = torch::ones({1, 16, 16}, torch::kFloat64);
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(a, b), c1 / (1.0 + c1), 1e-12);
}

TEST(Ssim, MatchesWindowedOracleAndIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_frame(rng, i % 2 == 0 ? 3 : 1, 16, 18);
    const auto b = (a + 0.3 * random_frame(rng, a.size(0), 16, 18)).clamp(0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), naive_ssim(a, b), 1e-10);
    EXPECT_EQ(ssim(a, b), ssim(b, a));
  }
}

TEST(Ssim, MatchesScikitImageValues) {
  const auto [a, b] = wave_pair(32, 32);
  EXPECT_NEAR(ssim(a, b), 0.7861537643148409, 1e-9);
  const auto [c, d] = wave_pair(64, 48);
  EXPECT_NEAR(ssim(c, d), 0.7869956677546102, 1e-9);
}

TEST(Ssim, ThreeChannelFramesUseLuminance) {
  const int64_t n = 40;
  auto a = torch::empty({3, n, n}, torch::kFloat64);
  auto b = torch::empty({3, n, n}, torch::kFloat64);
  auto pa = a.accessor<double, 3>();
  auto pb = b.accessor<double, 3>();
  for (int64_t y = 0; y < n; ++y)
    for (int64_t x = 0; x < n; ++x) {
      pa[0][y][x] = 0.5 + 0.45 * std::sin(0.31 * x + 0.17 * y);
      pa[1][y][x] = 0.5 + 0.45 * std::cos(0.11 * x - 0.29 * y);
      pa[2][y][x] = 0.5 + 0.4 * std::sin(0.05 * x * y / 8.0);
      pb[0][y][x] = std::clamp(pa[0][y][x] + 0.15 * std::cos(0.2 * y), 0.0, 1.0);
      pb[2][y][x] = pa[2][y][x];
    }
  for (int64_t y = 0; y < n; ++y)
    for (int64_t x = 0; x < n; ++x) pb[1][y][x] = pa[1][n - 1 - y][x];
  EXPECT_NEAR(ssim(a, b), 0.19235919081340624, 1e-9);
}

TEST(Ssim, FrameSmallerThanWindowIsRejected) {
  EXPECT_THROW(ssim(torch::zeros({1, 8, 8}), torch::zeros({1, 8, 8})), ShapeError);
}

TEST(FeatureCosine, IdentityAndSymmetry) {
  RandomConvEmbedder embedder(3, 99);
  std::mt19937_64 rng(6);
  const auto a = random_frame(rng, 3, 32, 32).to(torch::kFloat32);
  const auto b = random_frame(rng, 3, 32, 32).to(torch::kFloat32);
  EXPECT_EQ(feature_cosine(a, a, embedder), 1.0);
  const double ab = feature_cosine(a, b, embedder);
  EXPECT_EQ(ab, feature_cosine(b, a, embedder));
  EXPECT_GE(ab, -1.0);
  EXPECT_LE(ab, 1.0);
}

TEST(FeatureCosine, FixedSeedEmbedderIsReproducible) {
  std::mt19937_64 rng(7);
  const auto a = random_frame(rng, 3, 32, 32).to(torch::kFloat32);
  const auto b = random_frame(rng, 3, 32, 32).to(torch::kFloat32);
  RandomConvEmbedder e1(3, 5), e2(3, 5);
  EXPECT_EQ(feature_cosine(a, b, e1), feature_cosine(a, b, e2));
  EXPECT_TRUE(torch::equal(e1.embed(a.unsqueeze(0)), e2.embed(a.unsqueeze(0))));
}

TEST(FeatureCosine, OrthogonalEmbeddingsGiveZero) {
  StubEmbedder stub;
  const auto dark = torch::zeros({1, 8, 8});
  const auto bright = torch::ones({1, 8, 8});
  EXPECT_EQ(feature_cosine(dark, bright, stub), 0.0);
  EXPECT_EQ(feature_cosine(bright, bright, stub), 1.0);
}

TEST(PerStepMetric, FeatCosineNeedsAnEmbedder) {
  const auto x = torch::zeros({2, 1, 16, 16});
  EXPECT_THROW(per_step_metric(x, x, Metric::feat_cosine), ArgumentError);
  EXPECT_EQ(per_step_metric(x, x, Metric::psnr).size(), 2u);
}

TEST(BestOfK, SingleSampleIsReturned) {
  std::mt19937_64 rng(8);
  const auto truth = torch::stack({random_frame(rng, 1, 16, 16), random_frame(rng, 1, 16, 16)});
  const std::vector<RolloutResult> samples{sample_with(truth * 0.5)};
  EXPECT_EQ(best_of_k_index(samples, truth, Metric::psnr), 0u);
  EXPECT_EQ(&best_of_k(samples, truth, Metric::ssim), &samples[0]);
}

TEST(BestOfK, ExactSampleWinsUnderEveryMetric) {
  std::mt19937_64 rng(9);
  const auto truth = torch::stack({random_frame(rng, 3, 16, 16), random_frame(rng, 3, 16, 16)});
  std::vector<RolloutResult> samples;
  samples.push_back(sample_with((truth + 0.1).clamp(0, 1)));
  samples.push_back(sample_with(truth.clone()));
  samples.push_back(sample_with(truth.flip({2})));
  StubEmbedder stub;
  EXPECT_EQ(best_of_k_index(samples, truth, Metric::psnr), 1u);
  EXPECT_EQ(best_of_k_index(samples, truth, Metric::ssim), 1u);
  EXPECT_EQ(best_of_k_index(samples, truth, Metric::feat_cosine, &stub), 1u);
}

TEST(BestOfK, ArgmaxMatchesHandEnumerationAndTiesPickLowestIndex) {
  const auto truth = torch::zeros({2, 1, 4, 4}, torch::kFloat64);
  // Per-step MSE is the squared constant offset: PSNR means by hand.
  const std::vector<double> offsets{0.3, 0.1, 0.2};
  std::vector<RolloutResult> samples;
  std::vector<double> by_hand;
  for (double o : offsets) {
    samples.push_back(sample_with(torch::full({2, 1, 4, 4}, o, torch::kFloat64)));
    by_hand.push_back(-10.0 * std::log10(o * o));
  }
  const auto expected = static_cast<size_t>(
      std::max_element(by_hand.begin(), by_hand.end()) - by_hand.begin());
  EXPECT_EQ(best_of_k_index(samples, truth, Metric::psnr), expected);

  std::vector<RolloutResult> tied{samples[1], samples[1], samples[0]};
  EXPECT_EQ(best_of_k_index(tied, truth, Metric::psnr), 0u);
  EXPECT_THROW(best_of_k_index({}, truth, Metric::psnr), ArgumentError);
}

TEST(BestOfK, SelectedScoreDominatesEverySample) {
  std::mt19937_64 rng(10);
  const auto truth = torch::stack({random_frame(rng, 1, 16, 16), random_frame(rng, 1, 16, 16)});
  std::vector<RolloutResult> samples;
  for (int i = 0; i < 6; ++i) {
    samples.push_back(sample_with((truth + 0.2 * random_frame(rng, 1, 16, 16).unsqueeze(0)).clamp(0, 1)));
  }
  for (const auto metric : {Metric::psnr, Metric::ssim}) {
    const auto& best = best_of_k(samples, truth, metric);
    const double top = horizon_mean(per_step_metric(best.predicted[0], truth, metric));
    for (const auto& s : samples) {
      EXPECT_GE(top, horizon_mean(per_step_metric(s.predicted[0], truth, metric)));
    }
  }
}

TEST(Aggregate, SingleClipHasZeroSpread) {
  const auto table = aggregate({{Metric::psnr, {20.0, 18.0, 17.0}, "c0", "TPG-VAE", 11}});
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[0].t, 11);
  EXPECT_EQ(table.rows[2].t, 13);
  EXPECT_EQ(table.rows[1].mean, 18.0);
  EXPECT_EQ(table.rows[1].std, 0.0);
}

TEST(Aggregate, TwoClipsUsePopulationStd) {
  const auto table = aggregate({{Metric::ssim, {10.0}, "a", "V", 1}, {Metric::ssim, {20.0}, "b", "V", 1}});
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].mean, 15.0);
  EXPECT_EQ(table.rows[0].std, 5.0);
}

TEST(Aggregate, HundredClipsMatchSpreadsheetOracleAndIgnoreOrder) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(25.0, 4.0);
  std::vector<MetricSeries> series;
  const int steps = 5;
  for (int c = 0; c < 100; ++c) {
    MetricSeries s{Metric::psnr, {}, "clip" + std::to_string(c), "TPG-VAE", 6};
    for (int t = 0; t < steps; ++t) s.per_step.push_back(n(rng));
    series.push_back(s);
  }
  const auto table = aggregate(series);
  for (int t = 0; t < steps; ++t) {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& s : series) {
      sum += s.per_step[t];
      sum_sq += s.per_step[t] * s.per_step[t];
    }
    const double mean = sum / 100.0;
    const double var = sum_sq / 100.0 - mean * mean;
    EXPECT_NEAR(table.rows[t].mean, mean, 1e-9);
    EXPECT_NEAR(table.rows[t].std, std::sqrt(var), 1e-9);
  }
  auto shuffled = series;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = aggregate(shuffled);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    EXPECT_NEAR(again.rows[i].mean, table.rows[i].mean, 1e-12);
    EXPECT_NEAR(again.rows[i].std, table.rows[i].std, 1e-12);
  }
}

TEST(Aggregate, RejectsMismatchedHorizonsAndClipSets) {
  EXPECT_THROW(aggregate({{Metric::psnr, {1.0, 2.0}, "a", "V", 1}, {Metric::psnr, {1.0}, "b", "V", 1}}),
               ArgumentError);
  EXPECT_THROW(aggregate({{Metric::psnr, {1.0}, "a", "V", 1}, {Metric::psnr, {1.0}, "b", "W", 1}}),
               ArgumentError);
}

TEST(AggregateTable, CsvRoundTripAndTimeSelection) {
  tpg::testing::TempDir dir;
  const auto table = aggregate({{Metric::psnr, {30.0, 25.0, 20.0, 15.0}, "a", "TPG-VAE", 11},
                                {Metric::psnr, {29.0, 24.0, 21.0, 16.0}, "a", "SVG-LP*", 11}});
  const auto selected = table.at_times({12, 14});
  ASSERT_EQ(selected.rows.size(), 4u);
  const auto path = dir.path() / "table.csv";
  selected.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "variant,metric,t,mean,std");
  const auto back = AggregateTable::read_csv(path);
  ASSERT_EQ(back.rows.size(), 4u);
  EXPECT_EQ(back.rows[1].variant, "TPG-VAE");
  EXPECT_EQ(back.rows[1].t, 14);
  EXPECT_EQ(back.rows[1].mean, 15.0);
  EXPECT_EQ(back.variants(), (std::vector<std::string>{"TPG-VAE", "SVG-LP*"}));
}

TEST(MetricNames, RoundTrip) {
  for (const auto m : all_metrics()) EXPECT_EQ(metric_from_string(to_string(m)), m);
  EXPECT_THROW(metric_from_string("lpips"), LookupError);
}
