// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "test_util.hpp"
#include "tpg/experiment.hpp"

using namespace tpg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path smoke_config;
  int64_t table_epochs = 2;
  std::optional<ExperimentConfig> smoke;  // set once the smoke run has trained
  std::optional<ExperimentConfig> table;  // set once every variant has a checkpoint
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

ExperimentConfig smoke_config(const Context& ctx) {
  auto config = load_config(ctx.smoke_config);
  config.base_dir = ctx.work;
  config.data.path = "data";
  config.output = "smoke";
  return config;
}

std::vector<VideoClip> load_clips(const ClipDataset& ds, const std::vector<const ManifestEntry*>& entries) {
  std::vector<VideoClip> clips;
  for (const auto* e : entries) clips.push_back(ds.load(*e));
  return clips;
}

// ---------------------------------------------------------------------------

Outcome kl_oracle(Context&) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(2024);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const int64_t dims = 16, samples = 1000000, chunk = 100000;
  double worst = 0.0;
  for (int pair = 0; pair < 50; ++pair) {
    const auto mq = torch::randn({1, dims}, gen, opts);
    const auto mp = torch::randn({1, dims}, gen, opts);
    const auto lq = torch::randn({1, dims}, gen, opts) * 0.5;
    const auto lp = torch::randn({1, dims}, gen, opts) * 0.5;
    const double closed = kl_diag_gaussian({mq, lq}, {mp, lp}).item<double>();

    // E_q[log q(x) - log p(x)] from draws of q; constants cancel.
    const auto sq = (0.5 * lq).exp();
    const auto sp = (0.5 * lp).exp();
    const auto offset = (sp.log() - sq.log()).sum().item<double>();
    double sum = 0.0;
    for (int64_t done = 0; done < samples; done += chunk) {
      const auto eps = torch::randn({chunk, dims}, gen, opts);
      const auto zp = (mq + sq * eps - mp) / sp;
      sum += (zp.square() - eps.square()).sum().item<double>();
    }
    const double mc = offset + 0.5 * sum / samples;
    worst = std::max(worst, std::abs(mc - closed) / std::abs(closed));
  }
  return {worst < 1e-2, fmt("max relative error %.3e over 50 pairs (tolerance 1e-2)", worst)};
}

Outcome gradient_check(Context&) {
  const auto rep = tpg::testing::check_reparameterize_gradient(4, 2, 3, 1e-5);

  auto config = tpg::testing::tiny_model(8);
  config.encoder_widths = {4, 8};
  config.latent_dim = 2;
  auto model = make_model(config, VariantSpec::named(VariantName::TPG_VAE), 5);
  model->to(torch::kFloat64);
  tpg::testing::jitter_parameters(model, 6, 0.05);
  SynthOptions render;
  render.frame_size = 8;
  std::vector<VideoClip> clips{generate_synthetic_clip(0, 1, 5, render), generate_synthetic_clip(2, 2, 5, render)};
  const auto batch = make_batch(clips, 0, 5, 4).to(torch::TensorOptions().dtype(torch::kFloat64));
  TrainingConfig training;
  training.T = 5;
  training.t_p = 2;
  training.beta = 0.5;
  const auto seq = tpg::testing::check_sequence_loss_gradient(model, batch, training, 9, 1e-5, 0, 0);
  const double worst = std::max(rep.max_rel_error, seq.max_rel_error);
  std::ostringstream detail;
  detail << "reparameterize " << fmt("%.3e", rep.max_rel_error) << " over " << rep.checked
         << " entries; sequence_loss " << fmt("%.3e", seq.max_rel_error) << " over " << seq.checked
         << " parameters (" << seq.below_floor << " with |grad| < 1e-6 scaled by 1e-6); tolerance 1e-4";
  return {worst < 1e-4 && seq.checked > 0, detail.str()};
}

double psnr_reference(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.accessor<double, 3>();
  auto y = b.accessor<double, 3>();
  double sum = 0.0;
  int64_t n = 0;
  for (int64_t c = 0; c < a.size(0); ++c)
    for (int64_t i = 0; i < a.size(1); ++i)
      for (int64_t j = 0; j < a.size(2); ++j, ++n) sum += (x[c][i][j] - y[c][i][j]) * (x[c][i][j] - y[c][i][j]);
  return 10.0 * std::log10(1.0 / (sum / n));
}

double ssim_reference(const torch::Tensor& a, const torch::Tensor& b) {
  const int64_t H = a.size(1), W = a.size(2), R = 5;
  auto x = a.accessor<double, 3>();
  auto y = b.accessor<double, 3>();
  std::vector<double> ga(H * W), gb(H * W);
  for (int64_t i = 0; i < H; ++i)
    for (int64_t j = 0; j < W; ++j) {
      ga[i * W + j] = 0.299 * x[0][i][j] + 0.587 * x[1][i][j] + 0.114 * x[2][i][j];
      gb[i * W + j] = 0.299 * y[0][i][j] + 0.587 * y[1][i][j] + 0.114 * y[2][i][j];
    }
  double w[2 * R + 1][2 * R + 1];
  double wsum = 0.0;
  for (int u = -R; u <= R; ++u)
    for (int v = -R; v <= R; ++v) wsum += w[u + R][v + R] = std::exp(-(u * u + v * v) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = R; i < H - R; ++i)
    for (int64_t j = R; j < W - R; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int u = -R; u <= R; ++u)
        for (int v = -R; v <= R; ++v) {
          const double k = w[u + R][v + R] / wsum;
          const double p = ga[(i + u) * W + j + v], q = gb[(i + u) * W + j + v];
          mx += k * p;
          my += k * q;
          sxx += k * p * p;
          syy += k * q * q;
          sxy += k * p * q;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  return total / count;
}

Outcome metric_oracles(Context&) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(77);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  double psnr_err = 0.0, ssim_err = 0.0;
  bool self_ok = true;
  for (int i = 0; i < 100; ++i) {
    const auto a = torch::rand({3, 32, 32}, gen, opts);
    const double sigma = 0.01 + 0.3 * (i / 99.0);
    const auto b = (a + sigma * torch::randn({3, 32, 32}, gen, opts)).clamp(0.0, 1.0);
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - psnr_reference(a, b)));
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - ssim_reference(a, b)));
    self_ok = self_ok && ssim(a, a) == 1.0;
  }
  const double twenty = psnr_from_mse(0.01);
  const bool pass = psnr_err < 1e-9 && ssim_err < 1e-4 && self_ok && twenty == 20.0;
  return {pass, fmt("psnr max error %.3e (tol 1e-9), ssim max error %.3e (tol 1e-4), ", psnr_err, ssim_err) +
                    "ssim(a,a)=1 " + (self_ok ? "yes" : "no") + fmt(", psnr(mse=0.01)=%.17g", twenty)};
}

const char* kDeterminismYaml = R"(output: run
data:
  path: data
  clips_per_class: 5
  clip_length: 12
model:
  frame_size: 16
  encoder_widths: [8, 16]
  content_convs_per_block: 1
  recurrent_width: 16
  content_feature_dim: 12
  motion_feature_dim: 12
  predictor_feature_dim: 12
  latent_dim: 4
training:
  T: 8
  t_p: 4
  epochs: 2
  batch_size: 4
  learning_rate: 0.001
eval:
  horizon: 8
  k: 2
  times: [5, 8, 10, 12]
  clip_count: 4
  variants: [TPG-VAE, SVG-LP*]
)";

std::vector<std::string> log_without_wall_time(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line.substr(0, line.rfind(',')));
  return lines;
}

Outcome determinism(Context& ctx) {
  std::vector<PipelineResult> runs;
  for (const char* name : {"det_a", "det_b"}) {
    auto config = parse_config(kDeterminismYaml, ctx.work / name);
    fs::remove_all(ctx.work / name);
    runs.push_back(cmd_pipeline(config));
  }
  bool logs_equal = true;
  size_t rows = 0;
  for (size_t i = 0; i < runs[0].trained.size(); ++i) {
    const auto a = log_without_wall_time(runs[0].trained[i].log_path);
    const auto b = log_without_wall_time(runs[1].trained[i].log_path);
    logs_equal = logs_equal && a == b && a.size() == 3;
    rows += a.size();
  }

  auto config = parse_config(kDeterminismYaml, ctx.work / "det_a");
  const auto ds = ClipDataset::open(config.data_dir());
  const auto clips = load_clips(ds, select_eval_clips(ds, config, 8));
  const auto batch = make_batch(clips, 0, 4, 4);
  const auto ck = variant_checkpoint_dir(checkpoints_root(config), VariantSpec::parse("TPG-VAE"), "final");
  auto first = load_checkpoint(ck);
  auto second = load_checkpoint(ck);
  const auto r1 = prior_mean_rollout(first.model, batch.frames, batch.labels, 8).predicted;
  const auto r2 = prior_mean_rollout(first.model, batch.frames, batch.labels, 8).predicted;
  const auto r3 = prior_mean_rollout(second.model, batch.frames, batch.labels, 8).predicted;
  const bool rollout_equal = torch::equal(r1, r2) && torch::equal(r1, r3);
  return {logs_equal && rollout_equal,
          std::string("training logs identical (") + std::to_string(rows) + " lines, wall time ignored): " +
              (logs_equal ? "yes" : "no") + "; prior-mean rollouts bitwise equal: " + (rollout_equal ? "yes" : "no")};
}

Outcome training_smoke(Context& ctx) {
  auto config = smoke_config(ctx);
  const auto ds = cmd_synthgen(config);
  if (ds.manifest().entries.size() != 200) return {false, "dataset has wrong size"};
  const auto start = std::chrono::steady_clock::now();
  TrainOptions options;
  options.variant = "TPG-VAE";
  options.log = &std::cout;
  const auto trained = cmd_train(config, options);
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  ctx.smoke = config;
  if (trained.epochs.size() != 20) return {false, "expected 20 logged epochs"};
  const double first = trained.epochs.front().total, last = trained.epochs.back().total;

  const auto entries = select_eval_clips(ds, config, config.eval.horizon);
  EvalInputs inputs{load_clips(ds, entries), config.training.t_p, config.eval.horizon};
  auto psnr_only = config;
  psnr_only.eval.metrics = {Metric::psnr};
  const auto root = checkpoints_root(config);
  const auto variant = VariantSpec::parse("TPG-VAE");
  auto fresh = load_checkpoint(variant_checkpoint_dir(root, variant, "epoch_0000"));
  auto final_model = load_checkpoint(variant_checkpoint_dir(root, variant, "final"));
  const auto before = aggregate(evaluate_model(fresh.model, "init", inputs, psnr_only, false, nullptr))
                          .curve("init", Metric::psnr);
  const auto after = aggregate(evaluate_model(final_model.model, "trained", inputs, psnr_only, false, nullptr))
                         .curve("trained", Metric::psnr);
  double min_gain = 1e9;
  for (size_t i = 0; i < after.size(); ++i) min_gain = std::min(min_gain, after[i].second - before[i].second);
  const bool loss_ok = last < 0.5 * first;
  const bool gain_ok = entries.size() == 40 && after.size() == static_cast<size_t>(config.eval.horizon) &&
                       min_gain >= 3.0;
  std::ostringstream detail;
  detail << fmt("loss epoch1 %.4f -> epoch20 %.4f (ratio %.3f, need < 0.5); ", first, last, last / first)
         << "min per-step PSNR gain over init " << fmt("%.2f dB", min_gain) << " on " << entries.size()
         << " clips x " << after.size() << " steps (need >= 3); " << fmt("training %.1f min", minutes);
  return {loss_ok && gain_ok, detail.str()};
}

Outcome table_and_plots(Context& ctx) {
  auto config = smoke_config(ctx);
  config.output = "table";
  config.training.epochs = ctx.table_epochs;
  if (!ctx.smoke) cmd_synthgen(config);
  for (const auto& v : config.eval.variants) {
    TrainOptions options;
    options.variant = v;
    cmd_train(config, options);
  }
  ctx.table = config;
  EvalOptions eval;
  eval.checkpoints = checkpoints_root(config);
  const auto result = cmd_eval(config, eval);
  const auto plots = cmd_plot(eval_dir(config), plots_dir(config));

  const int64_t t_p = config.training.t_p;
  const std::vector<int64_t> times{t_p + 5, t_p + 10, t_p + 15, t_p + 20};
  const std::vector<std::string> expected_variants{"TPG-VAE", "ML-VAE", "CL-VAE", "CM-VAE", "M-VAE", "SVG-LP*"};
  const auto reread = AggregateTable::read_csv(result.table_csv);
  bool table_ok = reread.variants() == expected_variants && reread.metrics().size() == 3 &&
                  reread.rows.size() == expected_variants.size() * 3 * times.size();
  for (const auto& v : expected_variants)
    for (auto m : all_metrics()) {
      std::vector<int64_t> ts;
      for (const auto& r : reread.rows)
        if (r.variant == v && r.metric == m) {
          ts.push_back(r.t);
          table_ok = table_ok && std::isfinite(r.mean) && std::isfinite(r.std) && r.std >= 0.0;
        }
      table_ok = table_ok && ts == times;
    }
  std::ifstream in(result.table_csv);
  std::string header;
  std::getline(in, header);
  table_ok = table_ok && header == kAggregateCsvHeader;

  bool plots_ok = plots.size() == 3;
  std::set<std::string> names;
  for (const auto& p : plots) {
    plots_ok = plots_ok && p.lines_drawn == 6 && p.marker_drawn && fs::exists(p.path);
    names.insert(p.path.filename().string());
  }
  plots_ok = plots_ok && names == std::set<std::string>{"curve_psnr.png", "curve_ssim.png", "curve_feat_cosine.png"};
  std::ostringstream detail;
  detail << reread.rows.size() << " rows (6 variants x 3 metrics x t in {" << times[0] << "," << times[1] << ","
         << times[2] << "," << times[3] << "}): " << (table_ok ? "ok" : "mismatch") << "; " << plots.size()
         << " plots with 6 curves and the training-horizon marker: " << (plots_ok ? "ok" : "mismatch");
  return {table_ok && plots_ok, detail.str()};
}

Outcome variant_soundness(Context& ctx) {
  if (!ctx.table) return {false, "no trained variants available"};
  const auto& config = *ctx.table;
  const auto ds = ClipDataset::open(config.data_dir());
  const auto clips = load_clips(ds, select_eval_clips(ds, config, config.eval.horizon));
  const auto batch = make_batch(clips, 0, config.training.t_p, config.data.num_classes);
  const auto shifted = batch.labels.roll(1, 1);
  bool invariant_ok = true;
  double full_diff = 0.0;
  std::ostringstream detail;
  for (const auto& name : config.eval.variants) {
    const auto spec = VariantSpec::parse(name);
    auto loaded = load_checkpoint(variant_checkpoint_dir(checkpoints_root(config), spec, "final"));
    const auto a = prior_mean_rollout(loaded.model, batch.frames, batch.labels, config.eval.horizon).predicted;
    const auto b = prior_mean_rollout(loaded.model, batch.frames, shifted, config.eval.horizon).predicted;
    const double diff = (a - b).abs().max().item<double>();
    if (!spec.mask.label) {
      invariant_ok = invariant_ok && torch::equal(a, b);
      detail << spec.label() << " invariant " << (torch::equal(a, b) ? "yes" : "no") << "; ";
    }
    if (spec.name == VariantName::TPG_VAE) full_diff = diff;
  }
  detail << fmt("TPG-VAE max |diff| %.3e (need > 1e-8)", full_diff);
  return {invariant_ok && full_diff > 1e-8, detail.str()};
}

Outcome generalization_probe(Context& ctx) {
  if (!ctx.smoke) return {false, "smoke run did not complete"};
  auto config = *ctx.smoke;
  config.eval.variants = {"TPG-VAE"};
  config.eval.metrics = {Metric::psnr};
  const int64_t horizon = 2 * config.training.T;
  config.eval.times = {config.training.t_p + horizon};
  EvalOptions options;
  options.checkpoints = checkpoints_root(config);
  options.horizon = horizon;
  options.out_dir = ctx.work / "probe";
  const auto result = cmd_eval(config, options);
  const auto curve = result.curves.curve("TPG-VAE", Metric::psnr);
  if (curve.size() != static_cast<size_t>(horizon)) return {false, "curve has wrong length"};
  std::vector<double> smooth;
  for (size_t i = 0; i + 2 < curve.size(); ++i)
    smooth.push_back((curve[i].second + curve[i + 1].second + curve[i + 2].second) / 3.0);
  int rises = 0;
  double worst_rise = 0.0;
  for (size_t i = 1; i < smooth.size(); ++i) {
    if (smooth[i] > smooth[i - 1]) {
      ++rises;
      worst_rise = std::max(worst_rise, smooth[i] - smooth[i - 1]);
    }
  }
  std::ostringstream detail;
  detail << "horizon " << horizon << " (2x window " << config.training.T << "); smoothed PSNR "
         << fmt("%.2f -> %.2f dB", smooth.front(), smooth.back()) << ", " << rises << " increases"
         << fmt(" (largest %.3e dB)", worst_rise);
  return {rises == 0, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  Context ctx;
  std::string work = "acceptance_work";
  std::string smoke = "configs/smoke.yaml";
  std::vector<std::string> only;
  app.add_option("--work-dir", work, "scratch directory (recreated)");
  app.add_option("--config", smoke, "smoke experiment config");
  app.add_option("--table-epochs", ctx.table_epochs, "epochs per variant for the table run");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  apply_runtime_mode();
  ctx.work = fs::absolute(work);
  ctx.smoke_config = fs::absolute(smoke);
  fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"kl-oracle", kl_oracle},
      {"gradient-check", gradient_check},
      {"metric-oracles", metric_oracles},
      {"determinism", determinism},
      {"training-smoke", training_smoke},
      {"table-plot-shape", table_and_plots},
      {"variant-soundness", variant_soundness},
      {"generalization-probe", generalization_probe},
  };

  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run(ctx);
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS " : "FAIL ") << name << ": " << outcome.detail
              << fmt(" [%.1f s]", seconds) << std::endl;
  }
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
