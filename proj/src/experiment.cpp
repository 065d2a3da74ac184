#include "tpg/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "tpg/errors.hpp"
#include "tpg/jigsaws.hpp"

namespace tpg {

namespace {

void note(std::ostream* log, const std::string& message) {
  if (log != nullptr) *log << message << std::endl;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

ClipDataset open_dataset(const ExperimentConfig& config) {
  const auto dir = config.data_dir();
  if (!fs::exists(dir / "manifest.json")) {
    throw IoError("dataset not found: " + (dir / "manifest.json").string() +
                  " (run synthgen or ingest first)");
  }
  auto dataset = ClipDataset::open(dir);
  const auto& m = dataset.manifest();
  if (m.frame_size != config.model.frame_size || m.channels != config.model.channels ||
      m.num_classes != config.model.num_classes) {
    throw ArgumentError("dataset " + dir.string() + " holds " + std::to_string(m.channels) + "x" +
                        std::to_string(m.frame_size) + "x" + std::to_string(m.frame_size) +
                        " frames with " + std::to_string(m.num_classes) +
                        " classes, which does not match the model section");
  }
  return dataset;
}

void clear_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) return;
  fs::remove(dir / "manifest.json");
  fs::remove_all(dir / "clips");
}

ClipDataset synthgen_impl(const ExperimentConfig& config) {
  config.validate();
  if (config.data.source != DataSource::synthetic) {
    throw ArgumentError("synthgen: data.source is " + to_string(config.data.source));
  }
  SynthDatasetSpec spec;
  spec.num_classes = config.data.num_classes;
  spec.clips_per_class = static_cast<int>(config.data.clips_per_class);
  spec.clip_length = config.data.clip_length;
  spec.seed = config.data.seed;
  spec.test_fraction = config.data.test_fraction;
  spec.render.frame_size = config.model.frame_size;
  spec.render.channels = config.model.channels;
  spec.render.num_classes = config.data.num_classes;
  const auto dir = config.data_dir();
  ensure_dir(dir);
  clear_dataset(dir);
  return ClipDataset::write(dir, build_synthetic_dataset(spec), config.data.num_classes);
}

ClipDataset ingest_impl(const ExperimentConfig& config) {
  config.validate();
  if (config.data.raw_path.empty()) throw ArgumentError("ingest: data.raw_path is not set");
  const auto raw = config.raw_dir();
  if (!fs::exists(raw)) throw IoError("ingest: raw data directory not found: " + raw.string());
  JigsawsOptions options;
  options.train_users = static_cast<int>(config.data.train_users);
  options.frame_size = config.model.frame_size;
  options.channels = config.model.channels;
  const auto dir = config.data_dir();
  ensure_dir(dir);
  clear_dataset(dir);
  return ingest_jigsaws(raw, dir, options);
}

std::vector<VideoClip> load_entries(const ClipDataset& dataset,
                                    const std::vector<const ManifestEntry*>& entries) {
  std::vector<VideoClip> clips;
  clips.reserve(entries.size());
  for (const auto* e : entries) clips.push_back(dataset.load(*e));
  return clips;
}

CheckpointMeta make_meta(const ExperimentConfig& config, const TrainingConfig& training,
                         const VariantSpec& variant, int64_t epoch, const std::string& fingerprint,
                         double loss) {
  CheckpointMeta meta;
  meta.model = config.model;
  meta.training = training;
  meta.variant = variant.label();
  meta.epoch = epoch;
  meta.model_seed = training.seed;
  meta.data_fingerprint = fingerprint;
  meta.loss = loss;
  return meta;
}

TrainResult train_impl(const ExperimentConfig& config, const TrainOptions& options,
                       const ClipDataset& dataset) {
  TrainingConfig training = config.training;
  if (options.epochs) training.epochs = *options.epochs;
  training.validate();
  config.model.validate();

  VariantSpec variant = VariantSpec::parse(options.variant.value_or(config.variant));
  std::optional<CheckpointMeta> resume_meta;
  if (options.resume) {
    resume_meta = read_checkpoint_meta(*options.resume);
    const auto saved = VariantSpec::parse(resume_meta->variant);
    if (options.variant && saved.label() != variant.label()) {
      throw ArgumentError("resume: checkpoint holds " + saved.label() + ", requested " +
                          variant.label());
    }
    variant = saved;
    if (!(resume_meta->model == config.model)) {
      throw ArgumentError("resume: model section differs from checkpoint " +
                          options.resume->string());
    }
  }
  variant.validate();

  const auto entries = dataset.manifest().split(Split::train);
  if (entries.empty()) throw ArgumentError("train: dataset has no training clips");
  for (const auto* e : entries) {
    if (e->frame_count < training.T) {
      throw ArgumentError("train: clip " + e->clip_id + " has " + std::to_string(e->frame_count) +
                          " frames, fewer than T=" + std::to_string(training.T));
    }
  }
  const auto clips = load_entries(dataset, entries);
  const auto fingerprint = dataset.fingerprint();
  const int num_classes = config.model.num_classes;

  const auto root = checkpoints_root(config);
  TrainResult result;
  result.variant = variant;
  result.log_path = training_log_path(config, variant);
  ensure_dir(result.log_path.parent_path());

  TpgModel model{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer;
  int64_t start_epoch = 1;
  double best = std::numeric_limits<double>::infinity();
  if (resume_meta) {
    if (resume_meta->data_fingerprint != fingerprint) {
      throw ArgumentError("resume: checkpoint " + options.resume->string() +
                          " was trained on different data");
    }
    auto loaded = load_checkpoint(*options.resume);
    model = loaded.model;
    optimizer = make_optimizer(model, training);
    load_optimizer_state(*options.resume, *optimizer);
    start_epoch = resume_meta->epoch + 1;
    if (fs::exists(result.log_path)) {
      for (const auto& row : read_training_log(result.log_path)) {
        if (row.epoch <= resume_meta->epoch) result.epochs.push_back(row);
      }
    }
    const auto best_dir = variant_checkpoint_dir(root, variant, "best");
    if (fs::exists(best_dir / kCheckpointMetaFile)) best = read_checkpoint_meta(best_dir).loss;
    note(options.log, "resuming " + variant.label() + " at epoch " + std::to_string(start_epoch));
  } else {
    model = make_model(config.model, variant, training.seed);
    optimizer = make_optimizer(model, training);
    save_checkpoint(variant_checkpoint_dir(root, variant, epoch_tag(0)), model, optimizer.get(),
                    make_meta(config, training, variant, 0, fingerprint, 0.0));
  }

  for (int64_t epoch = start_epoch; epoch <= training.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(derive_seed(training.seed, static_cast<uint64_t>(epoch), 1));
    GaussianNoise noise(derive_seed(training.seed, static_cast<uint64_t>(epoch), 2));
    std::vector<size_t> order(clips.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog row;
    row.epoch = epoch;
    double seen = 0.0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(training.batch_size)) {
      const size_t end = std::min(order.size(), b + static_cast<size_t>(training.batch_size));
      std::vector<const VideoClip*> members;
      int64_t min_len = std::numeric_limits<int64_t>::max();
      for (size_t i = b; i < end; ++i) {
        members.push_back(&clips[order[i]]);
        min_len = std::min(min_len, clips[order[i]].length());
      }
      std::uniform_int_distribution<int64_t> pick(0, min_len - training.T);
      const auto batch = make_batch(members, pick(rng), training.T, num_classes);
      const auto loss = train_step(model, batch, training, *optimizer, noise);
      const double n = static_cast<double>(members.size());
      row.recon_l1 += n * loss.recon_l1;
      row.kl_content += n * loss.kl_content;
      row.kl_motion += n * loss.kl_motion;
      row.total += n * loss.total;
      seen += n;
    }
    row.recon_l1 /= seen;
    row.kl_content /= seen;
    row.kl_motion /= seen;
    row.total /= seen;
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(row);
    write_training_log(result.log_path, result.epochs);
    note(options.log, variant.label() + " epoch " + std::to_string(epoch) + " total " +
                          format_double(row.total) + " recon " + format_double(row.recon_l1) +
                          " (" + format_double(row.wall_time_s) + " s)");

    const auto meta = make_meta(config, training, variant, epoch, fingerprint, row.total);
    if (row.total < best) {
      best = row.total;
      save_checkpoint(variant_checkpoint_dir(root, variant, "best"), model, optimizer.get(), meta);
    }
    if (epoch % training.checkpoint_every == 0) {
      save_checkpoint(variant_checkpoint_dir(root, variant, epoch_tag(epoch)), model,
                      optimizer.get(), meta);
    }
  }

  const int64_t last = std::max(start_epoch - 1, training.epochs);
  const double last_loss = result.epochs.empty() ? 0.0 : result.epochs.back().total;
  result.final_checkpoint = variant_checkpoint_dir(root, variant, "final");
  save_checkpoint(result.final_checkpoint, model, optimizer.get(),
                  make_meta(config, training, variant, last, fingerprint, last_loss));
  if (!fs::exists(result.log_path)) write_training_log(result.log_path, result.epochs);
  return result;
}

fs::path locate_checkpoint(const fs::path& root, const VariantSpec& variant, const std::string& tag) {
  const auto tagged = variant_checkpoint_dir(root, variant, tag);
  if (fs::exists(tagged / kCheckpointMetaFile)) return tagged;
  const auto plain = root / variant.file_stem();
  if (fs::exists(plain / kCheckpointMetaFile)) return plain;
  return {};
}

void write_per_clip_csv(const fs::path& path, const std::vector<MetricSeries>& series) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "variant,metric,clip_id,t,value\n";
  for (const auto& s : series) {
    for (size_t i = 0; i < s.per_step.size(); ++i) {
      out << s.variant << ',' << to_string(s.metric) << ',' << s.clip_id << ','
          << s.first_t + static_cast<int64_t>(i) << ',' << format_double(s.per_step[i]) << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

EvalResult eval_impl(const ExperimentConfig& config, const EvalOptions& options,
                     const ClipDataset& dataset) {
  const int64_t horizon = options.horizon.value_or(config.eval.horizon);
  const int64_t t_p = config.training.t_p;
  if (horizon < 1) throw ArgumentError("eval: horizon must be >= 1");
  for (const auto t : config.eval.times) {
    if (t <= t_p || t > t_p + horizon) {
      throw ArgumentError("eval: requested t=" + std::to_string(t) + " outside predicted range " +
                          std::to_string(t_p + 1) + ".." + std::to_string(t_p + horizon));
    }
  }
  if (!fs::exists(options.checkpoints)) {
    throw IoError("eval: checkpoint directory not found: " + options.checkpoints.string());
  }

  std::vector<std::pair<VariantSpec, fs::path>> targets;
  std::string missing;
  for (const auto& name : config.eval.variants) {
    const auto variant = VariantSpec::parse(name);
    const auto dir = locate_checkpoint(options.checkpoints, variant, options.tag);
    if (dir.empty()) {
      missing += (missing.empty() ? "" : ", ") + variant.label();
    } else {
      targets.emplace_back(variant, dir);
    }
  }
  if (!missing.empty()) {
    throw IoError("eval: no '" + options.tag + "' checkpoint under " + options.checkpoints.string() +
                  " for variants: " + missing);
  }

  EvalInputs inputs;
  inputs.t_p = t_p;
  inputs.horizon = horizon;
  inputs.clips = load_entries(dataset, select_eval_clips(dataset, config, horizon));
  note(options.log, "evaluating " + std::to_string(targets.size()) + " variants on " +
                        std::to_string(inputs.clips.size()) + " clips, horizon " +
                        std::to_string(horizon));

  std::unique_ptr<RandomConvEmbedder> embedder;
  if (std::find(config.eval.metrics.begin(), config.eval.metrics.end(), Metric::feat_cosine) !=
      config.eval.metrics.end()) {
    embedder = std::make_unique<RandomConvEmbedder>(config.model.channels, config.eval.embedder_seed);
  }

  EvalResult result;
  for (auto& [variant, dir] : targets) {
    auto loaded = load_checkpoint(dir);
    if (loaded.variant.label() != variant.label()) {
      throw ArgumentError("eval: checkpoint " + dir.string() + " holds " + loaded.variant.label() +
                          ", expected " + variant.label());
    }
    const auto& mc = loaded.meta.model;
    if (mc.frame_size != config.model.frame_size || mc.channels != config.model.channels ||
        mc.num_classes != config.model.num_classes) {
      throw ArgumentError("eval: checkpoint " + dir.string() + " does not match the dataset format");
    }
    const auto& sv = config.eval.sampled_variants;
    const bool sampled = std::any_of(sv.begin(), sv.end(), [&](const std::string& s) {
      return VariantSpec::parse(s).label() == variant.label();
    });
    auto series = evaluate_model(loaded.model, variant.label(), inputs, config, sampled, embedder.get());
    result.series.insert(result.series.end(), series.begin(), series.end());
    note(options.log, "  " + variant.label() + (sampled ? " (best of k samples)" : " (prior means)"));
  }

  result.curves = aggregate(result.series);
  result.table = result.curves.at_times(config.eval.times);
  const auto out_dir = options.out_dir.value_or(eval_dir(config));
  ensure_dir(out_dir);
  result.table_csv = out_dir / "table.csv";
  result.curves_csv = out_dir / "curves.csv";
  result.per_clip_csv = out_dir / "per_clip.csv";
  result.table.write_csv(result.table_csv);
  result.curves.write_csv(result.curves_csv);
  write_per_clip_csv(result.per_clip_csv, result.series);

  nlohmann::ordered_json meta{{"training_horizon", config.training.T},
                              {"t_p", t_p},
                              {"horizon", horizon},
                              {"clips", inputs.clips.size()},
                              {"checkpoint_tag", options.tag}};
  std::ofstream out(out_dir / kCurvesMetaFile);
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + (out_dir / kCurvesMetaFile).string());
  return result;
}

cv::Mat frame_to_bgr(const torch::Tensor& frame) {
  const auto hwc = (frame.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                       .round()
                       .to(torch::kUInt8)
                       .permute({1, 2, 0})
                       .contiguous();
  const int h = static_cast<int>(hwc.size(0));
  const int w = static_cast<int>(hwc.size(1));
  const int c = static_cast<int>(hwc.size(2));
  cv::Mat img(h, w, c == 1 ? CV_8UC1 : CV_8UC3, hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  if (c == 1) {
    cv::cvtColor(img, bgr, cv::COLOR_GRAY2BGR);
  } else {
    cv::cvtColor(img, bgr, cv::COLOR_RGB2BGR);
  }
  return bgr;
}

std::vector<RenderedPlot> plot_impl(const fs::path& input_dir, const fs::path& out_dir) {
  const auto csv = input_dir / "curves.csv";
  if (!fs::exists(csv)) throw IoError("plot: curves file not found: " + csv.string());
  const auto table = AggregateTable::read_csv(csv);
  if (table.rows.empty()) throw ArgumentError("plot: " + csv.string() + " has no data rows");
  std::optional<int64_t> marker;
  const auto meta_path = input_dir / kCurvesMetaFile;
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    try {
      const auto meta = nlohmann::json::parse(in);
      if (meta.contains("training_horizon")) marker = meta.at("training_horizon").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("plot: malformed " + meta_path.string() + ": " + e.what());
    }
  }
  ensure_dir(out_dir);
  return plot_all_metrics(table, marker, out_dir);
}

}  // namespace

bool deterministic_mode_requested() {
  const char* value = std::getenv(kDeterministicEnv);
  return value != nullptr && std::string(value) != "0" && std::string(value) != "";
}

void apply_runtime_mode() {
  if (deterministic_mode_requested()) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }
}

DirectoryLock::DirectoryLock(const fs::path& dir) {
  ensure_dir(dir);
  path_ = dir / kFileName;
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const auto held = path_;
    path_.clear();
    throw IoError("output directory is locked by another run: " + held.string() +
                  " (remove it if no other run is active)");
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  if (!path_.empty()) {
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

fs::path checkpoints_root(const ExperimentConfig& config) {
  return config.output_dir() / "checkpoints";
}

fs::path variant_checkpoint_dir(const fs::path& root, const VariantSpec& variant,
                                const std::string& tag) {
  return root / variant.file_stem() / tag;
}

fs::path training_log_path(const ExperimentConfig& config, const VariantSpec& variant) {
  return config.output_dir() / "logs" / (variant.file_stem() + "_train.csv");
}

fs::path eval_dir(const ExperimentConfig& config) { return config.output_dir() / "eval"; }
fs::path plots_dir(const ExperimentConfig& config) { return config.output_dir() / "plots"; }

std::string epoch_tag(int64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04lld", static_cast<long long>(epoch));
  return buf;
}

ClipDataset cmd_synthgen(const ExperimentConfig& config) {
  apply_runtime_mode();
  DirectoryLock lock(config.data_dir());
  return synthgen_impl(config);
}

ClipDataset cmd_ingest(const ExperimentConfig& config) {
  apply_runtime_mode();
  DirectoryLock lock(config.data_dir());
  return ingest_impl(config);
}

void write_training_log(const fs::path& path, const std::vector<EpochLog>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kTrainingLogHeader << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_double(r.recon_l1) << ',' << format_double(r.kl_content) << ','
        << format_double(r.kl_motion) << ',' << format_double(r.total) << ','
        << format_double(r.wall_time_s) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EpochLog> read_training_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read training log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTrainingLogHeader) {
    throw ParseError(path.string() + ": unexpected training log header");
  }
  std::vector<EpochLog> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochLog r;
    char comma = 0;
    std::istringstream ss(line);
    ss >> r.epoch >> comma >> r.recon_l1 >> comma >> r.kl_content >> comma >> r.kl_motion >> comma >>
        r.total >> comma >> r.wall_time_s;
    if (!ss) throw ParseError(path.string() + ": malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

TrainResult cmd_train(const ExperimentConfig& config, const TrainOptions& options) {
  apply_runtime_mode();
  config.validate();
  if (options.resume && !fs::exists(*options.resume)) {
    throw IoError("resume checkpoint not found: " + options.resume->string());
  }
  const auto dataset = open_dataset(config);
  DirectoryLock lock(config.output_dir());
  return train_impl(config, options, dataset);
}

std::vector<const ManifestEntry*> select_eval_clips(const ClipDataset& dataset,
                                                    const ExperimentConfig& config,
                                                    int64_t horizon) {
  const int64_t needed = config.training.t_p + horizon;
  const int num_classes = dataset.manifest().num_classes;
  std::vector<std::vector<const ManifestEntry*>> by_class(static_cast<size_t>(num_classes));
  for (const auto* e : dataset.manifest().split(Split::test)) {
    if (e->frame_count >= needed) by_class[static_cast<size_t>(e->gesture.index())].push_back(e);
  }
  size_t per_class = static_cast<size_t>(std::max<int64_t>(1, config.eval.clip_count / num_classes));
  for (const auto& group : by_class) per_class = std::min(per_class, group.size());
  if (per_class == 0) {
    throw ArgumentError("eval: every class needs a held-out clip with at least " +
                        std::to_string(needed) + " frames");
  }
  std::vector<const ManifestEntry*> out;
  for (const auto& group : by_class) out.insert(out.end(), group.begin(), group.begin() + per_class);
  return out;
}

std::vector<MetricSeries> evaluate_model(TpgModel& model, const std::string& variant_label,
                                         const EvalInputs& inputs, const ExperimentConfig& config,
                                         bool sampled, FrameEmbedder* embedder) {
  std::vector<MetricSeries> out;
  const auto& metrics = config.eval.metrics;
  const auto bs = static_cast<size_t>(config.eval.batch_size);
  const int64_t length = inputs.t_p + inputs.horizon;
  for (size_t b = 0; b < inputs.clips.size(); b += bs) {
    const size_t end = std::min(inputs.clips.size(), b + bs);
    std::vector<const VideoClip*> members;
    for (size_t i = b; i < end; ++i) members.push_back(&inputs.clips[i]);
    const auto batch = make_batch(members, 0, length, config.model.num_classes);
    const auto observed = batch.frames.narrow(1, 0, inputs.t_p);
    const auto truth = batch.frames.narrow(1, inputs.t_p, inputs.horizon);

    std::vector<RolloutResult> samples;
    if (sampled) {
      samples = sampled_rollout(model, observed, batch.labels, inputs.horizon, config.eval.k,
                                derive_seed(config.eval.seed, b));
    } else {
      samples.push_back(prior_mean_rollout(model, observed, batch.labels, inputs.horizon));
    }
    for (size_t i = 0; i < members.size(); ++i) {
      const auto row = static_cast<int64_t>(i);
      std::vector<RolloutResult> candidates(samples.size());
      for (size_t s = 0; s < samples.size(); ++s) {
        candidates[s].predicted = samples[s].predicted.narrow(0, row, 1);
        candidates[s].mode = samples[s].mode;
      }
      for (const auto metric : metrics) {
        const size_t pick = best_of_k_index(candidates, truth[row], metric, embedder);
        MetricSeries series;
        series.metric = metric;
        series.per_step = per_step_metric(candidates[pick].predicted[0], truth[row], metric, embedder);
        series.clip_id = members[i]->clip_id;
        series.variant = variant_label;
        series.first_t = inputs.t_p + 1;
        out.push_back(std::move(series));
      }
    }
  }
  return out;
}

EvalResult cmd_eval(const ExperimentConfig& config, const EvalOptions& options) {
  apply_runtime_mode();
  config.validate();
  const auto dataset = open_dataset(config);
  DirectoryLock lock(config.output_dir());
  return eval_impl(config, options, dataset);
}

PredictResult cmd_predict(const ExperimentConfig& config, const PredictOptions& options) {
  apply_runtime_mode();
  config.validate();
  const auto dataset = open_dataset(config);
  const auto& entry = dataset.manifest().find(options.clip_id);
  if (!fs::exists(options.checkpoint)) {
    throw IoError("predict: checkpoint not found: " + options.checkpoint.string());
  }
  auto loaded = load_checkpoint(options.checkpoint);
  const int64_t t_p = loaded.meta.training.t_p;
  const int64_t horizon = options.horizon.value_or(config.eval.horizon);
  const auto clip = dataset.load(entry);
  if (clip.length() < t_p) {
    throw ArgumentError("predict: clip " + clip.clip_id + " has fewer than t_p=" +
                        std::to_string(t_p) + " frames");
  }
  const auto out_dir =
      options.out_dir.value_or(config.output_dir() / "predict" / loaded.variant.file_stem());
  ensure_dir(out_dir);
  DirectoryLock lock(out_dir);

  const auto observed = clip.frames.narrow(0, 0, t_p).unsqueeze(0);
  const auto label = one_hot_label(clip.gesture, config.model.num_classes).unsqueeze(0);
  const auto rollout = prior_mean_rollout(loaded.model, observed, label, horizon);

  PredictResult result;
  result.predicted = rollout.predicted[0].contiguous();
  result.tensor_path = out_dir / (clip.clip_id + ".bin");
  result.record_path = out_dir / (clip.clip_id + ".json");
  result.strip_path = out_dir / (clip.clip_id + "_strip.png");
  write_clip_tensor(result.tensor_path, result.predicted);

  nlohmann::ordered_json record{{"clip_id", clip.clip_id},
                                {"variant", loaded.variant.label()},
                                {"mode", to_string(rollout.mode)},
                                {"t_p", t_p},
                                {"horizon", horizon},
                                {"first_t", t_p + 1},
                                {"checkpoint", checkpoint_fingerprint(options.checkpoint)},
                                {"seed", loaded.meta.model_seed}};
  std::ofstream out(result.record_path);
  out << record.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + result.record_path.string());

  const int s = static_cast<int>(config.model.frame_size);
  const int pad = 4;
  const int cols = static_cast<int>(horizon);
  cv::Mat strip(2 * (s + pad) + pad, cols * (s + pad) + pad, CV_8UC3, cv::Scalar(255, 255, 255));
  for (int c = 0; c < cols; ++c) {
    const int x = pad + c * (s + pad);
    const int64_t t_index = t_p + c;  // 0-based frame index of t = t_p + 1 + c
    cv::Rect top(x, pad, s, s);
    if (t_index < clip.length()) {
      frame_to_bgr(clip.frames[t_index]).copyTo(strip(top));
    } else {
      strip(top).setTo(cv::Scalar(200, 200, 200));
    }
    cv::rectangle(strip, cv::Rect(x - 2, pad - 2, s + 4, s + 4), cv::Scalar(255, 0, 0), 2);
    frame_to_bgr(result.predicted[c]).copyTo(strip(cv::Rect(x, 2 * pad + s, s, s)));
  }
  if (!cv::imwrite(result.strip_path.string(), strip)) {
    throw IoError("cannot write image " + result.strip_path.string());
  }
  result.strip_rows = 2;
  result.strip_cols = cols;
  return result;
}

std::vector<RenderedPlot> cmd_plot(const fs::path& input_dir, const fs::path& out_dir) {
  return plot_impl(input_dir, out_dir);
}

PipelineResult cmd_pipeline(const ExperimentConfig& config, std::ostream* log) {
  apply_runtime_mode();
  config.validate();
  DirectoryLock lock(config.output_dir());
  PipelineResult result;
  note(log, "dataset -> " + config.data_dir().string());
  const auto dataset =
      config.data.source == DataSource::synthetic ? synthgen_impl(config) : ingest_impl(config);
  open_dataset(config);
  for (const auto& name : config.eval.variants) {
    TrainOptions options;
    options.variant = name;
    options.log = log;
    result.trained.push_back(train_impl(config, options, dataset));
  }
  EvalOptions eval_options;
  eval_options.checkpoints = checkpoints_root(config);
  eval_options.log = log;
  result.eval = eval_impl(config, eval_options, dataset);
  result.plots = plot_impl(eval_dir(config), plots_dir(config));
  return result;
}

}  // namespace tpg
