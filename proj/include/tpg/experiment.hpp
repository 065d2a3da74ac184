#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tpg/checkpoint.hpp"
#include "tpg/clip_io.hpp"
#include "tpg/config.hpp"
#include "tpg/metrics.hpp"
#include "tpg/plot.hpp"

namespace tpg {

namespace fs = std::filesystem;

// Setting this variable to 1 pins torch to one thread and deterministic kernels.
inline constexpr const char* kDeterministicEnv = "TPG_DETERMINISTIC";
bool deterministic_mode_requested();
void apply_runtime_mode();

// Exclusive lock on an output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);  // IoError when already held
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  static constexpr const char* kFileName = ".tpg.lock";

 private:
  fs::path path_;
};

// Output layout under ExperimentConfig::output_dir().
fs::path checkpoints_root(const ExperimentConfig& config);
fs::path variant_checkpoint_dir(const fs::path& root, const VariantSpec& variant,
                                const std::string& tag);  // tag: final, best, epoch_0010, ...
fs::path training_log_path(const ExperimentConfig& config, const VariantSpec& variant);
fs::path eval_dir(const ExperimentConfig& config);
fs::path plots_dir(const ExperimentConfig& config);
std::string epoch_tag(int64_t epoch);

ClipDataset cmd_synthgen(const ExperimentConfig& config);
ClipDataset cmd_ingest(const ExperimentConfig& config);

struct EpochLog {
  int64_t epoch = 0;
  double recon_l1 = 0.0;
  double kl_content = 0.0;
  double kl_motion = 0.0;
  double total = 0.0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kTrainingLogHeader = "epoch,recon_l1,kl_content,kl_motion,total,wall_time_s";
void write_training_log(const fs::path& path, const std::vector<EpochLog>& rows);
std::vector<EpochLog> read_training_log(const fs::path& path);

struct TrainOptions {
  std::optional<fs::path> resume;       // checkpoint directory to continue from
  std::optional<std::string> variant;   // overrides config.variant
  std::optional<int64_t> epochs;        // overrides config.training.epochs (total, not extra)
  std::ostream* log = nullptr;
};

struct TrainResult {
  VariantSpec variant;
  fs::path final_checkpoint;
  fs::path log_path;
  std::vector<EpochLog> epochs;  // full log, including rows from before a resume
};

// Checkpoints: epoch_0000 (initialisation), every checkpoint_every epochs, best, final.
TrainResult cmd_train(const ExperimentConfig& config, const TrainOptions& options = {});

// Balanced held-out clips long enough for t_p + horizon frames, in manifest order.
std::vector<const ManifestEntry*> select_eval_clips(const ClipDataset& dataset,
                                                    const ExperimentConfig& config,
                                                    int64_t horizon);

struct EvalInputs {
  std::vector<VideoClip> clips;
  int64_t t_p = 0;
  int64_t horizon = 0;
};

// Metric series for one model over the given clips; sampled variants use best-of-k per metric.
std::vector<MetricSeries> evaluate_model(TpgModel& model, const std::string& variant_label,
                                         const EvalInputs& inputs, const ExperimentConfig& config,
                                         bool sampled, FrameEmbedder* embedder);

struct EvalOptions {
  fs::path checkpoints;            // directory holding <variant>/<tag> checkpoints
  std::string tag = "final";
  std::optional<int64_t> horizon;  // overrides config.eval.horizon
  std::optional<fs::path> out_dir; // defaults to eval_dir(config)
  std::ostream* log = nullptr;
};

struct EvalResult {
  AggregateTable table;   // rows at the requested time steps
  AggregateTable curves;  // rows at every predicted step
  fs::path table_csv;
  fs::path curves_csv;
  fs::path per_clip_csv;
  std::vector<MetricSeries> series;
};

inline constexpr const char* kCurvesMetaFile = "curves.meta.json";

EvalResult cmd_eval(const ExperimentConfig& config, const EvalOptions& options);

struct PredictOptions {
  fs::path checkpoint;
  std::string clip_id;
  std::optional<int64_t> horizon;
  std::optional<fs::path> out_dir;  // defaults to <output>/predict/<variant>
};

struct PredictResult {
  torch::Tensor predicted;  // [horizon, C, H, W]
  fs::path tensor_path;
  fs::path record_path;
  fs::path strip_path;
  int strip_rows = 0;
  int strip_cols = 0;
};

// Prior-mean rollout of one clip; the strip shows ground truth (blue border) over prediction.
PredictResult cmd_predict(const ExperimentConfig& config, const PredictOptions& options);

// Reads curves.csv (+ curves.meta.json for the training-horizon marker) from input_dir.
std::vector<RenderedPlot> cmd_plot(const fs::path& input_dir, const fs::path& out_dir);

struct PipelineResult {
  std::vector<TrainResult> trained;
  EvalResult eval;
  std::vector<RenderedPlot> plots;
};

// Dataset generation (or ingestion), training of every eval variant, evaluation, plots.
PipelineResult cmd_pipeline(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace tpg
