#include <CLI11.hpp>

#include <iostream>

#include "tpg/errors.hpp"
#include "tpg/experiment.hpp"

namespace {

void print_table(const tpg::AggregateTable& table) {
  for (const auto& row : table.rows) {
    std::printf("%-8s %-12s t=%-4lld %10.4f +- %.4f\n", row.variant.c_str(),
                tpg::to_string(row.metric).c_str(), static_cast<long long>(row.t), row.mean, row.std);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal video prediction with content, motion and gesture-label latents"};
  app.require_subcommand(1);

  std::string config_path;
  std::string resume, variant, checkpoints, checkpoint, clip_id, input_dir, out_dir, tag = "final";
  int64_t epochs = -1;
  int64_t horizon = -1;

  auto* synthgen = app.add_subcommand("synthgen", "Generate the synthetic gesture dataset");
  synthgen->add_option("--config", config_path, "Experiment config (YAML)")->required();

  auto* ingest = app.add_subcommand("ingest", "Convert a JIGSAWS-layout directory into a dataset");
  ingest->add_option("--config", config_path, "Experiment config (YAML)")->required();

  auto* train = app.add_subcommand("train", "Train one variant");
  train->add_option("--config", config_path, "Experiment config (YAML)")->required();
  train->add_option("--resume", resume, "Checkpoint directory to resume from");
  train->add_option("--variant", variant, "Variant to train (overrides the config)");
  train->add_option("--epochs", epochs, "Total epochs (overrides the config)");

  auto* eval = app.add_subcommand("eval", "Evaluate trained variants");
  eval->add_option("--config", config_path, "Experiment config (YAML)")->required();
  eval->add_option("--checkpoints", checkpoints, "Directory with <variant>/<tag> checkpoints")
      ->required();
  eval->add_option("--tag", tag, "Checkpoint tag to evaluate (final, best, epoch_NNNN)");
  eval->add_option("--horizon", horizon, "Predicted frames (overrides the config)");
  eval->add_option("--out", out_dir, "Output directory (default <output>/eval)");

  auto* predict = app.add_subcommand("predict", "Dump a prediction and an image strip for one clip");
  predict->add_option("--config", config_path, "Experiment config (YAML)")->required();
  predict->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  predict->add_option("--clip", clip_id, "Clip id from the dataset manifest")->required();
  predict->add_option("--horizon", horizon, "Predicted frames (overrides the config)");
  predict->add_option("--out", out_dir, "Output directory");

  auto* plot = app.add_subcommand("plot", "Render per-metric curves from eval output");
  plot->add_option("--input", input_dir, "Directory holding curves.csv")->required();
  plot->add_option("--out", out_dir, "Image output directory")->required();

  auto* pipeline = app.add_subcommand("pipeline", "synthgen/ingest, train all variants, eval, plot");
  pipeline->add_option("--config", config_path, "Experiment config (YAML)")->required();

  auto* show = app.add_subcommand("show-config", "Print the effective configuration");
  show->add_option("--config", config_path, "Experiment config (YAML); defaults if omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    tpg::apply_runtime_mode();
    auto load = [&] { return tpg::load_config(config_path); };
    if (*show) {
      std::cout << tpg::dump_config(config_path.empty() ? tpg::ExperimentConfig{} : load());
    } else if (*synthgen) {
      const auto ds = tpg::cmd_synthgen(load());
      std::cout << "wrote " << ds.manifest().entries.size() << " clips to " << ds.root().string()
                << "\n";
    } else if (*ingest) {
      const auto ds = tpg::cmd_ingest(load());
      std::cout << "wrote " << ds.manifest().entries.size() << " clips to " << ds.root().string()
                << "\n";
    } else if (*train) {
      tpg::TrainOptions options;
      if (!resume.empty()) options.resume = resume;
      if (!variant.empty()) options.variant = variant;
      if (epochs >= 0) options.epochs = epochs;
      options.log = &std::cerr;
      const auto result = tpg::cmd_train(load(), options);
      std::cout << "final checkpoint " << result.final_checkpoint.string() << "\n"
                << "training log " << result.log_path.string() << "\n";
    } else if (*eval) {
      tpg::EvalOptions options;
      options.checkpoints = checkpoints;
      options.tag = tag;
      if (horizon > 0) options.horizon = horizon;
      if (!out_dir.empty()) options.out_dir = out_dir;
      options.log = &std::cerr;
      const auto result = tpg::cmd_eval(load(), options);
      print_table(result.table);
      std::cout << "table " << result.table_csv.string() << "\n";
    } else if (*predict) {
      tpg::PredictOptions options;
      options.checkpoint = checkpoint;
      options.clip_id = clip_id;
      if (horizon > 0) options.horizon = horizon;
      if (!out_dir.empty()) options.out_dir = out_dir;
      const auto result = tpg::cmd_predict(load(), options);
      std::cout << "prediction " << result.tensor_path.string() << "\n"
                << "strip " << result.strip_path.string() << "\n";
    } else if (*plot) {
      for (const auto& image : tpg::cmd_plot(input_dir, out_dir)) {
        std::cout << image.path.string() << " (" << image.lines_drawn << " lines)\n";
      }
    } else if (*pipeline) {
      const auto result = tpg::cmd_pipeline(load(), &std::cerr);
      print_table(result.eval.table);
      for (const auto& image : result.plots) std::cout << image.path.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
