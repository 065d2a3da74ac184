#include "tpg/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "tpg/clip_io.hpp"
#include "tpg/errors.hpp"

namespace tpg {

namespace {

using nlohmann::ordered_json;

ordered_json model_to_json(const ModelConfig& c) {
  return {{"frame_size", c.frame_size},
          {"channels", c.channels},
          {"content_feature_dim", c.content_feature_dim},
          {"motion_feature_dim", c.motion_feature_dim},
          {"latent_dim", c.latent_dim},
          {"predictor_feature_dim", c.predictor_feature_dim},
          {"recurrent_width", c.recurrent_width},
          {"predictor_layers", c.predictor_layers},
          {"gaussian_layers", c.gaussian_layers},
          {"num_classes", c.num_classes},
          {"encoder_widths", c.encoder_widths},
          {"content_convs_per_block", c.content_convs_per_block},
          {"motion_width_divisor", c.motion_width_divisor}};
}

ModelConfig model_from_json(const ordered_json& j) {
  ModelConfig c;
  j.at("frame_size").get_to(c.frame_size);
  j.at("channels").get_to(c.channels);
  j.at("content_feature_dim").get_to(c.content_feature_dim);
  j.at("motion_feature_dim").get_to(c.motion_feature_dim);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("predictor_feature_dim").get_to(c.predictor_feature_dim);
  j.at("recurrent_width").get_to(c.recurrent_width);
  j.at("predictor_layers").get_to(c.predictor_layers);
  j.at("gaussian_layers").get_to(c.gaussian_layers);
  j.at("num_classes").get_to(c.num_classes);
  j.at("encoder_widths").get_to(c.encoder_widths);
  j.at("content_convs_per_block").get_to(c.content_convs_per_block);
  j.at("motion_width_divisor").get_to(c.motion_width_divisor);
  return c;
}

ordered_json training_to_json(const TrainingConfig& c) {
  return {{"beta", c.beta},
          {"learning_rate", c.learning_rate},
          {"T", c.T},
          {"t_p", c.t_p},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"epsilon", c.epsilon},
          {"grad_clip_norm", c.grad_clip_norm},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainingConfig training_from_json(const ordered_json& j) {
  TrainingConfig c;
  j.at("beta").get_to(c.beta);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("T").get_to(c.T);
  j.at("t_p").get_to(c.t_p);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("epsilon").get_to(c.epsilon);
  j.at("grad_clip_norm").get_to(c.grad_clip_norm);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, TpgModel& model,
                     torch::optim::Adam* optimizer, const CheckpointMeta& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  const auto model_path = dir / kCheckpointModelFile;
  try {
    torch::save(model, model_path.string());
    if (optimizer != nullptr) torch::save(*optimizer, (dir / kCheckpointOptimizerFile).string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint in " + dir.string() + ": " + e.what_without_backtrace());
  }
  ordered_json j{{"variant", meta.variant},
                 {"epoch", meta.epoch},
                 {"model_seed", meta.model_seed},
                 {"data_fingerprint", meta.data_fingerprint},
                 {"loss", meta.loss},
                 {"model", model_to_json(meta.model)},
                 {"training", training_to_json(meta.training)}};
  const auto meta_path = dir / kCheckpointMetaFile;
  std::ofstream out(meta_path);
  if (!out) throw IoError("cannot write " + meta_path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + meta_path.string());
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  const auto path = dir / kCheckpointMetaFile;
  std::ifstream in(path);
  if (!in) throw IoError("checkpoint metadata not found: " + path.string());
  try {
    const auto j = ordered_json::parse(in);
    CheckpointMeta meta;
    j.at("variant").get_to(meta.variant);
    j.at("epoch").get_to(meta.epoch);
    j.at("model_seed").get_to(meta.model_seed);
    j.at("data_fingerprint").get_to(meta.data_fingerprint);
    j.at("loss").get_to(meta.loss);
    meta.model = model_from_json(j.at("model"));
    meta.training = training_from_json(j.at("training"));
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint metadata " + path.string() + ": " + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  LoadedCheckpoint out;
  out.meta = read_checkpoint_meta(dir);
  try {
    out.variant = VariantSpec::parse(out.meta.variant);
  } catch (const LookupError& e) {
    throw IoError("corrupt checkpoint metadata " + (dir / kCheckpointMetaFile).string() + ": " +
                  e.what());
  }
  out.model = make_model(out.meta.model, out.variant, out.meta.model_seed);
  const auto model_path = dir / kCheckpointModelFile;
  if (!std::filesystem::exists(model_path)) {
    throw IoError("checkpoint weights not found: " + model_path.string());
  }
  try {
    torch::load(out.model, model_path.string());
  } catch (const c10::Error& e) {
    throw IoError("corrupt checkpoint weights " + model_path.string() + ": " +
                  e.what_without_backtrace());
  }
  out.model->eval();
  return out;
}

void load_optimizer_state(const std::filesystem::path& dir, torch::optim::Adam& optimizer) {
  const auto path = dir / kCheckpointOptimizerFile;
  if (!std::filesystem::exists(path)) throw IoError("optimizer state not found: " + path.string());
  try {
    torch::load(optimizer, path.string());
  } catch (const c10::Error& e) {
    throw IoError("corrupt optimizer state " + path.string() + ": " + e.what_without_backtrace());
  }
}

std::string checkpoint_fingerprint(const std::filesystem::path& dir) {
  return file_fingerprint(dir / kCheckpointModelFile);
}

}  // namespace tpg
