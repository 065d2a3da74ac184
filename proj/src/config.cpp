#include "tpg/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "tpg/errors.hpp"

namespace tpg {

namespace {

void check_keys(const YAML::Node& node, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ParseError("config: section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (allowed.count(key) == 0) {
      throw ParseError("config: unknown key '" + key + "' in section '" + section + "'");
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& section) {
  const auto value = node[key];
  if (!value) return;
  try {
    out = value.as<T>();
  } catch (const YAML::Exception& e) {
    throw ParseError("config: bad value for " + section + "." + key + ": " + e.msg);
  }
}

void read_path(const YAML::Node& node, const char* key, std::filesystem::path& out,
               const std::string& section) {
  std::string text = out.string();
  read(node, key, text, section);
  out = text;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace

std::string to_string(DataSource source) {
  return source == DataSource::synthetic ? "synthetic" : "jigsaws";
}

DataSource data_source_from_string(const std::string& name) {
  if (name == "synthetic") return DataSource::synthetic;
  if (name == "jigsaws") return DataSource::jigsaws;
  throw ParseError("config: unknown data source '" + name + "' (expected synthetic or jigsaws)");
}

std::filesystem::path ExperimentConfig::data_dir() const { return resolve(base_dir, data.path); }
std::filesystem::path ExperimentConfig::raw_dir() const { return resolve(base_dir, data.raw_path); }
std::filesystem::path ExperimentConfig::output_dir() const { return resolve(base_dir, output); }

void ExperimentConfig::validate() const {
  model.validate();
  training.validate();
  if (data.num_classes != model.num_classes) {
    throw ArgumentError("config: data.num_classes (" + std::to_string(data.num_classes) +
                        ") differs from model.num_classes (" + std::to_string(model.num_classes) + ")");
  }
  if (data.clips_per_class < 1) throw ArgumentError("config: data.clips_per_class must be >= 1");
  if (data.clip_length < training.T) {
    throw ArgumentError("config: data.clip_length must be >= training.T");
  }
  if (data.test_fraction < 0.0 || data.test_fraction >= 1.0) {
    throw ArgumentError("config: data.test_fraction must be in [0, 1)");
  }
  if (eval.horizon < 1) throw ArgumentError("config: eval.horizon must be >= 1");
  if (eval.k < 1) throw ArgumentError("config: eval.k must be >= 1");
  if (eval.clip_count < 1) throw ArgumentError("config: eval.clip_count must be >= 1");
  if (eval.batch_size < 1) throw ArgumentError("config: eval.batch_size must be >= 1");
  if (eval.metrics.empty()) throw ArgumentError("config: eval.metrics is empty");
  for (const auto t : eval.times) {
    if (t <= training.t_p || t > training.t_p + eval.horizon) {
      throw ArgumentError("config: eval time " + std::to_string(t) + " outside predicted range " +
                          std::to_string(training.t_p + 1) + ".." +
                          std::to_string(training.t_p + eval.horizon));
    }
  }
  VariantSpec::parse(variant).validate();
  for (const auto& v : eval.variants) VariantSpec::parse(v).validate();
  for (const auto& v : eval.sampled_variants) VariantSpec::parse(v);
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  if (!root || root.IsNull()) return c;
  check_keys(root, "<root>", {"data", "model", "training", "eval", "output", "variant"});
  read_path(root, "output", c.output, "<root>");
  read(root, "variant", c.variant, "<root>");

  if (const auto d = root["data"]) {
    check_keys(d, "data", {"source", "path", "raw_path", "num_classes", "clips_per_class",
                           "clip_length", "test_fraction", "seed", "train_users"});
    std::string source = to_string(c.data.source);
    read(d, "source", source, "data");
    c.data.source = data_source_from_string(source);
    read_path(d, "path", c.data.path, "data");
    read_path(d, "raw_path", c.data.raw_path, "data");
    read(d, "num_classes", c.data.num_classes, "data");
    read(d, "clips_per_class", c.data.clips_per_class, "data");
    read(d, "clip_length", c.data.clip_length, "data");
    read(d, "test_fraction", c.data.test_fraction, "data");
    read(d, "seed", c.data.seed, "data");
    read(d, "train_users", c.data.train_users, "data");
  }
  if (const auto m = root["model"]) {
    check_keys(m, "model", {"frame_size", "channels", "content_feature_dim", "motion_feature_dim",
                            "latent_dim", "predictor_feature_dim", "recurrent_width",
                            "predictor_layers", "gaussian_layers", "num_classes", "encoder_widths",
                            "content_convs_per_block", "motion_width_divisor"});
    read(m, "frame_size", c.model.frame_size, "model");
    read(m, "channels", c.model.channels, "model");
    read(m, "content_feature_dim", c.model.content_feature_dim, "model");
    read(m, "motion_feature_dim", c.model.motion_feature_dim, "model");
    read(m, "latent_dim", c.model.latent_dim, "model");
    read(m, "predictor_feature_dim", c.model.predictor_feature_dim, "model");
    read(m, "recurrent_width", c.model.recurrent_width, "model");
    read(m, "predictor_layers", c.model.predictor_layers, "model");
    read(m, "gaussian_layers", c.model.gaussian_layers, "model");
    read(m, "num_classes", c.model.num_classes, "model");
    read(m, "encoder_widths", c.model.encoder_widths, "model");
    read(m, "content_convs_per_block", c.model.content_convs_per_block, "model");
    read(m, "motion_width_divisor", c.model.motion_width_divisor, "model");
  }
  if (const auto t = root["training"]) {
    check_keys(t, "training", {"beta", "learning_rate", "T", "t_p", "epochs", "batch_size", "seed",
                               "adam_beta1", "adam_beta2", "epsilon", "grad_clip_norm",
                               "checkpoint_every"});
    read(t, "beta", c.training.beta, "training");
    read(t, "learning_rate", c.training.learning_rate, "training");
    read(t, "T", c.training.T, "training");
    read(t, "t_p", c.training.t_p, "training");
    read(t, "epochs", c.training.epochs, "training");
    read(t, "batch_size", c.training.batch_size, "training");
    read(t, "seed", c.training.seed, "training");
    read(t, "adam_beta1", c.training.adam_beta1, "training");
    read(t, "adam_beta2", c.training.adam_beta2, "training");
    read(t, "epsilon", c.training.epsilon, "training");
    read(t, "grad_clip_norm", c.training.grad_clip_norm, "training");
    read(t, "checkpoint_every", c.training.checkpoint_every, "training");
  }
  if (const auto e = root["eval"]) {
    check_keys(e, "eval", {"horizon", "k", "metrics", "clip_count", "times", "variants",
                           "sampled_variants", "seed", "embedder_seed", "batch_size"});
    read(e, "horizon", c.eval.horizon, "eval");
    read(e, "k", c.eval.k, "eval");
    if (e["metrics"]) {
      std::vector<std::string> names;
      read(e, "metrics", names, "eval");
      c.eval.metrics.clear();
      try {
        for (const auto& n : names) c.eval.metrics.push_back(metric_from_string(n));
      } catch (const LookupError& err) {
        throw ParseError(std::string("config: eval.metrics: ") + err.what());
      }
    }
    read(e, "clip_count", c.eval.clip_count, "eval");
    read(e, "times", c.eval.times, "eval");
    read(e, "variants", c.eval.variants, "eval");
    read(e, "sampled_variants", c.eval.sampled_variants, "eval");
    read(e, "seed", c.eval.seed, "eval");
    read(e, "embedder_seed", c.eval.embedder_seed, "eval");
    read(e, "batch_size", c.eval.batch_size, "eval");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  try {
    return parse_config(ss.str(), base);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "variant" << YAML::Value << c.variant;
  out << YAML::Key << "output" << YAML::Value << c.output.string();
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << to_string(c.data.source);
  out << YAML::Key << "path" << YAML::Value << c.data.path.string();
  out << YAML::Key << "raw_path" << YAML::Value << c.data.raw_path.string();
  out << YAML::Key << "num_classes" << YAML::Value << c.data.num_classes;
  out << YAML::Key << "clips_per_class" << YAML::Value << c.data.clips_per_class;
  out << YAML::Key << "clip_length" << YAML::Value << c.data.clip_length;
  out << YAML::Key << "test_fraction" << YAML::Value << c.data.test_fraction;
  out << YAML::Key << "seed" << YAML::Value << c.data.seed;
  out << YAML::Key << "train_users" << YAML::Value << c.data.train_users;
  out << YAML::EndMap;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "frame_size" << YAML::Value << c.model.frame_size;
  out << YAML::Key << "channels" << YAML::Value << c.model.channels;
  out << YAML::Key << "content_feature_dim" << YAML::Value << c.model.content_feature_dim;
  out << YAML::Key << "motion_feature_dim" << YAML::Value << c.model.motion_feature_dim;
  out << YAML::Key << "latent_dim" << YAML::Value << c.model.latent_dim;
  out << YAML::Key << "predictor_feature_dim" << YAML::Value << c.model.predictor_feature_dim;
  out << YAML::Key << "recurrent_width" << YAML::Value << c.model.recurrent_width;
  out << YAML::Key << "predictor_layers" << YAML::Value << c.model.predictor_layers;
  out << YAML::Key << "gaussian_layers" << YAML::Value << c.model.gaussian_layers;
  out << YAML::Key << "num_classes" << YAML::Value << c.model.num_classes;
  out << YAML::Key << "encoder_widths" << YAML::Value << YAML::Flow << c.model.encoder_widths;
  out << YAML::Key << "content_convs_per_block" << YAML::Value << c.model.content_convs_per_block;
  out << YAML::Key << "motion_width_divisor" << YAML::Value << c.model.motion_width_divisor;
  out << YAML::EndMap;
  out << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "beta" << YAML::Value << c.training.beta;
  out << YAML::Key << "learning_rate" << YAML::Value << c.training.learning_rate;
  out << YAML::Key << "T" << YAML::Value << c.training.T;
  out << YAML::Key << "t_p" << YAML::Value << c.training.t_p;
  out << YAML::Key << "epochs" << YAML::Value << c.training.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << c.training.batch_size;
  out << YAML::Key << "seed" << YAML::Value << c.training.seed;
  out << YAML::Key << "adam_beta1" << YAML::Value << c.training.adam_beta1;
  out << YAML::Key << "adam_beta2" << YAML::Value << c.training.adam_beta2;
  out << YAML::Key << "epsilon" << YAML::Value << c.training.epsilon;
  out << YAML::Key << "grad_clip_norm" << YAML::Value << c.training.grad_clip_norm;
  out << YAML::Key << "checkpoint_every" << YAML::Value << c.training.checkpoint_every;
  out << YAML::EndMap;
  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "horizon" << YAML::Value << c.eval.horizon;
  out << YAML::Key << "k" << YAML::Value << c.eval.k;
  std::vector<std::string> metric_names;
  for (const auto m : c.eval.metrics) metric_names.push_back(to_string(m));
  out << YAML::Key << "metrics" << YAML::Value << YAML::Flow << metric_names;
  out << YAML::Key << "clip_count" << YAML::Value << c.eval.clip_count;
  out << YAML::Key << "times" << YAML::Value << YAML::Flow << c.eval.times;
  out << YAML::Key << "variants" << YAML::Value << YAML::Flow << c.eval.variants;
  out << YAML::Key << "sampled_variants" << YAML::Value << YAML::Flow << c.eval.sampled_variants;
  out << YAML::Key << "seed" << YAML::Value << c.eval.seed;
  out << YAML::Key << "embedder_seed" << YAML::Value << c.eval.embedder_seed;
  out << YAML::Key << "batch_size" << YAML::Value << c.eval.batch_size;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace tpg
