#include "tpg/metrics.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tpg/errors.hpp"
#include "tpg/video_data.hpp"

namespace tpg {

namespace {

void require_same_frame(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.dim() != 3 || a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": frames must be [C, H, W] with equal shapes, got " +
                     c10::str(a.sizes()) + " and " + c10::str(b.sizes()));
  }
}

torch::Tensor as_double_cpu(const torch::Tensor& t) {
  return t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<size_t>(size));
  const double centre = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    k[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable valid-mode filtering of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, int64_t h, int64_t w,
                                 const std::vector<double>& k) {
  const auto n = static_cast<int64_t>(k.size());
  const int64_t ow = w - n + 1;
  const int64_t oh = h - n + 1;
  std::vector<double> rows(static_cast<size_t>(h * ow));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y * w + x + i)];
      rows[static_cast<size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += k[static_cast<size_t>(i)] * rows[static_cast<size_t>((y + i) * ow + x)];
      out[static_cast<size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto c = t.contiguous();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

torch::Tensor single_clip(const torch::Tensor& predicted) {
  if (predicted.dim() == 5) {
    if (predicted.size(0) != 1) {
      throw ShapeError("best_of_k: each sample must hold exactly one clip, got batch " +
                       std::to_string(predicted.size(0)));
    }
    return predicted[0];
  }
  return predicted;
}

}  // namespace

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::psnr: return "psnr";
    case Metric::ssim: return "ssim";
    case Metric::feat_cosine: return "feat_cosine";
  }
  return "unknown";
}

Metric metric_from_string(std::string_view name) {
  for (const auto m : all_metrics()) {
    if (to_string(m) == name) return m;
  }
  throw LookupError("unknown metric '" + std::string(name) + "'");
}

const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> metrics{Metric::psnr, Metric::ssim, Metric::feat_cosine};
  return metrics;
}

double psnr_from_mse(double mse) {
  if (mse < 0.0 || std::isnan(mse)) throw ArgumentError("psnr: MSE must be >= 0");
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, -10.0 * std::log10(mse));
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_frame(a, b, "psnr");
  const auto da = as_double_cpu(a);
  const auto db = as_double_cpu(b);
  const double* pa = da.data_ptr<double>();
  const double* pb = db.data_ptr<double>();
  const int64_t n = da.numel();
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pa[i] - pb[i];
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(n));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options) {
  require_same_frame(a, b, "ssim");
  if (a.size(0) != 1 && a.size(0) != 3) {
    throw ShapeError("ssim: frames must have 1 or 3 channels, got " + std::to_string(a.size(0)));
  }
  const int64_t h = a.size(1);
  const int64_t w = a.size(2);
  if (h < options.window || w < options.window) {
    throw ShapeError("ssim: frame " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than the " + std::to_string(options.window) + "x" +
                     std::to_string(options.window) + " window");
  }
  const auto ga = to_vector(to_grayscale(as_double_cpu(a)));
  const auto gb = to_vector(to_grayscale(as_double_cpu(b)));
  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  const auto k = gaussian_kernel(options.window, options.sigma);
  const auto mu_a = filter_valid(ga, h, w, k);
  const auto mu_b = filter_valid(gb, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  const double c1 = std::pow(options.k1 * options.data_range, 2);
  const double c2 = std::pow(options.k2 * options.data_range, 2);
  double sum = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
    sum += num / den;
  }
  return sum / static_cast<double>(mu_a.size());
}

RandomConvEmbedder::RandomConvEmbedder(int64_t channels, uint64_t seed, int64_t dim) {
  namespace nn = torch::nn;
  net_ = nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(channels, 16, 3).stride(2).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(32, 64, 3).stride(2).padding(1)), nn::ReLU(),
      nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({4, 4})), nn::Flatten(),
      nn::Linear(64 * 16, dim));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard guard;
  for (auto& p : net_->named_parameters()) {
    auto& t = p.value();
    if (p.key().find("bias") != std::string::npos) {
      t.zero_();
    } else {
      const double fan_in = static_cast<double>(t.numel() / t.size(0));
      const double bound = std::sqrt(6.0 / fan_in);
      t.uniform_(-bound, bound, gen);
    }
    t.set_requires_grad(false);
  }
  net_->eval();
}

torch::Tensor RandomConvEmbedder::embed(const torch::Tensor& frames) {
  if (frames.dim() != 4) throw ShapeError("embed: frames must be [N, C, H, W]");
  torch::NoGradGuard guard;
  return net_->forward(frames.detach().to(torch::kCPU, torch::kFloat32));
}

double cosine_similarity(const torch::Tensor& u, const torch::Tensor& v) {
  if (u.sizes() != v.sizes()) throw ShapeError("cosine_similarity: vectors differ in shape");
  const auto du = to_vector(as_double_cpu(u).flatten());
  const auto dv = to_vector(as_double_cpu(v).flatten());
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (size_t i = 0; i < du.size(); ++i) {
    dot += du[i] * dv[i];
    nu += du[i] * du[i];
    nv += dv[i] * dv[i];
  }
  if (nu == 0.0 || nv == 0.0) return (nu == 0.0 && nv == 0.0) ? 1.0 : 0.0;
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

double feature_cosine(const torch::Tensor& a, const torch::Tensor& b, FrameEmbedder& embedder) {
  require_same_frame(a, b, "feature_cosine");
  const auto features = embedder.embed(torch::stack({a, b}));
  return tpg::cosine_similarity(features[0], features[1]);
}

std::vector<double> per_step_metric(const torch::Tensor& predicted, const torch::Tensor& truth,
                                    Metric metric, FrameEmbedder* embedder) {
  if (predicted.dim() != 4 || predicted.sizes() != truth.sizes()) {
    throw ShapeError("per_step_metric: sequences must be [H, C, H, W] with equal shapes, got " +
                     c10::str(predicted.sizes()) + " and " + c10::str(truth.sizes()));
  }
  const int64_t steps = predicted.size(0);
  std::vector<double> out(static_cast<size_t>(steps));
  if (metric == Metric::feat_cosine) {
    if (embedder == nullptr) throw ArgumentError("per_step_metric: feat_cosine needs an embedder");
    const auto fp = embedder->embed(predicted);
    const auto ft = embedder->embed(truth);
    for (int64_t i = 0; i < steps; ++i) out[static_cast<size_t>(i)] = tpg::cosine_similarity(fp[i], ft[i]);
    return out;
  }
  for (int64_t i = 0; i < steps; ++i) {
    out[static_cast<size_t>(i)] =
        metric == Metric::psnr ? psnr(predicted[i], truth[i]) : ssim(predicted[i], truth[i]);
  }
  return out;
}

double horizon_mean(const std::vector<double>& values) {
  if (values.empty()) throw ArgumentError("horizon_mean: empty series");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

size_t best_of_k_index(const std::vector<RolloutResult>& samples, const torch::Tensor& truth,
                       Metric metric, FrameEmbedder* embedder) {
  if (samples.empty()) throw ArgumentError("best_of_k: no samples");
  const auto target = single_clip(truth);
  size_t best = 0;
  double best_score = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto score = horizon_mean(per_step_metric(single_clip(samples[i].predicted), target,
                                                    metric, embedder));
    if (i == 0 || score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

const RolloutResult& best_of_k(const std::vector<RolloutResult>& samples, const torch::Tensor& truth,
                               Metric metric, FrameEmbedder* embedder) {
  return samples[best_of_k_index(samples, truth, metric, embedder)];
}

AggregateTable AggregateTable::at_times(const std::vector<int64_t>& times) const {
  const std::set<int64_t> wanted(times.begin(), times.end());
  AggregateTable out;
  for (const auto& row : rows) {
    if (wanted.count(row.t) != 0) out.rows.push_back(row);
  }
  return out;
}

std::vector<std::pair<int64_t, double>> AggregateTable::curve(const std::string& variant,
                                                              Metric metric) const {
  std::vector<std::pair<int64_t, double>> out;
  for (const auto& row : rows) {
    if (row.variant == variant && row.metric == metric) out.emplace_back(row.t, row.mean);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> AggregateTable::variants() const {
  std::vector<std::string> out;
  for (const auto& row : rows) {
    if (std::find(out.begin(), out.end(), row.variant) == out.end()) out.push_back(row.variant);
  }
  return out;
}

std::vector<Metric> AggregateTable::metrics() const {
  std::vector<Metric> out;
  for (const auto& row : rows) {
    if (std::find(out.begin(), out.end(), row.metric) == out.end()) out.push_back(row.metric);
  }
  return out;
}

void AggregateTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kAggregateCsvHeader << '\n';
  char buf[64];
  for (const auto& row : rows) {
    out << row.variant << ',' << to_string(row.metric) << ',' << row.t;
    std::snprintf(buf, sizeof(buf), ",%.10g,%.10g", row.mean, row.std);
    out << buf << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

AggregateTable AggregateTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kAggregateCsvHeader) {
    throw ParseError(path.string() + ": expected header '" + kAggregateCsvHeader + "'");
  }
  AggregateTable table;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    }
    try {
      AggregateRow row;
      row.variant = fields[0];
      row.metric = metric_from_string(fields[1]);
      row.t = std::stoll(fields[2]);
      row.mean = std::stod(fields[3]);
      row.std = std::stod(fields[4]);
      table.rows.push_back(row);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

AggregateTable aggregate(const std::vector<MetricSeries>& series) {
  struct Group {
    std::string variant;
    Metric metric;
    std::vector<const MetricSeries*> members;
  };
  std::vector<Group> groups;
  for (const auto& s : series) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.variant == s.variant && g.metric == s.metric;
    });
    if (it == groups.end()) {
      groups.push_back({s.variant, s.metric, {}});
      it = std::prev(groups.end());
    }
    it->members.push_back(&s);
  }

  std::multiset<std::string> reference_clips;
  AggregateTable table;
  for (size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    const auto* first = group.members.front();
    std::multiset<std::string> clips;
    for (const auto* s : group.members) {
      if (s->per_step.size() != first->per_step.size() || s->first_t != first->first_t) {
        throw ArgumentError("aggregate: series for " + group.variant + "/" +
                            to_string(group.metric) + " cover different time ranges");
      }
      clips.insert(s->clip_id);
    }
    if (g == 0) {
      reference_clips = clips;
    } else if (clips != reference_clips) {
      throw ArgumentError("aggregate: " + group.variant + "/" + to_string(group.metric) +
                          " was evaluated on a different clip set");
    }
    const double n = static_cast<double>(group.members.size());
    for (size_t i = 0; i < first->per_step.size(); ++i) {
      double sum = 0.0;
      for (const auto* s : group.members) sum += s->per_step[i];
      const double mean = sum / n;
      double sq = 0.0;
      for (const auto* s : group.members) sq += (s->per_step[i] - mean) * (s->per_step[i] - mean);
      table.rows.push_back(
          {group.variant, group.metric, first->first_t + static_cast<int64_t>(i), mean, std::sqrt(sq / n)});
    }
  }
  return table;
}

}  // namespace tpg
