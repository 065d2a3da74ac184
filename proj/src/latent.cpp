#include "tpg/latent.hpp"

#include "tpg/errors.hpp"

namespace tpg {

namespace {

torch::Tensor as_rows(const torch::Tensor& t) { return t.dim() == 1 ? t.unsqueeze(0) : t; }

void check_width(const torch::Tensor& t, int64_t width, const char* what) {
  if (!t.defined() || t.dim() != 2 || t.size(1) != width) {
    throw ShapeError(std::string("assemble_latent: ") + what + " must be [B, " +
                     std::to_string(width) + "]");
  }
}

}  // namespace

std::string LatentMask::describe() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += name;
  };
  add(content, "content");
  add(motion, "motion");
  add(label, "label");
  return out.empty() ? "none" : out;
}

torch::Tensor TernaryLatent::concatenated() const {
  std::vector<torch::Tensor> parts;
  if (mask.content) parts.push_back(content);
  if (mask.motion) parts.push_back(motion);
  if (mask.label) parts.push_back(label);
  return torch::cat(parts, 1);
}

int64_t TernaryLatent::width() const {
  int64_t w = 0;
  if (mask.content) w += content.size(1);
  if (mask.motion) w += motion.size(1);
  if (mask.label) w += label.size(1);
  return w;
}

TernaryLatent assemble_latent(const torch::Tensor& content, const torch::Tensor& motion,
                              const torch::Tensor& label, const LatentMask& mask,
                              int64_t latent_dim, int64_t num_classes) {
  TernaryLatent z;
  z.mask = mask;
  if (mask.content) {
    z.content = as_rows(content);
    check_width(z.content, latent_dim, "content part");
  }
  if (mask.motion) {
    z.motion = as_rows(motion);
    check_width(z.motion, latent_dim, "motion part");
  }
  if (mask.label) {
    z.label = as_rows(label);
    check_width(z.label, num_classes, "label part");
    const auto binary = (z.label == 0).logical_or(z.label == 1).all().item<bool>();
    const auto single = (z.label.sum(1) == 1).all().item<bool>();
    if (!binary || !single) throw ArgumentError("assemble_latent: label part is not one-hot");
  }
  const std::vector<torch::Tensor*> present{mask.content ? &z.content : nullptr,
                                            mask.motion ? &z.motion : nullptr,
                                            mask.label ? &z.label : nullptr};
  int64_t batch = -1;
  for (auto* t : present) {
    if (t == nullptr) continue;
    if (batch >= 0 && t->size(0) != batch) throw ShapeError("assemble_latent: batch sizes differ");
    batch = t->size(0);
  }
  if (batch < 0) throw ArgumentError("assemble_latent: mask selects no latent part");
  return z;
}

RecurrentState RecurrentState::zeros(int64_t layers, int64_t batch, int64_t width,
                                     const torch::TensorOptions& options) {
  RecurrentState s;
  for (int64_t l = 0; l < layers; ++l) {
    s.hidden.push_back(torch::zeros({batch, width}, options));
    s.cell.push_back(torch::zeros({batch, width}, options));
  }
  return s;
}

RecurrentState RecurrentState::clone() const {
  RecurrentState s;
  for (const auto& h : hidden) s.hidden.push_back(h.clone());
  for (const auto& c : cell) s.cell.push_back(c.clone());
  return s;
}

}  // namespace tpg
