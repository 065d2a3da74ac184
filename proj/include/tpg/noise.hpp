#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>

namespace tpg {

// Supplies the standard-normal draws consumed by reparameterised sampling.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual torch::Tensor normal(at::IntArrayRef shape, const torch::TensorOptions& options) = 0;
};

// Seeded standard-normal stream; the same seed replays the same draws.
class GaussianNoise final : public NoiseSource {
 public:
  explicit GaussianNoise(uint64_t seed);
  torch::Tensor normal(at::IntArrayRef shape, const torch::TensorOptions& options) override;

 private:
  at::Generator generator_;
};

// All-zero "noise": reparameterised samples collapse onto the means.
class ZeroNoise final : public NoiseSource {
 public:
  torch::Tensor normal(at::IntArrayRef shape, const torch::TensorOptions& options) override;
};

}  // namespace tpg
