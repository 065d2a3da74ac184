#include "tpg/noise.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace tpg {

GaussianNoise::GaussianNoise(uint64_t seed)
    : generator_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

torch::Tensor GaussianNoise::normal(at::IntArrayRef shape, const torch::TensorOptions& options) {
  return torch::randn(shape, generator_, options.requires_grad(false));
}

torch::Tensor ZeroNoise::normal(at::IntArrayRef shape, const torch::TensorOptions& options) {
  return torch::zeros(shape, options.requires_grad(false));
}

}  // namespace tpg
