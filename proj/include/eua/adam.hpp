#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "eua/tensor.hpp"

namespace eua {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  std::map<std::string, Tensor> m;  // first moments, allocated lazily
  std::map<std::string, Tensor> v;  // second moments
  std::int64_t step = 0;
};

// One bias-corrected Adam update, in place. Parameters without a matching
// gradient entry are treated as zero-gradient. Throws NumericError naming the
// parameter if its gradient is non-finite.
void adam_step(std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace eua
