#include "eua/adam.hpp"

#include <cmath>

namespace eua {

void adam_step(std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.step));

  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    const Tensor* g = git != grads.end() ? &git->second : nullptr;
    if (g) {
      if (!g->same_shape(p))
        throw ShapeError("adam: gradient shape " + shape_str(g->shape()) +
                         " != parameter '" + name + "' shape " + shape_str(p.shape()));
      if (!g->all_finite())
        throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
    }
    Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const float gi = g ? (*g)[i] : 0.0f;
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace eua
