#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eua/data.hpp"
#include "eua/network.hpp"
#include "eua/probes.hpp"
#include "eua/split_runtime.hpp"
#include "eua/tensor.hpp"

namespace eua {

struct AttackFlags {
  bool norm = true;        // per-layer l2 normalization of the gradient terms
  bool multi_layer = true; // aggregate all edge key layers vs split point only
};

struct AttackConfig {
  float epsilon = 10.0f / 255.0f;
  float alpha = 2.0f / 255.0f;
  int epochs = 20;
  int batch = 100;
  AttackFlags flags;
  std::uint64_t seed = 0;
};

// A universal perturbation plus everything needed to reproduce it.
struct Perturbation {
  Tensor delta;  // (C,H,W), ||delta||_inf <= epsilon at all times
  float epsilon = 0.0f;
  float alpha = 0.0f;
  int target_class = -1;
  std::string edge_depth = "full";  // "1".."4", or "full" for whole-model attacks
  std::string method;  // edge_only | uap_targeted | uap_untargeted | random_sign
  bool norm = true;
  bool multi_layer = true;
  std::uint64_t seed = 0;
  int iterations = 0;  // batch update steps performed
  // Mean probe score (edge_only) or mean cross-entropy (classic) over d_opt,
  // recorded before the first epoch and after each one: epochs+1 entries.
  std::vector<double> score_trace;
};

// clip(x + delta, 0, 1), delta broadcast over the batch when x is (N,C,H,W).
Tensor apply_perturbation(const Tensor& x, const Tensor& delta);

// Elementwise clamp to [-epsilon, +epsilon].
Tensor project_linf(const Tensor& delta, float epsilon);

// Aggregated perturbation gradient: per active layer l, the gradient wrt
// delta of sum over the batch of sigmoid(probe_l(edge features at l of
// clip(x+delta,0,1))), each term l2-normalized (guard 1e-12) when normalize
// is set, then summed over layers.
Tensor phi(const EdgeNode& edge, const ProbeSet& probes,
           const std::vector<int>& active_layers, const Tensor& batch,
           const Tensor& delta, bool normalize);

// Ascent on the probe scores: delta <- clip_eps(delta + alpha * sign(phi))
// per batch, one shuffle per epoch.
Perturbation edge_only_uap(const EdgeNode& edge, const ProbeSet& probes,
                           const Dataset& d_opt, int target_class,
                           const AttackConfig& cfg);

enum class UapMode { Targeted, Untargeted };

// Full-knowledge baselines on the monolithic model: targeted descends the
// cross-entropy toward target_class, untargeted ascends it on the true
// labels (which an edge-only attacker would not have).
Perturbation classic_uap(const Model& model, const Dataset& d_opt,
                         const AttackConfig& cfg, UapMode mode, int target_class);

// Control baseline: each element is +-epsilon with equal probability.
Perturbation random_sign_perturbation(const Shape& shape, float epsilon,
                                      std::uint64_t seed);

void save_perturbation(const std::string& path, const Perturbation& p);
Perturbation load_perturbation(const std::string& path);

// Grayscale/RGB pixmap of delta mapped so 0 renders as middle gray:
// pixel = 0.5 + delta / (2 * epsilon).
void dump_perturbation_pixmap(const std::string& path, const Perturbation& p);

}  // namespace eua
