#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eua/attacks.hpp"
#include "eua/data.hpp"
#include "eua/network.hpp"
#include "eua/probes.hpp"
#include "eua/split_runtime.hpp"

namespace eua {

struct EvalReport {
  std::string method = "none";
  std::string edge_depth = "-";
  float epsilon = 0.0f;
  float alpha = 0.0f;
  bool norm = true;
  bool multi_layer = true;
  int target_class = -1;
  std::uint64_t seed = 0;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double target_success_rate = 0.0;  // % of predictions equal to target_class
  int test_count = 0;
  std::vector<std::pair<int, int>> top_k_histogram;  // (class, count), desc count
  // Wall-clock diagnostics for the console; deliberately excluded from the
  // serialized report so identical inputs give identical bytes.
  double runtime_seconds = 0.0;
};

// Clean and perturbed top-1 accuracy plus target success rate over the test
// set; delta may be null for a clean-only report (target_class then supplies
// the TSR reference class; -1 disables TSR).
EvalReport evaluate(const EdgeNode& edge, const CloudNode& cloud,
                    const Dataset& test, const Perturbation* delta,
                    int target_class = -1);

// Stable-schema JSON ("v1"): fixed field order, floats at 4 decimals.
std::string report_json(const EvalReport& r);

// Top-k predicted classes under delta (null = clean), sorted by count
// descending then class ascending.
std::vector<std::pair<int, int>> prediction_histogram(const EdgeNode& edge,
                                                      const CloudNode& cloud,
                                                      const Dataset& test,
                                                      const Perturbation* delta,
                                                      int k);

// Flattened per-layer feature matrices for every sample, plus one extra row
// per perturbed variant of the chosen probe sample. Written as a
// self-describing container; projection (e.g. T-SNE) is left to external
// tooling.
void export_features(const EdgeNode& edge, const std::vector<int>& layers,
                     const Dataset& samples,
                     const std::vector<Perturbation>& variants,
                     int probe_sample_index, const std::string& out_path);

inline constexpr const char* kCsvHeader =
    "method,depth,norm,multi_layer,epsilon,target_class,clean_acc,attacked_acc,"
    "tsr,seed\n";

// 2x2x4 flag/depth grid of edge-only attacks: probes are trained once per
// depth, each cell attack runs with seed base_seed + cell_index. Returns CSV
// text including the header.
std::string run_ablation_grid(const Model& model, const AttackSplits& splits,
                              const AttackConfig& base, std::uint64_t base_seed,
                              const ProbeTrainConfig& probe_cfg);

// One edge-only row per (epsilon, depth) plus a random-sign control row per
// epsilon (depth column 0). Epsilons must be ascending.
std::string run_epsilon_sweep(const Model& model, const AttackSplits& splits,
                              const std::vector<float>& epsilons,
                              const AttackConfig& base, std::uint64_t base_seed,
                              const ProbeTrainConfig& probe_cfg);

}  // namespace eua
