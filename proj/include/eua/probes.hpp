#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eua/data.hpp"
#include "eua/network.hpp"
#include "eua/split_runtime.hpp"
#include "eua/tensor.hpp"

namespace eua {

// Per-layer binary head that scores how target-like a feature map looks:
// conv CxC 3x3 (padding 1) -> adaptive average pool to 1x1 -> flatten ->
// fc C->128 -> relu -> fc 128->1. Already-flat rank-2 features skip the
// conv/pool stage and feed the fc path directly.
struct ProbeNet {
  int channels = 0;
  std::map<std::string, Tensor> params;  // conv.w conv.b fc1.w fc1.b fc2.w fc2.b
};

ProbeNet build_probe(int num_channels, std::uint64_t seed);
std::int64_t probe_param_count(const ProbeNet& p);

// One logit per sample, shape (N,1). Accepts (N,C,H,W) for any H,W >= 1, or
// (N,C) flat features.
Tensor probe_logit(const ProbeNet& p, const Tensor& features);
Tape::Id probe_logit_traced(Tape& tape, const ProbeNet& p, Tape::Id features,
                            bool train_params = false,
                            std::map<std::string, Tape::Id>* param_ids = nullptr);

struct ProbeMetrics {
  double final_bce = 0.0;          // mean training loss of the last epoch
  double heldout_accuracy = 0.0;   // percent, on the relabeled test split
};

struct ProbeSet {
  std::map<int, ProbeNet> probes;  // key-layer index -> probe
  std::map<int, ProbeMetrics> metrics;
  int target_class = 0;
  std::uint64_t seed = 0;
};

struct ProbeTrainConfig {
  int epochs = 50;
  float lr = 1e-3f;
  int batch = 100;
  std::uint64_t seed = 0;
  // Weight positive samples by |d_o|/|d_t| in the BCE to counter the class
  // imbalance of the tiny target set. Optional so the unweighted loss is a
  // flag away.
  bool use_pos_weight = true;
};

// Trains one probe per edge key layer on d_t (label 1) and d_o (label 0).
// Victim features are computed once and cached; the edge model is never
// modified. Deterministic for a fixed config.
ProbeSet train_probes(const EdgeNode& edge, const AttackSplits& splits,
                      const ProbeTrainConfig& cfg);

void save_probes(const std::string& path, const ProbeSet& ps);
ProbeSet load_probes(const std::string& path);

// Probe quality across attacker sample budgets: one row per
// (n_t, n_o, layer) cell, each cell trained from a derived seed on fresh
// splits. Returns CSV text, header n_t,n_o,depth,layer,heldout_accuracy.
std::string probe_sample_sweep(const Model& victim, const Dataset& pool,
                               int target_class, int depth,
                               const std::vector<int>& n_targets,
                               const std::vector<int>& n_others, int n_test,
                               std::uint64_t seed, const ProbeTrainConfig& cfg);

}  // namespace eua
