#include "eua/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "eua/adam.hpp"
#include "eua/serialize.hpp"

namespace eua {

namespace {

Tensor kaiming_uniform(Shape shape, std::uint64_t seed) {
  Tensor w(std::move(shape));
  std::int64_t fan_in = 1;
  for (std::size_t i = 1; i < w.shape().size(); ++i) fan_in *= w.shape()[i];
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  Rng rng(seed);
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform_float(-bound, bound);
  return w;
}

// Row subset of a (N, ...) tensor.
Tensor rows(const Tensor& t, const std::vector<int>& idx) {
  Shape s = t.shape();
  const std::int64_t stride = t.numel() / s[0];
  s[0] = static_cast<int>(idx.size());
  Tensor out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * stride,
                t.data() + idx[i] * stride,
                static_cast<std::size_t>(stride) * sizeof(float));
  return out;
}

}  // namespace

ProbeNet build_probe(int num_channels, std::uint64_t seed) {
  if (num_channels < 1)
    throw ShapeError("build_probe: need at least 1 channel, got " +
                     std::to_string(num_channels));
  ProbeNet p;
  p.channels = num_channels;
  p.params.emplace("conv.w", kaiming_uniform({num_channels, num_channels, 3, 3},
                                             Rng::derive(seed, 1)));
  p.params.emplace("conv.b", Tensor::zeros({num_channels}));
  p.params.emplace("fc1.w", kaiming_uniform({128, num_channels}, Rng::derive(seed, 2)));
  p.params.emplace("fc1.b", Tensor::zeros({128}));
  p.params.emplace("fc2.w", kaiming_uniform({1, 128}, Rng::derive(seed, 3)));
  p.params.emplace("fc2.b", Tensor::zeros({1}));
  return p;
}

std::int64_t probe_param_count(const ProbeNet& p) {
  std::int64_t n = 0;
  for (const auto& [name, t] : p.params) n += t.numel();
  return n;
}

Tape::Id probe_logit_traced(Tape& tape, const ProbeNet& p, Tape::Id features,
                            bool train_params,
                            std::map<std::string, Tape::Id>* param_ids) {
  auto leaf = [&](const char* name) {
    Tape::Id id = tape.leaf(p.params.at(name), train_params);
    if (param_ids) param_ids->emplace(name, id);
    return id;
  };
  const int rank = tape.value(features).rank();
  Tape::Id x = features;
  if (rank > 2) {
    if (tape.value(features).dim(1) != p.channels)
      throw ShapeError("probe: feature channels " +
                       std::to_string(tape.value(features).dim(1)) +
                       " do not match probe channels " + std::to_string(p.channels));
    x = tape.conv2d(x, leaf("conv.w"), leaf("conv.b"), {1, 1});
    x = tape.flatten(tape.adaptive_avgpool2d(x, 1, 1));
  } else if (tape.value(features).dim(1) != p.channels) {
    throw ShapeError("probe: flat feature width " +
                     std::to_string(tape.value(features).dim(1)) +
                     " does not match probe channels " + std::to_string(p.channels));
  }
  x = tape.relu(tape.linear(x, leaf("fc1.w"), leaf("fc1.b")));
  return tape.linear(x, leaf("fc2.w"), leaf("fc2.b"));
}

Tensor probe_logit(const ProbeNet& p, const Tensor& features) {
  Tape tape;
  return tape.value(probe_logit_traced(tape, p, tape.leaf(features)));
}

namespace {

// Features of every sample at every edge key layer, in evaluation chunks.
std::map<int, Tensor> cached_taps(const EdgeNode& edge, const Tensor& images,
                                  int chunk) {
  const int n = images.dim(0);
  std::map<int, Tensor> full;
  for (int start = 0; start < n; start += chunk) {
    const int stop = std::min(n, start + chunk);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const std::map<int, Tensor> part = edge.extract_taps(rows(images, idx));
    for (const auto& [layer, feat] : part) {
      if (!full.count(layer)) {
        Shape s = feat.shape();
        s[0] = n;
        full.emplace(layer, Tensor(s));
      }
      Tensor& dst = full.at(layer);
      const std::int64_t stride = feat.numel() / feat.dim(0);
      std::memcpy(dst.data() + start * stride, feat.data(),
                  static_cast<std::size_t>(feat.numel()) * sizeof(float));
    }
  }
  return full;
}

double heldout_binary_accuracy(const ProbeNet& probe, const Tensor& features,
                               const std::vector<float>& targets, int chunk) {
  const int n = features.dim(0);
  int hit = 0;
  for (int start = 0; start < n; start += chunk) {
    const int stop = std::min(n, start + chunk);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = probe_logit(probe, rows(features, idx));
    for (int i = 0; i < stop - start; ++i) {
      const bool pred = logits[i] > 0.0f;  // sigmoid(z) > 0.5
      const bool want = targets[static_cast<std::size_t>(start + i)] > 0.5f;
      if (pred == want) ++hit;
    }
  }
  return n > 0 ? 100.0 * hit / n : 0.0;
}

}  // namespace

ProbeSet train_probes(const EdgeNode& edge, const AttackSplits& splits,
                      const ProbeTrainConfig& cfg) {
  const int nt = splits.d_t.size();
  const int no = splits.d_o.size();
  if (nt == 0) throw ShapeError("train_probes: empty target set d_t");
  if (no == 0) throw ShapeError("train_probes: empty non-target set d_o");
  for (int l : splits.d_t.labels)
    if (l != splits.target_class)
      throw ShapeError("train_probes: d_t contains a non-target label");

  // one combined pass caches h^l for all of D = d_t u d_o, per key layer
  const int n = nt + no;
  const Dataset combined = concat(splits.d_t, splits.d_o);
  std::vector<float> targets(static_cast<std::size_t>(n), 0.0f);
  for (int i = 0; i < nt; ++i) targets[static_cast<std::size_t>(i)] = 1.0f;

  const std::map<int, Tensor> feats = cached_taps(edge, combined.images, cfg.batch);

  // relabeled held-out split for reporting
  std::map<int, Tensor> test_feats;
  std::vector<float> test_targets;
  if (splits.test.size() > 0) {
    test_feats = cached_taps(edge, splits.test.images, cfg.batch);
    test_targets.resize(static_cast<std::size_t>(splits.test.size()));
    for (int i = 0; i < splits.test.size(); ++i)
      test_targets[static_cast<std::size_t>(i)] =
          splits.test.labels[static_cast<std::size_t>(i)] == splits.target_class
              ? 1.0f
              : 0.0f;
  }

  const float pw = cfg.use_pos_weight
                       ? static_cast<float>(no) / static_cast<float>(nt)
                       : 1.0f;

  ProbeSet ps;
  ps.target_class = splits.target_class;
  ps.seed = cfg.seed;

  for (const auto& [layer, cached] : feats) {
    const int channels = cached.dim(1);
    ProbeNet probe =
        build_probe(channels, Rng::derive(cfg.seed, 100 + static_cast<std::uint64_t>(layer)));
    AdamState opt;
    AdamConfig ocfg;
    ocfg.lr = cfg.lr;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    double epoch_loss = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng shuffle_rng(Rng::derive(cfg.seed, 5000 +
                                               static_cast<std::uint64_t>(layer) * 1000 +
                                               static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      epoch_loss = 0.0;
      for (int start = 0; start < n; start += cfg.batch) {
        const int stop = std::min(n, start + cfg.batch);
        const std::vector<int> idx(order.begin() + start, order.begin() + stop);
        std::vector<float> bt(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
          bt[i] = targets[static_cast<std::size_t>(idx[i])];

        Tape tape;
        std::map<std::string, Tape::Id> pid;
        const Tape::Id logits = probe_logit_traced(
            tape, probe, tape.leaf(rows(cached, idx)), /*train_params=*/true, &pid);
        const Tape::Id loss = tape.sigmoid_bce(logits, bt, pw);
        epoch_loss += static_cast<double>(tape.value(loss)[0]) * (stop - start);

        GradMap grads = tape.backward(loss);
        std::map<std::string, Tensor> named;
        for (const auto& [name, id] : pid) {
          auto it = grads.find(id);
          if (it != grads.end()) named.emplace(name, std::move(it->second));
        }
        adam_step(probe.params, named, opt, ocfg);
      }
      epoch_loss /= n;
    }

    ProbeMetrics metrics;
    metrics.final_bce = epoch_loss;
    if (!test_targets.empty())
      metrics.heldout_accuracy = heldout_binary_accuracy(probe, test_feats.at(layer),
                                                         test_targets, cfg.batch);
    ps.metrics.emplace(layer, metrics);
    ps.probes.emplace(layer, std::move(probe));
  }
  return ps;
}

void save_probes(const std::string& path, const ProbeSet& ps) {
  Container c;
  c.kind = "probes";
  c.meta["target_class"] = ps.target_class;
  c.meta["seed"] = ps.seed;
  Json layers = Json::array();
  for (const auto& [layer, probe] : ps.probes) {
    Json entry;
    entry["layer"] = layer;
    entry["channels"] = probe.channels;
    const auto mit = ps.metrics.find(layer);
    if (mit != ps.metrics.end()) {
      entry["final_bce"] = mit->second.final_bce;
      entry["heldout_accuracy"] = mit->second.heldout_accuracy;
    }
    layers.push_back(std::move(entry));
    for (const auto& [name, t] : probe.params)
      c.add("l" + std::to_string(layer) + "/" + name, t);
  }
  c.meta["layers"] = std::move(layers);
  save_container(path, c);
}

ProbeSet load_probes(const std::string& path) {
  Container c = load_container(path, "probes");
  ProbeSet ps;
  try {
    ps.target_class = c.meta.at("target_class").get<int>();
    ps.seed = c.meta.value("seed", 0ull);
    for (const auto& entry : c.meta.at("layers")) {
      const int layer = entry.at("layer").get<int>();
      ProbeNet probe;
      probe.channels = entry.at("channels").get<int>();
      for (const char* name :
           {"conv.w", "conv.b", "fc1.w", "fc1.b", "fc2.w", "fc2.b"})
        probe.params.emplace(name, c.tensor("l" + std::to_string(layer) + "/" + name));
      ProbeMetrics metrics;
      metrics.final_bce = entry.value("final_bce", 0.0);
      metrics.heldout_accuracy = entry.value("heldout_accuracy", 0.0);
      ps.metrics.emplace(layer, metrics);
      ps.probes.emplace(layer, std::move(probe));
    }
  } catch (const Json::exception& e) {
    throw FormatError(path + ": bad probe header: " + e.what());
  }
  return ps;
}

std::string probe_sample_sweep(const Model& victim, const Dataset& pool,
                               int target_class, int depth,
                               const std::vector<int>& n_targets,
                               const std::vector<int>& n_others, int n_test,
                               std::uint64_t seed, const ProbeTrainConfig& cfg) {
  std::string csv = "n_t,n_o,depth,layer,heldout_accuracy\n";
  std::uint64_t cell = 0;
  for (int nt : n_targets) {
    for (int no : n_others) {
      const std::uint64_t cell_seed = Rng::derive(seed, cell++);
      const AttackSplits splits = make_attack_splits(
          pool, target_class, nt, no, /*n_opt=*/1, n_test, cell_seed);
      auto [edge, cloud] = split_model(victim, depth);
      (void)cloud;
      ProbeTrainConfig cell_cfg = cfg;
      cell_cfg.seed = cell_seed;
      const ProbeSet ps = train_probes(edge, splits, cell_cfg);
      for (const auto& [layer, metrics] : ps.metrics) {
        char line[128];
        std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.4f\n", nt, no, depth, layer,
                      metrics.heldout_accuracy);
        csv += line;
      }
    }
  }
  return csv;
}

}  // namespace eua
