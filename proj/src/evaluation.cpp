#include "eua/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "eua/serialize.hpp"

namespace eua {

namespace {

constexpr int kEvalChunk = 100;

std::vector<int> split_predict(const EdgeNode& edge, const CloudNode& cloud,
                               const Dataset& d, const Tensor* delta) {
  std::vector<int> preds;
  preds.reserve(static_cast<std::size_t>(d.size()));
  for (int start = 0; start < d.size(); start += kEvalChunk) {
    const int stop = std::min(d.size(), start + kEvalChunk);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor batch = gather(d, idx).images;
    if (delta) batch = apply_perturbation(batch, *delta);
    const Tensor logits = cloud.finish(edge.extract(batch));
    const int n = logits.dim(0), k = logits.dim(1);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      float bv = logits[static_cast<std::int64_t>(i) * k];
      for (int c = 1; c < k; ++c) {
        const float v = logits[static_cast<std::int64_t>(i) * k + c];
        if (v > bv) {  // ties keep the lowest class index
          bv = v;
          best = c;
        }
      }
      preds.push_back(best);
    }
  }
  return preds;
}

double label_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) return 0.0;
  int hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hit;
  return 100.0 * hit / static_cast<double>(preds.size());
}

std::vector<std::pair<int, int>> count_histogram(const std::vector<int>& preds,
                                                 int class_count, int k) {
  std::vector<std::pair<int, int>> hist;
  hist.reserve(static_cast<std::size_t>(class_count));
  for (int c = 0; c < class_count; ++c) hist.emplace_back(c, 0);
  for (int p : preds)
    if (p >= 0 && p < class_count) ++hist[static_cast<std::size_t>(p)].second;
  std::sort(hist.begin(), hist.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (k < static_cast<int>(hist.size())) hist.resize(static_cast<std::size_t>(k));
  return hist;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

EvalReport evaluate(const EdgeNode& edge, const CloudNode& cloud,
                    const Dataset& test, const Perturbation* delta,
                    int target_class) {
  if (test.size() == 0) throw ShapeError("evaluate: empty test set");
  if (static_cast<int>(test.labels.size()) != test.size())
    throw ShapeError("evaluate: test set is unlabeled");
  const auto t0 = std::chrono::steady_clock::now();

  EvalReport r;
  if (delta) {
    if (delta->delta.shape() != test.sample_shape())
      throw ShapeError("evaluate: delta shape " + shape_str(delta->delta.shape()) +
                       " does not match samples " + shape_str(test.sample_shape()));
    r.method = delta->method;
    r.edge_depth = delta->edge_depth;
    r.epsilon = delta->epsilon;
    r.alpha = delta->alpha;
    r.norm = delta->norm;
    r.multi_layer = delta->multi_layer;
    r.seed = delta->seed;
    r.target_class = delta->target_class >= 0 ? delta->target_class : target_class;
  } else {
    r.target_class = target_class;
  }
  r.test_count = test.size();

  const std::vector<int> clean = split_predict(edge, cloud, test, nullptr);
  const std::vector<int> attacked =
      delta ? split_predict(edge, cloud, test, &delta->delta) : clean;

  r.clean_accuracy = label_accuracy(clean, test.labels);
  r.attacked_accuracy = label_accuracy(attacked, test.labels);
  if (r.target_class >= 0) {
    int hits = 0;
    for (int p : attacked)
      if (p == r.target_class) ++hits;
    r.target_success_rate = 100.0 * hits / static_cast<double>(attacked.size());
  }
  r.top_k_histogram = count_histogram(attacked, test.class_count, test.class_count);

  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string report_json(const EvalReport& r) {
  std::string out = "{\n";
  out += "  \"version\": \"v1\",\n";
  out += "  \"method\": \"" + r.method + "\",\n";
  out += "  \"edge_depth\": \"" + r.edge_depth + "\",\n";
  out += "  \"epsilon\": " + fmt4(r.epsilon) + ",\n";
  out += "  \"alpha\": " + fmt4(r.alpha) + ",\n";
  out += std::string("  \"norm\": ") + (r.norm ? "true" : "false") + ",\n";
  out += std::string("  \"multi_layer\": ") + (r.multi_layer ? "true" : "false") + ",\n";
  out += "  \"target_class\": " + std::to_string(r.target_class) + ",\n";
  out += "  \"seed\": " + std::to_string(r.seed) + ",\n";
  out += "  \"test_count\": " + std::to_string(r.test_count) + ",\n";
  out += "  \"clean_accuracy\": " + fmt4(r.clean_accuracy) + ",\n";
  out += "  \"attacked_accuracy\": " + fmt4(r.attacked_accuracy) + ",\n";
  out += "  \"target_success_rate\": " + fmt4(r.target_success_rate) + ",\n";
  out += "  \"top_k_histogram\": [";
  for (std::size_t i = 0; i < r.top_k_histogram.size(); ++i) {
    if (i) out += ", ";
    out += "[" + std::to_string(r.top_k_histogram[i].first) + ", " +
           std::to_string(r.top_k_histogram[i].second) + "]";
  }
  out += "]\n}\n";
  return out;
}

std::vector<std::pair<int, int>> prediction_histogram(const EdgeNode& edge,
                                                      const CloudNode& cloud,
                                                      const Dataset& test,
                                                      const Perturbation* delta,
                                                      int k) {
  if (k < 1) throw ShapeError("prediction_histogram: k must be >= 1");
  const std::vector<int> preds =
      split_predict(edge, cloud, test, delta ? &delta->delta : nullptr);
  return count_histogram(preds, test.class_count, k);
}

void export_features(const EdgeNode& edge, const std::vector<int>& layers,
                     const Dataset& samples,
                     const std::vector<Perturbation>& variants,
                     int probe_sample_index, const std::string& out_path) {
  if (samples.size() == 0) throw ShapeError("export_features: empty sample set");
  if (!variants.empty() &&
      (probe_sample_index < 0 || probe_sample_index >= samples.size()))
    throw ShapeError("export_features: probe sample index out of range");

  Container c;
  c.kind = "features";
  c.meta["count"] = samples.size();
  c.meta["labels"] = samples.labels;
  c.meta["layers"] = layers;
  c.meta["probe_sample_index"] = variants.empty() ? -1 : probe_sample_index;
  Json vm = Json::array();
  for (const Perturbation& v : variants) vm.push_back(v.method);
  c.meta["variant_methods"] = std::move(vm);

  const int rows_total = samples.size() + static_cast<int>(variants.size());
  for (int layer : layers) {
    Tensor matrix;  // (rows_total, F), filled in chunks
    std::int64_t feat_len = 0;
    for (int start = 0; start < samples.size(); start += kEvalChunk) {
      const int stop = std::min(samples.size(), start + kEvalChunk);
      std::vector<int> idx(static_cast<std::size_t>(stop - start));
      std::iota(idx.begin(), idx.end(), start);
      std::map<int, Tensor> taps;
      run_layers(edge.model(), gather(samples, idx).images, 0, layer + 1, {layer},
                 &taps);
      const Tensor flat = ops::flatten(taps.at(layer));
      if (feat_len == 0) {
        feat_len = flat.dim(1);
        matrix = Tensor({rows_total, static_cast<int>(feat_len)});
      }
      std::memcpy(matrix.data() + static_cast<std::int64_t>(start) * feat_len,
                  flat.data(),
                  static_cast<std::size_t>(flat.numel()) * sizeof(float));
    }
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const Tensor one = sample_image(samples, probe_sample_index);
      const Tensor adv = apply_perturbation(
          one.reshaped({1, one.dim(0), one.dim(1), one.dim(2)}), variants[v].delta);
      std::map<int, Tensor> taps;
      run_layers(edge.model(), adv, 0, layer + 1, {layer}, &taps);
      const Tensor flat = ops::flatten(taps.at(layer));
      std::memcpy(matrix.data() +
                      (static_cast<std::int64_t>(samples.size()) + static_cast<std::int64_t>(v)) *
                          feat_len,
                  flat.data(),
                  static_cast<std::size_t>(flat.numel()) * sizeof(float));
    }
    c.add("l" + std::to_string(layer) + "/features", std::move(matrix));
  }
  save_container(out_path, c);
}

namespace {

std::string csv_row(const std::string& method, const std::string& depth, bool norm,
                    bool multi, float eps, int target, double clean, double attacked,
                    double tsr, std::uint64_t seed) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%d,%.6f,%d,%.4f,%.4f,%.4f,%llu\n",
                method.c_str(), depth.c_str(), norm ? 1 : 0, multi ? 1 : 0,
                static_cast<double>(eps), target, clean, attacked, tsr,
                static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

std::string run_ablation_grid(const Model& model, const AttackSplits& splits,
                              const AttackConfig& base, std::uint64_t base_seed,
                              const ProbeTrainConfig& probe_cfg) {
  std::string csv = kCsvHeader;
  std::uint64_t cell = 0;
  for (const bool norm : {true, false}) {
    for (const bool multi : {true, false}) {
      for (int depth = 1; depth <= 4; ++depth) {
        auto [edge, cloud] = split_model(model, depth);
        ProbeTrainConfig pc = probe_cfg;
        pc.seed = Rng::derive(base_seed, 9000 + static_cast<std::uint64_t>(depth));
        const ProbeSet probes = train_probes(edge, splits, pc);

        AttackConfig cfg = base;
        cfg.flags.norm = norm;
        cfg.flags.multi_layer = multi;
        cfg.seed = base_seed + cell;
        const Perturbation p =
            edge_only_uap(edge, probes, splits.d_opt, splits.target_class, cfg);
        const EvalReport r = evaluate(edge, cloud, splits.test, &p);
        csv += csv_row(r.method, r.edge_depth, r.norm, r.multi_layer, r.epsilon,
                       r.target_class, r.clean_accuracy, r.attacked_accuracy,
                       r.target_success_rate, r.seed);
        ++cell;
      }
    }
  }
  return csv;
}

std::string run_epsilon_sweep(const Model& model, const AttackSplits& splits,
                              const std::vector<float>& epsilons,
                              const AttackConfig& base, std::uint64_t base_seed,
                              const ProbeTrainConfig& probe_cfg) {
  if (epsilons.empty()) throw ShapeError("run_epsilon_sweep: no epsilons");
  for (std::size_t i = 1; i < epsilons.size(); ++i)
    if (!(epsilons[i] > epsilons[i - 1]))
      throw ShapeError("run_epsilon_sweep: epsilons must be strictly ascending");

  // probes are shared across epsilons: one training per depth
  std::map<int, ProbeSet> probes_by_depth;
  std::map<int, std::pair<EdgeNode, CloudNode>> nodes;
  for (int depth = 1; depth <= 4; ++depth) {
    auto pair = split_model(model, depth);
    ProbeTrainConfig pc = probe_cfg;
    pc.seed = Rng::derive(base_seed, 9000 + static_cast<std::uint64_t>(depth));
    probes_by_depth.emplace(depth, train_probes(pair.first, splits, pc));
    nodes.emplace(depth, std::move(pair));
  }

  std::string csv = kCsvHeader;
  std::uint64_t cell = 0;
  for (const float eps : epsilons) {
    for (int depth = 1; depth <= 4; ++depth) {
      auto& [edge, cloud] = nodes.at(depth);
      AttackConfig cfg = base;
      cfg.epsilon = eps;
      cfg.seed = base_seed + cell;
      const Perturbation p = edge_only_uap(edge, probes_by_depth.at(depth),
                                           splits.d_opt, splits.target_class, cfg);
      const EvalReport r = evaluate(edge, cloud, splits.test, &p);
      csv += csv_row(r.method, r.edge_depth, r.norm, r.multi_layer, r.epsilon,
                     r.target_class, r.clean_accuracy, r.attacked_accuracy,
                     r.target_success_rate, r.seed);
      ++cell;
    }
    // random-sign control at the same budget, depth column 0
    auto& [edge, cloud] = nodes.at(1);
    Perturbation control = random_sign_perturbation(splits.test.sample_shape(), eps,
                                                    base_seed + cell);
    control.target_class = splits.target_class;
    control.edge_depth = "0";
    const EvalReport r = evaluate(edge, cloud, splits.test, &control);
    csv += csv_row(r.method, r.edge_depth, r.norm, r.multi_layer, r.epsilon,
                   r.target_class, r.clean_accuracy, r.attacked_accuracy,
                   r.target_success_rate, r.seed);
    ++cell;
  }
  return csv;
}

}  // namespace eua
