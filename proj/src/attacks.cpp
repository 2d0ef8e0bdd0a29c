#include "eua/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eua/serialize.hpp"

namespace eua {

Tensor apply_perturbation(const Tensor& x, const Tensor& delta) {
  if (x.rank() == 4) return ops::clip01(ops::broadcast_add(x, delta));
  if (!x.same_shape(delta))
    throw ShapeError("apply_perturbation: shape " + shape_str(x.shape()) +
                     " vs delta " + shape_str(delta.shape()));
  return ops::clip01(ops::add(x, delta));
}

Tensor project_linf(const Tensor& delta, float epsilon) {
  if (epsilon < 0.0f) throw ShapeError("project_linf: negative epsilon");
  Tensor out = delta;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = std::min(epsilon, std::max(-epsilon, out[i]));
  return out;
}

namespace {

float sign0(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

void check_budget(const Perturbation& p, const char* where) {
  if (p.delta.max_abs() > p.epsilon)
    throw NumericError(std::string("perturbation budget exceeded after ") + where +
                       ": " + std::to_string(p.delta.max_abs()) + " > " +
                       std::to_string(p.epsilon));
}

void validate_config(const AttackConfig& cfg) {
  if (!(cfg.alpha > 0.0f)) throw ShapeError("attack: alpha must be > 0");
  if (cfg.epochs < 1) throw ShapeError("attack: epochs must be >= 1");
  if (cfg.batch < 1) throw ShapeError("attack: batch size must be >= 1");
  if (cfg.epsilon < 0.0f) throw ShapeError("attack: epsilon must be >= 0");
}

std::vector<int> batch_slice(const std::vector<int>& order, int start, int stop) {
  return std::vector<int>(order.begin() + start, order.begin() + stop);
}

// Mean over samples and active layers of sigmoid(probe score) at the
// current delta; the instrument the ascent is supposed to push up.
double mean_probe_score(const EdgeNode& edge, const ProbeSet& probes,
                        const std::vector<int>& active_layers, const Dataset& d,
                        const Tensor& delta, int chunk) {
  double total = 0.0;
  std::int64_t count = 0;
  for (int start = 0; start < d.size(); start += chunk) {
    const int stop = std::min(d.size(), start + chunk);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor adv = apply_perturbation(gather(d, idx).images, delta);
    for (int layer : active_layers) {
      Tape tape;
      const TracedRun run =
          run_layers_traced(tape, edge.model(), tape.leaf(adv), 0, layer + 1);
      const Tensor logits =
          probe_logit(probes.probes.at(layer), tape.value(run.out));
      for (std::int64_t i = 0; i < logits.numel(); ++i) {
        total += 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
        ++count;
      }
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

Tensor phi(const EdgeNode& edge, const ProbeSet& probes,
           const std::vector<int>& active_layers, const Tensor& batch,
           const Tensor& delta, bool normalize) {
  if (active_layers.empty()) throw ShapeError("phi: no active layers");
  Tensor total = Tensor::zeros(delta.shape());
  for (int layer : active_layers) {
    const auto pit = probes.probes.find(layer);
    if (pit == probes.probes.end())
      throw ShapeError("phi: no probe for layer " + std::to_string(layer));

    // fresh tape per layer: one trace, one backward
    Tape tape;
    const Tape::Id d = tape.leaf(delta, /*requires_grad=*/true);
    const Tape::Id adv = tape.clip01(tape.broadcast_add(tape.leaf(batch), d));
    const TracedRun run = run_layers_traced(tape, edge.model(), adv, 0, layer + 1);
    const Tape::Id score =
        tape.sum(tape.sigmoid(probe_logit_traced(tape, pit->second, run.out)));
    Tensor g = tape.backward(score).at(d);

    if (normalize) {
      const double norm = g.l2_norm();
      const float scale = static_cast<float>(1.0 / std::max(norm, 1e-12));
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
    }
    for (std::int64_t i = 0; i < g.numel(); ++i) total[i] += g[i];
  }
  check_finite(total, "phi");
  return total;
}

Perturbation edge_only_uap(const EdgeNode& edge, const ProbeSet& probes,
                           const Dataset& d_opt, int target_class,
                           const AttackConfig& cfg) {
  validate_config(cfg);
  if (d_opt.size() == 0) throw ShapeError("edge_only_uap: empty d_opt");

  std::vector<int> active;
  if (cfg.flags.multi_layer) {
    active = edge.config().edge_layers;
  } else {
    active = {edge.config().edge_layers.back()};  // split-point layer only
  }
  for (int layer : active)
    if (!probes.probes.count(layer))
      throw ShapeError("edge_only_uap: probe set lacks layer " +
                       std::to_string(layer));

  Perturbation p;
  p.delta = Tensor::zeros(d_opt.sample_shape());
  p.epsilon = cfg.epsilon;
  p.alpha = cfg.alpha;
  p.target_class = target_class;
  p.edge_depth = std::to_string(edge.config().depth);
  p.method = "edge_only";
  p.norm = cfg.flags.norm;
  p.multi_layer = cfg.flags.multi_layer;
  p.seed = cfg.seed;

  p.score_trace.push_back(
      mean_probe_score(edge, probes, active, d_opt, p.delta, cfg.batch));

  std::vector<int> order(static_cast<std::size_t>(d_opt.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (int start = 0; start < d_opt.size(); start += cfg.batch) {
      const int stop = std::min(d_opt.size(), start + cfg.batch);
      const Dataset bd = gather(d_opt, batch_slice(order, start, stop));
      const Tensor g = phi(edge, probes, active, bd.images, p.delta, cfg.flags.norm);
      Tensor stepped = p.delta;
      for (std::int64_t i = 0; i < stepped.numel(); ++i)
        stepped[i] += cfg.alpha * sign0(g[i]);
      p.delta = project_linf(stepped, cfg.epsilon);
      ++p.iterations;
      check_budget(p, "update");
    }
    p.score_trace.push_back(
        mean_probe_score(edge, probes, active, d_opt, p.delta, cfg.batch));
  }
  return p;
}

Perturbation classic_uap(const Model& model, const Dataset& d_opt,
                         const AttackConfig& cfg, UapMode mode, int target_class) {
  validate_config(cfg);
  if (d_opt.size() == 0) throw ShapeError("classic_uap: empty d_opt");
  if (mode == UapMode::Targeted && target_class < 0)
    throw ShapeError("classic_uap: targeted mode needs a target class");
  if (mode == UapMode::Untargeted && d_opt.labels.empty())
    throw ShapeError(
        "classic_uap: untargeted mode needs ground-truth labels for d_opt "
        "(unavailable to an edge-only attacker)");

  const int layers = static_cast<int>(model.spec.layers.size());
  Perturbation p;
  p.delta = Tensor::zeros(d_opt.sample_shape());
  p.epsilon = cfg.epsilon;
  p.alpha = cfg.alpha;
  p.target_class = mode == UapMode::Targeted ? target_class : -1;
  p.edge_depth = "full";
  p.method = mode == UapMode::Targeted ? "uap_targeted" : "uap_untargeted";
  p.norm = cfg.flags.norm;
  p.multi_layer = cfg.flags.multi_layer;
  p.seed = cfg.seed;

  const float direction = mode == UapMode::Targeted ? -1.0f : 1.0f;

  auto mean_ce = [&](const Tensor& delta) {
    double total = 0.0;
    for (int start = 0; start < d_opt.size(); start += cfg.batch) {
      const int stop = std::min(d_opt.size(), start + cfg.batch);
      std::vector<int> idx(static_cast<std::size_t>(stop - start));
      std::iota(idx.begin(), idx.end(), start);
      const Dataset bd = gather(d_opt, idx);
      const Tensor adv = apply_perturbation(bd.images, delta);
      const Tensor logits = run_layers(model, adv, 0, layers);
      std::vector<int> labels =
          mode == UapMode::Targeted
              ? std::vector<int>(static_cast<std::size_t>(stop - start), target_class)
              : bd.labels;
      total += static_cast<double>(
                   ops::softmax_cross_entropy(logits, labels, ops::Reduction::Sum)
                       .loss[0]);
    }
    return total / d_opt.size();
  };

  p.score_trace.push_back(mean_ce(p.delta));

  std::vector<int> order(static_cast<std::size_t>(d_opt.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (int start = 0; start < d_opt.size(); start += cfg.batch) {
      const int stop = std::min(d_opt.size(), start + cfg.batch);
      const Dataset bd = gather(d_opt, batch_slice(order, start, stop));
      const std::vector<int> labels =
          mode == UapMode::Targeted
              ? std::vector<int>(static_cast<std::size_t>(stop - start), target_class)
              : bd.labels;

      Tape tape;
      const Tape::Id d = tape.leaf(p.delta, /*requires_grad=*/true);
      const Tape::Id adv = tape.clip01(tape.broadcast_add(tape.leaf(bd.images), d));
      const TracedRun run = run_layers_traced(tape, model, adv, 0, layers);
      const Tape::Id loss =
          tape.softmax_cross_entropy(run.out, labels, ops::Reduction::Sum);
      const Tensor g = tape.backward(loss).at(d);

      Tensor stepped = p.delta;
      for (std::int64_t i = 0; i < stepped.numel(); ++i)
        stepped[i] += direction * cfg.alpha * sign0(g[i]);
      p.delta = project_linf(stepped, cfg.epsilon);
      ++p.iterations;
      check_budget(p, "update");
    }
    p.score_trace.push_back(mean_ce(p.delta));
  }
  return p;
}

Perturbation random_sign_perturbation(const Shape& shape, float epsilon,
                                      std::uint64_t seed) {
  if (epsilon < 0.0f) throw ShapeError("random_sign_perturbation: negative epsilon");
  Perturbation p;
  p.delta = Tensor(shape);
  p.epsilon = epsilon;
  p.method = "random_sign";
  p.seed = seed;
  Rng rng(seed);
  for (std::int64_t i = 0; i < p.delta.numel(); ++i)
    p.delta[i] = rng.uniform() < 0.5 ? -epsilon : epsilon;
  return p;
}

void save_perturbation(const std::string& path, const Perturbation& p) {
  Container c;
  c.kind = "perturbation";
  c.meta["method"] = p.method;
  c.meta["epsilon"] = p.epsilon;
  c.meta["alpha"] = p.alpha;
  c.meta["target_class"] = p.target_class;
  c.meta["edge_depth"] = p.edge_depth;
  c.meta["norm"] = p.norm;
  c.meta["multi_layer"] = p.multi_layer;
  c.meta["seed"] = p.seed;
  c.meta["iterations"] = p.iterations;
  c.meta["score_trace"] = p.score_trace;
  c.add("delta", p.delta);
  save_container(path, c);
}

Perturbation load_perturbation(const std::string& path) {
  Container c = load_container(path, "perturbation");
  Perturbation p;
  try {
    p.method = c.meta.at("method").get<std::string>();
    p.epsilon = c.meta.at("epsilon").get<float>();
    p.alpha = c.meta.at("alpha").get<float>();
    p.target_class = c.meta.at("target_class").get<int>();
    p.edge_depth = c.meta.at("edge_depth").get<std::string>();
    p.norm = c.meta.at("norm").get<bool>();
    p.multi_layer = c.meta.at("multi_layer").get<bool>();
    p.seed = c.meta.at("seed").get<std::uint64_t>();
    p.iterations = c.meta.at("iterations").get<int>();
    p.score_trace = c.meta.at("score_trace").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw FormatError(path + ": bad perturbation header: " + e.what());
  }
  p.delta = c.tensor("delta");
  if (p.delta.max_abs() > p.epsilon)
    throw FormatError(path + ": delta exceeds its own epsilon budget");
  return p;
}

void dump_perturbation_pixmap(const std::string& path, const Perturbation& p) {
  Tensor img = p.delta;
  const float scale = p.epsilon > 0.0f ? 0.5f / p.epsilon : 0.0f;
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = 0.5f + img[i] * scale;
  if (img.rank() == 3 && img.dim(0) == 3)
    write_ppm(path, img);
  else
    write_pgm(path, img);
}

}  // namespace eua
