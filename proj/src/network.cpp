#include "eua/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "eua/adam.hpp"

namespace eua {

namespace {

struct SpecBuilder {
  ModelSpec spec;
  Shape cur;  // (C,H,W) after the layers so far

  int add(LayerDesc d) {
    spec.layers.push_back(std::move(d));
    return static_cast<int>(spec.layers.size()) - 1;
  }

  int conv(const std::string& stem, int cout, int k, int pad) {
    LayerDesc d;
    d.kind = LayerKind::Conv2d;
    d.conv = {1, pad};
    d.param = stem;
    d.w_shape = {cout, cur[0], k, k};
    d.b_shape = {cout};
    cur = {cout, ops::conv_out_dim(cur[1], k, 1, pad),
           ops::conv_out_dim(cur[2], k, 1, pad)};
    return add(std::move(d));
  }

  int relu() { return add({LayerKind::Relu}); }

  int pool() {
    LayerDesc d;
    d.kind = LayerKind::MaxPool2d;
    d.pool = {2, 2};
    cur = {cur[0], ops::conv_out_dim(cur[1], 2, 2, 0), ops::conv_out_dim(cur[2], 2, 2, 0)};
    return add(std::move(d));
  }

  int add_skip(int from) {
    LayerDesc d;
    d.kind = LayerKind::AddSkip;
    d.skip_from = from;
    return add(std::move(d));
  }
};

constexpr int kWidths[4] = {16, 32, 64, 128};

}  // namespace

ModelSpec build_model(const std::string& arch_name, int num_classes,
                      const Shape& input_shape) {
  if (input_shape.size() != 3)
    throw ShapeError("build_model: input shape must be (C,H,W), got " +
                     shape_str(input_shape));
  if (input_shape[1] < 16 || input_shape[2] < 16)
    throw ShapeError("build_model: input spatial dims must be >= 16, got " +
                     shape_str(input_shape));
  if (num_classes < 2)
    throw ShapeError("build_model: need at least 2 classes");

  SpecBuilder b;
  b.spec.arch = arch_name;
  b.spec.num_classes = num_classes;
  b.spec.input_shape = input_shape;
  b.spec.norm_mean.assign(static_cast<std::size_t>(input_shape[0]), 0.5f);
  b.spec.norm_std.assign(static_cast<std::size_t>(input_shape[0]), 0.5f);
  b.cur = input_shape;
  b.add({LayerKind::Normalize});

  if (arch_name == "smallconv4") {
    for (int i = 0; i < 4; ++i) {
      b.conv("conv" + std::to_string(i + 1), kWidths[i], 3, 1);
      b.relu();
      b.spec.key_layers.push_back(b.pool());
    }
  } else if (arch_name == "smallres4") {
    for (int i = 0; i < 4; ++i) {
      const std::string stem = "b" + std::to_string(i + 1);
      b.conv(stem + ".stem", kWidths[i], 3, 1);
      const int skip = b.relu();
      b.conv(stem + ".c1", kWidths[i], 3, 1);
      b.relu();
      b.conv(stem + ".c2", kWidths[i], 3, 1);
      b.add_skip(skip);
      b.relu();
      b.spec.key_layers.push_back(b.pool());
    }
  } else {
    throw ShapeError("build_model: unknown architecture '" + arch_name + "'");
  }

  b.add({LayerKind::Flatten});
  LayerDesc head;
  head.kind = LayerKind::Linear;
  head.param = "head";
  const int feat = b.cur[0] * b.cur[1] * b.cur[2];
  head.w_shape = {num_classes, feat};
  head.b_shape = {num_classes};
  b.add(std::move(head));
  return std::move(b.spec);
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  Model m;
  m.spec = spec;
  for (const auto& layer : spec.layers) {
    if (layer.param.empty()) continue;
    const std::string wname = layer.param + ".w";
    Tensor w(layer.w_shape);
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < layer.w_shape.size(); ++i) fan_in *= layer.w_shape[i];
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    Rng rng(Rng::derive(seed, fnv1a64(wname.data(), wname.size())));
    for (std::int64_t i = 0; i < w.numel(); ++i)
      w[i] = rng.uniform_float(-bound, bound);
    m.params.emplace(wname, std::move(w));
    m.params.emplace(layer.param + ".b", Tensor::zeros(layer.b_shape));
  }
  return m;
}

Shape layer_output_shape(const ModelSpec& spec, int index) {
  if (index < 0 || index >= static_cast<int>(spec.layers.size()))
    throw ShapeError("layer_output_shape: index " + std::to_string(index) +
                     " out of range");
  Shape cur = spec.input_shape;
  for (int i = 0; i <= index; ++i) {
    const LayerDesc& d = spec.layers[static_cast<std::size_t>(i)];
    switch (d.kind) {
      case LayerKind::Conv2d:
        cur = {d.w_shape[0], ops::conv_out_dim(cur[1], d.w_shape[2], d.conv.stride, d.conv.padding),
               ops::conv_out_dim(cur[2], d.w_shape[3], d.conv.stride, d.conv.padding)};
        break;
      case LayerKind::MaxPool2d:
        cur = {cur[0], ops::conv_out_dim(cur[1], d.pool.kernel, d.pool.stride, 0),
               ops::conv_out_dim(cur[2], d.pool.kernel, d.pool.stride, 0)};
        break;
      case LayerKind::Flatten:
        cur = {cur[0] * (cur.size() > 1 ? cur[1] : 1) * (cur.size() > 2 ? cur[2] : 1)};
        break;
      case LayerKind::Linear:
        cur = {d.w_shape[0]};
        break;
      default:
        break;  // shape-preserving
    }
  }
  return cur;
}

TracedRun run_layers_traced(Tape& tape, const Model& m, Tape::Id x, int first,
                            int last, const std::vector<int>& requested_taps,
                            bool train_params) {
  const int n = static_cast<int>(m.spec.layers.size());
  if (first < 0 || last > n || first >= last)
    throw ShapeError("run_layers: bad layer range [" + std::to_string(first) + "," +
                     std::to_string(last) + ") for " + std::to_string(n) + " layers");
  std::set<int> wanted(requested_taps.begin(), requested_taps.end());
  for (int t : wanted)
    if (t < first || t >= last)
      throw ShapeError("run_layers: tap " + std::to_string(t) +
                       " outside executed range [" + std::to_string(first) + "," +
                       std::to_string(last) + ")");

  TracedRun r;
  std::map<int, Tape::Id> outs;  // absolute layer index -> tape id
  Tape::Id cur = x;

  auto param_leaf = [&](const std::string& name) {
    const auto it = m.params.find(name);
    if (it == m.params.end())
      throw ShapeError("run_layers: missing parameter '" + name + "'");
    Tape::Id id = tape.leaf(it->second, train_params);
    if (train_params) r.param_ids.emplace(name, id);
    return id;
  };

  for (int i = first; i < last; ++i) {
    const LayerDesc& d = m.spec.layers[static_cast<std::size_t>(i)];
    switch (d.kind) {
      case LayerKind::Normalize: {
        Tensor scale({static_cast<int>(m.spec.norm_std.size())});
        Tensor shift(scale.shape());
        for (std::size_t c = 0; c < m.spec.norm_std.size(); ++c) {
          scale[static_cast<std::int64_t>(c)] = 1.0f / m.spec.norm_std[c];
          shift[static_cast<std::int64_t>(c)] = -m.spec.norm_mean[c] / m.spec.norm_std[c];
        }
        cur = tape.batchnorm2d_inference(cur, tape.leaf(std::move(scale)),
                                         tape.leaf(std::move(shift)));
        break;
      }
      case LayerKind::Conv2d:
        cur = tape.conv2d(cur, param_leaf(d.param + ".w"), param_leaf(d.param + ".b"),
                          d.conv);
        break;
      case LayerKind::Relu:
        cur = tape.relu(cur);
        break;
      case LayerKind::MaxPool2d:
        cur = tape.maxpool2d(cur, d.pool);
        break;
      case LayerKind::Flatten:
        cur = tape.flatten(cur);
        break;
      case LayerKind::Linear:
        cur = tape.linear(cur, param_leaf(d.param + ".w"), param_leaf(d.param + ".b"));
        break;
      case LayerKind::AddSkip: {
        const auto it = outs.find(d.skip_from);
        if (it == outs.end())
          throw ShapeError("run_layers: skip source layer " +
                           std::to_string(d.skip_from) + " not in executed range");
        cur = tape.add(cur, it->second);
        break;
      }
    }
    outs[i] = cur;
    if (wanted.count(i)) r.taps[i] = cur;
  }
  r.out = cur;
  return r;
}

Tensor run_layers(const Model& m, const Tensor& x, int first, int last,
                  const std::vector<int>& requested_taps,
                  std::map<int, Tensor>* taps) {
  Tape tape;
  TracedRun r = run_layers_traced(tape, m, tape.leaf(x), first, last, requested_taps);
  if (taps) {
    taps->clear();
    for (const auto& [idx, id] : r.taps) taps->emplace(idx, tape.value(id));
  }
  return tape.value(r.out);
}

ForwardResult forward_with_taps(const Model& m, const Tensor& batch,
                                const std::vector<int>& requested_taps) {
  const int n = static_cast<int>(m.spec.layers.size());
  for (int t : requested_taps) {
    if (std::find(m.spec.key_layers.begin(), m.spec.key_layers.end(), t) ==
        m.spec.key_layers.end())
      throw ShapeError("forward_with_taps: layer " + std::to_string(t) +
                       " is not a key layer of this model");
    if (t >= n)
      throw ShapeError("forward_with_taps: tap " + std::to_string(t) +
                       " beyond this model's last layer (edge boundary)");
  }
  ForwardResult out;
  out.logits = run_layers(m, batch, 0, n, requested_taps, &out.taps);
  return out;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    float bv = logits[static_cast<std::int64_t>(i) * k];
    for (int c = 1; c < k; ++c) {
      const float v = logits[static_cast<std::int64_t>(i) * k + c];
      if (v > bv) {  // strict: ties keep the lowest class index
        bv = v;
        best = c;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace

std::vector<int> predict(const Model& m, const Dataset& d, int batch) {
  std::vector<int> preds;
  preds.reserve(static_cast<std::size_t>(d.size()));
  for (int start = 0; start < d.size(); start += batch) {
    const int stop = std::min(d.size(), start + batch);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Dataset bd = gather(d, idx);
    const Tensor logits =
        run_layers(m, bd.images, 0, static_cast<int>(m.spec.layers.size()));
    for (int p : argmax_rows(logits)) preds.push_back(p);
  }
  return preds;
}

double accuracy(const Model& m, const Dataset& d, int batch) {
  if (d.size() == 0) return 0.0;
  if (static_cast<int>(d.labels.size()) != d.size())
    throw ShapeError("accuracy: dataset is unlabeled");
  const std::vector<int> preds = predict(m, d, batch);
  int hit = 0;
  for (int i = 0; i < d.size(); ++i)
    if (preds[static_cast<std::size_t>(i)] == d.labels[static_cast<std::size_t>(i)])
      ++hit;
  return 100.0 * hit / d.size();
}

TrainHistory train_victim(Model& m, const Dataset& train, const Dataset& val,
                          const TrainConfig& cfg) {
  if (train.size() == 0) throw ShapeError("train_victim: empty training set");
  if (static_cast<int>(train.labels.size()) != train.size())
    throw ShapeError("train_victim: training set is unlabeled");
  for (int l : train.labels)
    if (l < 0 || l >= m.spec.num_classes)
      throw ShapeError("train_victim: label " + std::to_string(l) +
                       " out of range [0," + std::to_string(m.spec.num_classes) + ")");

  TrainHistory hist;
  AdamState opt;
  AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  const int n = train.size();
  const int layers = static_cast<int>(m.spec.layers.size());

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int stop = std::min(n, start + cfg.batch);
      const std::vector<int> idx(order.begin() + start, order.begin() + stop);
      const Dataset bd = gather(train, idx);

      Tape tape;
      TracedRun r = run_layers_traced(tape, m, tape.leaf(bd.images), 0, layers, {},
                                      /*train_params=*/true);
      const Tape::Id loss =
          tape.softmax_cross_entropy(r.out, bd.labels, ops::Reduction::Mean);
      loss_sum += static_cast<double>(tape.value(loss)[0]) * (stop - start);

      GradMap grads = tape.backward(loss);
      std::map<std::string, Tensor> named;
      for (const auto& [name, id] : r.param_ids) {
        auto it = grads.find(id);
        if (it != grads.end()) named.emplace(name, std::move(it->second));
      }
      adam_step(m.params, named, opt, ocfg);
    }
    hist.train_loss.push_back(loss_sum / n);
    hist.val_accuracy.push_back(val.size() > 0 ? accuracy(m, val, cfg.batch) : 0.0);
  }
  m.trained = true;
  return hist;
}

void save_model(const std::string& path, const Model& m, Json extra_meta) {
  Container c;
  c.kind = "model";
  c.meta["arch"] = m.spec.arch;
  c.meta["num_classes"] = m.spec.num_classes;
  c.meta["input_shape"] = m.spec.input_shape;
  c.meta["norm_mean"] = m.spec.norm_mean;
  c.meta["norm_std"] = m.spec.norm_std;
  c.meta["trained"] = m.trained;
  for (auto& [k, v] : extra_meta.items()) c.meta[k] = v;
  for (const auto& [name, t] : m.params) c.add(name, t);
  save_container(path, c);
}

Model load_model(const std::string& path) {
  Container c = load_container(path, "model");
  ModelSpec spec;
  try {
    Shape in = c.meta.at("input_shape").get<Shape>();
    spec = build_model(c.meta.at("arch").get<std::string>(),
                       c.meta.at("num_classes").get<int>(), in);
    spec.norm_mean = c.meta.at("norm_mean").get<std::vector<float>>();
    spec.norm_std = c.meta.at("norm_std").get<std::vector<float>>();
  } catch (const Json::exception& e) {
    throw FormatError(path + ": bad model header: " + e.what());
  }
  Model m;
  m.spec = std::move(spec);
  m.trained = c.meta.value("trained", false);
  for (const auto& layer : m.spec.layers) {
    if (layer.param.empty()) continue;
    for (const char* suffix : {".w", ".b"}) {
      const std::string name = layer.param + suffix;
      Tensor t = c.tensor(name);
      const Shape& want = suffix[1] == 'w' ? layer.w_shape : layer.b_shape;
      if (t.shape() != want)
        throw FormatError(path + ": parameter '" + name + "' has shape " +
                          shape_str(t.shape()) + ", expected " + shape_str(want));
      m.params.emplace(name, std::move(t));
    }
  }
  return m;
}

}  // namespace eua
