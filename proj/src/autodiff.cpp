#include "eua/autodiff.hpp"

#include <memory>
#include <utility>

namespace eua {

const Tape::Node& Tape::node(Id id) const {
  check_id(id);
  return nodes_[static_cast<std::size_t>(id)];
}

void Tape::check_id(Id id) const {
  if (id < 0 || id >= size())
    throw GraphError("tape: node id " + std::to_string(id) + " not on this trace");
}

const Tensor& Tape::value(Id id) const { return node(id).value; }

bool Tape::requires_grad(Id id) const { return node(id).requires_grad; }

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite())
    throw NumericError("tape: non-finite leaf value (shape " +
                       shape_str(value.shape()) + ")");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  return push(std::move(n));
}

void Tape::accumulate(Id id, Tensor grad) {
  Tensor& slot = grads_[static_cast<std::size_t>(id)];
  if (slot.empty()) {
    slot = std::move(grad);
  } else {
    for (std::int64_t i = 0; i < slot.numel(); ++i) slot[i] += grad[i];
  }
}

GradMap Tape::backward(Id root) {
  check_id(root);
  if (node(root).value.numel() != 1)
    throw GraphError("tape: default seed requires a scalar root, got shape " +
                     shape_str(node(root).value.shape()));
  return backward(root, Tensor({1}, {1.0f}));
}

GradMap Tape::backward(Id root, const Tensor& seed) {
  if (nodes_.empty()) throw GraphError("tape: backward on an empty trace");
  check_id(root);
  if (consumed_)
    throw GraphError("tape: backward already ran on this trace; rebuild the forward");
  if (!seed.same_shape(node(root).value))
    throw ShapeError("tape: seed shape " + shape_str(seed.shape()) +
                     " != root shape " + shape_str(node(root).value.shape()));
  consumed_ = true;

  grads_.assign(nodes_.size(), Tensor());
  if (node(root).requires_grad) grads_[static_cast<std::size_t>(root)] = seed;

  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty() || !n.backprop) continue;
    n.backprop(*this, g);
  }

  GradMap out;
  for (Id id = 0; id <= root; ++id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.is_leaf && n.requires_grad) {
      Tensor& g = grads_[static_cast<std::size_t>(id)];
      out[id] = g.empty() ? Tensor::zeros(n.value.shape()) : std::move(g);
    }
  }
  grads_.clear();
  return out;
}

Tape::Id Tape::conv2d(Id x, Id w, Id b, ops::ConvAttrs a) {
  Node n;
  n.value = ops::conv2d(value(x), value(w), value(b), a);
  n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(b);
  n.backprop = [x, w, b, a](Tape& t, const Tensor& g) {
    const bool need_dx = t.requires_grad(x);
    const bool need_dw = t.requires_grad(w) || t.requires_grad(b);
    auto gr = ops::conv2d_backward(t.value(x), t.value(w), a, g, need_dx, need_dw);
    if (need_dx) t.accumulate(x, std::move(gr.dx));
    if (t.requires_grad(w)) t.accumulate(w, std::move(gr.dw));
    if (t.requires_grad(b)) t.accumulate(b, std::move(gr.db));
  };
  return push(std::move(n));
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  Node n;
  n.value = ops::linear(value(x), value(w), value(b));
  n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(b);
  n.backprop = [x, w, b](Tape& t, const Tensor& g) {
    const bool need_dx = t.requires_grad(x);
    const bool need_dw = t.requires_grad(w) || t.requires_grad(b);
    auto gr = ops::linear_backward(t.value(x), t.value(w), g, need_dx, need_dw);
    if (need_dx) t.accumulate(x, std::move(gr.dx));
    if (t.requires_grad(w)) t.accumulate(w, std::move(gr.dw));
    if (t.requires_grad(b)) t.accumulate(b, std::move(gr.db));
  };
  return push(std::move(n));
}

Tape::Id Tape::relu(Id x) {
  Node n;
  n.value = ops::relu(value(x));
  n.requires_grad = requires_grad(x);
  n.backprop = [x](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::relu_backward(t.value(x), g));
  };
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id x) {
  Node n;
  n.value = ops::sigmoid(value(x));
  n.requires_grad = requires_grad(x);
  Id self = size();
  n.backprop = [x, self](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::sigmoid_backward(t.value(self), g));
  };
  return push(std::move(n));
}

Tape::Id Tape::maxpool2d(Id x, ops::PoolAttrs a) {
  Node n;
  auto argmax = std::make_shared<std::vector<std::int32_t>>();
  n.value = ops::maxpool2d(value(x), a, argmax.get());
  n.requires_grad = requires_grad(x);
  n.backprop = [x, argmax](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::maxpool2d_backward(t.value(x).shape(), *argmax, g));
  };
  return push(std::move(n));
}

Tape::Id Tape::avgpool2d(Id x, ops::PoolAttrs a) {
  Node n;
  n.value = ops::avgpool2d(value(x), a);
  n.requires_grad = requires_grad(x);
  n.backprop = [x, a](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::avgpool2d_backward(t.value(x).shape(), a, g));
  };
  return push(std::move(n));
}

Tape::Id Tape::adaptive_avgpool2d(Id x, int out_h, int out_w) {
  Node n;
  n.value = ops::adaptive_avgpool2d(value(x), out_h, out_w);
  n.requires_grad = requires_grad(x);
  n.backprop = [x, out_h, out_w](Tape& t, const Tensor& g) {
    t.accumulate(x, ops::adaptive_avgpool2d_backward(t.value(x).shape(), out_h, out_w, g));
  };
  return push(std::move(n));
}

Tape::Id Tape::flatten(Id x) {
  Node n;
  n.value = ops::flatten(value(x));
  n.requires_grad = requires_grad(x);
  n.backprop = [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(t.value(x).shape()));
  };
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  Node n;
  n.value = ops::add(value(a), value(b));
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.backprop = [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, g);
  };
  return push(std::move(n));
}

Tape::Id Tape::broadcast_add(Id x, Id delta) {
  Node n;
  n.value = ops::broadcast_add(value(x), value(delta));
  n.requires_grad = requires_grad(x) || requires_grad(delta);
  n.backprop = [x, delta](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) t.accumulate(x, g);
    if (t.requires_grad(delta)) t.accumulate(delta, ops::broadcast_add_backward_d(g));
  };
  return push(std::move(n));
}

Tape::Id Tape::clip01(Id x) {
  Node n;
  n.value = ops::clip01(value(x));
  n.requires_grad = requires_grad(x);
  // pass-through gradient at the clip boundaries
  n.backprop = [x](Tape& t, const Tensor& g) { t.accumulate(x, g); };
  return push(std::move(n));
}

Tape::Id Tape::batchnorm2d_inference(Id x, Id scale, Id shift) {
  Node n;
  n.value = ops::batchnorm2d_inference(value(x), value(scale), value(shift));
  n.requires_grad = requires_grad(x) || requires_grad(scale) || requires_grad(shift);
  n.backprop = [x, scale, shift](Tape& t, const Tensor& g) {
    const bool need_dx = t.requires_grad(x);
    const bool need_dp = t.requires_grad(scale) || t.requires_grad(shift);
    auto gr = ops::batchnorm2d_inference_backward(t.value(x), t.value(scale), g,
                                                  need_dx, need_dp);
    if (need_dx) t.accumulate(x, std::move(gr.dx));
    if (t.requires_grad(scale)) t.accumulate(scale, std::move(gr.dscale));
    if (t.requires_grad(shift)) t.accumulate(shift, std::move(gr.dshift));
  };
  return push(std::move(n));
}

Tape::Id Tape::softmax_cross_entropy(Id logits, std::vector<int> labels,
                                     ops::Reduction red) {
  Node n;
  auto r = ops::softmax_cross_entropy(value(logits), labels, red);
  n.value = std::move(r.loss);
  n.requires_grad = requires_grad(logits);
  auto probs = std::make_shared<Tensor>(std::move(r.probs));
  auto lab = std::make_shared<std::vector<int>>(std::move(labels));
  n.backprop = [logits, probs, lab, red](Tape& t, const Tensor& g) {
    t.accumulate(logits, ops::softmax_cross_entropy_backward(*probs, *lab, red, g[0]));
  };
  return push(std::move(n));
}

Tape::Id Tape::sigmoid_bce(Id logits, std::vector<float> targets, float pos_weight) {
  Node n;
  auto r = ops::sigmoid_bce(value(logits), targets, pos_weight);
  n.value = std::move(r.loss);
  n.requires_grad = requires_grad(logits);
  auto sig = std::make_shared<Tensor>(std::move(r.sig));
  auto tg = std::make_shared<std::vector<float>>(std::move(targets));
  n.backprop = [logits, sig, tg, pos_weight](Tape& t, const Tensor& g) {
    t.accumulate(logits, ops::sigmoid_bce_backward(*sig, *tg, pos_weight, g[0]));
  };
  return push(std::move(n));
}

Tape::Id Tape::sum(Id x) {
  Node n;
  n.value = ops::sum_all(value(x));
  n.requires_grad = requires_grad(x);
  n.backprop = [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor::full(t.value(x).shape(), g[0]));
  };
  return push(std::move(n));
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  if (h <= 0.0) throw ShapeError("finite_difference_gradient: step must be > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const float orig = probe[i];
    probe[i] = static_cast<float>(orig + h);
    const double fp = f(probe);
    probe[i] = static_cast<float>(orig - h);
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = static_cast<float>((fp - fm) / (2.0 * h));
  }
  return grad;
}

}  // namespace eua
