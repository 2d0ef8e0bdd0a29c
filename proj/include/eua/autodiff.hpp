#pragma once

#include <functional>
#include <map>
#include <vector>

#include "eua/ops.hpp"
#include "eua/tensor.hpp"

namespace eua {

using GradMap = std::map<int, Tensor>;

// Reverse-mode tape. Ops record nodes during the forward pass; backward walks
// the trace once in reverse creation order (which is a topological order) and
// accumulates gradients additively across fan-out. One trace, one backward:
// a second backward without retracing throws GraphError.
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor value, bool requires_grad = false);

  Id conv2d(Id x, Id w, Id b, ops::ConvAttrs a = {});
  Id linear(Id x, Id w, Id b);
  Id relu(Id x);
  Id sigmoid(Id x);
  Id maxpool2d(Id x, ops::PoolAttrs a = {});
  Id avgpool2d(Id x, ops::PoolAttrs a = {});
  Id adaptive_avgpool2d(Id x, int out_h, int out_w);
  Id flatten(Id x);
  Id add(Id a, Id b);
  Id broadcast_add(Id x, Id delta);
  Id clip01(Id x);
  Id batchnorm2d_inference(Id x, Id scale, Id shift);
  Id softmax_cross_entropy(Id logits, std::vector<int> labels,
                           ops::Reduction red = ops::Reduction::Mean);
  Id sigmoid_bce(Id logits, std::vector<float> targets, float pos_weight = 1.0f);
  Id sum(Id x);

  const Tensor& value(Id id) const;
  bool requires_grad(Id id) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // Gradients of root wrt every requires-grad leaf, keyed by leaf id.
  GradMap backward(Id root, const Tensor& seed);
  GradMap backward(Id root);  // scalar root, seeded with 1.0

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    std::function<void(Tape&, const Tensor&)> backprop;
  };

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }
  const Node& node(Id id) const;
  void check_id(Id id) const;
  void accumulate(Id id, Tensor grad);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;  // live during backward only
  bool consumed_ = false;
};

// Central-difference gradient estimate, (f(x+h e_i) - f(x-h e_i)) / 2h per
// element. f reduces to double so the subtraction is not quantized to f32.
// Independent of the tape; this is the oracle backward() is checked against.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h);

}  // namespace eua
