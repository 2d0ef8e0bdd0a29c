#pragma once

#include <cstdint>
#include <vector>

#include "eua/tensor.hpp"

// Raw layer kernels. Forward functions are pure; backward functions take the
// saved forward context and the upstream gradient. The autodiff tape wires
// these together, and the untraced inference path calls the same functions,
// so traced and untraced forwards agree bitwise.
namespace eua::ops {

struct ConvAttrs {
  int stride = 1;
  int padding = 0;
};

struct PoolAttrs {
  int kernel = 2;
  int stride = 2;
};

enum class Reduction { Mean, Sum };

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x (N,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout) -> (N,Cout,Ho,Wo)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvAttrs& a);

struct ConvGrads {
  Tensor dx, dw, db;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const ConvAttrs& a,
                          const Tensor& gout, bool need_dx, bool need_dw);

// x (N,Fin), w (Fout,Fin), b (Fout) -> (N,Fout)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                            bool need_dx, bool need_dw);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gout);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& gout);  // y = saved output

// No padding; ties resolve to the first element in scan order.
Tensor maxpool2d(const Tensor& x, const PoolAttrs& a, std::vector<std::int32_t>* argmax);
Tensor maxpool2d_backward(const Shape& x_shape, const std::vector<std::int32_t>& argmax,
                          const Tensor& gout);

Tensor avgpool2d(const Tensor& x, const PoolAttrs& a);
Tensor avgpool2d_backward(const Shape& x_shape, const PoolAttrs& a, const Tensor& gout);

Tensor adaptive_avgpool2d(const Tensor& x, int out_h, int out_w);
Tensor adaptive_avgpool2d_backward(const Shape& x_shape, int out_h, int out_w,
                                   const Tensor& gout);

// (N,d1,...,dk) -> (N, d1*...*dk)
Tensor flatten(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);

// x (N,C,H,W) + d (C,H,W), d broadcast over the batch
Tensor broadcast_add(const Tensor& x, const Tensor& d);
Tensor broadcast_add_backward_d(const Tensor& gout);  // sums upstream over batch

// clamp to [0,1]; gradient is pass-through (identity) at the boundaries
Tensor clip01(const Tensor& x);

// Folded per-channel affine: y = x * scale[c] + shift[c]. Covers inference-mode
// batchnorm and fixed input normalization (scale = 1/std, shift = -mean/std).
Tensor batchnorm2d_inference(const Tensor& x, const Tensor& scale, const Tensor& shift);

struct BnGrads {
  Tensor dx, dscale, dshift;
};
BnGrads batchnorm2d_inference_backward(const Tensor& x, const Tensor& scale,
                                       const Tensor& gout, bool need_dx,
                                       bool need_dparams);

// logits (N,K); loss computed in log-space (log-sum-exp), scalar output {1}
struct CeResult {
  Tensor loss;
  Tensor probs;  // softmax(logits), saved for backward
};
CeResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                               Reduction red);
Tensor softmax_cross_entropy_backward(const Tensor& probs, const std::vector<int>& labels,
                                      Reduction red, float seed);

// logits (N,1) or (N,); targets in {0,1}; logits-form BCE, positive class
// weighted by pos_weight, mean over the batch
struct BceResult {
  Tensor loss;
  Tensor sig;  // sigmoid(logits), saved for backward
};
BceResult sigmoid_bce(const Tensor& logits, const std::vector<float>& targets,
                      float pos_weight);
Tensor sigmoid_bce_backward(const Tensor& sig, const std::vector<float>& targets,
                            float pos_weight, float seed);

// full reduction -> {1}, accumulated in double
Tensor sum_all(const Tensor& x);

}  // namespace eua::ops
