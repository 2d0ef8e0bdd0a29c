#include "eua/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace eua::ops {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void expect(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void expect_rank(const Tensor& t, int rank, const char* op, const char* arg) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " +
                     std::to_string(rank) + ", got shape " + shape_str(t.shape()));
}

// col(r, c) with r = (ci*kh + ki)*kw + kj and c = (n*Ho + oh)*Wo + ow.
// Out-of-image taps stay zero.
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int Ho, int Wo,
            std::vector<float>& col) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t cols = static_cast<std::int64_t>(N) * Ho * Wo;
  col.assign(static_cast<std::size_t>(C) * kh * kw * cols, 0.0f);
  const float* xd = x.data();
  for (int n = 0; n < N; ++n) {
    for (int ci = 0; ci < C; ++ci) {
      const float* xs = xd + (static_cast<std::int64_t>(n) * C + ci) * H * W;
      for (int ki = 0; ki < kh; ++ki) {
        for (int kj = 0; kj < kw; ++kj) {
          const int r = (ci * kh + ki) * kw + kj;
          float* crow = col.data() + static_cast<std::size_t>(r) * cols +
                        static_cast<std::int64_t>(n) * Ho * Wo;
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= H) continue;
            const float* xrow = xs + static_cast<std::int64_t>(ih) * W;
            float* cdst = crow + static_cast<std::int64_t>(oh) * Wo;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow * stride - pad + kj;
              if (iw >= 0 && iw < W) cdst[ow] = xrow[iw];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const std::vector<float>& col, int kh, int kw, int stride, int pad,
                int Ho, int Wo, Tensor& dx) {
  const int N = dx.dim(0), C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const std::int64_t cols = static_cast<std::int64_t>(N) * Ho * Wo;
  float* xd = dx.data();
  for (int n = 0; n < N; ++n) {
    for (int ci = 0; ci < C; ++ci) {
      float* xs = xd + (static_cast<std::int64_t>(n) * C + ci) * H * W;
      for (int ki = 0; ki < kh; ++ki) {
        for (int kj = 0; kj < kw; ++kj) {
          const int r = (ci * kh + ki) * kw + kj;
          const float* crow = col.data() + static_cast<std::size_t>(r) * cols +
                              static_cast<std::int64_t>(n) * Ho * Wo;
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= H) continue;
            float* xrow = xs + static_cast<std::int64_t>(ih) * W;
            const float* csrc = crow + static_cast<std::int64_t>(oh) * Wo;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow * stride - pad + kj;
              if (iw >= 0 && iw < W) xrow[iw] += csrc[ow];
            }
          }
        }
      }
    }
  }
}

struct ConvDims {
  int N, Ci, H, W, Co, kh, kw, Ho, Wo;
  std::int64_t cols, K;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const ConvAttrs& a) {
  expect_rank(x, 4, "conv2d", "input");
  expect_rank(w, 4, "conv2d", "weight");
  expect(a.stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(a.stride));
  expect(a.padding >= 0, "conv2d: padding must be >= 0, got " + std::to_string(a.padding));
  ConvDims d;
  d.N = x.dim(0);
  d.Ci = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  expect(w.dim(1) == d.Ci, "conv2d: input channels " + std::to_string(d.Ci) +
                               " != weight channels " + std::to_string(w.dim(1)) +
                               " (input " + shape_str(x.shape()) + ", weight " +
                               shape_str(w.shape()) + ")");
  d.Ho = conv_out_dim(d.H, d.kh, a.stride, a.padding);
  d.Wo = conv_out_dim(d.W, d.kw, a.stride, a.padding);
  expect(d.Ho >= 1 && d.Wo >= 1,
         "conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
             " does not fit input " + shape_str(x.shape()) + " with stride " +
             std::to_string(a.stride) + " padding " + std::to_string(a.padding));
  d.cols = static_cast<std::int64_t>(d.N) * d.Ho * d.Wo;
  d.K = static_cast<std::int64_t>(d.Ci) * d.kh * d.kw;
  return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvAttrs& a) {
  const ConvDims d = conv_dims(x, w, a);
  expect(b.numel() == d.Co, "conv2d: bias size " + std::to_string(b.numel()) +
                                " != output channels " + std::to_string(d.Co));

  std::vector<float> col;
  im2col(x, d.kh, d.kw, a.stride, a.padding, d.Ho, d.Wo, col);

  std::vector<float> out_mat(static_cast<std::size_t>(d.Co) * d.cols);
  MapRM(out_mat.data(), d.Co, d.cols).noalias() =
      CMapRM(w.data(), d.Co, d.K) * CMapRM(col.data(), d.K, d.cols);

  Tensor out({d.N, d.Co, d.Ho, d.Wo});
  const std::int64_t hw = static_cast<std::int64_t>(d.Ho) * d.Wo;
  for (int n = 0; n < d.N; ++n) {
    for (int co = 0; co < d.Co; ++co) {
      const float* src = out_mat.data() + static_cast<std::size_t>(co) * d.cols + n * hw;
      float* dst = out.data() + (static_cast<std::int64_t>(n) * d.Co + co) * hw;
      const float bias = b[co];
      for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }
  }
  check_finite(out, "conv2d");
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const ConvAttrs& a,
                          const Tensor& gout, bool need_dx, bool need_dw) {
  const ConvDims d = conv_dims(x, w, a);
  expect(gout.shape() == Shape({d.N, d.Co, d.Ho, d.Wo}),
         "conv2d backward: upstream gradient shape " + shape_str(gout.shape()) +
             " != output shape " + shape_str({d.N, d.Co, d.Ho, d.Wo}));

  // Gather upstream into the (Co x cols) layout used by the forward GEMM.
  const std::int64_t hw = static_cast<std::int64_t>(d.Ho) * d.Wo;
  std::vector<float> gmat(static_cast<std::size_t>(d.Co) * d.cols);
  for (int n = 0; n < d.N; ++n) {
    for (int co = 0; co < d.Co; ++co) {
      const float* src = gout.data() + (static_cast<std::int64_t>(n) * d.Co + co) * hw;
      float* dst = gmat.data() + static_cast<std::size_t>(co) * d.cols + n * hw;
      std::copy(src, src + hw, dst);
    }
  }

  ConvGrads g;
  if (need_dw) {
    std::vector<float> col;
    im2col(x, d.kh, d.kw, a.stride, a.padding, d.Ho, d.Wo, col);
    g.dw = Tensor(w.shape());
    MapRM(g.dw.data(), d.Co, d.K).noalias() =
        CMapRM(gmat.data(), d.Co, d.cols) * CMapRM(col.data(), d.K, d.cols).transpose();
    g.db = Tensor({d.Co});
    for (int co = 0; co < d.Co; ++co) {
      double acc = 0.0;
      const float* row = gmat.data() + static_cast<std::size_t>(co) * d.cols;
      for (std::int64_t i = 0; i < d.cols; ++i) acc += row[i];
      g.db[co] = static_cast<float>(acc);
    }
  }
  if (need_dx) {
    std::vector<float> dcol(static_cast<std::size_t>(d.K) * d.cols);
    MapRM(dcol.data(), d.K, d.cols).noalias() =
        CMapRM(w.data(), d.Co, d.K).transpose() * CMapRM(gmat.data(), d.Co, d.cols);
    g.dx = Tensor(x.shape());
    col2im_add(dcol, d.kh, d.kw, a.stride, a.padding, d.Ho, d.Wo, g.dx);
  }
  return g;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank(x, 2, "linear", "input");
  expect_rank(w, 2, "linear", "weight");
  const int N = x.dim(0), Fi = x.dim(1), Fo = w.dim(0);
  expect(w.dim(1) == Fi, "linear: input features " + std::to_string(Fi) +
                             " != weight features " + std::to_string(w.dim(1)));
  expect(b.numel() == Fo, "linear: bias size " + std::to_string(b.numel()) +
                              " != output features " + std::to_string(Fo));
  Tensor out({N, Fo});
  MapRM(out.data(), N, Fo).noalias() =
      CMapRM(x.data(), N, Fi) * CMapRM(w.data(), Fo, Fi).transpose();
  for (int n = 0; n < N; ++n) {
    float* row = out.data() + static_cast<std::int64_t>(n) * Fo;
    for (int f = 0; f < Fo; ++f) row[f] += b[f];
  }
  check_finite(out, "linear");
  return out;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                            bool need_dx, bool need_dw) {
  const int N = x.dim(0), Fi = x.dim(1), Fo = w.dim(0);
  expect(gout.shape() == Shape({N, Fo}),
         "linear backward: upstream gradient shape " + shape_str(gout.shape()) +
             " != output shape " + shape_str({N, Fo}));
  LinearGrads g;
  if (need_dx) {
    g.dx = Tensor({N, Fi});
    MapRM(g.dx.data(), N, Fi).noalias() =
        CMapRM(gout.data(), N, Fo) * CMapRM(w.data(), Fo, Fi);
  }
  if (need_dw) {
    g.dw = Tensor({Fo, Fi});
    MapRM(g.dw.data(), Fo, Fi).noalias() =
        CMapRM(gout.data(), N, Fo).transpose() * CMapRM(x.data(), N, Fi);
    g.db = Tensor({Fo});
    for (int f = 0; f < Fo; ++f) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n) acc += gout[static_cast<std::int64_t>(n) * Fo + f];
      g.db[f] = static_cast<float>(acc);
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  check_finite(out, "relu");
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& gout) {
  Tensor dx(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0f ? gout[i] : 0.0f;
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const float v = x[i];
    out[i] = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                       : std::exp(v) / (1.0f + std::exp(v));
  }
  check_finite(out, "sigmoid");
  return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gout) {
  Tensor dx(y.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) dx[i] = gout[i] * y[i] * (1.0f - y[i]);
  return dx;
}

Tensor maxpool2d(const Tensor& x, const PoolAttrs& a, std::vector<std::int32_t>* argmax) {
  expect_rank(x, 4, "maxpool2d", "input");
  expect(a.kernel >= 1 && a.stride >= 1, "maxpool2d: kernel and stride must be >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = conv_out_dim(H, a.kernel, a.stride, 0);
  const int Wo = conv_out_dim(W, a.kernel, a.stride, 0);
  expect(Ho >= 1 && Wo >= 1, "maxpool2d: window does not fit input " + shape_str(x.shape()));
  Tensor out({N, C, Ho, Wo});
  if (argmax) argmax->assign(static_cast<std::size_t>(out.numel()), 0);
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* plane = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow, ++o) {
          const int h0 = oh * a.stride, w0 = ow * a.stride;
          float best = plane[static_cast<std::int64_t>(h0) * W + w0];
          std::int64_t best_idx = base + static_cast<std::int64_t>(h0) * W + w0;
          for (int ki = 0; ki < a.kernel; ++ki) {
            for (int kj = 0; kj < a.kernel; ++kj) {
              const std::int64_t idx = static_cast<std::int64_t>(h0 + ki) * W + (w0 + kj);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = base + idx;
              }
            }
          }
          out[o] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(o)] = static_cast<std::int32_t>(best_idx);
        }
      }
    }
  }
  check_finite(out, "maxpool2d");
  return out;
}

Tensor maxpool2d_backward(const Shape& x_shape, const std::vector<std::int32_t>& argmax,
                          const Tensor& gout) {
  Tensor dx(x_shape);
  for (std::int64_t i = 0; i < gout.numel(); ++i)
    dx[argmax[static_cast<std::size_t>(i)]] += gout[i];
  return dx;
}

Tensor avgpool2d(const Tensor& x, const PoolAttrs& a) {
  expect_rank(x, 4, "avgpool2d", "input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = conv_out_dim(H, a.kernel, a.stride, 0);
  const int Wo = conv_out_dim(W, a.kernel, a.stride, 0);
  expect(Ho >= 1 && Wo >= 1, "avgpool2d: window does not fit input " + shape_str(x.shape()));
  Tensor out({N, C, Ho, Wo});
  const float inv = 1.0f / static_cast<float>(a.kernel * a.kernel);
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* plane = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow, ++o) {
          const int h0 = oh * a.stride, w0 = ow * a.stride;
          float acc = 0.0f;
          for (int ki = 0; ki < a.kernel; ++ki)
            for (int kj = 0; kj < a.kernel; ++kj)
              acc += plane[static_cast<std::int64_t>(h0 + ki) * W + (w0 + kj)];
          out[o] = acc * inv;
        }
      }
    }
  }
  check_finite(out, "avgpool2d");
  return out;
}

Tensor avgpool2d_backward(const Shape& x_shape, const PoolAttrs& a, const Tensor& gout) {
  Tensor dx(x_shape);
  const int N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
  const int Ho = gout.dim(2), Wo = gout.dim(3);
  const float inv = 1.0f / static_cast<float>(a.kernel * a.kernel);
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      float* plane = dx.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow, ++o) {
          const float g = gout[o] * inv;
          const int h0 = oh * a.stride, w0 = ow * a.stride;
          for (int ki = 0; ki < a.kernel; ++ki)
            for (int kj = 0; kj < a.kernel; ++kj)
              plane[static_cast<std::int64_t>(h0 + ki) * W + (w0 + kj)] += g;
        }
      }
    }
  }
  return dx;
}

Tensor adaptive_avgpool2d(const Tensor& x, int out_h, int out_w) {
  expect_rank(x, 4, "adaptive_avgpool2d", "input");
  expect(out_h >= 1 && out_w >= 1, "adaptive_avgpool2d: output dims must be >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  expect(out_h <= H && out_w <= W,
         "adaptive_avgpool2d: output " + std::to_string(out_h) + "x" +
             std::to_string(out_w) + " larger than input " + shape_str(x.shape()));
  Tensor out({N, C, out_h, out_w});
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* plane = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < out_h; ++oh) {
        const int h0 = (oh * H) / out_h;
        const int h1 = ((oh + 1) * H + out_h - 1) / out_h;
        for (int ow = 0; ow < out_w; ++ow, ++o) {
          const int w0 = (ow * W) / out_w;
          const int w1 = ((ow + 1) * W + out_w - 1) / out_w;
          double acc = 0.0;
          for (int ih = h0; ih < h1; ++ih)
            for (int iw = w0; iw < w1; ++iw)
              acc += plane[static_cast<std::int64_t>(ih) * W + iw];
          out[o] = static_cast<float>(acc / ((h1 - h0) * (w1 - w0)));
        }
      }
    }
  }
  check_finite(out, "adaptive_avgpool2d");
  return out;
}

Tensor adaptive_avgpool2d_backward(const Shape& x_shape, int out_h, int out_w,
                                   const Tensor& gout) {
  Tensor dx(x_shape);
  const int N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      float* plane = dx.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < out_h; ++oh) {
        const int h0 = (oh * H) / out_h;
        const int h1 = ((oh + 1) * H + out_h - 1) / out_h;
        for (int ow = 0; ow < out_w; ++ow, ++o) {
          const int w0 = (ow * W) / out_w;
          const int w1 = ((ow + 1) * W + out_w - 1) / out_w;
          const float g = gout[o] / static_cast<float>((h1 - h0) * (w1 - w0));
          for (int ih = h0; ih < h1; ++ih)
            for (int iw = w0; iw < w1; ++iw)
              plane[static_cast<std::int64_t>(ih) * W + iw] += g;
        }
      }
    }
  }
  return dx;
}

Tensor flatten(const Tensor& x) {
  expect(x.rank() >= 2, "flatten: input must have rank >= 2, got " + shape_str(x.shape()));
  std::int64_t rest = 1;
  for (int i = 1; i < x.rank(); ++i) rest *= x.dim(i);
  return x.reshaped({x.dim(0), static_cast<int>(rest)});
}

Tensor add(const Tensor& a, const Tensor& b) {
  expect(a.same_shape(b), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  check_finite(out, "add");
  return out;
}

Tensor broadcast_add(const Tensor& x, const Tensor& d) {
  expect_rank(x, 4, "broadcast_add", "input");
  expect_rank(d, 3, "broadcast_add", "delta");
  expect(x.dim(1) == d.dim(0) && x.dim(2) == d.dim(1) && x.dim(3) == d.dim(2),
         "broadcast_add: delta shape " + shape_str(d.shape()) +
             " incompatible with input " + shape_str(x.shape()));
  Tensor out(x.shape());
  const std::int64_t per = d.numel();
  for (int n = 0; n < x.dim(0); ++n) {
    const float* xs = x.data() + static_cast<std::int64_t>(n) * per;
    float* os = out.data() + static_cast<std::int64_t>(n) * per;
    for (std::int64_t i = 0; i < per; ++i) os[i] = xs[i] + d[i];
  }
  check_finite(out, "broadcast_add");
  return out;
}

Tensor broadcast_add_backward_d(const Tensor& gout) {
  const std::int64_t per = static_cast<std::int64_t>(gout.dim(1)) * gout.dim(2) * gout.dim(3);
  Tensor dd({gout.dim(1), gout.dim(2), gout.dim(3)});
  std::vector<double> acc(static_cast<std::size_t>(per), 0.0);
  for (int n = 0; n < gout.dim(0); ++n) {
    const float* gs = gout.data() + static_cast<std::int64_t>(n) * per;
    for (std::int64_t i = 0; i < per; ++i) acc[static_cast<std::size_t>(i)] += gs[i];
  }
  for (std::int64_t i = 0; i < per; ++i) dd[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
  return dd;
}

Tensor clip01(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[i] = std::min(1.0f, std::max(0.0f, x[i]));
  return out;
}

Tensor batchnorm2d_inference(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  expect_rank(x, 4, "batchnorm2d_inference", "input");
  const int C = x.dim(1);
  expect(scale.numel() == C && shift.numel() == C,
         "batchnorm2d_inference: per-channel params must have size " + std::to_string(C));
  Tensor out(x.shape());
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  for (int n = 0; n < x.dim(0); ++n) {
    for (int c = 0; c < C; ++c) {
      const float a = scale[c], b = shift[c];
      const float* xs = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      float* os = out.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) os[i] = xs[i] * a + b;
    }
  }
  check_finite(out, "batchnorm2d_inference");
  return out;
}

BnGrads batchnorm2d_inference_backward(const Tensor& x, const Tensor& scale,
                                       const Tensor& gout, bool need_dx,
                                       bool need_dparams) {
  const int C = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  BnGrads g;
  if (need_dx) {
    g.dx = Tensor(x.shape());
    for (int n = 0; n < x.dim(0); ++n) {
      for (int c = 0; c < C; ++c) {
        const float a = scale[c];
        const float* gs = gout.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        float* ds = g.dx.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) ds[i] = gs[i] * a;
      }
    }
  }
  if (need_dparams) {
    g.dscale = Tensor({C});
    g.dshift = Tensor({C});
    for (int c = 0; c < C; ++c) {
      double ds = 0.0, db = 0.0;
      for (int n = 0; n < x.dim(0); ++n) {
        const float* xs = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        const float* gs = gout.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          ds += static_cast<double>(xs[i]) * gs[i];
          db += gs[i];
        }
      }
      g.dscale[c] = static_cast<float>(ds);
      g.dshift[c] = static_cast<float>(db);
    }
  }
  return g;
}

CeResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                               Reduction red) {
  expect_rank(logits, 2, "softmax_crossentropy", "logits");
  const int N = logits.dim(0), K = logits.dim(1);
  expect(static_cast<int>(labels.size()) == N,
         "softmax_crossentropy: " + std::to_string(labels.size()) + " labels for batch " +
             std::to_string(N));
  CeResult r;
  r.probs = Tensor({N, K});
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    expect(y >= 0 && y < K, "softmax_crossentropy: label " + std::to_string(y) +
                                " out of range [0," + std::to_string(K) + ")");
    const float* z = logits.data() + static_cast<std::int64_t>(n) * K;
    double m = z[0];
    for (int k = 1; k < K; ++k) m = std::max(m, static_cast<double>(z[k]));
    double se = 0.0;
    for (int k = 0; k < K; ++k) se += std::exp(static_cast<double>(z[k]) - m);
    const double lse = m + std::log(se);
    for (int k = 0; k < K; ++k)
      r.probs[static_cast<std::int64_t>(n) * K + k] =
          static_cast<float>(std::exp(static_cast<double>(z[k]) - lse));
    total += lse - static_cast<double>(z[y]);
  }
  if (red == Reduction::Mean) total /= N;
  r.loss = Tensor({1}, {static_cast<float>(total)});
  check_finite(r.loss, "softmax_crossentropy");
  return r;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, const std::vector<int>& labels,
                                      Reduction red, float seed) {
  const int N = probs.dim(0), K = probs.dim(1);
  const float scale = red == Reduction::Mean ? seed / static_cast<float>(N) : seed;
  Tensor dz(probs.shape());
  for (int n = 0; n < N; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    for (int k = 0; k < K; ++k) {
      const std::int64_t i = static_cast<std::int64_t>(n) * K + k;
      dz[i] = (probs[i] - (k == y ? 1.0f : 0.0f)) * scale;
    }
  }
  return dz;
}

BceResult sigmoid_bce(const Tensor& logits, const std::vector<float>& targets,
                      float pos_weight) {
  expect(logits.rank() == 1 || (logits.rank() == 2 && logits.dim(1) == 1),
         "sigmoid_bce: logits must be (N) or (N,1), got " + shape_str(logits.shape()));
  const int N = logits.dim(0);
  expect(static_cast<int>(targets.size()) == N,
         "sigmoid_bce: " + std::to_string(targets.size()) + " targets for batch " +
             std::to_string(N));
  BceResult r;
  r.sig = sigmoid(logits);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const double z = logits[n];
    const double y = targets[static_cast<std::size_t>(n)];
    const double w = y > 0.5 ? pos_weight : 1.0;
    // logits-form: max(z,0) - z*y + log(1 + exp(-|z|))
    total += w * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
  }
  r.loss = Tensor({1}, {static_cast<float>(total / N)});
  check_finite(r.loss, "sigmoid_bce");
  return r;
}

Tensor sigmoid_bce_backward(const Tensor& sig, const std::vector<float>& targets,
                            float pos_weight, float seed) {
  const int N = sig.dim(0);
  Tensor dz(sig.shape());
  for (int n = 0; n < N; ++n) {
    const float y = targets[static_cast<std::size_t>(n)];
    const float w = y > 0.5f ? pos_weight : 1.0f;
    dz[n] = w * (sig[n] - y) * seed / static_cast<float>(N);
  }
  return dz;
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  Tensor out({1}, {static_cast<float>(acc)});
  check_finite(out, "sum");
  return out;
}

}  // namespace eua::ops
