#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>

#include "core/gemm.hpp"

namespace fsr {

namespace {

bool traced(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void check_rank(const char* op, const char* name, const Tensor& t, int rank) {
  if (t.rank() != rank)
    throw std::invalid_argument(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                                ", got " + shape_str(t.shape()));
}

// cols layout: [C*kh*kw, N*Ho*Wo]; out-of-image taps are zero.
void im2col(const double* x, int n, int c, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo, double* cols) {
  const std::size_t colw = static_cast<std::size_t>(n) * ho * wo;
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        double* row = cols + (static_cast<std::size_t>((ci * kh + i) * kw + j)) * colw;
        for (int ni = 0; ni < n; ++ni) {
          const double* xn = x + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride - pad + i;
            double* dst = row + (static_cast<std::size_t>(ni) * ho + oh) * wo;
            if (ih < 0 || ih >= h) {
              std::memset(dst, 0, static_cast<std::size_t>(wo) * sizeof(double));
              continue;
            }
            const double* xr = xn + static_cast<std::size_t>(ih) * w;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride - pad + j;
              dst[ow] = (iw >= 0 && iw < w) ? xr[iw] : 0.0;
            }
          }
        }
      }
}

// Transpose of im2col: scatter-add column gradients back onto the image.
void col2im_add(const double* cols, int n, int c, int h, int w, int kh, int kw, int stride, int pad,
                int ho, int wo, double* xg) {
  const std::size_t colw = static_cast<std::size_t>(n) * ho * wo;
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const double* row = cols + (static_cast<std::size_t>((ci * kh + i) * kw + j)) * colw;
        for (int ni = 0; ni < n; ++ni) {
          double* xn = xg + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride - pad + i;
            if (ih < 0 || ih >= h) continue;
            const double* src = row + (static_cast<std::size_t>(ni) * ho + oh) * wo;
            double* xr = xn + static_cast<std::size_t>(ih) * w;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride - pad + j;
              if (iw >= 0 && iw < w) xr[iw] += src[ow];
            }
          }
        }
      }
}

}  // namespace

int conv_out_extent(const char* op, const char* axis, int extent, int kernel, int stride, int padding) {
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be positive");
  if (padding < 0) throw std::invalid_argument(std::string(op) + ": padding must be non-negative");
  const int padded = extent + 2 * padding;
  if (kernel < 1 || kernel > padded)
    throw std::invalid_argument(std::string(op) + ": kernel " + std::to_string(kernel) + " does not fit " +
                                axis + " extent " + std::to_string(extent) + " with padding " +
                                std::to_string(padding));
  return (padded - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding,
              Tape* tape) {
  check_rank("conv2d", "input", input, 4);
  check_rank("conv2d", "weight", weight, 4);
  check_rank("conv2d", "bias", bias, 1);
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin)
    throw std::invalid_argument("conv2d: weight input channels (" + std::to_string(weight.dim(1)) +
                                ") do not match input channels (" + std::to_string(cin) + ")");
  if (bias.dim(0) != cout)
    throw std::invalid_argument("conv2d: bias length (" + std::to_string(bias.dim(0)) +
                                ") does not match output channels (" + std::to_string(cout) + ")");
  const int ho = conv_out_extent("conv2d", "height", h, kh, stride, padding);
  const int wo = conv_out_extent("conv2d", "width", w, kw, stride, padding);

  const std::size_t ckk = static_cast<std::size_t>(cin) * kh * kw;
  const std::size_t colw = static_cast<std::size_t>(n) * ho * wo;
  auto cols = std::make_shared<std::vector<double>>(ckk * colw);
  im2col(input.data(), n, cin, h, w, kh, kw, stride, padding, ho, wo, cols->data());

  std::vector<double> ymat(static_cast<std::size_t>(cout) * colw);
  gemm_nn(cout, colw, ckk, weight.data(), cols->data(), ymat.data());

  Tensor out(Shape{n, cout, ho, wo});
  double* y = out.data();
  const double* b = bias.data();
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < cout; ++co) {
      const double* src = ymat.data() + co * colw + ni * plane;
      double* dst = y + (static_cast<std::size_t>(ni) * cout + co) * plane;
      const double bv = b[co];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bv;
    }

  if (traced(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor x = input, wt = weight, bt = bias, yt = out;
    tape->record([x, wt, bt, yt, cols, n, cin, h, w, cout, kh, kw, stride, padding, ho, wo, ckk, colw,
                  plane]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      // gather to [Cout, N*Ho*Wo]
      std::vector<double> gmat(static_cast<std::size_t>(cout) * colw);
      for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < cout; ++co)
          std::memcpy(gmat.data() + co * colw + ni * plane,
                      g + (static_cast<std::size_t>(ni) * cout + co) * plane, plane * sizeof(double));
      if (bt.requires_grad()) {
        double* db = bt.grad_data();
        for (int co = 0; co < cout; ++co) {
          double s = 0.0;
          const double* row = gmat.data() + co * colw;
          for (std::size_t i = 0; i < colw; ++i) s += row[i];
          db[co] += s;
        }
      }
      if (wt.requires_grad()) gemm_nt(cout, ckk, colw, gmat.data(), cols->data(), wt.grad_data(), true);
      if (x.requires_grad()) {
        std::vector<double> dcols(ckk * colw);
        gemm_tn(ckk, colw, cout, wt.data(), gmat.data(), dcols.data());
        col2im_add(dcols.data(), n, cin, h, w, kh, kw, stride, padding, ho, wo, x.grad_data());
      }
    });
  }
  return out;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding, Tape* tape) {
  check_rank("depthwise_conv2d", "input", input, 4);
  check_rank("depthwise_conv2d", "weight", weight, 4);
  check_rank("depthwise_conv2d", "bias", bias, 1);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != c || weight.dim(1) != 1)
    throw std::invalid_argument("depthwise_conv2d: weight must be [" + std::to_string(c) +
                                ",1,kh,kw] for input channels " + std::to_string(c) + ", got " +
                                shape_str(weight.shape()));
  if (bias.dim(0) != c)
    throw std::invalid_argument("depthwise_conv2d: bias length does not match channel count");
  const int ho = conv_out_extent("depthwise_conv2d", "height", h, kh, stride, padding);
  const int wo = conv_out_extent("depthwise_conv2d", "width", w, kw, stride, padding);

  Tensor out(Shape{n, c, ho, wo});
  double* y = out.data();
  const double* x = input.data();
  const double* wv = weight.data();
  const double* b = bias.data();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* xp = x + (static_cast<std::size_t>(ni) * c + ci) * h * w;
      const double* kp = wv + static_cast<std::size_t>(ci) * kh * kw;
      double* yp = y + (static_cast<std::size_t>(ni) * c + ci) * ho * wo;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double s = b[ci];
          for (int i = 0; i < kh; ++i) {
            const int ih = oh * stride - padding + i;
            if (ih < 0 || ih >= h) continue;
            for (int j = 0; j < kw; ++j) {
              const int iw = ow * stride - padding + j;
              if (iw < 0 || iw >= w) continue;
              s += xp[static_cast<std::size_t>(ih) * w + iw] * kp[i * kw + j];
            }
          }
          yp[static_cast<std::size_t>(oh) * wo + ow] = s;
        }
    }

  if (traced(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor xt = input, wt = weight, bt = bias, yt = out;
    tape->record([xt, wt, bt, yt, n, c, h, w, kh, kw, stride, padding, ho, wo]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      const double* x = xt.data();
      const double* wv = wt.data();
      double* dw = wt.requires_grad() ? wt.grad_data() : nullptr;
      double* db = bt.requires_grad() ? bt.grad_data() : nullptr;
      double* dx = xt.requires_grad() ? xt.grad_data() : nullptr;
      for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
          const double* xp = x + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          const double* kp = wv + static_cast<std::size_t>(ci) * kh * kw;
          const double* gp = g + (static_cast<std::size_t>(ni) * c + ci) * ho * wo;
          double* dxp = dx ? dx + (static_cast<std::size_t>(ni) * c + ci) * h * w : nullptr;
          double* dwp = dw ? dw + static_cast<std::size_t>(ci) * kh * kw : nullptr;
          for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
              const double gv = gp[static_cast<std::size_t>(oh) * wo + ow];
              if (db) db[ci] += gv;
              for (int i = 0; i < kh; ++i) {
                const int ih = oh * stride - padding + i;
                if (ih < 0 || ih >= h) continue;
                for (int j = 0; j < kw; ++j) {
                  const int iw = ow * stride - padding + j;
                  if (iw < 0 || iw >= w) continue;
                  const std::size_t xi = static_cast<std::size_t>(ih) * w + iw;
                  if (dwp) dwp[i * kw + j] += gv * xp[xi];
                  if (dxp) dxp[xi] += gv * kp[i * kw + j];
                }
              }
            }
        }
    });
  }
  return out;
}

Tensor pool2d(const Tensor& input, PoolKind kind, int window, int stride, Tape* tape) {
  check_rank("pool2d", "input", input, 4);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window < 1) throw std::invalid_argument("pool2d: window must be positive");
  if (window > h || window > w)
    throw std::invalid_argument("pool2d: window " + std::to_string(window) + " exceeds spatial extent " +
                                std::to_string(h) + "x" + std::to_string(w));
  const int ho = conv_out_extent("pool2d", "height", h, window, stride, 0);
  const int wo = conv_out_extent("pool2d", "width", w, window, stride, 0);

  Tensor out(Shape{n, c, ho, wo});
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  auto argmax = kind == PoolKind::Max
                    ? std::make_shared<std::vector<std::size_t>>(planes * ho * wo)
                    : nullptr;
  const double* x = input.data();
  double* y = out.data();
  const double inv_area = 1.0 / (static_cast<double>(window) * window);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* xp = x + p * h * w;
    double* yp = y + p * ho * wo;
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) {
        const int ih0 = oh * stride, iw0 = ow * stride;
        if (kind == PoolKind::Max) {
          std::size_t best = static_cast<std::size_t>(ih0) * w + iw0;
          double bv = xp[best];
          for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) {
              const std::size_t xi = static_cast<std::size_t>(ih0 + i) * w + (iw0 + j);
              if (xp[xi] > bv) {
                bv = xp[xi];
                best = xi;
              }
            }
          yp[static_cast<std::size_t>(oh) * wo + ow] = bv;
          (*argmax)[p * ho * wo + static_cast<std::size_t>(oh) * wo + ow] = best;
        } else {
          double s = 0.0;
          for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) s += xp[static_cast<std::size_t>(ih0 + i) * w + (iw0 + j)];
          yp[static_cast<std::size_t>(oh) * wo + ow] = s * inv_area;
        }
      }
  }

  if (traced(tape, {&input})) {
    out.set_requires_grad(true);
    Tensor xt = input, yt = out;
    tape->record([xt, yt, argmax, kind, n, c, h, w, window, stride, ho, wo, planes, inv_area]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* dx = xt.grad_data();
      for (std::size_t p = 0; p < planes; ++p) {
        const double* gp = g + p * ho * wo;
        double* dxp = dx + p * h * w;
        for (int oh = 0; oh < ho; ++oh)
          for (int ow = 0; ow < wo; ++ow) {
            const double gv = gp[static_cast<std::size_t>(oh) * wo + ow];
            if (kind == PoolKind::Max) {
              dxp[(*argmax)[p * ho * wo + static_cast<std::size_t>(oh) * wo + ow]] += gv;
            } else {
              const double share = gv * inv_area;
              const int ih0 = oh * stride, iw0 = ow * stride;
              for (int i = 0; i < window; ++i)
                for (int j = 0; j < window; ++j)
                  dxp[static_cast<std::size_t>(ih0 + i) * w + (iw0 + j)] += share;
            }
          }
      }
    });
  }
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias, Tape* tape) {
  check_rank("dense", "input", input, 2);
  check_rank("dense", "weight", weight, 2);
  check_rank("dense", "bias", bias, 1);
  const int n = input.dim(0), f = input.dim(1), g = weight.dim(1);
  if (weight.dim(0) != f)
    throw std::invalid_argument("dense: input features (" + std::to_string(f) +
                                ") do not match weight rows (" + std::to_string(weight.dim(0)) + ")");
  if (bias.dim(0) != g)
    throw std::invalid_argument("dense: bias length does not match output features");

  Tensor out(Shape{n, g});
  gemm_nn(n, g, f, input.data(), weight.data(), out.data());
  double* y = out.data();
  const double* b = bias.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < g; ++j) y[static_cast<std::size_t>(i) * g + j] += b[j];

  if (traced(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor xt = input, wt = weight, bt = bias, yt = out;
    tape->record([xt, wt, bt, yt, n, f, g]() mutable {
      if (!yt.has_grad()) return;
      const double* gy = yt.grad().data();
      if (bt.requires_grad()) {
        double* db = bt.grad_data();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < g; ++j) db[j] += gy[static_cast<std::size_t>(i) * g + j];
      }
      if (wt.requires_grad()) gemm_tn(f, g, n, xt.data(), gy, wt.grad_data(), true);
      if (xt.requires_grad()) gemm_nt(n, f, g, gy, wt.data(), xt.grad_data(), true);
    });
  }
  return out;
}

Tensor relu(const Tensor& input, Tape* tape) {
  Tensor out(input.shape());
  const double* x = input.data();
  double* y = out.data();
  const std::size_t n = input.numel();
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;

  if (traced(tape, {&input})) {
    out.set_requires_grad(true);
    Tensor xt = input, yt = out;
    tape->record([xt, yt, n]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      const double* x = xt.data();
      double* dx = xt.grad_data();
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) dx[i] += g[i];
    });
  }
  return out;
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   RunMode mode, Tape* tape) {
  check_rank("batchnorm2d", "input", input, 4);
  check_rank("batchnorm2d", "gamma", gamma, 1);
  check_rank("batchnorm2d", "beta", beta, 1);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.dim(0) != c || beta.dim(0) != c)
    throw std::invalid_argument("batchnorm2d: gamma/beta length does not match channel count " +
                                std::to_string(c));
  const std::size_t m = static_cast<std::size_t>(n) * h * w;
  if (mode == RunMode::Train && m < 2)
    throw std::invalid_argument("batchnorm2d: train mode needs at least 2 elements per channel, got " +
                                std::to_string(m));

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> mean(c), inv(c);
  const double* x = input.data();
  if (mode == RunMode::Train) {
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* xp = x + (static_cast<std::size_t>(ni) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += xp[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* xp = x + (static_cast<std::size_t>(ni) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = xp[i] - mu;
          v += d * d;
        }
      }
      const double var = v / static_cast<double>(m);
      mean[ci] = mu;
      inv[ci] = 1.0 / std::sqrt(var + state.epsilon);
      const double mom = state.momentum;
      state.running_mean.data()[ci] = (1.0 - mom) * state.running_mean.data()[ci] + mom * mu;
      state.running_var.data()[ci] =
          (1.0 - mom) * state.running_var.data()[ci] +
          mom * var * static_cast<double>(m) / static_cast<double>(m - 1);
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      mean[ci] = state.running_mean.data()[ci];
      inv[ci] = 1.0 / std::sqrt(state.running_var.data()[ci] + state.epsilon);
    }
  }

  Tensor out(input.shape());
  auto xhat = std::make_shared<std::vector<double>>(input.numel());
  double* y = out.data();
  const double* gm = gamma.data();
  const double* bt_ = beta.data();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x[off + i] - mean[ci]) * inv[ci];
        (*xhat)[off + i] = xh;
        y[off + i] = gm[ci] * xh + bt_[ci];
      }
    }

  if (traced(tape, {&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor xt = input, gt = gamma, bt2 = beta, yt = out;
    const bool train = mode == RunMode::Train;
    tape->record([xt, gt, bt2, yt, xhat, inv, n, c, plane, m, train]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* dgamma = gt.requires_grad() ? gt.grad_data() : nullptr;
      double* dbeta = bt2.requires_grad() ? bt2.grad_data() : nullptr;
      double* dx = xt.requires_grad() ? xt.grad_data() : nullptr;
      const double* gm = gt.data();
      for (int ci = 0; ci < c; ++ci) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int ni = 0; ni < n; ++ni) {
          const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_g += g[off + i];
            sum_gx += g[off + i] * (*xhat)[off + i];
          }
        }
        if (dbeta) dbeta[ci] += sum_g;
        if (dgamma) dgamma[ci] += sum_gx;
        if (!dx) continue;
        const double k = gm[ci] * inv[ci];
        if (train) {
          const double mg = sum_g / static_cast<double>(m);
          const double mgx = sum_gx / static_cast<double>(m);
          for (int ni = 0; ni < n; ++ni) {
            const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i)
              dx[off + i] += k * (g[off + i] - mg - (*xhat)[off + i] * mgx);
          }
        } else {
          for (int ni = 0; ni < n; ++ni) {
            const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) dx[off + i] += k * g[off + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor layernorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double epsilon,
                 Tape* tape) {
  if (input.rank() < 1) throw std::invalid_argument("layernorm: input must have rank >= 1");
  const int d = input.dim(-1);
  if (d < 2) throw std::invalid_argument("layernorm: last axis must have length >= 2, got " +
                                         std::to_string(d));
  check_rank("layernorm", "gamma", gamma, 1);
  check_rank("layernorm", "beta", beta, 1);
  if (gamma.dim(0) != d || beta.dim(0) != d)
    throw std::invalid_argument("layernorm: gamma/beta length does not match last axis " +
                                std::to_string(d));
  const std::size_t rows = input.numel() / static_cast<std::size_t>(d);

  Tensor out(input.shape());
  auto xhat = std::make_shared<std::vector<double>>(input.numel());
  auto invs = std::make_shared<std::vector<double>>(rows);
  const double* x = input.data();
  double* y = out.data();
  const double* gm = gamma.data();
  const double* bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += xr[i];
    const double mu = s / d;
    double v = 0.0;
    for (int i = 0; i < d; ++i) {
      const double dd = xr[i] - mu;
      v += dd * dd;
    }
    const double inv = 1.0 / std::sqrt(v / d + epsilon);
    (*invs)[r] = inv;
    double* yr = y + r * d;
    for (int i = 0; i < d; ++i) {
      const double xh = (xr[i] - mu) * inv;
      (*xhat)[r * d + i] = xh;
      yr[i] = gm[i] * xh + bt[i];
    }
  }

  if (traced(tape, {&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor xt = input, gt = gamma, bt2 = beta, yt = out;
    tape->record([xt, gt, bt2, yt, xhat, invs, rows, d]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* dgamma = gt.requires_grad() ? gt.grad_data() : nullptr;
      double* dbeta = bt2.requires_grad() ? bt2.grad_data() : nullptr;
      double* dx = xt.requires_grad() ? xt.grad_data() : nullptr;
      const double* gm = gt.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * d;
        const double* xh = xhat->data() + r * d;
        if (dgamma || dbeta)
          for (int i = 0; i < d; ++i) {
            if (dgamma) dgamma[i] += gr[i] * xh[i];
            if (dbeta) dbeta[i] += gr[i];
          }
        if (!dx) continue;
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int i = 0; i < d; ++i) {
          const double dxh = gr[i] * gm[i];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh[i];
        }
        const double inv = (*invs)[r];
        double* dxr = dx + r * d;
        for (int i = 0; i < d; ++i)
          dxr[i] += inv * (gr[i] * gm[i] - sum_dxh / d - xh[i] * sum_dxh_xh / d);
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& input, Tape* tape) {
  if (input.rank() < 1) throw std::invalid_argument("softmax: input must have rank >= 1");
  const int k = input.dim(-1);
  if (k < 1) throw std::invalid_argument("softmax: last axis must be non-empty");
  const std::size_t rows = input.numel() / static_cast<std::size_t>(k);

  Tensor out(input.shape());
  const double* x = input.data();
  double* y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * k;
    double* yr = y + r * k;
    double mx = xr[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      s += yr[i];
    }
    const double invs = 1.0 / s;
    for (int i = 0; i < k; ++i) yr[i] *= invs;
  }

  if (traced(tape, {&input})) {
    out.set_requires_grad(true);
    Tensor xt = input, yt = out;
    tape->record([xt, yt, rows, k]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      const double* y = yt.data();
      double* dx = xt.grad_data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * k;
        const double* yr = y + r * k;
        double dot = 0.0;
        for (int i = 0; i < k; ++i) dot += gr[i] * yr[i];
        double* dxr = dx + r * k;
        for (int i = 0; i < k; ++i) dxr[i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels, Tape* tape) {
  check_rank("cross_entropy_loss", "logits", logits, 2);
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  for (int i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= k)
      throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(labels[i]) +
                                  " out of range [0," + std::to_string(k) + ") at sample " +
                                  std::to_string(i));

  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  const double* x = logits.data();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* xr = x + static_cast<std::size_t>(i) * k;
    double mx = xr[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    total += lse - xr[labels[i]];
    double* pr = probs->data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) pr[j] = std::exp(xr[j] - lse);
  }
  Tensor loss = Tensor::scalar(total / n);

  if (traced(tape, {&logits})) {
    loss.set_requires_grad(true);
    Tensor xt = logits, lt = loss;
    std::vector<int> lab = labels;
    tape->record([xt, lt, probs, lab, n, k]() mutable {
      if (!lt.has_grad()) return;
      const double gout = lt.grad()[0];
      double* dx = xt.grad_data();
      const double invn = 1.0 / n;
      for (int i = 0; i < n; ++i) {
        const double* pr = probs->data() + static_cast<std::size_t>(i) * k;
        double* dxr = dx + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j)
          dxr[j] += (pr[j] - (j == lab[i] ? 1.0 : 0.0)) * invn * gout;
      }
    });
  }
  return loss;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    bool ok = a.rank() == b.rank() && b.rank() >= 1 && b.dim(0) == 1;
    for (int i = 1; ok && i < a.rank(); ++i) ok = a.dim(i) == b.dim(i);
    if (!ok)
      throw std::invalid_argument("add: shapes " + shape_str(a.shape()) + " and " +
                                  shape_str(b.shape()) + " are not compatible");
  }
  Tensor out(a.shape());
  const std::size_t n = a.numel();
  const std::size_t bn = b.numel();
  const double* av = a.data();
  const double* bv = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] + bv[i % bn];

  if (traced(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor at = a, bt = b, yt = out;
    tape->record([at, bt, yt, n, bn]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      if (at.requires_grad()) {
        double* da = at.grad_data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
      }
      if (bt.requires_grad()) {
        double* db = bt.grad_data();
        for (std::size_t i = 0; i < n; ++i) db[i % bn] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor, Tape* tape) {
  Tensor out(a.shape());
  const std::size_t n = a.numel();
  const double* av = a.data();
  double* y = out.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] * factor;

  if (traced(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor at = a, yt = out;
    tape->record([at, yt, factor, n]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* da = at.grad_data();
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, Tape* tape) {
  check_rank("bmm", "a", a, 3);
  check_rank("bmm", "b", b, 3);
  const int bs = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int bk = transpose_b ? b.dim(2) : b.dim(1);
  const int n = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != bs || bk != k)
    throw std::invalid_argument("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + (transpose_b ? " (b transposed)" : ""));

  Tensor out(Shape{bs, m, n});
  const std::size_t sa = static_cast<std::size_t>(m) * k;
  const std::size_t sb = static_cast<std::size_t>(b.dim(1)) * b.dim(2);
  const std::size_t sy = static_cast<std::size_t>(m) * n;
  for (int i = 0; i < bs; ++i) {
    const double* ai = a.data() + i * sa;
    const double* bi = b.data() + i * sb;
    double* yi = out.data() + i * sy;
    if (transpose_b)
      gemm_nt(m, n, k, ai, bi, yi);
    else
      gemm_nn(m, n, k, ai, bi, yi);
  }

  if (traced(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor at = a, bt = b, yt = out;
    tape->record([at, bt, yt, transpose_b, bs, m, n, k, sa, sb, sy]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* da = at.requires_grad() ? at.grad_data() : nullptr;
      double* db = bt.requires_grad() ? bt.grad_data() : nullptr;
      for (int i = 0; i < bs; ++i) {
        const double* gi = g + i * sy;
        const double* ai = at.data() + i * sa;
        const double* bi = bt.data() + i * sb;
        if (transpose_b) {
          // y = a b^T: da = g b, db = g^T a
          if (da) gemm_nn(m, k, n, gi, bi, da + i * sa, true);
          if (db) gemm_tn(n, k, m, gi, ai, db + i * sb, true);
        } else {
          // y = a b: da = g b^T, db = a^T g
          if (da) gemm_nt(m, k, n, gi, bi, da + i * sa, true);
          if (db) gemm_tn(k, n, m, ai, gi, db + i * sb, true);
        }
      }
    });
  }
  return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& dims, Tape* tape) {
  const int r = a.rank();
  if (static_cast<int>(dims.size()) != r)
    throw std::invalid_argument("permute: expected " + std::to_string(r) + " axes");
  std::vector<bool> seen(r, false);
  for (int d : dims) {
    if (d < 0 || d >= r || seen[d]) throw std::invalid_argument("permute: invalid axis list");
    seen[d] = true;
  }
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = a.dim(dims[i]);

  std::vector<std::size_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.dim(i + 1);
  std::vector<std::size_t> out_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];

  const std::size_t n = a.numel();
  auto mapping = std::make_shared<std::vector<std::size_t>>(n);  // output index -> input index
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t rem = o, in_off = 0;
    for (int d = 0; d < r; ++d) {
      const std::size_t cd = rem / out_strides[d];
      rem %= out_strides[d];
      in_off += cd * in_strides[dims[d]];
    }
    (*mapping)[o] = in_off;
  }

  Tensor out(out_shape);
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t o = 0; o < n; ++o) y[o] = x[(*mapping)[o]];

  if (traced(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor at = a, yt = out;
    tape->record([at, yt, mapping, n]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* dx = at.grad_data();
      for (std::size_t o = 0; o < n; ++o) dx[(*mapping)[o]] += g[o];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) { return a.reshaped(std::move(shape)); }

Tensor concat(const std::vector<Tensor>& parts, int axis, Tape* tape) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0 || axis >= r) throw std::invalid_argument("concat: axis out of range");
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && p.dim(d) != parts[0].dim(d))
        throw std::invalid_argument("concat: shape mismatch at axis " + std::to_string(d) + ": " +
                                    shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    total += p.dim(axis);
  }
  Shape out_shape = parts[0].shape();
  out_shape[axis] = total;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= parts[0].dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= parts[0].dim(d);

  Tensor out(out_shape);
  const std::size_t out_chunk = static_cast<std::size_t>(total) * inner;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t chunk = static_cast<std::size_t>(p.dim(axis)) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * out_chunk + offset, p.data() + o * chunk, chunk * sizeof(double));
    offset += chunk;
  }

  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<Tensor> ps = parts;
    Tensor yt = out;
    tape->record([ps, yt, outer, inner, out_chunk, axis]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      std::size_t offset = 0;
      for (Tensor& p : ps) {
        const std::size_t chunk = static_cast<std::size_t>(p.dim(axis)) * inner;
        if (p.requires_grad()) {
          double* dp = p.grad_data();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* gs = g + o * out_chunk + offset;
            double* ds = dp + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) ds[i] += gs[i];
          }
        }
        offset += chunk;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int length, Tape* tape) {
  const int r = a.rank();
  if (axis < 0 || axis >= r) throw std::invalid_argument("slice: axis out of range");
  if (start < 0 || length < 1 || start + length > a.dim(axis))
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + length) + ") out of bounds for axis extent " +
                                std::to_string(a.dim(axis)));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);

  Shape out_shape = a.shape();
  out_shape[axis] = length;
  Tensor out(out_shape);
  const std::size_t in_chunk = static_cast<std::size_t>(a.dim(axis)) * inner;
  const std::size_t out_chunk = static_cast<std::size_t>(length) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_chunk, a.data() + o * in_chunk + start * inner,
                out_chunk * sizeof(double));

  if (traced(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor at = a, yt = out;
    tape->record([at, yt, outer, inner, in_chunk, out_chunk, start]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* dx = at.grad_data();
      for (std::size_t o = 0; o < outer; ++o) {
        double* ds = dx + o * in_chunk + start * inner;
        const double* gs = g + o * out_chunk;
        for (std::size_t i = 0; i < out_chunk; ++i) ds[i] += gs[i];
      }
    });
  }
  return out;
}

Tensor pad2d(const Tensor& a, int pad_h, int pad_w, Tape* tape) {
  check_rank("pad2d", "input", a, 4);
  if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("pad2d: padding must be non-negative");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const int ho = h + 2 * pad_h, wo = w + 2 * pad_w;
  Tensor out(Shape{n, c, ho, wo});
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* xp = a.data() + p * h * w;
    double* yp = out.data() + p * ho * wo;
    for (int i = 0; i < h; ++i)
      std::memcpy(yp + (static_cast<std::size_t>(i + pad_h)) * wo + pad_w,
                  xp + static_cast<std::size_t>(i) * w, static_cast<std::size_t>(w) * sizeof(double));
  }

  if (traced(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor at = a, yt = out;
    tape->record([at, yt, planes, h, w, ho, wo, pad_h, pad_w]() mutable {
      if (!yt.has_grad()) return;
      const double* g = yt.grad().data();
      double* dx = at.grad_data();
      for (std::size_t p = 0; p < planes; ++p) {
        const double* gp = g + p * ho * wo;
        double* dxp = dx + p * h * w;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            dxp[static_cast<std::size_t>(i) * w + j] +=
                gp[(static_cast<std::size_t>(i + pad_h)) * wo + (j + pad_w)];
      }
    });
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  check_rank("argmax_rows", "logits", logits, 2);
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  const double* x = logits.data();
  for (int i = 0; i < n; ++i) {
    const double* xr = x + static_cast<std::size_t>(i) * k;
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (xr[j] > xr[best]) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Tensor multihead_attention(const Tensor& input, const MhaParams& params, int heads, Tape* tape) {
  check_rank("multihead_attention", "input", input, 3);
  const int n = input.dim(0), t = input.dim(1), d = input.dim(2);
  if (heads < 1) throw std::invalid_argument("multihead_attention: heads must be positive");
  if (d % heads != 0)
    throw std::invalid_argument("multihead_attention: heads (" + std::to_string(heads) +
                                ") must divide embedding dim (" + std::to_string(d) + ")");
  const int dh = d / heads;

  const Tensor flat = reshape(input, {n * t, d});
  auto split = [&](const Tensor& w, const Tensor& b) {
    Tensor p = dense(flat, w, b, tape);
    p = reshape(p, {n, t, heads, dh});
    p = permute(p, {0, 2, 1, 3}, tape);
    return reshape(p, {n * heads, t, dh});
  };
  const Tensor q = split(params.wq, params.bq);
  const Tensor k = split(params.wk, params.bk);
  const Tensor v = split(params.wv, params.bv);

  Tensor scores = bmm(q, k, true, tape);  // [N*h, T, T]
  scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)), tape);
  const Tensor attn = softmax(scores, tape);
  Tensor ctx = bmm(attn, v, false, tape);  // [N*h, T, dh]
  ctx = reshape(ctx, {n, heads, t, dh});
  ctx = permute(ctx, {0, 2, 1, 3}, tape);
  ctx = reshape(ctx, {n * t, d});
  const Tensor out = dense(ctx, params.wo, params.bo, tape);
  return reshape(out, {n, t, d});
}

}  // namespace fsr
