#pragma once

// Test-only reference computations. Everything here is written as plain
// loops, independent of the engine's kernels, so the two routes can
// disagree when one is wrong.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "core/tensor.hpp"

namespace oracle {

// Direct cross-correlation, quadruple loop over output and kernel taps.
inline std::vector<double> conv2d_reference(const std::vector<double>& x, int n, int cin, int h, int w,
                                            const std::vector<double>& wt, int cout, int kh, int kw,
                                            const std::vector<double>& b, int stride, int pad, int ho,
                                            int wo) {
  std::vector<double> y(static_cast<std::size_t>(n) * cout * ho * wo, 0.0);
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < cout; ++co)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double s = b.empty() ? 0.0 : b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int ih = oh * stride - pad + i;
                const int iw = ow * stride - pad + j;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                s += x[((static_cast<std::size_t>(ni) * cin + ci) * h + ih) * w + iw] *
                     wt[((static_cast<std::size_t>(co) * cin + ci) * kh + i) * kw + j];
              }
          y[((static_cast<std::size_t>(ni) * cout + co) * ho + oh) * wo + ow] = s;
        }
  return y;
}

inline std::vector<double> pool2d_reference(const std::vector<double>& x, int n, int c, int h, int w,
                                            bool max_pool, int window, int stride, int ho, int wo) {
  std::vector<double> y(static_cast<std::size_t>(n) * c * ho * wo);
  for (int p = 0; p < n * c; ++p)
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) {
        double acc = max_pool ? -1e300 : 0.0;
        for (int i = 0; i < window; ++i)
          for (int j = 0; j < window; ++j) {
            const double v =
                x[(static_cast<std::size_t>(p) * h + oh * stride + i) * w + ow * stride + j];
            acc = max_pool ? std::max(acc, v) : acc + v;
          }
        y[(static_cast<std::size_t>(p) * ho + oh) * wo + ow] =
            max_pool ? acc : acc / (window * window);
      }
  return y;
}

inline std::vector<double> dense_reference(const std::vector<double>& x, int n, int f,
                                           const std::vector<double>& w, int g,
                                           const std::vector<double>& b) {
  std::vector<double> y(static_cast<std::size_t>(n) * g);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < g; ++j) {
      double s = b.empty() ? 0.0 : b[j];
      for (int k = 0; k < f; ++k) s += x[static_cast<std::size_t>(i) * f + k] * w[static_cast<std::size_t>(k) * g + j];
      y[static_cast<std::size_t>(i) * g + j] = s;
    }
  return y;
}

// Per-sample -log p computed straight from the definition.
inline double cross_entropy_reference(const std::vector<double>& logits, int n, int k,
                                      const std::vector<int>& labels) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(logits[static_cast<std::size_t>(i) * k + j]);
    const double p = std::exp(logits[static_cast<std::size_t>(i) * k + labels[i]]) / denom;
    total += -std::log(p);
  }
  return total / n;
}

// Attaches a scalar loss L = sum_i w_i * y_i to a forward output so a
// whole-op gradient can be checked. The backward step is recorded by
// hand, independent of any engine op.
inline fsr::Tensor dot_loss(const fsr::Tensor& y, const std::vector<double>& w, fsr::Tape& tape) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y.data()[i] * w[i];
  fsr::Tensor loss = fsr::Tensor::scalar(s);
  loss.set_requires_grad(true);
  fsr::Tensor yc = y;
  tape.record([yc, loss, w]() mutable {
    const double g = loss.grad()[0];
    double* dy = yc.grad_data();
    for (std::size_t i = 0; i < yc.numel(); ++i) dy[i] += w[i] * g;
  });
  return loss;
}

inline double plain_dot(const fsr::Tensor& y, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y.data()[i] * w[i];
  return s;
}

// Central finite differences of `loss_value()` w.r.t. every element of t.
inline std::vector<double> finite_diff(fsr::Tensor& t, const std::function<double()>& loss_value,
                                       double step = 1e-4) {
  std::vector<double> grad(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double saved = t.data()[i];
    t.data()[i] = saved + step;
    const double up = loss_value();
    t.data()[i] = saved - step;
    const double down = loss_value();
    t.data()[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-2});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace oracle
