#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace fsr {

enum class RunMode { Train, Eval };
enum class PoolKind { Max, Avg };

// 2D cross-correlation (no kernel flip). input [N,Cin,H,W], weight
// [Cout,Cin,kh,kw], bias [Cout]. Output spatial size follows
// floor((H + 2*padding - kh) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding,
              Tape* tape = nullptr);

// Per-channel convolution: weight [C,1,kh,kw], one kernel per channel,
// channels never mix.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding, Tape* tape = nullptr);

Tensor pool2d(const Tensor& input, PoolKind kind, int window, int stride, Tape* tape = nullptr);

// input [N,F] * weight [F,G] + bias [G].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias, Tape* tape = nullptr);

Tensor relu(const Tensor& input, Tape* tape = nullptr);

// Running statistics owned by the calling layer; updated only in train mode.
struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  double momentum = 0.1;
  double epsilon = 1e-5;
};

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   RunMode mode, Tape* tape = nullptr);

// Normalizes over the last axis (length >= 2), then scales/shifts.
Tensor layernorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double epsilon = 1e-5,
                 Tape* tape = nullptr);

// Row-wise softmax over the last axis, max-subtracted for stability.
Tensor softmax(const Tensor& input, Tape* tape = nullptr);

// Mean over the batch of -log softmax(logits)[label]. Gradient w.r.t.
// logits is (softmax - onehot) / N.
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels, Tape* tape = nullptr);

struct MhaParams {
  Tensor wq, bq;  // [D,D], [D]
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
};

// input [N,T,D]; per head softmax(Q K^T / sqrt(D/heads)) V, heads
// concatenated then output-projected. heads must divide D.
Tensor multihead_attention(const Tensor& input, const MhaParams& params, int heads, Tape* tape = nullptr);

// --- structural / elementwise primitives -------------------------------

// Equal shapes, or b with leading dimension 1 broadcast across a's dim 0.
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double factor, Tape* tape = nullptr);

// Batched matmul: a [B,M,K] times b [B,K,N] (or [B,N,K] when transpose_b).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, Tape* tape = nullptr);

// dims[i] names the input axis that becomes output axis i.
Tensor permute(const Tensor& a, const std::vector<int>& dims, Tape* tape = nullptr);

// Free view: shares storage (and gradient) with the input.
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat(const std::vector<Tensor>& parts, int axis, Tape* tape = nullptr);
Tensor slice(const Tensor& a, int axis, int start, int length, Tape* tape = nullptr);

// Zero-pads the spatial axes of an [N,C,H,W] tensor.
Tensor pad2d(const Tensor& a, int pad_h, int pad_w, Tape* tape = nullptr);

// Per-row argmax; ties break toward the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

// Output spatial extent of a conv/pool stage; throws when the kernel
// does not fit.
int conv_out_extent(const char* op, const char* axis, int extent, int kernel, int stride, int padding);

}  // namespace fsr
