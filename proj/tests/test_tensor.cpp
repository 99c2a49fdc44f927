#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "core/ops.hpp"
#include "core/sgd.hpp"
#include "core/tensor.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using fsr::Shape;
using fsr::Tape;
using fsr::Tensor;

namespace {

Tensor rand_tensor(std::mt19937_64& rng, Shape shape, bool rg = false) {
  return Tensor(shape, oracle::random_vec(rng, fsr::shape_numel(shape)), rg);
}

Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.numel() == b.numel() &&
         std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("conv2d output shape follows the closed form") {
  std::mt19937_64 rng(1);
  Tensor x = rand_tensor(rng, {1, 1, 32, 32});
  Tensor w = rand_tensor(rng, {3, 1, 5, 5});
  Tensor y = fsr::conv2d(x, w, zeros({3}), 1, 0);
  CHECK(y.shape() == Shape{1, 3, 28, 28});
}

TEST_CASE("conv2d all-ones 3x3 sums to nine") {
  Tensor x({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor w({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor y = fsr::conv2d(x, w, zeros({1}), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("conv2d matches the quadruple-loop reference") {
  std::mt19937_64 rng(7);
  const auto xv = oracle::random_vec(rng, 1 * 2 * 6 * 6);
  const auto wv = oracle::random_vec(rng, 4 * 2 * 3 * 3);
  const auto bv = oracle::random_vec(rng, 4);
  Tensor y = fsr::conv2d(Tensor({1, 2, 6, 6}, xv), Tensor({4, 2, 3, 3}, wv), Tensor({4}, bv), 2, 1);
  const auto ref = oracle::conv2d_reference(xv, 1, 2, 6, 6, wv, 4, 3, 3, bv, 2, 1, 3, 3);
  REQUIRE(y.numel() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv2d rejects mismatched channels with a diagnostic") {
  std::mt19937_64 rng(2);
  Tensor x = rand_tensor(rng, {1, 4, 8, 8});
  Tensor w = rand_tensor(rng, {2, 3, 3, 3});
  CHECK_THROWS_WITH_AS(fsr::conv2d(x, w, zeros({2}), 1, 0),
                       doctest::Contains("channels"), std::invalid_argument);
  CHECK_THROWS_AS(fsr::conv2d(rand_tensor(rng, {1, 1, 2, 2}), rand_tensor(rng, {1, 1, 5, 5}),
                              zeros({1}), 1, 0),
                  std::invalid_argument);
}

TEST_CASE("conv and pool shapes obey the formula over windows 1..5") {
  std::mt19937_64 rng(3);
  for (int extent : {7, 12})
    for (int k = 1; k <= 5; ++k)
      for (int stride = 1; stride <= 3; ++stride)
        for (int pad = 0; pad <= 2; ++pad) {
          if (k > extent + 2 * pad) continue;
          const int expect = (extent + 2 * pad - k) / stride + 1;
          Tensor x = rand_tensor(rng, {1, 1, extent, extent});
          Tensor w = rand_tensor(rng, {1, 1, k, k});
          CHECK(fsr::conv2d(x, w, zeros({1}), stride, pad).dim(2) == expect);
          if (pad == 0 && k <= extent) {
            CHECK(fsr::pool2d(x, fsr::PoolKind::Max, k, stride).dim(2) == expect);
            CHECK(fsr::pool2d(x, fsr::PoolKind::Avg, k, stride).dim(3) == expect);
          }
        }
}

TEST_CASE("depthwise_conv2d with unit 1x1 kernels is the identity") {
  std::mt19937_64 rng(4);
  Tensor x = rand_tensor(rng, {2, 3, 4, 4});
  Tensor w({3, 1, 1, 1}, std::vector<double>(3, 1.0));
  Tensor y = fsr::depthwise_conv2d(x, w, zeros({3}), 1, 0);
  CHECK(bit_equal(x, y));
}

TEST_CASE("depthwise_conv2d equals conv2d with a block-diagonal kernel") {
  std::mt19937_64 rng(5);
  const int c = 3, k = 3;
  Tensor x = rand_tensor(rng, {1, c, 5, 5});
  Tensor wd = rand_tensor(rng, {c, 1, k, k});
  Tensor b = rand_tensor(rng, {c});
  // full kernel with zeros across channels
  Tensor wf({c, c, k, k});
  for (int ci = 0; ci < c; ++ci)
    std::memcpy(wf.data() + ((static_cast<std::size_t>(ci) * c + ci) * k * k),
                wd.data() + static_cast<std::size_t>(ci) * k * k, sizeof(double) * k * k);
  Tensor yd = fsr::depthwise_conv2d(x, wd, b, 1, 1);
  Tensor yf = fsr::conv2d(x, wf, b, 1, 1);
  REQUIRE(yd.shape() == yf.shape());
  for (std::size_t i = 0; i < yd.numel(); ++i)
    CHECK(yd.data()[i] == doctest::Approx(yf.data()[i]).epsilon(1e-12));
}

TEST_CASE("depthwise_conv2d channels never mix") {
  std::mt19937_64 rng(6);
  Tensor x = zeros({1, 2, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x.data()[i] = 1.0 + static_cast<double>(i);  // channel 0 only
  Tensor w = rand_tensor(rng, {2, 1, 3, 3});
  Tensor y = fsr::depthwise_conv2d(x, w, zeros({2}), 1, 1);
  for (int i = 0; i < 16; ++i) CHECK(y.data()[16 + i] == 0.0);
  CHECK_THROWS_AS(fsr::depthwise_conv2d(x, rand_tensor(rng, {3, 1, 3, 3}), zeros({3}), 1, 0),
                  std::invalid_argument);
}

TEST_CASE("pool2d window examples") {
  Tensor x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(fsr::pool2d(x, fsr::PoolKind::Max, 2, 2).item() == 4.0);
  CHECK(fsr::pool2d(x, fsr::PoolKind::Avg, 2, 2).item() == doctest::Approx(2.5));
  CHECK_THROWS_AS(fsr::pool2d(x, fsr::PoolKind::Max, 3, 1), std::invalid_argument);
}

TEST_CASE("pool2d matches the loop oracle") {
  std::mt19937_64 rng(8);
  const auto xv = oracle::random_vec(rng, 36);
  Tensor x({1, 1, 6, 6}, xv);
  for (bool is_max : {true, false}) {
    Tensor y = fsr::pool2d(x, is_max ? fsr::PoolKind::Max : fsr::PoolKind::Avg, 2, 2);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    const auto ref = oracle::pool2d_reference(xv, 1, 1, 6, 6, is_max, 2, 2, 3, 3);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-15));
  }
}

TEST_CASE("dense identity and hand-summed examples") {
  Tensor x({1, 2}, {1.0, 2.0});
  Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(bit_equal(fsr::dense(x, eye, zeros({2})), x));

  Tensor w({2, 1}, {1.0, 1.0});
  Tensor b({1}, std::vector<double>{0.5});
  CHECK(fsr::dense(x, w, b).item() == doctest::Approx(3.5).epsilon(1e-15));

  CHECK_THROWS_AS(fsr::dense(x, Tensor({3, 1}), zeros({1})), std::invalid_argument);
}

TEST_CASE("dense matches the triple-loop reference") {
  std::mt19937_64 rng(9);
  const auto xv = oracle::random_vec(rng, 4 * 7);
  const auto wv = oracle::random_vec(rng, 7 * 3);
  const auto bv = oracle::random_vec(rng, 3);
  Tensor y = fsr::dense(Tensor({4, 7}, xv), Tensor({7, 3}, wv), Tensor({3}, bv));
  const auto ref = oracle::dense_reference(xv, 4, 7, wv, 3, bv);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("relu definition and idempotence") {
  Tensor x({3}, {-1.0, 0.0, 2.0});
  Tensor y = fsr::relu(x);
  CHECK(y.values() == std::vector<double>{0.0, 0.0, 2.0});

  Tensor neg({4}, {-3.0, -0.5, -1e9, -1e-9});
  Tensor yneg = fsr::relu(neg);
  for (double v : yneg.values()) CHECK(v == 0.0);

  std::mt19937_64 rng(10);
  Tensor r = rand_tensor(rng, {2, 3, 4});
  CHECK(bit_equal(fsr::relu(fsr::relu(r)), fsr::relu(r)));
}

TEST_CASE("batchnorm2d normalizes per channel in train mode") {
  std::mt19937_64 rng(11);
  const int c = 3;
  Tensor x = rand_tensor(rng, {4, c, 5, 5});
  Tensor gamma({c}, std::vector<double>(c, 1.0));
  Tensor beta({c});
  fsr::BatchNormState st{Tensor({c}), Tensor({c}, std::vector<double>(c, 1.0))};
  st.epsilon = 1e-12;
  Tensor y = fsr::batchnorm2d(x, gamma, beta, st, fsr::RunMode::Train);
  const std::size_t m = 4 * 5 * 5;
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0, s2 = 0.0;
    for (int n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        const double v = y.data()[(static_cast<std::size_t>(n) * c + ci) * 25 + i];
        s += v;
        s2 += v * v;
      }
    const double mean = s / m;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(s2 / m - mean * mean == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("batchnorm2d with zero gamma emits beta everywhere") {
  std::mt19937_64 rng(12);
  Tensor x = rand_tensor(rng, {2, 2, 3, 3});
  Tensor gamma({2});
  Tensor beta({2}, {0.25, -1.5});
  fsr::BatchNormState st{Tensor({2}), Tensor({2}, std::vector<double>(2, 1.0))};
  Tensor y = fsr::batchnorm2d(x, gamma, beta, st, fsr::RunMode::Train);
  for (int n = 0; n < 2; ++n)
    for (int ci = 0; ci < 2; ++ci)
      for (int i = 0; i < 9; ++i)
        CHECK(y.data()[(static_cast<std::size_t>(n) * 2 + ci) * 9 + i] == beta.data()[ci]);
}

TEST_CASE("batchnorm2d eval mode matches the closed form") {
  std::mt19937_64 rng(13);
  Tensor x = rand_tensor(rng, {2, 2, 2, 2});
  Tensor gamma({2}, {1.3, 0.7});
  Tensor beta({2}, {0.1, -0.2});
  fsr::BatchNormState st{Tensor({2}, {0.4, -0.6}), Tensor({2}, {1.5, 0.8})};
  Tensor y = fsr::batchnorm2d(x, gamma, beta, st, fsr::RunMode::Eval);
  for (int n = 0; n < 2; ++n)
    for (int ci = 0; ci < 2; ++ci)
      for (int i = 0; i < 4; ++i) {
        const std::size_t idx = (static_cast<std::size_t>(n) * 2 + ci) * 4 + i;
        const double expect = (x.data()[idx] - st.running_mean.data()[ci]) /
                                  std::sqrt(st.running_var.data()[ci] + st.epsilon) *
                                  gamma.data()[ci] +
                              beta.data()[ci];
        CHECK(y.data()[idx] == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("batchnorm2d rejects a degenerate train batch") {
  Tensor x({1, 2, 1, 1}, {1.0, 2.0});
  Tensor gamma({2}, std::vector<double>(2, 1.0));
  Tensor beta({2});
  fsr::BatchNormState st{Tensor({2}), Tensor({2}, std::vector<double>(2, 1.0))};
  CHECK_THROWS_AS(fsr::batchnorm2d(x, gamma, beta, st, fsr::RunMode::Train), std::invalid_argument);
  CHECK_NOTHROW(fsr::batchnorm2d(x, gamma, beta, st, fsr::RunMode::Eval));
}

TEST_CASE("layernorm examples and closed form") {
  Tensor ones({5}, std::vector<double>(5, 1.0));
  Tensor gamma({4}, std::vector<double>(4, 1.0));
  Tensor beta({4});
  Tensor constant({1, 4}, std::vector<double>(4, 3.0));
  Tensor yc = fsr::layernorm(constant, gamma, beta, 1e-5);
  for (double v : yc.values()) CHECK(std::abs(v) < 1e-9);

  Tensor two({1, 2}, {1.0, 3.0});
  Tensor g2({2}, std::vector<double>(2, 1.0));
  Tensor y2 = fsr::layernorm(two, g2, Tensor({2}), 1e-12);
  CHECK(y2.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y2.data()[1] == doctest::Approx(1.0).epsilon(1e-6));

  std::mt19937_64 rng(14);
  const double eps = 1e-5;
  Tensor x = rand_tensor(rng, {2, 8});
  Tensor g8({8}, oracle::random_vec(rng, 8));
  Tensor b8({8}, oracle::random_vec(rng, 8));
  Tensor y = fsr::layernorm(x, g8, b8, eps);
  for (int r = 0; r < 2; ++r) {
    double mu = 0.0;
    for (int i = 0; i < 8; ++i) mu += x.data()[r * 8 + i];
    mu /= 8.0;
    double var = 0.0;
    for (int i = 0; i < 8; ++i) var += (x.data()[r * 8 + i] - mu) * (x.data()[r * 8 + i] - mu);
    var /= 8.0;
    for (int i = 0; i < 8; ++i) {
      const double expect =
          (x.data()[r * 8 + i] - mu) / std::sqrt(var + eps) * g8.data()[i] + b8.data()[i];
      CHECK(y.data()[r * 8 + i] == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  CHECK_THROWS_AS(fsr::layernorm(Tensor({2, 1}, {1.0, 2.0}), Tensor({1}, std::vector<double>{1.0}),
                                 Tensor({1})),
                  std::invalid_argument);
}

TEST_CASE("softmax stability and shift invariance") {
  Tensor u({1, 2});
  Tensor y = fsr::softmax(u);
  CHECK(y.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.data()[1] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor big({1, 2}, {1000.0, 0.0});
  Tensor yb = fsr::softmax(big);
  CHECK(std::isfinite(yb.data()[0]));
  CHECK(yb.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(yb.data()[1] < 1e-300);

  std::mt19937_64 rng(15);
  Tensor x = rand_tensor(rng, {4, 6});
  Tensor shifted = x;
  Tensor xs({4, 6}, x.values());
  for (std::size_t i = 0; i < xs.numel(); ++i) xs.data()[i] += 17.25;
  Tensor a = fsr::softmax(x), b = fsr::softmax(xs);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += a.data()[r * 6 + i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("cross entropy reference values") {
  Tensor uniform({1, 2});
  CHECK(fsr::cross_entropy_loss(uniform, {0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor confident({1, 2}, {30.0, -30.0});
  CHECK(fsr::cross_entropy_loss(confident, {0}).item() < 1e-9);

  std::mt19937_64 rng(16);
  const auto lv = oracle::random_vec(rng, 6, -2.0, 2.0);
  const std::vector<int> labels{1, 0, 1};
  const double got = fsr::cross_entropy_loss(Tensor({3, 2}, lv), labels).item();
  CHECK(got == doctest::Approx(oracle::cross_entropy_reference(lv, 3, 2, labels)).epsilon(1e-12));
  CHECK(got >= 0.0);

  CHECK_THROWS_AS(fsr::cross_entropy_loss(uniform, {2}), std::invalid_argument);
  CHECK_THROWS_AS(fsr::cross_entropy_loss(uniform, {-1}), std::invalid_argument);
}

TEST_CASE("multihead attention degenerate single token") {
  std::mt19937_64 rng(17);
  const int d = 4;
  fsr::MhaParams p;
  p.wq = rand_tensor(rng, {d, d});
  p.bq = rand_tensor(rng, {d});
  p.wk = rand_tensor(rng, {d, d});
  p.bk = rand_tensor(rng, {d});
  p.wv = rand_tensor(rng, {d, d});
  p.bv = rand_tensor(rng, {d});
  p.wo = rand_tensor(rng, {d, d});
  p.bo = rand_tensor(rng, {d});
  Tensor x = rand_tensor(rng, {1, 1, d});
  Tensor y = fsr::multihead_attention(x, p, 2);
  // With one token the attention weight is 1, so y = (x Wv + bv) Wo + bo.
  Tensor v = fsr::dense(fsr::reshape(x, {1, d}), p.wv, p.bv);
  Tensor expect = fsr::dense(v, p.wo, p.bo);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(fsr::multihead_attention(x, p, 3), std::invalid_argument);
}

TEST_CASE("multihead attention with identical keys averages the values") {
  std::mt19937_64 rng(18);
  const int n = 1, t = 3, d = 4;
  fsr::MhaParams p;
  p.wq = rand_tensor(rng, {d, d});
  p.bq = rand_tensor(rng, {d});
  p.wk = Tensor({d, d});  // zero keys -> uniform attention
  p.bk = Tensor({d});
  p.wv = rand_tensor(rng, {d, d});
  p.bv = rand_tensor(rng, {d});
  p.wo = rand_tensor(rng, {d, d});
  p.bo = rand_tensor(rng, {d});
  Tensor x = rand_tensor(rng, {n, t, d});
  Tensor y = fsr::multihead_attention(x, p, 2);

  Tensor v = fsr::dense(fsr::reshape(x, {t, d}), p.wv, p.bv);
  Tensor vbar({1, d});
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < t; ++i) s += v.data()[i * d + j];
    vbar.data()[j] = s / t;
  }
  Tensor expect = fsr::dense(vbar, p.wo, p.bo);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(y.data()[i * d + j] == doctest::Approx(expect.data()[j]).epsilon(1e-10));
}

TEST_CASE("multihead attention matches a hand-rolled single-head oracle") {
  std::mt19937_64 rng(19);
  const int t = 2, d = 2;
  fsr::MhaParams p;
  p.wq = rand_tensor(rng, {d, d});
  p.bq = rand_tensor(rng, {d});
  p.wk = rand_tensor(rng, {d, d});
  p.bk = rand_tensor(rng, {d});
  p.wv = rand_tensor(rng, {d, d});
  p.bv = rand_tensor(rng, {d});
  p.wo = rand_tensor(rng, {d, d});
  p.bo = rand_tensor(rng, {d});
  Tensor x = rand_tensor(rng, {1, t, d});

  auto proj = [&](const Tensor& w, const Tensor& b) {
    std::vector<double> out(t * d);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j) {
        double s = b.data()[j];
        for (int k = 0; k < d; ++k) s += x.data()[i * d + k] * w.data()[k * d + j];
        out[i * d + j] = s;
      }
    return out;
  };
  const auto q = proj(p.wq, p.bq), k = proj(p.wk, p.bk), v = proj(p.wv, p.bv);
  double scores[t][t];
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) {
      double s = 0.0;
      for (int kk = 0; kk < d; ++kk) s += q[i * d + kk] * k[j * d + kk];
      scores[i][j] = s / std::sqrt(static_cast<double>(d));
    }
  std::vector<double> expect(t * d);
  for (int i = 0; i < t; ++i) {
    const double mx = std::max(scores[i][0], scores[i][1]);
    double e0 = std::exp(scores[i][0] - mx), e1 = std::exp(scores[i][1] - mx);
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    for (int j = 0; j < d; ++j) {
      const double ctx = a0 * v[0 * d + j] + a1 * v[1 * d + j];
      expect[i * d + j] = ctx;
    }
  }
  // output projection
  std::vector<double> final(t * d);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) {
      double s = p.bo.data()[j];
      for (int kk = 0; kk < d; ++kk) s += expect[i * d + kk] * p.wo.data()[kk * d + j];
      final[i * d + j] = s;
    }

  Tensor y = fsr::multihead_attention(x, p, 1);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(final[i]).epsilon(1e-10));
}

TEST_CASE("backward of a linear sum is all ones") {
  std::mt19937_64 rng(20);
  Tensor x({2, 3}, oracle::random_vec(rng, 6, 0.1, 1.0), true);
  Tape tape;
  Tensor y = fsr::relu(x, &tape);  // positive input: pass-through
  Tensor loss = oracle::dot_loss(y, std::vector<double>(6, 1.0), tape);
  fsr::backward(loss, tape);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape tape;
  Tensor x({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(fsr::backward(x, tape), std::invalid_argument);
}

TEST_CASE("gradients accumulate until cleared") {
  Tensor x({3}, {0.5, 1.0, 2.0}, true);
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    Tensor y = fsr::scale(x, 2.0, &tape);
    Tensor loss = oracle::dot_loss(y, {1.0, 1.0, 1.0}, tape);
    fsr::backward(loss, tape);
  }
  for (double g : x.grad()) CHECK(g == 4.0);
  x.zero_grad();
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("every kernel passes finite-difference gradient checks") {
  for (std::uint64_t seed : {11ULL, 12ULL}) {
    for (const auto& r : gradcheck::run_all(seed)) {
      INFO(r.op << " seed " << seed);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("dense-softmax-cross-entropy gradient matches the closed form") {
  std::mt19937_64 rng(21);
  const int n = 4, f = 5, k = 3;
  Tensor x = rand_tensor(rng, {n, f});
  Tensor w({f, k}, oracle::random_vec(rng, f * k), true);
  Tensor b({k}, oracle::random_vec(rng, k), true);
  const std::vector<int> labels{0, 2, 1, 2};

  Tape tape;
  Tensor logits = fsr::dense(x, w, b, &tape);
  Tensor loss = fsr::cross_entropy_loss(logits, labels, &tape);
  fsr::backward(loss, tape);

  // closed form: dW = x^T (p - onehot) / n
  Tensor p = fsr::softmax(logits);
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < k; ++j) {
      double expect = 0.0;
      for (int r = 0; r < n; ++r)
        expect += x.data()[r * f + i] *
                  ((p.data()[r * k + j] - (labels[r] == j ? 1.0 : 0.0)) / n);
      CHECK(w.grad()[i * k + j] == doctest::Approx(expect).epsilon(1e-8));
    }
}

TEST_CASE("sgd step follows the momentum update") {
  Tensor w({1}, {1.0}, true);
  w.grad_data()[0] = 0.5;
  fsr::SgdState opt({w}, 0.1, 0.0);
  opt.step();
  CHECK(w.data()[0] == doctest::Approx(0.95).epsilon(1e-15));

  Tensor w2({1}, {1.0}, true);
  w2.grad_data()[0] = 123.0;
  fsr::SgdState frozen({w2}, 0.0, 0.0);
  frozen.step();
  CHECK(w2.data()[0] == 1.0);

  Tensor w3({1}, {0.0}, true);
  fsr::SgdState mom({w3}, 0.1, 0.9);
  w3.grad_data()[0] = 1.0;
  mom.step();
  CHECK(w3.data()[0] == doctest::Approx(-0.1).epsilon(1e-15));
  w3.zero_grad();
  w3.grad_data()[0] = 1.0;
  mom.step();
  CHECK(w3.data()[0] == doctest::Approx(-0.29).epsilon(1e-15));

  Tensor w4({1}, {1.0}, true);
  fsr::SgdState missing({w4}, 0.1, 0.0);
  CHECK_THROWS_AS(missing.step(), std::runtime_error);
  CHECK_THROWS_AS(fsr::SgdState({w4}, -0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fsr::SgdState({w4}, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("identical inputs produce bit-identical outputs") {
  std::mt19937_64 rng(22);
  const auto xv = oracle::random_vec(rng, 2 * 3 * 8 * 8);
  const auto wv = oracle::random_vec(rng, 4 * 3 * 3 * 3);
  Tensor a = fsr::conv2d(Tensor({2, 3, 8, 8}, xv), Tensor({4, 3, 3, 3}, wv), zeros({4}), 1, 1);
  Tensor b = fsr::conv2d(Tensor({2, 3, 8, 8}, xv), Tensor({4, 3, 3, 3}, wv), zeros({4}), 1, 1);
  CHECK(bit_equal(a, b));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::isfinite(a.data()[i]));
}
