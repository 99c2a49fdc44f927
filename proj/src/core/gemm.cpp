#include "core/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace fsr {

namespace {
constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockJ = 1024;
}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  // i-k-j with k/j blocking: the inner loop runs over contiguous rows of B and C.
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t k1 = std::min(k, k0 + kBlockK);
    for (std::size_t j0 = 0; j0 < n; j0 += kBlockJ) {
      const std::size_t j1 = std::min(n, j0 + kBlockJ);
      for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t kk = k0; kk < k1; ++kk) {
          const double av = ai[kk];
          if (av == 0.0) continue;
          const double* bk = b + kk * n;
          for (std::size_t j = j0; j < j1; ++j) ci[j] += av * bk[j];
        }
      }
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  // C[i][j] = dot(A row i, B row j); both rows contiguous.
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  // k-i-j: for each k, rank-1 update with contiguous B row and C rows.
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* ak = a + kk * m;
    const double* bk = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ak[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

}  // namespace fsr
