#pragma once

#include <cstddef>

namespace fsr {

// Row-major double GEMM, single-threaded and deterministic. Three layouts
// cover everything the kernels need; `accumulate` selects C += vs C =.
//
//   gemm_nn: C[M,N] = A[M,K] * B[K,N]
//   gemm_nt: C[M,N] = A[M,K] * B[N,K]^T
//   gemm_tn: C[M,N] = A[K,M]^T * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);

}  // namespace fsr
