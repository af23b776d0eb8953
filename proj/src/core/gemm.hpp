#pragma once

#include <algorithm>
#include <cstdint>

#include "core/threadpool.hpp"

namespace stnet {

// Small row-major GEMM kernels. No blocking beyond the loop orders below;
// the inner loops vectorize under -O3 and the matrices here are small.

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  auto body = [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      T* c = C + i * N;
      if (!accumulate) std::fill(c, c + N, T(0));
      const T* a = A + i * K;
      for (int64_t k = 0; k < K; ++k) {
        T av = a[k];
        if (av == T(0)) continue;
        const T* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  };
  maybe_parallel_for(M, 2 * N * K, body);
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  auto body = [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const T* a = A + i * K;
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) {
        const T* b = B + j * K;
        T acc = T(0);
        for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] = accumulate ? c[j] + acc : acc;
      }
    }
  };
  maybe_parallel_for(M, 2 * N * K, body);
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  auto body = [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      T* c = C + i * N;
      if (!accumulate) std::fill(c, c + N, T(0));
      for (int64_t k = 0; k < K; ++k) {
        T av = A[k * M + i];
        if (av == T(0)) continue;
        const T* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  };
  maybe_parallel_for(M, 2 * N * K, body);
}

}  // namespace stnet
