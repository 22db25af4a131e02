#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace warpforge {

// Single-threaded blocked GEMM: C = (or +=) A * B with arbitrary element
// strides on A and B, so transposed operands are just swapped strides.
// C is written with row stride ldc, unit column stride. Accumulation order
// is fixed, which keeps results bitwise deterministic for a given build.
//
// The microkernel shape is tuned for the conv workloads in this project:
// NR spans 128 bytes (two cache lines) so the inner loop vectorizes wide.

namespace gemm_detail {

template <typename T>
inline constexpr int kNR = int(128 / sizeof(T));
template <typename T>
inline constexpr int kMR = 6;
inline constexpr int kKC = 256;
inline constexpr int kNC = 2048;
inline constexpr int kMC = 96;

template <typename T>
void microkernel(int kc, const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
                 std::ptrdiff_t ldc) {
  constexpr int MR = kMR<T>;
  constexpr int NR = kNR<T>;
  T acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = T(0);
  for (int k = 0; k < kc; ++k) {
    const T* bk = b + std::size_t(k) * NR;
    const T* ak = a + std::size_t(k) * MR;
    for (int i = 0; i < MR; ++i) {
      T av = ak[i];
      for (int j = 0; j < NR; ++j) acc[i][j] += av * bk[j];
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) c[i * ldc + j] += acc[i][j];
}

template <typename T>
struct Scratch {
  std::vector<T> pack_a;
  std::vector<T> pack_b;
};

template <typename T>
Scratch<T>& scratch() {
  thread_local Scratch<T> s;
  return s;
}

}  // namespace gemm_detail

template <typename T>
void gemm(int m, int n, int k, const T* a, std::ptrdiff_t rsa, std::ptrdiff_t csa, const T* b,
          std::ptrdiff_t rsb, std::ptrdiff_t csb, T* c, std::ptrdiff_t ldc, bool accumulate) {
  using namespace gemm_detail;
  constexpr int MR = kMR<T>;
  constexpr int NR = kNR<T>;

  if (!accumulate) {
    for (int i = 0; i < m; ++i) std::memset(c + std::size_t(i) * ldc, 0, sizeof(T) * std::size_t(n));
  }
  if (m == 0 || n == 0 || k == 0) return;

  auto& s = scratch<T>();
  s.pack_a.resize(std::size_t(kMC + MR) * kKC);
  s.pack_b.resize(std::size_t(kKC) * (kNC + NR));

  for (int jc = 0; jc < n; jc += kNC) {
    const int nc = std::min(kNC, n - jc);
    for (int pc = 0; pc < k; pc += kKC) {
      const int kc = std::min(kKC, k - pc);
      // Pack B panel into NR-wide, k-major strips (zero padded at the edge).
      for (int jr = 0; jr < nc; jr += NR) {
        const int nr = std::min(NR, nc - jr);
        T* dst = s.pack_b.data() + std::size_t(jr) * kc;
        for (int kk = 0; kk < kc; ++kk) {
          const T* src = b + std::ptrdiff_t(pc + kk) * rsb + std::ptrdiff_t(jc + jr) * csb;
          for (int j = 0; j < nr; ++j) dst[kk * NR + j] = src[std::ptrdiff_t(j) * csb];
          for (int j = nr; j < NR; ++j) dst[kk * NR + j] = T(0);
        }
      }
      for (int ic = 0; ic < m; ic += kMC) {
        const int mc = std::min(kMC, m - ic);
        // Pack A panel into MR-tall, k-major strips.
        for (int ir = 0; ir < mc; ir += MR) {
          const int mr = std::min(MR, mc - ir);
          T* dst = s.pack_a.data() + std::size_t(ir) * kc;
          for (int kk = 0; kk < kc; ++kk) {
            const T* src = a + std::ptrdiff_t(ic + ir) * rsa + std::ptrdiff_t(pc + kk) * csa;
            for (int i = 0; i < mr; ++i) dst[kk * MR + i] = src[std::ptrdiff_t(i) * rsa];
            for (int i = mr; i < MR; ++i) dst[kk * MR + i] = T(0);
          }
        }
        for (int jr = 0; jr < nc; jr += NR) {
          const int nr = std::min(NR, nc - jr);
          for (int ir = 0; ir < mc; ir += MR) {
            const int mr = std::min(MR, mc - ir);
            T* ctile = c + std::size_t(ic + ir) * ldc + jc + jr;
            if (mr == MR && nr == NR) {
              microkernel<T>(kc, s.pack_a.data() + std::size_t(ir) * kc,
                             s.pack_b.data() + std::size_t(jr) * kc, ctile, ldc);
            } else {
              T tmp[MR * NR];
              std::memset(tmp, 0, sizeof tmp);
              microkernel<T>(kc, s.pack_a.data() + std::size_t(ir) * kc,
                             s.pack_b.data() + std::size_t(jr) * kc, tmp, NR);
              for (int i = 0; i < mr; ++i)
                for (int j = 0; j < nr; ++j) ctile[std::size_t(i) * ldc + j] += tmp[i * NR + j];
            }
          }
        }
      }
    }
  }
}

// Plain row-major convenience wrapper: C (m x n) = or += A (m x k) * B (k x n).
template <typename T>
void gemm_rowmajor(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate = false) {
  gemm<T>(m, n, k, a, k, 1, b, n, 1, c, n, accumulate);
}

}  // namespace warpforge
