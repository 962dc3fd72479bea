#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense kernels behind the tensor ops. Two implementations with identical
// per-element accumulation order:
//
//   lattle::kern         OpenMP-parallel over independent output rows
//   lattle::kern::serial naive textbook loops, the reference for testing
//
// Because parallelism is only ever over outputs that do not share an
// accumulator, results are bit-identical between the two and independent of
// the thread count. Multiply-accumulates on those chains are written as
// explicit std::fma so both compilations round identically no matter how the
// optimizer would otherwise contract (or not contract) them; std::fma is
// correctly rounded whether it lowers to an FMA instruction or libm. The test
// suite asserts exact equality; the bench tool compares throughput.

namespace lattle::kern {

#if defined(__GNUC__) || defined(__clang__)
#define LATTLE_INLINE __attribute__((always_inline)) inline
#else
#define LATTLE_INLINE inline
#endif

namespace detail {

// Scalar exp/tanh shared by the serial and OpenMP kernels, which keeps their
// results bit-identical. Floats take a branch-free polynomial fast path that
// auto-vectorizes; doubles stay on libm so double-precision oracles and
// finite-difference gradchecks see exact math.
LATTLE_INLINE double fexp(double x) { return std::exp(x); }
LATTLE_INLINE double ftanh(double x) { return std::tanh(x); }

// exp(x) = 2^(x*log2e); 2^f on [-0.5, 0.5] by a degree-7 Taylor expansion of
// e^(f ln2) (rel. err ~1e-8), assembled through the IEEE exponent field.
// Written with min/max and explicit fma only: gcc 11 if-converts and
// vectorizes this form, and pinning the contractions keeps vector bodies and
// scalar epilogues bit-identical.
LATTLE_INLINE float fexp(float x) {
  constexpr float log2e = 1.4426950408889634f;
  constexpr float magic = 12582912.0f;  // 1.5 * 2^23: adding rounds to nearest int
  float t = x * log2e;
  const bool underflow = t < -126.0f;
  t = std::max(std::min(t, 126.0f), -126.0f);
  const float n = (t + magic) - magic;
  const float f = t - n;
  float p = 1.5240083e-4f;
  p = std::fma(p, f, 1.3333542e-3f);
  p = std::fma(p, f, 9.6181293e-3f);
  p = std::fma(p, f, 5.5504109e-2f);
  p = std::fma(p, f, 2.4022651e-1f);
  p = std::fma(p, f, 6.9314718e-1f);
  p = std::fma(p, f, 1.0f);
  const float scale = std::bit_cast<float>((static_cast<int>(n) + 127) << 23);
  return underflow ? 0.0f : scale * p;
}

// tanh(y) = sign(y) * (1 - 2 / (exp(2|y|) + 1)); saturates exactly to +/-1
// for |y| >= ~9 because fexp overflows the float sum.
LATTLE_INLINE float ftanh(float y) {
  const float a = std::fabs(y);
  const float e = fexp(std::min(2.0f * a, 88.0f));
  const float t = 1.0f - 2.0f / (e + 1.0f);
  return std::copysign(t, y);
}

}  // namespace detail

namespace serial {

// C[M,N] (+)= A[M,K] * B[K,N]
template <class S>
void matmul(const S* a, const S* b, S* c, int M, int K, int N, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      S acc = accumulate ? c[(std::size_t)i * N + j] : S(0);
      for (int k = 0; k < K; ++k) {
        acc = std::fma(a[(std::size_t)i * K + k], b[(std::size_t)k * N + j], acc);
      }
      c[(std::size_t)i * N + j] = acc;
    }
  }
}

// C[M,N] (+)= A[M,K] * Bt^T where Bt is [N,K]
template <class S>
void matmul_transb(const S* a, const S* bt, S* c, int M, int K, int N, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      S acc = accumulate ? c[(std::size_t)i * N + j] : S(0);
      for (int k = 0; k < K; ++k) {
        acc = std::fma(a[(std::size_t)i * K + k], bt[(std::size_t)j * K + k], acc);
      }
      c[(std::size_t)i * N + j] = acc;
    }
  }
}

// C[K,N] += A^T * B where A is [M,K], B is [M,N]
template <class S>
void matmul_transa_acc(const S* a, const S* b, S* c, int M, int K, int N) {
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      S acc = c[(std::size_t)k * N + n];
      for (int i = 0; i < M; ++i) {
        acc = std::fma(a[(std::size_t)i * K + k], b[(std::size_t)i * N + n], acc);
      }
      c[(std::size_t)k * N + n] = acc;
    }
  }
}

template <class S>
void add_row_bias(S* x, const S* bias, int rows, int n) {
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) x[(std::size_t)r * n + j] += bias[j];
}

template <class S>
void col_sums_acc(const S* x, S* out, int rows, int n) {
  for (int j = 0; j < n; ++j) {
    S acc = out[j];
    for (int r = 0; r < rows; ++r) acc += x[(std::size_t)r * n + j];
    out[j] = acc;
  }
}

template <class S>
void softmax_rows(const S* x, S* y, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const S* xr = x + (std::size_t)r * n;
    S* yr = y + (std::size_t)r * n;
    S m = xr[0];
    for (int j = 1; j < n; ++j) m = xr[j] > m ? xr[j] : m;
    S sum = S(0);
    for (int j = 0; j < n; ++j) {
      yr[j] = detail::fexp(xr[j] - m);
      sum += yr[j];
    }
    const S inv = S(1) / sum;
    for (int j = 0; j < n; ++j) yr[j] *= inv;
  }
}

// dx += y * (dy - sum(dy * y)) per row, y being the softmax output.
template <class S>
void softmax_rows_backward(const S* y, const S* dy, S* dx, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const S* yr = y + (std::size_t)r * n;
    const S* dyr = dy + (std::size_t)r * n;
    S* dxr = dx + (std::size_t)r * n;
    S dot = S(0);
    for (int j = 0; j < n; ++j) dot += dyr[j] * yr[j];
    for (int j = 0; j < n; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

// Per-row normalization; mean/rstd are saved for the backward pass.
template <class S>
void layernorm_rows(const S* x, const S* gamma, const S* beta, S eps, S* y, S* mean,
                    S* rstd, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const S* xr = x + (std::size_t)r * n;
    S* yr = y + (std::size_t)r * n;
    S mu = S(0);
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= S(n);
    S var = S(0);
    for (int j = 0; j < n; ++j) {
      const S d = xr[j] - mu;
      var += d * d;
    }
    var /= S(n);
    const S rs = S(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int j = 0; j < n; ++j) yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
  }
}

template <class S>
void layernorm_rows_backward_dx(const S* x, const S* gamma, const S* mean, const S* rstd,
                                const S* dy, S* dx, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const S* xr = x + (std::size_t)r * n;
    const S* dyr = dy + (std::size_t)r * n;
    S* dxr = dx + (std::size_t)r * n;
    const S mu = mean[r];
    const S rs = rstd[r];
    S s1 = S(0), s2 = S(0);
    for (int j = 0; j < n; ++j) {
      const S dxhat = dyr[j] * gamma[j];
      s1 += dxhat;
      s2 += dxhat * (xr[j] - mu) * rs;
    }
    s1 /= S(n);
    s2 /= S(n);
    for (int j = 0; j < n; ++j) {
      const S xhat = (xr[j] - mu) * rs;
      dxr[j] += rs * (dyr[j] * gamma[j] - s1 - xhat * s2);
    }
  }
}

template <class S>
void layernorm_rows_backward_params(const S* x, const S* mean, const S* rstd, const S* dy,
                                    S* dgamma, S* dbeta, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const S* xr = x + (std::size_t)r * n;
    const S* dyr = dy + (std::size_t)r * n;
    for (int j = 0; j < n; ++j) {
      dgamma[j] += dyr[j] * (xr[j] - mean[r]) * rstd[r];
      dbeta[j] += dyr[j];
    }
  }
}

// Multi-head scaled dot-product attention. q/k/v/out are [B,T,D], head h owns
// channels [h*dk, (h+1)*dk) with dk = D/H. alpha is [B,H,T,T]; masked-out
// entries are stored as exact zeros. key_len (optional, per sample) restricts
// attendable key positions to [0, key_len[b]).
template <class S>
void attention_forward(const S* q, const S* k, const S* v, S* out, S* alpha, int B, int T,
                       int D, int H, bool causal, const int* key_len) {
  const int dk = D / H;
  const S scale = S(1) / std::sqrt(S(dk));
  for (int bh = 0; bh < B * H; ++bh) {
    const int b = bh / H;
    const int h = bh % H;
    const int off = h * dk;
    const int kl = key_len ? key_len[b] : T;
    for (int r = 0; r < T; ++r) {
      S* arow = alpha + (((std::size_t)b * H + h) * T + r) * T;
      const int jend = causal ? std::min(r + 1, kl) : kl;
      const S* qr = q + ((std::size_t)b * T + r) * D + off;
      for (int j = 0; j < jend; ++j) {
        const S* kj = k + ((std::size_t)b * T + j) * D + off;
        S s = S(0);
        for (int c = 0; c < dk; ++c) s = std::fma(qr[c], kj[c], s);
        arow[j] = s * scale;
      }
      // softmax over the valid prefix, zeros elsewhere
      S m = arow[0];
      for (int j = 1; j < jend; ++j) m = arow[j] > m ? arow[j] : m;
      S sum = S(0);
      for (int j = 0; j < jend; ++j) {
        arow[j] = detail::fexp(arow[j] - m);
        sum += arow[j];
      }
      const S inv = S(1) / sum;
      for (int j = 0; j < jend; ++j) arow[j] *= inv;
      for (int j = jend; j < T; ++j) arow[j] = S(0);
      S* orow = out + ((std::size_t)b * T + r) * D + off;
      for (int c = 0; c < dk; ++c) orow[c] = S(0);
      for (int j = 0; j < jend; ++j) {
        const S* vj = v + ((std::size_t)b * T + j) * D + off;
        const S a = arow[j];
        for (int c = 0; c < dk; ++c) orow[c] = std::fma(a, vj[c], orow[c]);
      }
    }
  }
}

template <class S>
void attention_backward(const S* dout, const S* q, const S* k, const S* v, const S* alpha,
                        S* dq, S* dk_, S* dv, int B, int T, int D, int H, bool causal,
                        const int* key_len) {
  const int dk = D / H;
  const S scale = S(1) / std::sqrt(S(dk));
  std::vector<S> dalpha(T);
  for (int bh = 0; bh < B * H; ++bh) {
    const int b = bh / H;
    const int h = bh % H;
    const int off = h * dk;
    const int kl = key_len ? key_len[b] : T;
    for (int r = 0; r < T; ++r) {
      const int jend = causal ? std::min(r + 1, kl) : kl;
      const S* arow = alpha + (((std::size_t)b * H + h) * T + r) * T;
      const S* dorow = dout + ((std::size_t)b * T + r) * D + off;
      const S* qr = q + ((std::size_t)b * T + r) * D + off;
      S dot = S(0);
      for (int j = 0; j < jend; ++j) {
        const S* vj = v + ((std::size_t)b * T + j) * D + off;
        S da = S(0);
        for (int c = 0; c < dk; ++c) da = std::fma(dorow[c], vj[c], da);
        dalpha[j] = da;
        dot = std::fma(da, arow[j], dot);
      }
      S* dqr = dq + ((std::size_t)b * T + r) * D + off;
      for (int j = 0; j < jend; ++j) {
        const S ds = arow[j] * (dalpha[j] - dot) * scale;
        const S* kj = k + ((std::size_t)b * T + j) * D + off;
        S* dkj = dk_ + ((std::size_t)b * T + j) * D + off;
        S* dvj = dv + ((std::size_t)b * T + j) * D + off;
        const S a = arow[j];
        for (int c = 0; c < dk; ++c) {
          dqr[c] = std::fma(ds, kj[c], dqr[c]);
          dkj[c] = std::fma(ds, qr[c], dkj[c]);
          dvj[c] = std::fma(a, dorow[c], dvj[c]);
        }
      }
    }
  }
}

}  // namespace serial

namespace detail {
template <class S>
std::vector<S>& scratch() {
  static thread_local std::vector<S> buf;
  return buf;
}
}  // namespace detail

// Register-tiled form: an MR x NB accumulator tile lives in vector registers
// across the whole K loop, so each pass over B feeds MR output rows instead
// of one. The per-element accumulation chain (k ascending) still matches
// serial::matmul exactly; tiling only changes which independent chains run
// interleaved. Constant trip counts keep gcc from spilling the tile.
namespace detail {

template <class S, int MR, int NB>
inline void matmul_tile(const S* a, const S* b, S* c, int K, int N, int j0, int nb,
                        bool accumulate) {
  // a: first of MR consecutive rows (stride K); c: the same rows at column
  // j0 (stride N); b is streamed at column block j0.
  S acc[MR][NB];
  for (int r = 0; r < MR; ++r) {
    const S* cr = c + (std::size_t)r * N;
    for (int j = 0; j < nb; ++j) acc[r][j] = accumulate ? cr[j] : S(0);
  }
  if (nb == NB) {
    for (int k = 0; k < K; ++k) {
      const S* bk = b + (std::size_t)k * N + j0;
      for (int r = 0; r < MR; ++r) {
        const S av = a[(std::size_t)r * K + k];
        for (int j = 0; j < NB; ++j) acc[r][j] = std::fma(av, bk[j], acc[r][j]);
      }
    }
  } else {
    for (int k = 0; k < K; ++k) {
      const S* bk = b + (std::size_t)k * N + j0;
      for (int r = 0; r < MR; ++r) {
        const S av = a[(std::size_t)r * K + k];
        for (int j = 0; j < nb; ++j) acc[r][j] = std::fma(av, bk[j], acc[r][j]);
      }
    }
  }
  for (int r = 0; r < MR; ++r) {
    S* cr = c + (std::size_t)r * N;
    for (int j = 0; j < nb; ++j) cr[j] = acc[r][j];
  }
}

}  // namespace detail

template <class S>
void matmul(const S* a, const S* b, S* c, int M, int K, int N, bool accumulate) {
  constexpr int MR = 4, NB = 64;
#pragma omp parallel
  {
    int r0 = 0, r1 = M;
#ifdef _OPENMP
    const int nth = omp_get_num_threads();
    const int chunk = (M + nth - 1) / nth;
    r0 = std::min(M, omp_get_thread_num() * chunk);
    r1 = std::min(M, r0 + chunk);
#endif
    for (int j0 = 0; j0 < N; j0 += NB) {
      const int nb = std::min(NB, N - j0);
      int i = r0;
      for (; i + MR <= r1; i += MR)
        detail::matmul_tile<S, MR, NB>(a + (std::size_t)i * K, b,
                                       c + (std::size_t)i * N + j0, K, N, j0, nb,
                                       accumulate);
      for (; i < r1; ++i)
        detail::matmul_tile<S, 1, NB>(a + (std::size_t)i * K, b,
                                      c + (std::size_t)i * N + j0, K, N, j0, nb,
                                      accumulate);
    }
  }
}

template <class S>
void transpose(const S* x, S* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) y[(std::size_t)j * rows + i] = x[(std::size_t)i * cols + j];
}

// Materializes Bt^T once, then reuses the row-blocked matmul. Worth it because
// Bt is a weight matrix reused across all M rows.
template <class S>
void matmul_transb(const S* a, const S* bt, S* c, int M, int K, int N, bool accumulate) {
  std::vector<S>& b = detail::scratch<S>();
  b.resize((std::size_t)K * N);
  transpose(bt, b.data(), N, K);
  matmul(a, b.data(), c, M, K, N, accumulate);
}

namespace detail {

// KR x NB tile of C += A^T B accumulated in registers while streaming the M
// rows of A and B once. Per-element chain: i ascending, as in the serial
// reference. The KR broadcasts per B row come from contiguous a[i][k0..k0+KR].
template <class S, int KR, int NB>
inline void transa_tile(const S* a, const S* b, S* c, int M, int K, int N, int k0, int n0,
                        int nb) {
  S acc[KR][NB];
  for (int r = 0; r < KR; ++r) {
    const S* cr = c + (std::size_t)(k0 + r) * N + n0;
    for (int n = 0; n < nb; ++n) acc[r][n] = cr[n];
  }
  if (nb == NB) {
    for (int i = 0; i < M; ++i) {
      const S* ai = a + (std::size_t)i * K + k0;
      const S* bi = b + (std::size_t)i * N + n0;
      for (int r = 0; r < KR; ++r) {
        const S av = ai[r];
        for (int n = 0; n < NB; ++n) acc[r][n] = std::fma(av, bi[n], acc[r][n]);
      }
    }
  } else {
    for (int i = 0; i < M; ++i) {
      const S* ai = a + (std::size_t)i * K + k0;
      const S* bi = b + (std::size_t)i * N + n0;
      for (int r = 0; r < KR; ++r) {
        const S av = ai[r];
        for (int n = 0; n < nb; ++n) acc[r][n] = std::fma(av, bi[n], acc[r][n]);
      }
    }
  }
  for (int r = 0; r < KR; ++r) {
    S* cr = c + (std::size_t)(k0 + r) * N + n0;
    for (int n = 0; n < nb; ++n) cr[n] = acc[r][n];
  }
}

}  // namespace detail

template <class S>
void matmul_transa_acc(const S* a, const S* b, S* c, int M, int K, int N) {
  constexpr int KR = 4, NB = 64;
  const int full = K / KR;  // full KR-row tiles of C
#pragma omp parallel
  {
    int t0 = 0, t1 = full;
#ifdef _OPENMP
    const int nth = omp_get_num_threads();
    const int chunk = (full + nth - 1) / nth;
    t0 = std::min(full, omp_get_thread_num() * chunk);
    t1 = std::min(full, t0 + chunk);
#endif
    for (int n0 = 0; n0 < N; n0 += NB) {
      const int nb = std::min(NB, N - n0);
      for (int t = t0; t < t1; ++t)
        detail::transa_tile<S, KR, NB>(a, b, c, M, K, N, t * KR, n0, nb);
    }
#pragma omp single
    for (int k0 = full * KR; k0 < K; ++k0)
      for (int n0 = 0; n0 < N; n0 += NB)
        detail::transa_tile<S, 1, NB>(a, b, c, M, K, N, k0, n0, std::min(NB, N - n0));
  }
}

template <class S>
void add_row_bias(S* x, const S* bias, int rows, int n) {
#pragma omp parallel for schedule(static) if (rows > 64)
  for (int r = 0; r < rows; ++r) {
    S* xr = x + (std::size_t)r * n;
    for (int j = 0; j < n; ++j) xr[j] += bias[j];
  }
}

template <class S>
void col_sums_acc(const S* x, S* out, int rows, int n) {
#pragma omp parallel for schedule(static) if (n > 256)
  for (int j = 0; j < n; ++j) {
    S acc = out[j];
    for (int r = 0; r < rows; ++r) acc += x[(std::size_t)r * n + j];
    out[j] = acc;
  }
}

template <class S>
void softmax_rows(const S* x, S* y, int rows, int n) {
#pragma omp parallel for schedule(static) if (rows > 16)
  for (int r = 0; r < rows; ++r) {
    serial::softmax_rows(x + (std::size_t)r * n, y + (std::size_t)r * n, 1, n);
  }
}

template <class S>
void softmax_rows_backward(const S* y, const S* dy, S* dx, int rows, int n) {
#pragma omp parallel for schedule(static) if (rows > 16)
  for (int r = 0; r < rows; ++r) {
    serial::softmax_rows_backward(y + (std::size_t)r * n, dy + (std::size_t)r * n,
                                  dx + (std::size_t)r * n, 1, n);
  }
}

template <class S>
void layernorm_rows(const S* x, const S* gamma, const S* beta, S eps, S* y, S* mean, S* rstd,
                    int rows, int n) {
#pragma omp parallel for schedule(static) if (rows > 16)
  for (int r = 0; r < rows; ++r) {
    serial::layernorm_rows(x + (std::size_t)r * n, gamma, beta, eps, y + (std::size_t)r * n,
                           mean + r, rstd + r, 1, n);
  }
}

template <class S>
void layernorm_rows_backward_dx(const S* x, const S* gamma, const S* mean, const S* rstd,
                                const S* dy, S* dx, int rows, int n) {
#pragma omp parallel for schedule(static) if (rows > 16)
  for (int r = 0; r < rows; ++r) {
    serial::layernorm_rows_backward_dx(x + (std::size_t)r * n, gamma, mean + r, rstd + r,
                                       dy + (std::size_t)r * n, dx + (std::size_t)r * n, 1, n);
  }
}

// dgamma/dbeta share accumulators across rows, so this part stays serial.
template <class S>
void layernorm_rows_backward_params(const S* x, const S* mean, const S* rstd, const S* dy,
                                    S* dgamma, S* dbeta, int rows, int n) {
  serial::layernorm_rows_backward_params(x, mean, rstd, dy, dgamma, dbeta, rows, n);
}

// Parallel over (batch, head) pairs; each owns a disjoint channel block of
// the output. The score loops are restructured around a transposed K scratch
// for vectorization, but every accumulation chain keeps the serial order.
template <class S>
void attention_forward(const S* q, const S* k, const S* v, S* out, S* alpha, int B, int T,
                       int D, int H, bool causal, const int* key_len) {
  const int dk = D / H;
  const S scale = S(1) / std::sqrt(S(dk));
#pragma omp parallel for schedule(static)
  for (int bh = 0; bh < B * H; ++bh) {
    const int b = bh / H;
    const int h = bh % H;
    const int off = h * dk;
    const int kl = key_len ? key_len[b] : T;
    // K head slice transposed to [dk, T] so the score loop runs vector FMAs
    // across j. Accumulating arow[j] over ascending c reproduces the serial
    // dot product's chain element for element.
    std::vector<S> kt((std::size_t)dk * T);
    for (int j = 0; j < kl; ++j) {
      const S* kj = k + ((std::size_t)b * T + j) * D + off;
      for (int c = 0; c < dk; ++c) kt[(std::size_t)c * T + j] = kj[c];
    }
    for (int r = 0; r < T; ++r) {
      S* arow = alpha + (((std::size_t)b * H + h) * T + r) * T;
      const int jend = causal ? std::min(r + 1, kl) : kl;
      const S* qr = q + ((std::size_t)b * T + r) * D + off;
      for (int j = 0; j < jend; ++j) arow[j] = S(0);
      for (int c = 0; c < dk; ++c) {
        const S qc = qr[c];
        const S* ktc = kt.data() + (std::size_t)c * T;
        for (int j = 0; j < jend; ++j) arow[j] = std::fma(qc, ktc[j], arow[j]);
      }
      for (int j = 0; j < jend; ++j) arow[j] *= scale;
      S m = arow[0];
      for (int j = 1; j < jend; ++j) m = arow[j] > m ? arow[j] : m;
      S sum = S(0);
      for (int j = 0; j < jend; ++j) {
        arow[j] = detail::fexp(arow[j] - m);
        sum += arow[j];
      }
      const S inv = S(1) / sum;
      for (int j = 0; j < jend; ++j) arow[j] *= inv;
      for (int j = jend; j < T; ++j) arow[j] = S(0);
      S* orow = out + ((std::size_t)b * T + r) * D + off;
      for (int c = 0; c < dk; ++c) orow[c] = S(0);
      for (int j = 0; j < jend; ++j) {
        const S* vj = v + ((std::size_t)b * T + j) * D + off;
        const S a = arow[j];
        for (int c = 0; c < dk; ++c) orow[c] = std::fma(a, vj[c], orow[c]);
      }
    }
  }
}

template <class S>
void attention_backward(const S* dout, const S* q, const S* k, const S* v, const S* alpha,
                        S* dq, S* dk_, S* dv, int B, int T, int D, int H, bool causal,
                        const int* key_len) {
  const int dk = D / H;
  const S scale = S(1) / std::sqrt(S(dk));
#pragma omp parallel for schedule(static)
  for (int bh = 0; bh < B * H; ++bh) {
    std::vector<S> dalpha(T);
    const int b = bh / H;
    const int h = bh % H;
    const int off = h * dk;
    const int kl = key_len ? key_len[b] : T;
    // V head slice transposed to [dk, T]; see attention_forward. dalpha
    // accumulates over ascending c, exactly the serial dot's chain.
    std::vector<S> vt((std::size_t)dk * T);
    for (int j = 0; j < kl; ++j) {
      const S* vj = v + ((std::size_t)b * T + j) * D + off;
      for (int c = 0; c < dk; ++c) vt[(std::size_t)c * T + j] = vj[c];
    }
    for (int r = 0; r < T; ++r) {
      const int jend = causal ? std::min(r + 1, kl) : kl;
      const S* arow = alpha + (((std::size_t)b * H + h) * T + r) * T;
      const S* dorow = dout + ((std::size_t)b * T + r) * D + off;
      const S* qr = q + ((std::size_t)b * T + r) * D + off;
      for (int j = 0; j < jend; ++j) dalpha[j] = S(0);
      for (int c = 0; c < dk; ++c) {
        const S dc = dorow[c];
        const S* vtc = vt.data() + (std::size_t)c * T;
        for (int j = 0; j < jend; ++j) dalpha[j] = std::fma(dc, vtc[j], dalpha[j]);
      }
      S dot = S(0);
      for (int j = 0; j < jend; ++j) dot = std::fma(dalpha[j], arow[j], dot);
      S* dqr = dq + ((std::size_t)b * T + r) * D + off;
      for (int j = 0; j < jend; ++j) {
        const S ds = arow[j] * (dalpha[j] - dot) * scale;
        const S* kj = k + ((std::size_t)b * T + j) * D + off;
        S* dkj = dk_ + ((std::size_t)b * T + j) * D + off;
        S* dvj = dv + ((std::size_t)b * T + j) * D + off;
        const S a = arow[j];
        for (int c = 0; c < dk; ++c) {
          dqr[c] = std::fma(ds, kj[c], dqr[c]);
          dkj[c] = std::fma(ds, qr[c], dkj[c]);
          dvj[c] = std::fma(a, dorow[c], dvj[c]);
        }
      }
    }
  }
}

// ---- elementwise ----

template <class S>
void relu(const S* x, S* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
}

template <class S>
void relu_backward(const S* x, const S* dy, S* dx, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i)
    if (x[i] > S(0)) dx[i] += dy[i];
}

// tanh-approximation GELU. Explicit std::fma wherever the compiler could
// otherwise contract: keeps vectorized and scalar compilations bit-identical.
template <class S>
LATTLE_INLINE S gelu_scalar(S x) {
  const S c = S(0.7978845608028654);  // sqrt(2/pi)
  const S u = c * std::fma(S(0.044715) * x * x, x, x);
  return S(0.5) * x * (S(1) + detail::ftanh(u));
}

template <class S>
LATTLE_INLINE S gelu_grad_scalar(S x) {
  const S c = S(0.7978845608028654);
  const S u = c * std::fma(S(0.044715) * x * x, x, x);
  const S t = detail::ftanh(u);
  const S du = c * std::fma(S(3) * S(0.044715) * x, x, S(1));
  const S w = std::fma(-t, t, S(1));
  return std::fma((S(0.5) * x) * w, du, S(0.5) * (S(1) + t));
}

template <class S>
void gelu(const S* x, S* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i) y[i] = gelu_scalar(x[i]);
}

template <class S>
void gelu_backward(const S* x, const S* dy, S* dx, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

// Saturates exactly to 0/1 for large |x|, which the gate tests rely on.
// Branchless: e = exp(-|x|) covers both halves, the sign only picks the
// numerator, so the loop below vectorizes.
template <class S>
LATTLE_INLINE S sigmoid_scalar(S x) {
  const S e = detail::fexp(-std::fabs(x));
  return (x >= S(0) ? S(1) : e) / (S(1) + e);
}

template <class S>
void sigmoid(const S* x, S* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i) y[i] = sigmoid_scalar(x[i]);
}

template <class S>
void sigmoid_backward(const S* y, const S* dy, S* dx, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i) dx[i] += dy[i] * y[i] * (S(1) - y[i]);
}

}  // namespace lattle::kern
