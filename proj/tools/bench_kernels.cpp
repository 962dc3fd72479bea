// Throughput comparison: serial reference kernels vs the OpenMP versions the
// training loop uses. Run with OMP_NUM_THREADS to control the parallel side.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lattle/kernels.hpp"
#include "lattle/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<float> random_vec(std::size_t n, lattle::Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return v;
}

// Median-of-reps wall time in seconds.
double time_fn(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  std::vector<double> times;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void report(const char* name, double flops, double t_serial, double t_par) {
  std::printf("%-28s %10.2f ms %10.2f ms %8.2fx %10.2f GF/s\n", name, t_serial * 1e3,
              t_par * 1e3, t_serial / t_par, flops / t_par / 1e9);
}

}  // namespace

int main() {
  lattle::Rng rng(42);
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled at compile time; both columns run serial code\n");
#endif
  std::printf("%-28s %13s %13s %9s %12s\n", "kernel", "serial", "parallel", "speedup",
              "parallel");

  {
    const int M = 512, K = 512, N = 512;
    auto a = random_vec(static_cast<std::size_t>(M) * K, rng);
    auto b = random_vec(static_cast<std::size_t>(K) * N, rng);
    std::vector<float> c(static_cast<std::size_t>(M) * N);
    double flops = 2.0 * M * K * N;
    double ts = time_fn([&] { lattle::kern::serial::matmul(a.data(), b.data(), c.data(), M, K, N, false); }, 5);
    double tp = time_fn([&] { lattle::kern::matmul(a.data(), b.data(), c.data(), M, K, N, false); }, 5);
    report("matmul 512x512x512", flops, ts, tp);
  }
  {
    // The shape the gFTT fine-tune sees: (B*T) x d_model x ffn_hidden.
    const int M = 64 * 7, K = 64, N = 256;
    auto a = random_vec(static_cast<std::size_t>(M) * K, rng);
    auto b = random_vec(static_cast<std::size_t>(K) * N, rng);
    std::vector<float> c(static_cast<std::size_t>(M) * N);
    double flops = 2.0 * M * K * N;
    double ts = time_fn([&] { lattle::kern::serial::matmul(a.data(), b.data(), c.data(), M, K, N, false); }, 20);
    double tp = time_fn([&] { lattle::kern::matmul(a.data(), b.data(), c.data(), M, K, N, false); }, 20);
    report("matmul 448x64x256", flops, ts, tp);
  }
  {
    const int M = 448, K = 256, N = 64;
    auto a = random_vec(static_cast<std::size_t>(M) * K, rng);
    auto bt = random_vec(static_cast<std::size_t>(N) * K, rng);
    std::vector<float> c(static_cast<std::size_t>(M) * N);
    double flops = 2.0 * M * K * N;
    double ts = time_fn([&] { lattle::kern::serial::matmul_transb(a.data(), bt.data(), c.data(), M, K, N, false); }, 20);
    double tp = time_fn([&] { lattle::kern::matmul_transb(a.data(), bt.data(), c.data(), M, K, N, false); }, 20);
    report("matmul_transb 448x256x64", flops, ts, tp);
  }
  {
    const int rows = 4096, n = 256;
    auto x = random_vec(static_cast<std::size_t>(rows) * n, rng);
    std::vector<float> y(x.size());
    double flops = 5.0 * rows * n;  // max, sub, exp, sum, div passes
    double ts = time_fn([&] { lattle::kern::serial::softmax_rows(x.data(), y.data(), rows, n); }, 20);
    double tp = time_fn([&] { lattle::kern::softmax_rows(x.data(), y.data(), rows, n); }, 20);
    report("softmax_rows 4096x256", flops, ts, tp);
  }
  {
    const int rows = 4096, n = 64;
    auto x = random_vec(static_cast<std::size_t>(rows) * n, rng);
    auto gamma = random_vec(n, rng), beta = random_vec(n, rng);
    std::vector<float> y(x.size()), mean(rows), rstd(rows);
    double flops = 8.0 * rows * n;
    double ts = time_fn([&] {
      lattle::kern::serial::layernorm_rows(x.data(), gamma.data(), beta.data(), 1e-5f,
                                           y.data(), mean.data(), rstd.data(), rows, n);
    }, 20);
    double tp = time_fn([&] {
      lattle::kern::layernorm_rows(x.data(), gamma.data(), beta.data(), 1e-5f, y.data(),
                                   mean.data(), rstd.data(), rows, n);
    }, 20);
    report("layernorm_rows 4096x64", flops, ts, tp);
  }
  {
    const int B = 16, T = 48, D = 64, H = 4;
    auto q = random_vec(static_cast<std::size_t>(B) * T * D, rng);
    auto k = random_vec(q.size(), rng), v = random_vec(q.size(), rng);
    std::vector<float> out(q.size());
    std::vector<float> alpha(static_cast<std::size_t>(B) * H * T * T);
    double flops = 4.0 * B * H * T * T * (D / H);
    double ts = time_fn([&] {
      lattle::kern::serial::attention_forward(q.data(), k.data(), v.data(), out.data(),
                                              alpha.data(), B, T, D, H, true, nullptr);
    }, 20);
    double tp = time_fn([&] {
      lattle::kern::attention_forward(q.data(), k.data(), v.data(), out.data(), alpha.data(),
                                      B, T, D, H, true, nullptr);
    }, 20);
    report("attention fwd 16x48x64h4", flops, ts, tp);

    std::vector<float> dq(q.size()), dk(q.size()), dv(q.size());
    auto dout = random_vec(q.size(), rng);
    double bflops = 2.0 * flops;
    double tbs = time_fn([&] {
      lattle::kern::serial::attention_backward(dout.data(), q.data(), k.data(), v.data(),
                                               alpha.data(), dq.data(), dk.data(), dv.data(),
                                               B, T, D, H, true, nullptr);
    }, 20);
    double tbp = time_fn([&] {
      lattle::kern::attention_backward(dout.data(), q.data(), k.data(), v.data(), alpha.data(),
                                       dq.data(), dk.data(), dv.data(), B, T, D, H, true,
                                       nullptr);
    }, 20);
    report("attention bwd 16x48x64h4", bflops, tbs, tbp);
  }
  return 0;
}
