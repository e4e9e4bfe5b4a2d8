// Micro-benchmarks: OpenMP kernels against their serial references, then
// end-to-end sampling and decoding throughput on the smallest preset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "qdf/baselines.hpp"
#include "qdf/codes.hpp"
#include "qdf/diffusion.hpp"
#include "qdf/nn.hpp"
#include "qdf/noise.hpp"
#include "qdf/rng.hpp"
#include "qdf/tensor.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void bench_gemm() {
  std::printf("gemm: serial reference vs OpenMP kernel (square, float)\n");
  std::printf("%8s %12s %12s %9s %10s\n", "n", "serial_ms", "parallel_ms", "speedup", "identical");
  for (const int n : {64, 128, 256, 384}) {
    qdf::Rng rng(static_cast<uint64_t>(7 + n));
    std::vector<float> a(static_cast<size_t>(n) * n), b(a.size()), c1(a.size()), c2(a.size());
    for (auto& x : a) x = static_cast<float>(rng.gaussian());
    for (auto& x : b) x = static_cast<float>(rng.gaussian());
    const double ts =
        time_best_of(3, [&] { qdf::ad::kern::gemm_serial(n, n, n, a.data(), b.data(), c1.data()); });
    const double tp =
        time_best_of(3, [&] { qdf::ad::kern::gemm(n, n, n, a.data(), b.data(), c2.data()); });
    bool same = true;
    for (size_t i = 0; i < c1.size(); ++i)
      if (c1[i] != c2[i]) same = false;
    std::printf("%8d %12.3f %12.3f %8.2fx %10s\n", n, ts * 1e3, tp * 1e3, ts / tp,
                same ? "yes" : "NO");
  }
}

void bench_sampling() {
  const auto code = qdf::codes::make_code("toy422");
  const auto model = qdf::noise::code_capacity_model(code, 0.05);
  const qdf::noise::Sampler sampler(model, code, 0.05);
  const long shots = 200000;
  const auto t0 = Clock::now();
  long checksum = 0;
  for (long i = 0; i < shots; ++i) {
    qdf::Rng r = qdf::Rng(11).split(static_cast<uint64_t>(i));
    checksum += sampler.draw(r).s.popcount();
  }
  const double dt = seconds_since(t0);
  std::printf("\nsampling: %ld code-capacity draws in %.3f s (%.2f Mdraw/s, checksum %ld)\n", shots,
              dt, shots / dt / 1e6, checksum % 97);
}

void bench_decoders() {
  const auto code = qdf::codes::make_code("toy422");
  const auto model = qdf::noise::code_capacity_model(code, 0.05);
  const qdf::noise::Sampler sampler(model, code, 0.05);
  const qdf::noise::SampleStream stream(sampler, 23);

  qdf::nn::NetConfig nc;
  nc.kind = "masked";
  nc.T = 4;
  const auto geo = qdf::nn::geometry_of(model);
  qdf::Rng init(29);
  const qdf::nn::MaskedNet<float> net(nc, geo, nullptr, init);

  const long shots = 200;
  std::vector<qdf::gf2::BitVec> syndromes;
  for (long i = 0; i < shots; ++i) syndromes.push_back(stream.at(static_cast<uint64_t>(i)).s);

  const auto t0 = Clock::now();
  long acc = 0;
  for (const auto& s : syndromes) acc += qdf::diffusion::masked_decode(net, s, nc.T).popcount();
  const double t_masked = seconds_since(t0);

  qdf::baselines::BpOsdConfig bp;
  bp.always_osd = true;
  const auto t1 = Clock::now();
  for (const auto& s : syndromes) acc += qdf::baselines::bp_osd_decode(model, s, bp).popcount();
  const double t_bp = seconds_since(t1);

  std::printf("\ndecode latency on [[4,2,2]] at p = 0.05 (%ld shots, checksum %ld)\n", shots,
              acc % 97);
  std::printf("  masked diffusion, %d steps: %8.1f us/shot\n", nc.T, t_masked / shots * 1e6);
  std::printf("  bp + osd0:                  %8.1f us/shot\n", t_bp / shots * 1e6);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled (serial build)\n\n");
#endif
  bench_gemm();
  bench_sampling();
  bench_decoders();
  return 0;
}
