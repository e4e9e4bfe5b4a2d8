#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qdf/baselines.hpp"
#include "qdf/codes.hpp"
#include "qdf/diffusion.hpp"
#include "qdf/gf2.hpp"
#include "qdf/nn.hpp"
#include "qdf/noise.hpp"

namespace qdf::eval {

using DecodeFn = std::function<gf2::BitVec(const gf2::BitVec&)>;

struct LatencyStats {
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
};

struct EvalResult {
  long samples = 0;
  long failures = 0;
  double ler = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
  LatencyStats latency;
};

// 95% Wilson score interval for failures/samples.
std::pair<double, double> wilson_interval(long failures, long samples);

// Monte Carlo logical error rate over the reproducible stream (seed, i).
// Failures are integer-reduced, so the estimate does not depend on the
// thread count.  When latency_samples > 0 a single-threaded decode-only
// timing pass (batch size 1) follows on the first stream indices.
EvalResult evaluate(const noise::Sampler& sampler, const DecodeFn& decode, long samples,
                    uint64_t seed, long latency_samples = 0);

// Named decoder construction; exactly the members a given name needs must
// be set.  Names: mld, bp-osd, masked-df, lr (masked at one step),
// continuous-df.
struct DecoderSpec {
  std::string name;
  const baselines::PosteriorTable* posterior = nullptr;  // mld
  const codes::CodeModel* model = nullptr;               // bp-osd
  baselines::BpOsdConfig bp;                             // bp-osd
  const nn::MaskedNet<float>* masked = nullptr;          // masked-df, lr
  int t_inf = 0;                                         // masked-df; 0 = trained T
  const nn::ContinuousNet<float>* continuous = nullptr;  // continuous-df
};

DecodeFn make_decoder(const DecoderSpec& spec);

struct EvalRow {
  std::string decoder;
  std::string model;
  double p = 0.0;
  int t_inf = 0;
  EvalResult r;
};

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace qdf::eval
