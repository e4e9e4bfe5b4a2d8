#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qdf/codes.hpp"
#include "qdf/diffusion.hpp"
#include "qdf/nn.hpp"
#include "qdf/noise.hpp"
#include "qdf/rng.hpp"

namespace qdf::train {

// Rng lanes: every draw in a run is a pure function of (seed, lane, ...).
inline constexpr uint64_t kLaneInit = 0;   // parameter initialization
inline constexpr uint64_t kLaneTrain = 1;  // per (iteration, sample) draws
inline constexpr uint64_t kLaneVal = 2;    // held-out validation stream

// Gradient work is split into a fixed shard count and merged in shard order,
// so results do not depend on how many threads execute the shards.
inline constexpr int kShards = 16;

// Piecewise learning-rate schedule: moves from `start` to `end` over
// `horizon` iterations, then stays at `end`.
struct LrSchedule {
  enum class Kind { kConstant, kCosine, kLinear };
  Kind kind = Kind::kConstant;
  double start = 1e-3;
  double end = 1e-3;
  long horizon = 1;

  double at(long it) const;

  // "constant:V" | "cosine:START:END:HORIZON" | "linear:START:END:HORIZON"
  static LrSchedule parse(const std::string& text);
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Decoupled weight decay; first and second moments kept in double.
class AdamW {
 public:
  AdamW(const nn::ParamStore<float>& params, const AdamWConfig& cfg);
  void step(nn::ParamStore<float>& params, const std::vector<std::vector<float>>& grads, double lr);
  void reset();
  long steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Sum of masked-diffusion loss terms for rounds r1..r2 of one sample.  For
// r < rounds the target is the intermediate logical effect l^[r]; at
// r = rounds it is the sample's final logical word, so (rounds, rounds)
// reproduces the plain single-term loss on an identical rng stream.
template <typename S>
typename ad::Tape<S>::Var staged_loss_term(ad::Tape<S>& tape, const nn::MaskedNet<S>& net,
                                           const codes::CodeModel& model,
                                           const codes::StructuralMatrices* st,
                                           const noise::Sample& sample, int r1, int r2, Rng& rng) {
  if (r1 < 0 || r1 > r2 || r2 > model.rounds)
    throw std::invalid_argument("staged_loss_term: round range invalid");
  std::vector<gf2::BitVec> inter;
  if (r1 < model.rounds) {
    if (st == nullptr)
      throw std::invalid_argument("staged_loss_term: structural matrices required for r < rounds");
    inter = codes::intermediate_targets(model, *st, sample.e);
  }
  typename ad::Tape<S>::Var total = -1;
  for (int r = r1; r <= r2; ++r) {
    const gf2::BitVec& target = r == model.rounds ? sample.l : inter[r];
    auto term = diffusion::masked_loss_term(tape, net, target, sample.s, r, rng);
    total = total < 0 ? term : tape.add(total, term);
  }
  return total;
}

struct Stage {
  int r1 = 0;
  int r2 = 0;
  long iters = 0;
};

struct TrainConfig {
  int batch = 64;
  std::vector<Stage> stages;
  LrSchedule lr;
  uint64_t seed = 1;
  AdamWConfig opt;
  long val_every = 0;      // 0 disables validation during training
  long val_samples = 2000;
  int val_t_inf = 0;       // masked decode steps in validation; 0 = trained T
  bool reset_optimizer_per_stage = false;
  std::string out_dir;     // empty: no checkpoint or metrics files
};

struct MetricsRow {
  long iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_ler = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<std::string> checkpoint_paths;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_val_ler = std::numeric_limits<double>::quiet_NaN();
  long iterations = 0;
};

// Trains in place.  Per iteration the batch is drawn fresh, split over
// kShards shards, and the shard gradients are merged in shard order; a
// non-finite loss or gradient aborts with the pre-step parameters saved
// (when out_dir is set) and NumericError raised.
TrainResult train_masked(nn::MaskedNet<float>& net, const codes::CodeModel& model,
                         const codes::StructuralMatrices* st, const noise::Sampler& sampler,
                         const TrainConfig& cfg);

TrainResult train_continuous(nn::ContinuousNet<float>& net, const codes::CodeModel& model,
                             const noise::Sampler& sampler, const TrainConfig& cfg);

// Validation error rate of the greedy masked decoder on the lane-2 stream.
double masked_val_ler(const nn::MaskedNet<float>& net, const noise::Sampler& sampler, uint64_t seed,
                      long samples, int t_inf);

double continuous_val_ler(const nn::ContinuousNet<float>& net, const noise::Sampler& sampler,
                          uint64_t seed, long samples);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace qdf::train
