#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "qdf/gf2.hpp"
#include "qdf/nn.hpp"
#include "qdf/rng.hpp"
#include "qdf/tensor.hpp"

namespace qdf::diffusion {

// ---------------------------------------------------------------------------
// Masked (absorbing-state) diffusion over logical bit strings.
// Vocabulary per position: 0, 1, or the mask token.  The forward chain masks
// each still-visible position at step t with probability beta_t = 1/(T-t+1),
// which makes the marginal masking probability after t steps exactly t/T.
// ---------------------------------------------------------------------------

struct MaskedSchedule {
  int T = 4;
  explicit MaskedSchedule(int steps) : T(steps) {
    if (steps < 1) throw std::invalid_argument("MaskedSchedule: T must be >= 1");
  }
  double beta(int t) const {
    if (t < 1 || t > T) throw std::invalid_argument("MaskedSchedule: t out of range");
    return 1.0 / (T - t + 1);
  }
  double alpha(int t) const {
    if (t < 0 || t > T) throw std::invalid_argument("MaskedSchedule: t out of range");
    return 1.0 - static_cast<double>(t) / T;
  }
};

// Draws l_t directly from the marginal at step t: exactly round(n_l * t / T)
// positions masked, chosen uniformly without replacement.  Returns tokens.
std::vector<int> mask_sample(const gf2::BitVec& l0, int t, int T, Rng& rng);

// One step of the forward chain: masks each unmasked token with beta_t.
void forward_chain_step(std::vector<int>& tokens, int t, int T, Rng& rng);

// Reverse transition distribution for one position, conditioned on the clean
// bit: returns P[l_{t-1,k} = 0], P[.. = 1], P[.. = mask].  Exact closed form:
// an unmasked token stays put; a masked one stays masked with (t-1)/t and
// reveals the clean bit with 1/t.
struct ReverseRow {
  double p0 = 0.0, p1 = 0.0, pmask = 0.0;
};
ReverseRow masked_reverse_exact(int l_t_token, int l0_bit, int t);

// Single-sample loss term added to the tape: draws t uniform in {1..T},
// masks the target word, and scores the masked positions with (1/t)-weighted
// cross-entropy.  `target` is the clean word the net should reconstruct
// (the final logical for plain decoding, an intermediate target for staged
// training).
template <typename S>
typename ad::Tape<S>::Var masked_loss_term(ad::Tape<S>& tape, const nn::MaskedNet<S>& net,
                                           const gf2::BitVec& target, const gf2::BitVec& s,
                                           int upto_round, Rng& rng) {
  const int T = net.config().T;
  const int t = 1 + static_cast<int>(rng.below(static_cast<uint32_t>(T)));
  const auto tokens = mask_sample(target, t, T, rng);
  auto probs = net.forward(tape, tokens, s, upto_round);
  std::vector<int> tgt(tokens.size());
  std::vector<char> mask(tokens.size());
  for (size_t k = 0; k < tokens.size(); ++k) {
    tgt[k] = target.get(static_cast<int>(k)) ? 1 : 0;
    mask[k] = tokens[k] == nn::kMaskToken ? 1 : 0;
  }
  return tape.masked_bce_loss(probs, tgt, mask, S(1.0 / t));
}

// Mean masked-diffusion loss over a batch of (target, syndrome) pairs.
template <typename S>
double masked_loss(const nn::MaskedNet<S>& net,
                   const std::vector<std::pair<gf2::BitVec, gf2::BitVec>>& batch, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("masked_loss: empty batch");
  double acc = 0.0;
  for (const auto& [target, s] : batch) {
    ad::Tape<S> tape;
    acc += static_cast<double>(
        tape.scalar(masked_loss_term(tape, net, target, s, net.geometry().rounds, rng)));
  }
  return acc / batch.size();
}

// Greedy reverse process.  Starts fully masked and unmasks the most
// confident positions (confidence max(p, 1-p), ties to the lowest index)
// on a floor schedule: after processing step t, floor(n_l * (t-1) / T_inf)
// positions remain masked.  T_inf = 1 reveals everything in one call.
template <typename S>
gf2::BitVec masked_decode(const nn::MaskedNet<S>& net, const gf2::BitVec& s, int T_inf) {
  const int n_l = net.geometry().n_l;
  if (T_inf < 1 || T_inf > n_l) throw std::invalid_argument("masked_decode: T_inf outside [1, n_l]");
  std::vector<int> tokens(n_l, nn::kMaskToken);
  int masked = n_l;
  for (int t = T_inf; t >= 1; --t) {
    ad::Tape<S> tape;
    auto probs = tape.val(net.forward(tape, tokens, s, net.geometry().rounds));
    const int keep = static_cast<int>(
        std::floor(static_cast<double>(n_l) * (t - 1) / T_inf));
    int unmask = masked - keep;
    while (unmask-- > 0) {
      int best = -1;
      double best_conf = -1.0;
      for (int k = 0; k < n_l; ++k) {
        if (tokens[k] != nn::kMaskToken) continue;
        const double p = static_cast<double>(probs[k]);
        const double conf = std::max(p, 1.0 - p);
        if (conf > best_conf) {
          best_conf = conf;
          best = k;
        }
      }
      tokens[best] = static_cast<double>(probs[best]) >= 0.5 ? 1 : 0;
      --masked;
    }
  }
  gf2::BitVec out(n_l);
  for (int k = 0; k < n_l; ++k)
    if (tokens[k] == 1) out.set(k, true);
  return out;
}

// Variant that unmasks uniformly random positions on the same schedule;
// used to measure what the confidence ordering buys.
template <typename S>
gf2::BitVec masked_decode_random_order(const nn::MaskedNet<S>& net, const gf2::BitVec& s,
                                       int T_inf, Rng& rng) {
  const int n_l = net.geometry().n_l;
  if (T_inf < 1 || T_inf > n_l) throw std::invalid_argument("masked_decode: T_inf outside [1, n_l]");
  std::vector<int> tokens(n_l, nn::kMaskToken);
  int masked = n_l;
  for (int t = T_inf; t >= 1; --t) {
    ad::Tape<S> tape;
    auto probs = tape.val(net.forward(tape, tokens, s, net.geometry().rounds));
    const int keep = static_cast<int>(std::floor(static_cast<double>(n_l) * (t - 1) / T_inf));
    int unmask = masked - keep;
    while (unmask-- > 0) {
      std::vector<int> cand;
      for (int k = 0; k < n_l; ++k)
        if (tokens[k] == nn::kMaskToken) cand.push_back(k);
      const int k = cand[rng.below(static_cast<uint32_t>(cand.size()))];
      tokens[k] = static_cast<double>(probs[k]) >= 0.5 ? 1 : 0;
      --masked;
    }
  }
  gf2::BitVec out(n_l);
  for (int k = 0; k < n_l; ++k)
    if (tokens[k] == 1) out.set(k, true);
  return out;
}

// Exhaustive search over unmask orders (one position per step, values still
// taken greedily per position).  Returns the completion whose trajectory has
// the highest product of chosen-token probabilities.  Cost grows as n_l!,
// so this is gated to n_l <= 8.
template <typename S>
gf2::BitVec masked_decode_exhaustive(const nn::MaskedNet<S>& net, const gf2::BitVec& s) {
  const int n_l = net.geometry().n_l;
  if (n_l > 8) throw std::invalid_argument("masked_decode_exhaustive: n_l must be <= 8");
  std::vector<int> order(n_l);
  std::iota(order.begin(), order.end(), 0);
  gf2::BitVec best(n_l);
  double best_score = -std::numeric_limits<double>::infinity();
  do {
    std::vector<int> tokens(n_l, nn::kMaskToken);
    double score = 0.0;
    for (int step = 0; step < n_l; ++step) {
      ad::Tape<S> tape;
      auto probs = tape.val(net.forward(tape, tokens, s, net.geometry().rounds));
      const int k = order[step];
      const double p = static_cast<double>(probs[k]);
      const int bit = p >= 0.5 ? 1 : 0;
      score += std::log(bit ? p : 1.0 - p);
      tokens[k] = bit;
    }
    if (score > best_score) {
      best_score = score;
      gf2::BitVec l(n_l);
      for (int k = 0; k < n_l; ++k)
        if (tokens[k] == 1) l.set(k, true);
      best = l;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Continuous (Gaussian) diffusion over centered logical vectors.
// beta_t = (0.1 + 19.9 t / T) / T; training draws t by importance sampling
// proportional to beta_t^2 / (1 - alpha_bar_t) with the weight folded into
// the sampling (reset to one afterwards).
// ---------------------------------------------------------------------------

struct ContinuousSchedule {
  int T = 200;
  std::vector<double> beta, alpha, alpha_bar, weight;  // 1-based; index 0 unused
  std::vector<double> cdf;                             // t-sampling CDF

  explicit ContinuousSchedule(int steps) : T(steps) {
    if (steps < 1) throw std::invalid_argument("ContinuousSchedule: T must be >= 1");
    beta.assign(T + 1, 0.0);
    alpha.assign(T + 1, 0.0);
    alpha_bar.assign(T + 1, 0.0);
    weight.assign(T + 1, 0.0);
    alpha_bar[0] = 1.0;
    double wsum = 0.0;
    for (int t = 1; t <= T; ++t) {
      beta[t] = (0.1 + 19.9 * t / T) / T;
      if (!(beta[t] > 0.0 && beta[t] <= 1.0))
        throw std::invalid_argument("ContinuousSchedule: beta outside (0, 1]");
      alpha[t] = 1.0 - beta[t];
      alpha_bar[t] = alpha_bar[t - 1] * alpha[t];
      weight[t] = beta[t] * beta[t] / (1.0 - alpha_bar[t]);
      wsum += weight[t];
    }
    cdf.assign(T + 1, 0.0);
    double acc = 0.0;
    for (int t = 1; t <= T; ++t) {
      weight[t] /= wsum;
      acc += weight[t];
      cdf[t] = acc;
    }
    cdf[T] = 1.0;
  }

  int sample_t(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf.begin() + 1, cdf.end(), u);
    return static_cast<int>(it - cdf.begin());
  }
};

// Centered clean vector: bits {0,1} -> {-0.5, +0.5}.
std::vector<double> center_bits(const gf2::BitVec& l0);

// Closed-form draw l_t = sqrt(abar_t) l0c + sqrt(1 - abar_t) eps.  t = 0
// returns the centered word itself.
std::vector<double> continuous_sample(const gf2::BitVec& l0, const ContinuousSchedule& sch, int t,
                                      Rng& rng);

// One forward step l_t = sqrt(alpha_t) l_{t-1} + sqrt(beta_t) eps.
std::vector<double> continuous_forward_step(const std::vector<double>& prev,
                                            const ContinuousSchedule& sch, int t, Rng& rng);

// Tape-building version used by training; value = mean_b ||eps_hat - eps||^2.
template <typename S>
typename ad::Tape<S>::Var continuous_loss_term(
    ad::Tape<S>& tape, const nn::ContinuousNet<S>& net,
    const std::vector<std::pair<gf2::BitVec, gf2::BitVec>>& batch, const ContinuousSchedule& sch,
    Rng& rng) {
  const int n_l = net.geometry().n_l;
  const int B = static_cast<int>(batch.size());
  ad::Mat<S> lt(B, n_l), eps(B, n_l);
  std::vector<gf2::BitVec> syndromes;
  std::vector<double> steps;
  for (int i = 0; i < B; ++i) {
    const auto& [l0, s] = batch[i];
    if (l0.size() != n_l) throw std::invalid_argument("continuous_loss: target width mismatch");
    const int t = sch.sample_t(rng);
    const auto l0c = center_bits(l0);
    for (int k = 0; k < n_l; ++k) {
      const double e = rng.gaussian();
      eps.at(i, k) = static_cast<S>(e);
      lt.at(i, k) = static_cast<S>(std::sqrt(sch.alpha_bar[t]) * l0c[k] +
                                   std::sqrt(1.0 - sch.alpha_bar[t]) * e);
    }
    syndromes.push_back(s);
    steps.push_back(static_cast<double>(t));
  }
  auto out = net.forward(tape, tape.constant(lt), syndromes, steps);
  return tape.scale(tape.mse_loss(out, tape.constant(eps)), S(n_l));
}

// Mean over the batch of || eps_hat - eps ||^2 with importance-sampled t.
template <typename S>
double continuous_loss(const nn::ContinuousNet<S>& net,
                       const std::vector<std::pair<gf2::BitVec, gf2::BitVec>>& batch,
                       const ContinuousSchedule& sch, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("continuous_loss: empty batch");
  ad::Tape<S> tape;
  auto loss = continuous_loss_term(tape, net, batch, sch, rng);
  return static_cast<double>(tape.scalar(loss));
}

// Deterministic reverse iteration from the zero vector; thresholds the final
// reconstruction at zero.  Diverging trajectories raise NumericError.
template <typename S>
gf2::BitVec continuous_decode(const nn::ContinuousNet<S>& net, const gf2::BitVec& s,
                              const ContinuousSchedule& sch) {
  const int n_l = net.geometry().n_l;
  std::vector<double> l(n_l, 0.0);
  for (int t = sch.T; t >= 1; --t) {
    ad::Tape<S> tape;
    ad::Mat<S> lt(1, n_l);
    for (int k = 0; k < n_l; ++k) lt.at(0, k) = static_cast<S>(l[k]);
    const auto eps = tape.val(net.forward(tape, tape.constant(lt), {s}, {static_cast<double>(t)}));
    const double a = sch.alpha[t];
    const double coef = (1.0 - a) / (std::sqrt(1.0 - sch.alpha_bar[t]) * std::sqrt(a));
    for (int k = 0; k < n_l; ++k) {
      l[k] = l[k] / std::sqrt(a) - coef * static_cast<double>(eps[k]);
      if (!std::isfinite(l[k]) || std::fabs(l[k]) > 1e3)
        throw NumericError("continuous_decode: trajectory diverged");
    }
  }
  gf2::BitVec out(n_l);
  for (int k = 0; k < n_l; ++k)
    if (l[k] > 0.0) out.set(k, true);
  return out;
}

}  // namespace qdf::diffusion
