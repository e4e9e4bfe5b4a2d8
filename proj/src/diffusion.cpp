#include "qdf/diffusion.hpp"

#include <stdexcept>

namespace qdf::diffusion {

std::vector<int> mask_sample(const gf2::BitVec& l0, int t, int T, Rng& rng) {
  if (T < 1 || t < 0 || t > T) throw std::invalid_argument("mask_sample: t outside [0, T]");
  const int n_l = l0.size();
  std::vector<int> tokens(n_l);
  for (int k = 0; k < n_l; ++k) tokens[k] = l0.get(k) ? 1 : 0;
  const int count = static_cast<int>(std::lround(static_cast<double>(n_l) * t / T));
  for (int k : rng.sample_without_replacement(n_l, count)) tokens[k] = nn::kMaskToken;
  return tokens;
}

void forward_chain_step(std::vector<int>& tokens, int t, int T, Rng& rng) {
  const MaskedSchedule sch(T);
  const double b = sch.beta(t);
  for (auto& tok : tokens)
    if (tok != nn::kMaskToken && rng.bernoulli(b)) tok = nn::kMaskToken;
}

ReverseRow masked_reverse_exact(int l_t_token, int l0_bit, int t) {
  if (t < 1) throw std::invalid_argument("masked_reverse_exact: t must be >= 1");
  if (l0_bit != 0 && l0_bit != 1) throw std::invalid_argument("masked_reverse_exact: bad clean bit");
  ReverseRow row;
  if (l_t_token == nn::kMaskToken) {
    row.pmask = static_cast<double>(t - 1) / t;
    if (l0_bit == 0)
      row.p0 = 1.0 / t;
    else
      row.p1 = 1.0 / t;
    return row;
  }
  if (l_t_token != l0_bit)
    throw std::invalid_argument("masked_reverse_exact: unmasked token must equal the clean bit");
  if (l_t_token == 0)
    row.p0 = 1.0;
  else
    row.p1 = 1.0;
  return row;
}

std::vector<double> center_bits(const gf2::BitVec& l0) {
  std::vector<double> out(l0.size());
  for (int k = 0; k < l0.size(); ++k) out[k] = l0.get(k) ? 0.5 : -0.5;
  return out;
}

std::vector<double> continuous_sample(const gf2::BitVec& l0, const ContinuousSchedule& sch, int t,
                                      Rng& rng) {
  if (t < 0 || t > sch.T) throw std::invalid_argument("continuous_sample: t outside [0, T]");
  auto out = center_bits(l0);
  const double scale = std::sqrt(sch.alpha_bar[t]);
  const double noise = std::sqrt(1.0 - sch.alpha_bar[t]);
  for (auto& x : out) x = scale * x + noise * rng.gaussian();
  return out;
}

std::vector<double> continuous_forward_step(const std::vector<double>& prev,
                                            const ContinuousSchedule& sch, int t, Rng& rng) {
  if (t < 1 || t > sch.T) throw std::invalid_argument("continuous_forward_step: t outside [1, T]");
  std::vector<double> out(prev.size());
  const double a = std::sqrt(sch.alpha[t]);
  const double b = std::sqrt(sch.beta[t]);
  for (size_t k = 0; k < prev.size(); ++k) out[k] = a * prev[k] + b * rng.gaussian();
  return out;
}

}  // namespace qdf::diffusion
