#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "qdf/diffusion.hpp"
#include "qdf/nn.hpp"
#include "qdf/rng.hpp"

using namespace qdf;
using gf2::BitVec;

namespace {

nn::MaskedNet<float> small_masked_net(int n_l, int n_c, uint64_t seed) {
  nn::NetConfig cfg;
  cfg.d_m = 8;
  cfg.d_f = 8;
  cfg.n_h = 2;
  cfg.n_dl = 1;
  cfg.T = 4;
  Rng rng(seed);
  return nn::MaskedNet<float>(cfg, nn::TokenGeometry{n_l, n_c, 0}, nullptr, rng);
}

template <typename Net>
void zero_params(Net& net) {
  for (int id = 0; id < net.params().count(); ++id) {
    auto& t = net.params().at(id);
    std::fill(t.d.begin(), t.d.end(), 0.0f);
  }
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("masking schedule values") {
  const diffusion::MaskedSchedule sch(4);
  CHECK(sch.beta(1) == doctest::Approx(0.25));
  CHECK(sch.beta(2) == doctest::Approx(1.0 / 3.0));
  CHECK(sch.beta(3) == doctest::Approx(0.5));
  CHECK(sch.beta(4) == doctest::Approx(1.0));
  CHECK(sch.alpha(0) == doctest::Approx(1.0));
  CHECK(sch.alpha(1) == doctest::Approx(0.75));
  CHECK(sch.alpha(2) == doctest::Approx(0.5));
  CHECK(sch.alpha(3) == doctest::Approx(0.25));
  CHECK(sch.alpha(4) == doctest::Approx(0.0));
  CHECK_THROWS_AS(sch.beta(0), std::invalid_argument);
  CHECK_THROWS_AS(sch.beta(5), std::invalid_argument);
  CHECK_THROWS_AS(sch.alpha(-1), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::MaskedSchedule(0), std::invalid_argument);
}

TEST_CASE("marginal masking uses an exact count") {
  const BitVec l0 = BitVec::from_bits({1, 0, 1, 1, 0, 1});
  Rng rng(1);

  const auto t0 = diffusion::mask_sample(l0, 0, 4, rng);
  CHECK(t0 == std::vector<int>{1, 0, 1, 1, 0, 1});
  const auto t4 = diffusion::mask_sample(l0, 4, 4, rng);
  CHECK(t4 == std::vector<int>(6, nn::kMaskToken));

  // 6 * 2 / 4 = 3 and 6 * 3 / 4 = 4.5 rounds to 5.
  for (int trial = 0; trial < 50; ++trial) {
    const auto t2 = diffusion::mask_sample(l0, 2, 4, rng);
    int masked = 0;
    for (int k = 0; k < 6; ++k) {
      if (t2[k] == nn::kMaskToken)
        ++masked;
      else
        CHECK(t2[k] == (l0.get(k) ? 1 : 0));
    }
    CHECK(masked == 3);
    const auto t3 = diffusion::mask_sample(l0, 3, 4, rng);
    CHECK(std::count(t3.begin(), t3.end(), nn::kMaskToken) == 5);
  }

  // Masked positions are drawn uniformly.
  const int trials = 30000;
  std::vector<int> hits(6, 0);
  for (int i = 0; i < trials; ++i) {
    const auto t = diffusion::mask_sample(l0, 2, 4, rng);
    for (int k = 0; k < 6; ++k)
      if (t[k] == nn::kMaskToken) ++hits[k];
  }
  const double tol = 4.0 * std::sqrt(0.5 * 0.5 / trials);
  for (int k = 0; k < 6; ++k) CHECK(std::abs(double(hits[k]) / trials - 0.5) < tol);

  CHECK_THROWS_AS(diffusion::mask_sample(l0, -1, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::mask_sample(l0, 5, 4, rng), std::invalid_argument);
}

TEST_CASE("stepwise chain reproduces the t/T marginal") {
  const int T = 5, upto = 3, trials = 30000;
  Rng rng(2);
  int masked = 0;
  for (int i = 0; i < trials; ++i) {
    std::vector<int> tokens{1, 0, 1, 0, 1, 1};
    for (int t = 1; t <= upto; ++t) diffusion::forward_chain_step(tokens, t, T, rng);
    for (int tok : tokens)
      if (tok == nn::kMaskToken) ++masked;
  }
  const double target = double(upto) / T;
  const int n = trials * 6;
  CHECK(std::abs(double(masked) / n - target) < 4.0 * std::sqrt(target * (1 - target) / n));

  // The mask state absorbs, and the final step masks everything.
  std::vector<int> tokens{nn::kMaskToken, 1};
  diffusion::forward_chain_step(tokens, T, T, rng);
  CHECK(tokens == std::vector<int>(2, nn::kMaskToken));
}

TEST_CASE("reverse rows match the closed form and Bayes rule") {
  const auto r1 = diffusion::masked_reverse_exact(nn::kMaskToken, 0, 3);
  CHECK(r1.p0 == doctest::Approx(1.0 / 3.0));
  CHECK(r1.p1 == doctest::Approx(0.0));
  CHECK(r1.pmask == doctest::Approx(2.0 / 3.0));

  const auto r2 = diffusion::masked_reverse_exact(nn::kMaskToken, 1, 1);
  CHECK(r2.p1 == doctest::Approx(1.0));
  CHECK(r2.pmask == doctest::Approx(0.0));

  const auto r3 = diffusion::masked_reverse_exact(0, 0, 2);
  CHECK(r3.p0 == doctest::Approx(1.0));
  const auto r4 = diffusion::masked_reverse_exact(1, 1, 5);
  CHECK(r4.p1 == doctest::Approx(1.0));

  CHECK_THROWS_AS(diffusion::masked_reverse_exact(0, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::masked_reverse_exact(nn::kMaskToken, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::masked_reverse_exact(nn::kMaskToken, 0, 0), std::invalid_argument);

  // Bayes cross-check against the forward kernel: the chain marginal at
  // step t-1 masks with (t-1)/T, and step t masks survivors with beta_t.
  const int T = 7;
  const diffusion::MaskedSchedule sch(T);
  for (int t = 1; t <= T; ++t) {
    for (int bit : {0, 1}) {
      const double pm_prev = double(t - 1) / T;
      const double beta = sch.beta(t);
      const double to_mask = pm_prev * 1.0 + (1.0 - pm_prev) * beta;
      const auto row = diffusion::masked_reverse_exact(nn::kMaskToken, bit, t);
      CHECK(row.pmask == doctest::Approx(pm_prev / to_mask).epsilon(1e-12));
      const double reveal = bit ? row.p1 : row.p0;
      CHECK(reveal == doctest::Approx((1.0 - pm_prev) * beta / to_mask).epsilon(1e-12));
      CHECK(row.p0 + row.p1 + row.pmask == doctest::Approx(1.0).epsilon(1e-15));
      if (t < T) {
        // An unmasked token can only come from an unmasked predecessor.
        const auto clean = diffusion::masked_reverse_exact(bit, bit, t);
        CHECK((bit ? clean.p1 : clean.p0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(clean.pmask == doctest::Approx(0.0));
      }
    }
  }
}

TEST_CASE("masked loss terms are reproducible and positive") {
  auto net = small_masked_net(2, 2, 50);
  const BitVec target = BitVec::from_bits({1, 0});
  const BitVec s = BitVec::from_bits({1, 1});

  Rng r1(7), r2(7);
  ad::Tape<float> t1, t2;
  const float a = t1.scalar(diffusion::masked_loss_term(t1, net, target, s, 0, r1));
  const float b = t2.scalar(diffusion::masked_loss_term(t2, net, target, s, 0, r2));
  CHECK(a == b);
  CHECK(a >= 0.0f);

  Rng r3(8);
  std::vector<std::pair<BitVec, BitVec>> batch{{target, s}, {BitVec::from_bits({0, 0}), s}};
  const double mean = diffusion::masked_loss(net, batch, r3);
  CHECK(mean >= 0.0);
  CHECK(std::isfinite(mean));
  CHECK_THROWS_AS(diffusion::masked_loss(net, {}, r3), std::invalid_argument);
}

TEST_CASE("greedy decode on an indifferent net unmasks to ones") {
  auto net = small_masked_net(4, 2, 51);
  zero_params(net);
  const BitVec s = BitVec::from_bits({1, 0});
  // All probabilities sit exactly at 1/2, so every tie resolves to bit 1.
  for (int t_inf : {1, 2, 3, 4}) {
    const auto l = diffusion::masked_decode(net, s, t_inf);
    CHECK(l == BitVec::from_bits({1, 1, 1, 1}));
  }
  Rng rng(3);
  CHECK(diffusion::masked_decode_random_order(net, s, 2, rng) ==
        BitVec::from_bits({1, 1, 1, 1}));
  CHECK(diffusion::masked_decode_exhaustive(net, s) == BitVec::from_bits({1, 1, 1, 1}));

  CHECK_THROWS_AS(diffusion::masked_decode(net, s, 0), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::masked_decode(net, s, 5), std::invalid_argument);
}

TEST_CASE("decode variants agree when probabilities are far from ties") {
  // A large head bias pushes every probability to sigmoid(~5) regardless of
  // the token context, so every unmask order lands on the same word.
  auto net = small_masked_net(3, 2, 52);
  net.params().at(net.params().id_of("head.b0")).d[0] = 5.0f;
  const BitVec s = BitVec::from_bits({0, 1});
  const BitVec ones = BitVec::from_bits({1, 1, 1});
  CHECK(diffusion::masked_decode(net, s, 3) == ones);
  CHECK(diffusion::masked_decode(net, s, 1) == ones);
  Rng rng(4);
  CHECK(diffusion::masked_decode_random_order(net, s, 3, rng) == ones);
  CHECK(diffusion::masked_decode_exhaustive(net, s) == ones);
}

TEST_CASE("noise schedule values and importance weights") {
  CHECK_THROWS_AS(diffusion::ContinuousSchedule(0), std::invalid_argument);
  // beta_T = 20 / T: T = 19 overshoots 1, T = 20 lands exactly on the
  // fully-absorbing boundary and is the smallest legal horizon.
  CHECK_THROWS_AS(diffusion::ContinuousSchedule(19), std::invalid_argument);
  const diffusion::ContinuousSchedule edge(20);
  CHECK(edge.beta[20] == 1.0);
  CHECK(edge.alpha_bar[20] == 0.0);
  CHECK(edge.alpha_bar[19] > 0.0);

  const diffusion::ContinuousSchedule sch(200);
  CHECK(sch.beta[1] == doctest::Approx((0.1 + 19.9 / 200.0) / 200.0).epsilon(1e-12));
  CHECK(sch.beta[100] == doctest::Approx(10.05 / 200.0).epsilon(1e-12));
  CHECK(sch.beta[200] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(sch.alpha[100] == doctest::Approx(1.0 - sch.beta[100]).epsilon(1e-12));

  CHECK(sch.alpha_bar[0] == 1.0);
  double prod = 1.0, wsum = 0.0;
  for (int t = 1; t <= sch.T; ++t) {
    prod *= sch.alpha[t];
    CHECK(sch.alpha_bar[t] == doctest::Approx(prod).epsilon(1e-12));
    CHECK(sch.alpha_bar[t] < sch.alpha_bar[t - 1]);
    wsum += sch.weight[t];
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sch.cdf[sch.T] == 1.0);

  // Unnormalized weights follow beta^2 / (1 - alpha_bar).
  const double w1 = sch.beta[1] * sch.beta[1] / (1.0 - sch.alpha_bar[1]);
  const double w2 = sch.beta[2] * sch.beta[2] / (1.0 - sch.alpha_bar[2]);
  CHECK(sch.weight[1] / sch.weight[2] == doctest::Approx(w1 / w2).epsilon(1e-10));
}

TEST_CASE("step sampling follows the importance distribution") {
  const diffusion::ContinuousSchedule sch(40);
  const int trials = 200000;
  Rng rng(5);
  std::vector<int> hits(sch.T + 1, 0);
  for (int i = 0; i < trials; ++i) {
    const int t = sch.sample_t(rng);
    REQUIRE(t >= 1);
    REQUIRE(t <= sch.T);
    ++hits[t];
  }
  for (int t : {1, 10, 20, 40}) {
    const double w = sch.weight[t];
    const double tol = 5.0 * std::sqrt(w * (1.0 - w) / trials);
    CHECK(std::abs(double(hits[t]) / trials - w) < tol);
  }
}

TEST_CASE("centering and endpoint draws") {
  CHECK(diffusion::center_bits(BitVec::from_bits({1, 0, 1})) ==
        std::vector<double>{0.5, -0.5, 0.5});

  const diffusion::ContinuousSchedule sch(25);
  Rng rng(6);
  const BitVec l0 = BitVec::from_bits({1, 0});
  CHECK(diffusion::continuous_sample(l0, sch, 0, rng) == std::vector<double>{0.5, -0.5});
  CHECK_THROWS_AS(diffusion::continuous_sample(l0, sch, 26, rng), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::continuous_forward_step({0.5}, sch, 0, rng), std::invalid_argument);
}

TEST_CASE("closed-form draw matches the iterated chain in distribution") {
  const diffusion::ContinuousSchedule sch(25);
  const int t = 5, trials = 100000;
  const BitVec l0 = BitVec::from_bits({1});
  const double mean_want = std::sqrt(sch.alpha_bar[t]) * 0.5;
  const double var_want = 1.0 - sch.alpha_bar[t];

  for (int mode = 0; mode < 2; ++mode) {
    Rng rng(7 + mode);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < trials; ++i) {
      double x;
      if (mode == 0) {
        x = diffusion::continuous_sample(l0, sch, t, rng)[0];
      } else {
        std::vector<double> cur = diffusion::center_bits(l0);
        for (int step = 1; step <= t; ++step)
          cur = diffusion::continuous_forward_step(cur, sch, step, rng);
        x = cur[0];
      }
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / trials;
    const double var = sum2 / trials - mean * mean;
    CAPTURE(mode);
    CHECK(std::abs(mean - mean_want) < 4.0 * std::sqrt(var_want / trials));
    CHECK(std::abs(var - var_want) < 4.0 * var_want * std::sqrt(2.0 / trials));
  }
}

TEST_CASE("batched noise loss is reproducible and scaled by width") {
  nn::NetConfig cfg;
  cfg.kind = "continuous";
  cfg.d_t = 4;
  cfg.d_f = 8;
  const nn::TokenGeometry geo{2, 2, 0};
  Rng init(8);
  nn::ContinuousNet<float> net(cfg, geo, init);
  const diffusion::ContinuousSchedule sch(25);

  std::vector<std::pair<BitVec, BitVec>> batch;
  for (int i = 0; i < 8; ++i)
    batch.push_back({BitVec::from_bits({i & 1, (i >> 1) & 1}),
                     BitVec::from_bits({(i >> 1) & 1, i & 1})});
  Rng r1(9), r2(9);
  const double a = diffusion::continuous_loss(net, batch, sch, r1);
  const double b = diffusion::continuous_loss(net, batch, sch, r2);
  CHECK(a == b);
  CHECK(a > 0.0);
  CHECK_THROWS_AS(diffusion::continuous_loss(net, {}, sch, r1), std::invalid_argument);

  // A zeroed net predicts zero noise, so the loss estimates E||eps||^2 = n_l.
  zero_params(net);
  std::vector<std::pair<BitVec, BitVec>> big;
  for (int i = 0; i < 2000; ++i) big.push_back(batch[i % batch.size()]);
  Rng r3(10);
  const double e = diffusion::continuous_loss(net, big, sch, r3);
  CHECK(e == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("deterministic reverse trajectory of a zeroed net stays at zero") {
  nn::NetConfig cfg;
  cfg.kind = "continuous";
  cfg.d_t = 4;
  cfg.d_f = 8;
  const nn::TokenGeometry geo{2, 2, 0};
  Rng init(11);
  nn::ContinuousNet<float> net(cfg, geo, init);
  zero_params(net);
  const diffusion::ContinuousSchedule sch(25);
  CHECK(diffusion::continuous_decode(net, BitVec::from_bits({1, 0}), sch) == BitVec(2));
}

TEST_CASE("diverging reverse trajectories raise an error") {
  nn::NetConfig cfg;
  cfg.kind = "continuous";
  cfg.d_t = 4;
  cfg.d_f = 8;
  const nn::TokenGeometry geo{2, 2, 0};
  Rng init(12);
  nn::ContinuousNet<float> net(cfg, geo, init);
  auto& b5 = net.params().at(net.params().id_of("b5"));
  for (auto& x : b5.d) x = 1e9f;
  const diffusion::ContinuousSchedule sch(25);
  CHECK_THROWS_AS(diffusion::continuous_decode(net, BitVec::from_bits({1, 0}), sch), NumericError);
}

}  // TEST_SUITE
