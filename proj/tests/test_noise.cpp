#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "qdf/codes.hpp"
#include "qdf/noise.hpp"
#include "qdf/rng.hpp"

using namespace qdf;
using gf2::BitMat;
using gf2::BitVec;

namespace {

const char* kFixtureText =
    "# two-round fixture\n"
    "qdem 1\n"
    "ns 4 nl 2 nc 2 rounds 1\n"
    "e 0.1 D0 L0\n"
    "e 0.2 D0 L0   # same support as the first event\n"
    "e 0.3 D1 L1\n"
    "e 0.4 D2 D3 L0\n";

}  // namespace

TEST_SUITE("noise") {

TEST_CASE("qdem parser reads events, comments, geometry") {
  const auto dem = noise::parse_qdem(kFixtureText);
  CHECK(dem.n_s == 4);
  CHECK(dem.n_l == 2);
  CHECK(dem.n_c == 2);
  CHECK(dem.rounds == 1);
  REQUIRE(dem.events.size() == 4);
  CHECK(dem.events[0].p == doctest::Approx(0.1));
  CHECK(dem.events[1].detectors == std::vector<int>{0});
  CHECK(dem.events[1].observables == std::vector<int>{0});
  CHECK(dem.events[3].detectors == std::vector<int>{2, 3});
  CHECK(dem.events[3].observables == std::vector<int>{0});
}

TEST_CASE("qdem parser rejects malformed input") {
  CHECK_THROWS_AS(noise::parse_qdem(""), std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 2\nns 1 nl 1 nc 1 rounds 0\ne 0.1 D0 L0\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("dem 1\nns 1 nl 1 nc 1 rounds 0\ne 0.1 D0 L0\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 rounds 0\ne 0.1 D0 L0\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\nx 0.1 D0\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 0.1 D\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 0.1 D1x\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 0.1 X0\n"),
                  std::invalid_argument);
  // Out-of-range references and probabilities.
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 0.1 D1\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 0.1 D0 L1\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 1.0 D0\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 1 nl 1 nc 1 rounds 0\ne 0 D0\n"),
                  std::invalid_argument);
  // Geometry mismatch: ns != nc * (rounds + 1).
  CHECK_THROWS_AS(noise::parse_qdem("qdem 1\nns 3 nl 1 nc 1 rounds 1\ne 0.1 D0\n"),
                  std::invalid_argument);
}

TEST_CASE("qdem text round trip preserves every field") {
  const auto dem = noise::parse_qdem(kFixtureText);
  const auto again = noise::parse_qdem(noise::write_qdem(dem));
  CHECK(again.n_s == dem.n_s);
  CHECK(again.n_l == dem.n_l);
  CHECK(again.n_c == dem.n_c);
  CHECK(again.rounds == dem.rounds);
  REQUIRE(again.events.size() == dem.events.size());
  for (size_t i = 0; i < dem.events.size(); ++i) {
    CHECK(again.events[i].p == dem.events[i].p);
    CHECK(again.events[i].detectors == dem.events[i].detectors);
    CHECK(again.events[i].observables == dem.events[i].observables);
  }
}

TEST_CASE("qdem file save and load") {
  const auto path = (std::filesystem::temp_directory_path() / "qdf_test_noise.qdem").string();
  const auto dem = noise::parse_qdem(kFixtureText);
  noise::save_qdem_file(dem, path);
  const auto again = noise::load_qdem_file(path);
  CHECK(again.events.size() == dem.events.size());
  CHECK(again.events[3].p == dem.events[3].p);
  std::remove(path.c_str());
  CHECK_THROWS_AS(noise::load_qdem_file(path), std::invalid_argument);
}

TEST_CASE("model_from_dem lays out H, L, priors by event") {
  const auto dem = noise::parse_qdem(kFixtureText);
  const auto m = noise::model_from_dem("fixture", dem);
  CHECK(m.n_c == 2);
  CHECK(m.rounds == 1);
  CHECK(m.h == BitMat::from_rows({{1, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0, 0, 0, 1}}));
  CHECK(m.l == BitMat::from_rows({{1, 1, 0, 1}, {0, 0, 1, 0}}));
  CHECK(m.priors == std::vector<double>{0.1, 0.2, 0.3, 0.4});
}

TEST_CASE("depolarizing marginals put p/3 on each Pauli") {
  const int trials = 200000;
  const double p = 0.3;
  Rng rng(99);
  int nx = 0, ny = 0, nz = 0;
  for (int i = 0; i < trials; ++i) {
    const auto err = noise::sample_depolarizing(1, p, rng);
    const bool x = err.x.get(0), z = err.z.get(0);
    if (x && !z) ++nx;
    if (x && z) ++ny;
    if (!x && z) ++nz;
  }
  const double third = p / 3.0;
  const double tol = 4.0 * std::sqrt(third * (1.0 - third) / trials);
  CHECK(std::abs(double(nx) / trials - third) < tol);
  CHECK(std::abs(double(ny) / trials - third) < tol);
  CHECK(std::abs(double(nz) / trials - third) < tol);

  const auto none = noise::sample_depolarizing(50, 0.0, rng);
  CHECK_FALSE(none.x.any());
  CHECK_FALSE(none.z.any());
  CHECK_THROWS_AS(noise::sample_depolarizing(1, 1.0, rng), std::invalid_argument);
}

TEST_CASE("code capacity model splits X and Z sectors") {
  const auto code = codes::make_code("toy422");
  const auto m = noise::code_capacity_model(code, 0.15);
  CHECK(m.rounds == 0);
  CHECK(m.n_c == 2);
  CHECK(m.n_e() == 8);
  CHECK(m.n_l() == 4);
  CHECK(m.h == BitMat::from_rows({{1, 1, 1, 1, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1}}));
  // X logicals act on the Z-error columns, Z logicals on the X-error columns.
  for (int r = 0; r < code.k; ++r)
    for (int q = 0; q < code.n; ++q) {
      CHECK(m.l.get(r, q) == code.lx.get(r, q));
      CHECK_FALSE(m.l.get(r, code.n + q));
      CHECK(m.l.get(code.k + r, code.n + q) == code.lz.get(r, q));
      CHECK_FALSE(m.l.get(code.k + r, q));
    }
  for (double pr : m.priors) CHECK(pr == doctest::Approx(0.1));
  CHECK_THROWS_AS(noise::code_capacity_model(code, 0.0), std::invalid_argument);
}

TEST_CASE("apply_events computes syndrome and logical effect") {
  const auto m = noise::model_from_dem("fixture", noise::parse_qdem(kFixtureText));
  const auto s = noise::apply_events(m, BitVec::from_bits({1, 0, 1, 1}));
  CHECK(s.e == BitVec::from_bits({1, 0, 1, 1}));
  CHECK(s.s == BitVec::from_bits({1, 1, 1, 1}));
  CHECK(s.l == BitVec::from_bits({0, 1}));
  CHECK_THROWS_AS(noise::apply_events(m, BitVec::from_bits({1, 0})), std::invalid_argument);
}

TEST_CASE("depolarizing sampler keeps the Y correlation") {
  const auto code = codes::make_code("toy422");
  const auto m = noise::code_capacity_model(code, 0.3);
  const noise::Sampler sampler(m, code, 0.3);
  const int trials = 200000;
  Rng rng(5);
  int joint = 0;
  for (int i = 0; i < trials; ++i) {
    const auto s = sampler.draw(rng);
    CHECK(m.h.mul(s.e) == s.s);
    if (s.e.get(0) && s.e.get(code.n + 0)) ++joint;
  }
  // P(Z bit and X bit on the same qubit) = p/3, not the 4p^2/9 of an
  // independent-event model.
  const double target = 0.1;
  const double tol = 4.0 * std::sqrt(target * (1.0 - target) / trials);
  CHECK(std::abs(double(joint) / trials - target) < tol);
}

TEST_CASE("independent sampler matches the event priors") {
  const auto m = noise::model_from_dem("fixture", noise::parse_qdem(kFixtureText));
  const noise::Sampler sampler(m);
  const noise::SampleStream stream(sampler, 42);
  const int trials = 100000;
  int fired3 = 0;
  for (int i = 0; i < trials; ++i) {
    const auto s = stream.at(i);
    if (s.e.get(3)) ++fired3;
    if (i < 100) {
      CHECK(m.h.mul(s.e) == s.s);
      CHECK(m.l.mul(s.e) == s.l);
    }
  }
  const double tol = 4.0 * std::sqrt(0.4 * 0.6 / trials);
  CHECK(std::abs(double(fired3) / trials - 0.4) < tol);
}

TEST_CASE("sample streams are pure functions of seed and index") {
  const auto m = noise::model_from_dem("fixture", noise::parse_qdem(kFixtureText));
  const noise::Sampler sampler(m);
  const noise::SampleStream a(sampler, 9);
  const noise::SampleStream b(sampler, 9);
  (void)a.at(17);
  (void)a.at(3);
  CHECK(a.at(5).e == b.at(5).e);
  CHECK(a.at(0).e == b.at(0).e);
  const noise::SampleStream c(sampler, 10);
  bool all_equal = true;
  for (int i = 0; i < 64 && all_equal; ++i) all_equal = c.at(i).e == a.at(i).e;
  CHECK_FALSE(all_equal);

  const auto ds = noise::generate_dataset(sampler, 20, 9);
  for (int i = 0; i < 20; ++i) CHECK(ds[i].e == a.at(i).e);
}

TEST_CASE("sampler rejects a mismatched code-capacity model") {
  const auto code = codes::make_code("toy422");
  const auto m = noise::model_from_dem("fixture", noise::parse_qdem(kFixtureText));
  CHECK_THROWS_AS(noise::Sampler(m, code, 0.1), std::invalid_argument);
}

TEST_CASE("repeated-measurement model has the layered structure") {
  const auto code = codes::make_code("steane");
  const int rounds = 3;
  const auto dem = noise::phenomenological_dem(code, 'z', rounds, 0.01, 0.005);
  CHECK(dem.n_c == 3);
  CHECK(dem.n_s == 12);
  CHECK(dem.n_l == 1);
  REQUIRE(dem.events.size() == static_cast<size_t>(rounds * (code.n + dem.n_c)));

  for (int r = 0; r < rounds; ++r) {
    const int base = r * (code.n + dem.n_c);
    for (int q = 0; q < code.n; ++q) {
      const auto& ev = dem.events[base + q];
      CHECK(ev.p == doctest::Approx(0.01));
      // Data errors in window r fire only round-r detectors.
      for (int d : ev.detectors) {
        CHECK(d >= r * dem.n_c);
        CHECK(d < (r + 1) * dem.n_c);
      }
      std::vector<int> want_det, want_obs;
      for (int c = 0; c < dem.n_c; ++c)
        if (code.hz.get(c, q)) want_det.push_back(r * dem.n_c + c);
      for (int o = 0; o < code.k; ++o)
        if (code.lz.get(o, q)) want_obs.push_back(o);
      CHECK(ev.detectors == want_det);
      CHECK(ev.observables == want_obs);
    }
    for (int c = 0; c < dem.n_c; ++c) {
      const auto& ev = dem.events[base + code.n + c];
      CHECK(ev.p == doctest::Approx(0.005));
      CHECK(ev.detectors == std::vector<int>{r * dem.n_c + c, (r + 1) * dem.n_c + c});
      CHECK(ev.observables.empty());
    }
  }
}

TEST_CASE("one-round repeated measurement reduces to code capacity plus flips") {
  const auto code = codes::make_code("toy422");
  const auto dem = noise::phenomenological_dem(code, 'x', 1, 0.1, 0.02);
  const auto m = noise::model_from_dem("phen", dem);
  CHECK(m.h == BitMat::from_rows({{1, 1, 1, 1, 1}, {0, 0, 0, 0, 1}}));
  for (int q = 0; q < code.n; ++q)
    for (int o = 0; o < code.k; ++o) CHECK(m.l.get(o, q) == code.lx.get(o, q));
  CHECK_FALSE(m.l.get(0, 4));
  CHECK_FALSE(m.l.get(1, 4));

  CHECK_THROWS_AS(noise::phenomenological_dem(code, 'y', 1, 0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(noise::phenomenological_dem(code, 'x', 0, 0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(noise::phenomenological_dem(code, 'x', 1, 0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(noise::phenomenological_dem(code, 'x', 1, 0.1, 1.0), std::invalid_argument);
}

}  // TEST_SUITE
