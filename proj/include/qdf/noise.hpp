#pragma once

#include <string>
#include <vector>

#include "qdf/codes.hpp"
#include "qdf/gf2.hpp"
#include "qdf/rng.hpp"

namespace qdf::noise {

// One error event: probability plus the detectors and logical observables
// it flips.  Detector index convention: round * n_c + check.
struct DemEvent {
  double p = 0.0;
  std::vector<int> detectors;
  std::vector<int> observables;
};

struct DetectorErrorModel {
  int n_s = 0;
  int n_l = 0;
  int n_c = 0;
  int rounds = 0;
  std::vector<DemEvent> events;
};

void validate_dem(const DetectorErrorModel& dem);

// QDEM v1 text format:
//   qdem 1
//   ns <int> nl <int> nc <int> rounds <int>
//   e <float-prob> D<i> [D<j> ...] [L<k> ...]
// '#' starts a comment (full line or trailing).
DetectorErrorModel parse_qdem(const std::string& text);
std::string write_qdem(const DetectorErrorModel& dem);
DetectorErrorModel load_qdem_file(const std::string& path);
void save_qdem_file(const DetectorErrorModel& dem, const std::string& path);

codes::CodeModel model_from_dem(const std::string& name, const DetectorErrorModel& dem);

// Pauli error bits for n qubits under depolarizing noise: each qubit gets
// I with probability 1-p and X, Y, Z with p/3 each.  Y sets both parts.
struct PauliError {
  gf2::BitVec x;  // X component per qubit
  gf2::BitVec z;  // Z component per qubit
};

PauliError sample_depolarizing(int n, double p, Rng& rng);

// Code-capacity decoding model for a CSS code: events are the Z error bits
// followed by the X error bits, checks are the X checks then the Z checks,
// single round.  Event priors are the 2p/3 marginals; the sampler keeps the
// X/Z correlation from Y errors.
codes::CodeModel code_capacity_model(const codes::CssCode& code, double p);

struct Sample {
  gf2::BitVec e;  // fired events
  gf2::BitVec s;  // syndrome H e
  gf2::BitVec l;  // logical effect L e
};

// Deterministic map from a fired-event set to its sample record.
Sample apply_events(const codes::CodeModel& m, const gf2::BitVec& fired);

// Draws events from the model's own measure: independent event priors for
// DEM-backed models, correlated depolarizing for code-capacity models.
class Sampler {
 public:
  // Code-capacity constructor; p is the depolarizing rate.
  Sampler(const codes::CodeModel& m, const codes::CssCode& code, double p);
  // Independent-event constructor (DEM measure).
  explicit Sampler(const codes::CodeModel& m);

  Sample draw(Rng& rng) const;
  const codes::CodeModel& model() const { return *model_; }

 private:
  const codes::CodeModel* model_;
  bool depolarizing_ = false;
  int n_qubits_ = 0;
  double p_ = 0.0;
};

// Value-semantic reproducible stream: sample i is a pure function of
// (seed, i), so shards can be generated in any order or in parallel.
class SampleStream {
 public:
  SampleStream(const Sampler& sampler, uint64_t seed) : sampler_(&sampler), seed_(seed) {}
  Sample at(uint64_t index) const {
    Rng r = Rng(seed_).split(index);
    return sampler_->draw(r);
  }

 private:
  const Sampler* sampler_;
  uint64_t seed_;
};

std::vector<Sample> generate_dataset(const Sampler& sampler, int count, uint64_t seed);

// Phenomenological model over one CSS sector: `rounds` noisy extraction
// rounds, each preceded by independent data errors (probability p_data per
// qubit) and read out with measurement flips (probability p_meas per check),
// closed by a perfect final round.  Sector 'x' uses the X checks, which see
// Z data errors and flip the X-type observables; sector 'z' is the mirror.
// With rounds = 1 this reduces to the code-capacity check matrix plus one
// measurement-flip column per check.
DetectorErrorModel phenomenological_dem(const codes::CssCode& code, char sector, int rounds,
                                        double p_data, double p_meas);

}  // namespace qdf::noise
