#pragma once

#include <map>
#include <vector>

#include "qdf/codes.hpp"
#include "qdf/gf2.hpp"

namespace qdf::baselines {

// Exact posterior over logical classes per syndrome, built by exhaustive
// enumeration.  Keys are the packed words of the bit vectors.
struct PosteriorTable {
  struct Entry {
    std::map<std::vector<uint64_t>, double> class_mass;
    gf2::BitVec best;       // argmax class, ties to lexicographically smallest
    double best_mass = 0.0;
    double total = 0.0;
  };
  int n_s = 0;
  int n_l = 0;
  std::map<std::vector<uint64_t>, Entry> table;

  const Entry* find(const gf2::BitVec& s) const;
};

// Enumerates all 2^n_e error patterns under independent event priors.
// Guarded to n_e <= 24.
PosteriorTable exact_mld(const codes::CodeModel& m);

// Enumerates all 4^n Pauli patterns of the depolarizing channel, keeping
// the X/Z correlation of Y errors; the model must use the code-capacity
// event layout.  Guarded to n <= 12.
PosteriorTable exact_mld_depolarizing(const codes::CodeModel& m, const codes::CssCode& code,
                                      double p);

// Probability that the table's own argmax rule misses the true class.
double exact_ler(const PosteriorTable& t);

// Argmax lookup; syndromes absent from the table decode to the zero class.
gf2::BitVec mld_decode(const PosteriorTable& t, const gf2::BitVec& s);

// Flooding normalized min-sum belief propagation.
struct BpConfig {
  int max_iters = 100;
  double scaling = 0.5;    // check-node normalization in (0, 1]
  double llr_clamp = 30.0;
};

struct BpResult {
  gf2::BitVec e_hat;
  bool converged = false;          // H e_hat == s at some iteration
  int iters_run = 0;
  std::vector<double> marginals;   // posterior log-likelihood ratios
};

BpResult bp_minsum(const gf2::BitMat& h, const gf2::BitVec& s, const std::vector<double>& priors,
                   const BpConfig& cfg);

// Ordered-statistics post-processing.  Columns are ranked most-likely-
// flipped first using the BP marginals; order 0 solves on that basis, and
// order w <= 3 additionally sweeps flips of up to w of the most suspect
// free columns, keeping the candidate with the best prior likelihood.
struct OsdConfig {
  int order = 0;
  int sweep_window = 12;  // free columns eligible for the combination sweep
};

gf2::BitVec osd_decode(const gf2::BitMat& h, const gf2::BitVec& s, const std::vector<double>& priors,
                       const std::vector<double>& marginals, const OsdConfig& cfg);

// Which rows (and, for the block code-capacity layout, columns) to decode.
enum class SyndromeScope { kFull, kXOnly, kZOnly };

struct BpOsdConfig {
  BpConfig bp;
  OsdConfig osd;
  SyndromeScope scope = SyndromeScope::kFull;
  int x_rows = 0;   // row split for kXOnly / kZOnly (code-capacity layout)
  int x_cols = 0;   // column split (Z-error events before X-error events)
  bool always_osd = false;  // run OSD even when BP converged
};

// BP then OSD; returns the estimated event vector (full length n_e).
gf2::BitVec bp_osd_decode(const codes::CodeModel& m, const gf2::BitVec& s, const BpOsdConfig& cfg);

}  // namespace qdf::baselines
