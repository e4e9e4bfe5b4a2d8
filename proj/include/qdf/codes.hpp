#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qdf/gf2.hpp"

namespace qdf::codes {

// CSS stabilizer code.  X-type checks/logicals detect Z errors and vice
// versa; commutation (Hx Hz^T = 0) is enforced at construction.
struct CssCode {
  std::string name;
  int n = 0;  // physical qubits
  int k = 0;  // logical qubits
  gf2::BitMat hx;  // X checks, rows x n
  gf2::BitMat hz;  // Z checks
  gf2::BitMat lx;  // k x n X logicals
  gf2::BitMat lz;  // k x n Z logicals
};

// Builds a CSS code from check matrices, deriving logical operators as a
// basis of ker(Hz) modulo rowspace(Hx) (and symmetrically for Z).
CssCode css_from_checks(const std::string& name, const gf2::BitMat& hx, const gf2::BitMat& hz);

// Bivariate bicycle code over l x m cyclic group: Hx = [A | B],
// Hz = [B^T | A^T] with A, B sums of monomials x^a y^b given as (a, b)
// exponent pairs.
CssCode build_bb_code(const std::string& name, int l, int m,
                      const std::vector<std::pair<int, int>>& a_terms,
                      const std::vector<std::pair<int, int>>& b_terms);

// Named presets: "toy422", "steane", "bb72", "bb144".
CssCode make_code(const std::string& preset);
std::vector<std::string> code_presets();

// Decoding problem with error events grouped into measurement rounds.
// H has (R+1) row blocks of n_c rows each (code capacity is R = 0 with a
// single block); columns are error events with independent prior
// probabilities.  L maps events to the n_l logical observables.
struct CodeModel {
  std::string name;
  int n_c = 0;       // checks per round
  int rounds = 0;    // R; detector rows cover rounds 0..R
  gf2::BitMat h;     // n_s x n_e with n_s = n_c * (R + 1)
  gf2::BitMat l;     // n_l x n_e
  std::vector<double> priors;  // per-event probability, each in (0, 1)

  int n_s() const { return h.rows(); }
  int n_e() const { return h.cols(); }
  int n_l() const { return l.rows(); }
  // Row block r (n_c rows) of H.
  gf2::BitMat h_block(int r) const;
};

void validate_model(const CodeModel& m);

// Structural matrices derived from the blocked parity data; these seed and
// mask the attention weights of the transformer decoder.
struct StructuralMatrices {
  // htilde[r][i][j] = 1 iff check i sees event j in any round <= r.
  std::vector<gf2::BitMat> htilde;           // R+1 of n_c x n_e
  std::vector<std::vector<std::vector<int>>> ktilde;  // R+1 of n_c x n_c integer Gram
  gf2::BitMat ltilde;                        // [L; htilde[R]] stacked
  std::vector<std::vector<int>> j;           // ltilde Gram, (n_l + n_c)^2
  std::vector<gf2::BitVec> pi;               // R+1 masks over events
};

StructuralMatrices build_structural(const CodeModel& m);

// Attention-mask initial values: entrywise eighth root of ktilde[r].
std::vector<std::vector<std::vector<double>>> init_attention_weights(const StructuralMatrices& s);

// l^[r] = L (pi[r] * e): the logical effect of the error restricted to
// events visible by round r.
std::vector<gf2::BitVec> intermediate_targets(const CodeModel& m, const StructuralMatrices& s,
                                              const gf2::BitVec& e);

// JSON dump of the structural matrices for inspection or plotting.
std::string structural_to_json(const StructuralMatrices& s);

}  // namespace qdf::codes
