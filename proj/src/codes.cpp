#include "qdf/codes.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace qdf::codes {

namespace {

// Picks vectors from `candidates` that are independent of rowspace(context),
// growing the context as vectors are accepted, until `want` are found.
std::vector<gf2::BitVec> independent_subset(const std::vector<gf2::BitVec>& candidates,
                                            gf2::BitMat context, int want) {
  std::vector<gf2::BitVec> picked;
  int base_rank = gf2::rank(context);
  for (const auto& v : candidates) {
    if (static_cast<int>(picked.size()) == want) break;
    gf2::BitMat trial(1, v.size());
    for (int c = 0; c < v.size(); ++c) trial.set(0, c, v.get(c));
    gf2::BitMat grown = context.stacked(trial);
    const int r = gf2::rank(grown);
    if (r > base_rank) {
      picked.push_back(v);
      context = std::move(grown);
      base_rank = r;
    }
  }
  return picked;
}

gf2::BitMat rows_to_mat(const std::vector<gf2::BitVec>& rows, int cols) {
  gf2::BitMat m(static_cast<int>(rows.size()), cols);
  for (size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < cols; ++c)
      if (rows[r].get(c)) m.set(static_cast<int>(r), c, true);
  return m;
}

}  // namespace

CssCode css_from_checks(const std::string& name, const gf2::BitMat& hx, const gf2::BitMat& hz) {
  if (hx.cols() != hz.cols()) throw std::invalid_argument("css_from_checks: qubit count mismatch");
  const int n = hx.cols();
  const gf2::BitMat prod = hx.mul(hz.transposed());
  for (int r = 0; r < prod.rows(); ++r)
    for (int c = 0; c < prod.cols(); ++c)
      if (prod.get(r, c)) throw std::invalid_argument("css_from_checks: checks do not commute");

  const int rx = gf2::rank(hx);
  const int rz = gf2::rank(hz);
  const int k = n - rx - rz;
  if (k <= 0) throw std::invalid_argument("css_from_checks: no logical qubits");

  // X logicals: ker(Hz) modulo rowspace(Hx).
  const auto kerz = gf2::nullspace(hz);
  const auto lx_rows = independent_subset(kerz, hx, k);
  const auto kerx = gf2::nullspace(hx);
  const auto lz_rows = independent_subset(kerx, hz, k);
  if (static_cast<int>(lx_rows.size()) != k || static_cast<int>(lz_rows.size()) != k)
    throw std::invalid_argument("css_from_checks: logical extraction failed");

  CssCode code;
  code.name = name;
  code.n = n;
  code.k = k;
  code.hx = hx;
  code.hz = hz;
  code.lx = rows_to_mat(lx_rows, n);
  code.lz = rows_to_mat(lz_rows, n);
  return code;
}

CssCode build_bb_code(const std::string& name, int l, int m,
                      const std::vector<std::pair<int, int>>& a_terms,
                      const std::vector<std::pair<int, int>>& b_terms) {
  if (l <= 0 || m <= 0) throw std::invalid_argument("build_bb_code: l, m must be positive");
  const int lm = l * m;
  auto poly_mat = [&](const std::vector<std::pair<int, int>>& terms) {
    gf2::BitMat p(lm, lm);
    for (auto [a, b] : terms) {
      if (a < 0 || b < 0) throw std::invalid_argument("build_bb_code: negative exponent");
      for (int i = 0; i < l; ++i)
        for (int j = 0; j < m; ++j) {
          const int r = i * m + j;
          const int c = ((i + a) % l) * m + (j + b) % m;
          // Terms are distinct monomials, so entries toggle at most once;
          // repeated terms cancel over GF(2) as they should.
          p.set(r, c, !p.get(r, c));
        }
    }
    return p;
  };
  const gf2::BitMat a = poly_mat(a_terms);
  const gf2::BitMat b = poly_mat(b_terms);

  gf2::BitMat hx(lm, 2 * lm), hz(lm, 2 * lm);
  for (int r = 0; r < lm; ++r)
    for (int c = 0; c < lm; ++c) {
      if (a.get(r, c)) {
        hx.set(r, c, true);
        hz.set(c, lm + r, true);  // A^T in the right block of Hz
      }
      if (b.get(r, c)) {
        hx.set(r, lm + c, true);
        hz.set(c, r, true);  // B^T in the left block
      }
    }
  return css_from_checks(name, hx, hz);
}

CssCode make_code(const std::string& preset) {
  if (preset == "toy422") {
    const auto hx = gf2::BitMat::from_rows({{1, 1, 1, 1}});
    const auto hz = gf2::BitMat::from_rows({{1, 1, 1, 1}});
    return css_from_checks("toy422", hx, hz);
  }
  if (preset == "steane") {
    const auto h = gf2::BitMat::from_rows({
        {0, 0, 0, 1, 1, 1, 1},
        {0, 1, 1, 0, 0, 1, 1},
        {1, 0, 1, 0, 1, 0, 1},
    });
    return css_from_checks("steane", h, h);
  }
  if (preset == "bb72") {
    CssCode c = build_bb_code("bb72", 6, 6, {{3, 0}, {0, 1}, {0, 2}}, {{0, 3}, {1, 0}, {2, 0}});
    if (c.k != 12) throw std::invalid_argument("bb72: unexpected logical count");
    return c;
  }
  if (preset == "bb144") {
    CssCode c = build_bb_code("bb144", 12, 6, {{3, 0}, {0, 1}, {0, 2}}, {{0, 3}, {1, 0}, {2, 0}});
    if (c.k != 12) throw std::invalid_argument("bb144: unexpected logical count");
    return c;
  }
  throw std::invalid_argument("make_code: unknown preset '" + preset + "'");
}

std::vector<std::string> code_presets() { return {"toy422", "steane", "bb72", "bb144"}; }

gf2::BitMat CodeModel::h_block(int r) const {
  if (r < 0 || r > rounds) throw std::invalid_argument("CodeModel::h_block: round out of range");
  gf2::BitMat b(n_c, h.cols());
  for (int i = 0; i < n_c; ++i)
    for (int c = 0; c < h.cols(); ++c)
      if (h.get(r * n_c + i, c)) b.set(i, c, true);
  return b;
}

void validate_model(const CodeModel& m) {
  if (m.n_c <= 0 || m.rounds < 0) throw std::invalid_argument("CodeModel: bad geometry");
  if (m.h.rows() != m.n_c * (m.rounds + 1))
    throw std::invalid_argument("CodeModel: H rows must equal n_c * (rounds + 1)");
  if (m.l.cols() != m.h.cols()) throw std::invalid_argument("CodeModel: L column mismatch");
  if (m.l.rows() <= 0) throw std::invalid_argument("CodeModel: no logical observables");
  if (static_cast<int>(m.priors.size()) != m.h.cols())
    throw std::invalid_argument("CodeModel: prior count mismatch");
  for (double p : m.priors)
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("CodeModel: priors must lie in (0, 1)");
}

StructuralMatrices build_structural(const CodeModel& m) {
  validate_model(m);
  StructuralMatrices s;
  gf2::BitMat cum(m.n_c, m.n_e());
  for (int r = 0; r <= m.rounds; ++r) {
    cum = cum.or_with(m.h_block(r));
    s.htilde.push_back(cum);
    s.ktilde.push_back(cum.int_gram(cum));
    gf2::BitVec mask(m.n_e());
    for (int c = 0; c < m.n_e(); ++c) {
      bool active = false;
      for (int i = 0; i < m.n_c && !active; ++i) active = cum.get(i, c);
      if (active) mask.set(c, true);
    }
    s.pi.push_back(mask);
  }
  s.ltilde = m.l.stacked(s.htilde.back());
  s.j = s.ltilde.int_gram(s.ltilde);
  return s;
}

std::vector<std::vector<std::vector<double>>> init_attention_weights(const StructuralMatrices& s) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& k : s.ktilde) {
    std::vector<std::vector<double>> w(k.size(), std::vector<double>(k.size(), 0.0));
    for (size_t i = 0; i < k.size(); ++i)
      for (size_t j = 0; j < k[i].size(); ++j) w[i][j] = std::pow(static_cast<double>(k[i][j]), 0.125);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<gf2::BitVec> intermediate_targets(const CodeModel& m, const StructuralMatrices& s,
                                              const gf2::BitVec& e) {
  if (e.size() != m.n_e()) throw std::invalid_argument("intermediate_targets: event length mismatch");
  std::vector<gf2::BitVec> out;
  for (int r = 0; r <= m.rounds; ++r) {
    gf2::BitVec masked = e;
    for (int c = 0; c < e.size(); ++c)
      if (!s.pi[r].get(c)) masked.set(c, false);
    out.push_back(m.l.mul(masked));
  }
  return out;
}

std::string structural_to_json(const StructuralMatrices& s) {
  nlohmann::json j;
  auto mat_to_json = [](const gf2::BitMat& m) {
    std::vector<std::vector<int>> rows;
    for (int r = 0; r < m.rows(); ++r) {
      std::vector<int> row(m.cols());
      for (int c = 0; c < m.cols(); ++c) row[c] = m.get(r, c) ? 1 : 0;
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["htilde"] = nlohmann::json::array();
  for (const auto& h : s.htilde) j["htilde"].push_back(mat_to_json(h));
  j["ktilde"] = s.ktilde;
  j["ltilde"] = mat_to_json(s.ltilde);
  j["j"] = s.j;
  j["pi"] = nlohmann::json::array();
  for (const auto& p : s.pi) j["pi"].push_back(p.to_bits());
  return j.dump(2);
}

}  // namespace qdf::codes
