#include "qdf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qdf/tensor.hpp"

namespace qdf::baselines {
namespace {

double prior_llr(double p, double clamp) {
  double l = std::log1p(-p) - std::log(p);
  return std::clamp(l, -clamp, clamp);
}

void accumulate(PosteriorTable& t, const gf2::BitVec& s, const gf2::BitVec& l, double prob) {
  auto& entry = t.table[s.words()];
  entry.class_mass[l.words()] += prob;
  entry.total += prob;
}

void finalize(PosteriorTable& t) {
  for (auto& [key, entry] : t.table) {
    bool first = true;
    for (const auto& [lw, mass] : entry.class_mass) {
      gf2::BitVec l(t.n_l);
      l.words() = lw;
      if (first || mass > entry.best_mass ||
          (mass == entry.best_mass && l.lex_less(entry.best))) {
        entry.best = l;
        entry.best_mass = mass;
        first = false;
      }
    }
  }
}

gf2::BitMat submatrix(const gf2::BitMat& m, int r0, int r1, int c0, int c1) {
  gf2::BitMat out(r1 - r0, c1 - c0);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c)
      if (m.get(r, c)) out.set(r - r0, c - c0, true);
  return out;
}

gf2::BitVec column_of(const gf2::BitMat& m, int c) {
  gf2::BitVec col(m.rows());
  for (int r = 0; r < m.rows(); ++r)
    if (m.get(r, c)) col.set(r, true);
  return col;
}

double pattern_score(const gf2::BitVec& e, const std::vector<double>& priors) {
  double score = 0.0;
  for (int i = 0; i < e.size(); ++i)
    if (e.get(i)) score += std::log1p(-priors[i]) - std::log(priors[i]);
  return score;
}

}  // namespace

const PosteriorTable::Entry* PosteriorTable::find(const gf2::BitVec& s) const {
  auto it = table.find(s.words());
  return it == table.end() ? nullptr : &it->second;
}

PosteriorTable exact_mld(const codes::CodeModel& m) {
  if (m.n_e() > 24) throw std::invalid_argument("exact_mld: more than 24 events");
  PosteriorTable t;
  t.n_s = m.n_s();
  t.n_l = m.n_l();
  const uint64_t limit = uint64_t{1} << m.n_e();
  for (uint64_t mask = 0; mask < limit; ++mask) {
    gf2::BitVec e(m.n_e());
    double prob = 1.0;
    for (int i = 0; i < m.n_e(); ++i) {
      if ((mask >> i) & 1) {
        e.set(i, true);
        prob *= m.priors[i];
      } else {
        prob *= 1.0 - m.priors[i];
      }
    }
    accumulate(t, m.h.mul(e), m.l.mul(e), prob);
  }
  finalize(t);
  return t;
}

PosteriorTable exact_mld_depolarizing(const codes::CodeModel& m, const codes::CssCode& code,
                                      double p) {
  const int n = code.n;
  if (n > 12) throw std::invalid_argument("exact_mld_depolarizing: more than 12 qubits");
  if (m.n_e() != 2 * n)
    throw std::invalid_argument("exact_mld_depolarizing: model is not code-capacity shaped");
  PosteriorTable t;
  t.n_s = m.n_s();
  t.n_l = m.n_l();
  const uint64_t limit = uint64_t{1} << (2 * n);
  for (uint64_t mask = 0; mask < limit; ++mask) {
    gf2::BitVec e(2 * n);
    double prob = 1.0;
    for (int i = 0; i < n; ++i) {
      const int pauli = static_cast<int>((mask >> (2 * i)) & 3);  // 0=I 1=X 2=Y 3=Z
      prob *= pauli == 0 ? 1.0 - p : p / 3.0;
      if (pauli == 2 || pauli == 3) e.set(i, true);      // Z component
      if (pauli == 1 || pauli == 2) e.set(n + i, true);  // X component
    }
    accumulate(t, m.h.mul(e), m.l.mul(e), prob);
  }
  finalize(t);
  return t;
}

double exact_ler(const PosteriorTable& t) {
  double wrong = 0.0;
  for (const auto& [key, entry] : t.table) wrong += entry.total - entry.best_mass;
  return wrong;
}

gf2::BitVec mld_decode(const PosteriorTable& t, const gf2::BitVec& s) {
  const auto* entry = t.find(s);
  return entry ? entry->best : gf2::BitVec(t.n_l);
}

BpResult bp_minsum(const gf2::BitMat& h, const gf2::BitVec& s, const std::vector<double>& priors,
                   const BpConfig& cfg) {
  const int n_checks = h.rows();
  const int n_vars = h.cols();
  if (static_cast<int>(priors.size()) != n_vars)
    throw std::invalid_argument("bp_minsum: prior length mismatch");
  if (s.size() != n_checks) throw std::invalid_argument("bp_minsum: syndrome length mismatch");

  std::vector<std::vector<int>> check_vars(n_checks);
  std::vector<int> edge_base(n_checks + 1, 0);
  for (int c = 0; c < n_checks; ++c) {
    for (int v = 0; v < n_vars; ++v)
      if (h.get(c, v)) check_vars[c].push_back(v);
    edge_base[c + 1] = edge_base[c] + static_cast<int>(check_vars[c].size());
  }
  const int n_edges = edge_base[n_checks];
  std::vector<std::vector<int>> var_edges(n_vars);
  for (int c = 0; c < n_checks; ++c)
    for (size_t i = 0; i < check_vars[c].size(); ++i)
      var_edges[check_vars[c][i]].push_back(edge_base[c] + static_cast<int>(i));

  std::vector<double> lambda(n_vars);
  for (int v = 0; v < n_vars; ++v) lambda[v] = prior_llr(priors[v], cfg.llr_clamp);

  std::vector<double> msg_v(n_edges);  // variable to check
  std::vector<double> msg_c(n_edges, 0.0);
  for (int c = 0; c < n_checks; ++c)
    for (size_t i = 0; i < check_vars[c].size(); ++i)
      msg_v[edge_base[c] + i] = lambda[check_vars[c][i]];

  BpResult res;
  res.e_hat = gf2::BitVec(n_vars);
  res.marginals.assign(lambda.begin(), lambda.end());

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    for (int c = 0; c < n_checks; ++c) {
      const int deg = static_cast<int>(check_vars[c].size());
      if (deg == 0) continue;
      double min1 = 1e300, min2 = 1e300;
      int arg1 = -1;
      int sign_all = s.get(c) ? -1 : 1;
      for (int i = 0; i < deg; ++i) {
        const double m = msg_v[edge_base[c] + i];
        if (m < 0) sign_all = -sign_all;
        const double a = std::fabs(m);
        if (a < min1) {
          min2 = min1;
          min1 = a;
          arg1 = i;
        } else if (a < min2) {
          min2 = a;
        }
      }
      for (int i = 0; i < deg; ++i) {
        const double m = msg_v[edge_base[c] + i];
        const int sign_excl = m < 0 ? -sign_all : sign_all;
        const double mag = cfg.scaling * (i == arg1 ? min2 : min1);
        msg_c[edge_base[c] + i] = std::clamp(sign_excl * mag, -cfg.llr_clamp, cfg.llr_clamp);
      }
    }

    for (int v = 0; v < n_vars; ++v) {
      double total = lambda[v];
      for (int e : var_edges[v]) total += msg_c[e];
      res.marginals[v] = total;
      res.e_hat.set(v, total < 0);
      for (int e : var_edges[v]) msg_v[e] = std::clamp(total - msg_c[e], -cfg.llr_clamp, cfg.llr_clamp);
    }

    res.iters_run = iter;
    if (h.mul(res.e_hat) == s) {
      res.converged = true;
      break;
    }
  }
  return res;
}

gf2::BitVec osd_decode(const gf2::BitMat& h, const gf2::BitVec& s, const std::vector<double>& priors,
                       const std::vector<double>& marginals, const OsdConfig& cfg) {
  const int n_vars = h.cols();
  if (static_cast<int>(marginals.size()) != n_vars)
    throw std::invalid_argument("osd_decode: marginal length mismatch");
  if (cfg.order < 0 || cfg.order > 3)
    throw std::invalid_argument("osd_decode: order must be in [0, 3]");

  std::vector<int> order(n_vars);
  for (int i = 0; i < n_vars; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return marginals[a] < marginals[b]; });

  const auto base = gf2::solve_with_pivots(h, s, order);
  if (!base.feasible) throw NumericError("osd_decode: syndrome outside the column space");

  gf2::BitVec best = base.solution;
  double best_score = pattern_score(best, priors);
  if (cfg.order == 0) return best;

  std::vector<bool> is_pivot(n_vars, false);
  for (int c : base.pivot_cols) is_pivot[c] = true;
  std::vector<int> free_cols;
  for (int c : order) {
    if (!is_pivot[c]) free_cols.push_back(c);
    if (static_cast<int>(free_cols.size()) >= cfg.sweep_window) break;
  }

  auto try_subset = [&](const std::vector<int>& subset) {
    gf2::BitVec s_mod = s;
    for (int c : subset) s_mod.xor_with(column_of(h, c));
    const auto sr = gf2::solve_with_pivots(h, s_mod, order);
    if (!sr.feasible) return;
    gf2::BitVec cand = sr.solution;
    for (int c : subset) cand.flip(c);
    const double score = pattern_score(cand, priors);
    if (score < best_score) {
      best = cand;
      best_score = score;
    }
  };

  const int f = static_cast<int>(free_cols.size());
  for (int i = 0; i < f; ++i) {
    try_subset({free_cols[i]});
    if (cfg.order < 2) continue;
    for (int j = i + 1; j < f; ++j) {
      try_subset({free_cols[i], free_cols[j]});
      if (cfg.order < 3) continue;
      for (int k = j + 1; k < f; ++k) try_subset({free_cols[i], free_cols[j], free_cols[k]});
    }
  }
  return best;
}

gf2::BitVec bp_osd_decode(const codes::CodeModel& m, const gf2::BitVec& s, const BpOsdConfig& cfg) {
  int r0 = 0, r1 = m.n_s(), c0 = 0, c1 = m.n_e();
  if (cfg.scope == SyndromeScope::kXOnly) {
    r1 = cfg.x_rows;
    c1 = cfg.x_cols;
  } else if (cfg.scope == SyndromeScope::kZOnly) {
    r0 = cfg.x_rows;
    c0 = cfg.x_cols;
  }
  if (r0 < 0 || r0 > r1 || r1 > m.n_s() || c0 < 0 || c0 > c1 || c1 > m.n_e())
    throw std::invalid_argument("bp_osd_decode: scope split out of range");

  const gf2::BitMat h_sub =
      (r0 == 0 && r1 == m.n_s() && c0 == 0 && c1 == m.n_e()) ? m.h : submatrix(m.h, r0, r1, c0, c1);
  std::vector<double> priors(m.priors.begin() + c0, m.priors.begin() + c1);
  gf2::BitVec s_sub(r1 - r0);
  for (int r = r0; r < r1; ++r)
    if (s.get(r)) s_sub.set(r - r0, true);

  const auto bp = bp_minsum(h_sub, s_sub, priors, cfg.bp);
  gf2::BitVec e_sub = bp.e_hat;
  if (!bp.converged || cfg.always_osd)
    e_sub = osd_decode(h_sub, s_sub, priors, bp.marginals, cfg.osd);

  gf2::BitVec e(m.n_e());
  for (int c = c0; c < c1; ++c)
    if (e_sub.get(c - c0)) e.set(c, true);
  return e;
}

}  // namespace qdf::baselines
