#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdf {

// Raised when a computation produces non-finite values or diverges.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace ad {

// Dense row-major matrix of scalars.  Vectors are 1 x n or n x 1.
template <typename S>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<S> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, S(0)) {}

  S& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  S at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return d.size(); }
};

namespace kern {

// Work threshold below which the OpenMP kernels stay single-threaded; the
// parallel split is over output rows, so scheduling never changes the
// per-element accumulation order and results are bit-identical to the
// serial reference.
inline constexpr long long kParallelCutoff = 1LL << 16;

// c = a (m x k) * b (k x n), overwrite.
template <typename S>
void gemm_serial(int m, int k, int n, const S* a, const S* b, S* c) {
  for (int i = 0; i < m; ++i) {
    S* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = S(0);
    const S* ai = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const S aik = ai[kk];
      const S* bk = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

template <typename S>
void gemm(int m, int k, int n, const S* a, const S* b, S* c) {
  const long long work = static_cast<long long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    S* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = S(0);
    const S* ai = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const S aik = ai[kk];
      const S* bk = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c += a (m x n) * b^T (k x n), i.e. c is m x k.
template <typename S>
void gemm_nt_acc_serial(int m, int n, int k, const S* a, const S* b, S* c) {
  for (int i = 0; i < m; ++i) {
    const S* ai = a + static_cast<size_t>(i) * n;
    S* ci = c + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const S* bk = b + static_cast<size_t>(kk) * n;
      S acc = S(0);
      for (int j = 0; j < n; ++j) acc += ai[j] * bk[j];
      ci[kk] += acc;
    }
  }
}

template <typename S>
void gemm_nt_acc(int m, int n, int k, const S* a, const S* b, S* c) {
  const long long work = static_cast<long long>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const S* ai = a + static_cast<size_t>(i) * n;
    S* ci = c + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const S* bk = b + static_cast<size_t>(kk) * n;
      S acc = S(0);
      for (int j = 0; j < n; ++j) acc += ai[j] * bk[j];
      ci[kk] += acc;
    }
  }
}

// c += a^T (a is k x m) * b (k x n), i.e. c is m x n.
template <typename S>
void gemm_tn_acc_serial(int k, int m, int n, const S* a, const S* b, S* c) {
  for (int i = 0; i < m; ++i) {
    S* ci = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const S aki = a[static_cast<size_t>(kk) * m + i];
      const S* bk = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
}

template <typename S>
void gemm_tn_acc(int k, int m, int n, const S* a, const S* b, S* c) {
  const long long work = static_cast<long long>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    S* ci = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const S aki = a[static_cast<size_t>(kk) * m + i];
      const S* bk = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
}

}  // namespace kern

inline constexpr double kLayernormEps = 1e-5;
inline constexpr double kProbClamp = 1e-7;

// Reverse-mode tape.  Operations append nodes in topological order; each
// node owns its value and (when reachable from a trainable leaf) its
// gradient.  One tape per forward/backward pass; parameters are bound once
// per tape and their gradients exported afterwards.
template <typename S>
class Tape {
 public:
  using Var = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int rows(Var v) const { return nodes_[v].rows; }
  int cols(Var v) const { return nodes_[v].cols; }
  const std::vector<S>& val(Var v) const { return nodes_[v].v; }
  const std::vector<S>& grad(Var v) const { return nodes_[v].g; }
  S scalar(Var v) const {
    check(nodes_[v].rows == 1 && nodes_[v].cols == 1, "scalar: not 1x1");
    return nodes_[v].v[0];
  }

  Var constant(int rows, int cols, const S* data) {
    Var id = alloc(rows, cols, false);
    if (data) nodes_[id].v.assign(data, data + static_cast<size_t>(rows) * cols);
    return id;
  }
  Var constant(const Mat<S>& m) { return constant(m.rows, m.cols, m.d.data()); }
  Var zeros(int rows, int cols) { return alloc(rows, cols, false); }

  // Trainable leaf bound to an external parameter; repeated binds of the
  // same pid return the original node.
  Var param(const Mat<S>& m, int pid) {
    if (auto it = bound_.find(pid); it != bound_.end()) return it->second;
    Var id = alloc(m.rows, m.cols, true);
    nodes_[id].v = m.d;
    nodes_[id].pid = pid;
    bound_[pid] = id;
    return id;
  }

  Var matmul(Var a, Var b) {
    const auto& na = nodes_[a];
    const auto& nb = nodes_[b];
    check(na.cols == nb.rows, "matmul: inner dimension mismatch");
    Var id = alloc(na.rows, nb.cols, na.needs_grad || nb.needs_grad);
    kern::gemm(na.rows, na.cols, nb.cols, na.v.data(), nb.v.data(), nodes_[id].v.data());
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, b, id](Tape& t) {
        auto& A = t.nodes_[a];
        auto& B = t.nodes_[b];
        const auto& O = t.nodes_[id];
        if (A.needs_grad)
          kern::gemm_nt_acc(A.rows, B.cols, A.cols, O.g.data(), B.v.data(), A.g.data());
        if (B.needs_grad)
          kern::gemm_tn_acc(A.rows, A.cols, B.cols, A.v.data(), O.g.data(), B.g.data());
      };
    return id;
  }

  Var add(Var a, Var b) {
    const auto& na = nodes_[a];
    const auto& nb = nodes_[b];
    check(na.rows == nb.rows && na.cols == nb.cols, "add: shape mismatch");
    Var id = alloc(na.rows, na.cols, na.needs_grad || nb.needs_grad);
    for (size_t i = 0; i < na.v.size(); ++i) nodes_[id].v[i] = na.v[i] + nb.v[i];
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, b, id](Tape& t) {
        const auto& og = t.nodes_[id].g;
        if (t.nodes_[a].needs_grad) {
          auto& ga = t.nodes_[a].g;
          for (size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
        }
        if (t.nodes_[b].needs_grad) {
          auto& gb = t.nodes_[b].g;
          for (size_t i = 0; i < og.size(); ++i) gb[i] += og[i];
        }
      };
    return id;
  }

  // m + v broadcast: v is rows x 1, added to every column of m.
  Var add_colvec(Var m, Var v) {
    const auto& nm = nodes_[m];
    const auto& nv = nodes_[v];
    check(nv.cols == 1 && nv.rows == nm.rows, "add_colvec: need matching rows x 1 vector");
    Var id = alloc(nm.rows, nm.cols, nm.needs_grad || nv.needs_grad);
    auto& out = nodes_[id].v;
    for (int r = 0; r < nm.rows; ++r)
      for (int c = 0; c < nm.cols; ++c)
        out[static_cast<size_t>(r) * nm.cols + c] =
            nm.v[static_cast<size_t>(r) * nm.cols + c] + nv.v[r];
    if (nodes_[id].needs_grad)
      nodes_[id].back = [m, v, id](Tape& t) {
        const auto& O = t.nodes_[id];
        if (t.nodes_[m].needs_grad) {
          auto& gm = t.nodes_[m].g;
          for (size_t i = 0; i < O.g.size(); ++i) gm[i] += O.g[i];
        }
        if (t.nodes_[v].needs_grad) {
          auto& gv = t.nodes_[v].g;
          for (int r = 0; r < O.rows; ++r) {
            S acc = S(0);
            for (int c = 0; c < O.cols; ++c) acc += O.g[static_cast<size_t>(r) * O.cols + c];
            gv[r] += acc;
          }
        }
      };
    return id;
  }

  // m + v broadcast: v is 1 x cols, added to every row of m.
  Var add_rowvec(Var m, Var v) {
    const auto& nm = nodes_[m];
    const auto& nv = nodes_[v];
    check(nv.rows == 1 && nv.cols == nm.cols, "add_rowvec: need matching 1 x cols vector");
    Var id = alloc(nm.rows, nm.cols, nm.needs_grad || nv.needs_grad);
    auto& out = nodes_[id].v;
    for (int r = 0; r < nm.rows; ++r)
      for (int c = 0; c < nm.cols; ++c)
        out[static_cast<size_t>(r) * nm.cols + c] =
            nm.v[static_cast<size_t>(r) * nm.cols + c] + nv.v[c];
    if (nodes_[id].needs_grad)
      nodes_[id].back = [m, v, id](Tape& t) {
        const auto& O = t.nodes_[id];
        if (t.nodes_[m].needs_grad) {
          auto& gm = t.nodes_[m].g;
          for (size_t i = 0; i < O.g.size(); ++i) gm[i] += O.g[i];
        }
        if (t.nodes_[v].needs_grad) {
          auto& gv = t.nodes_[v].g;
          for (int r = 0; r < O.rows; ++r)
            for (int c = 0; c < O.cols; ++c) gv[c] += O.g[static_cast<size_t>(r) * O.cols + c];
        }
      };
    return id;
  }

  Var mul(Var a, Var b) {
    const auto& na = nodes_[a];
    const auto& nb = nodes_[b];
    check(na.rows == nb.rows && na.cols == nb.cols, "mul: shape mismatch");
    Var id = alloc(na.rows, na.cols, na.needs_grad || nb.needs_grad);
    for (size_t i = 0; i < na.v.size(); ++i) nodes_[id].v[i] = na.v[i] * nb.v[i];
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, b, id](Tape& t) {
        const auto& O = t.nodes_[id];
        const auto& va = t.nodes_[a].v;
        const auto& vb = t.nodes_[b].v;
        if (t.nodes_[a].needs_grad) {
          auto& ga = t.nodes_[a].g;
          for (size_t i = 0; i < O.g.size(); ++i) ga[i] += O.g[i] * vb[i];
        }
        if (t.nodes_[b].needs_grad) {
          auto& gb = t.nodes_[b].g;
          for (size_t i = 0; i < O.g.size(); ++i) gb[i] += O.g[i] * va[i];
        }
      };
    return id;
  }

  Var scale(Var a, S c) {
    const auto& na = nodes_[a];
    Var id = alloc(na.rows, na.cols, na.needs_grad);
    for (size_t i = 0; i < na.v.size(); ++i) nodes_[id].v[i] = na.v[i] * c;
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, c, id](Tape& t) {
        auto& ga = t.nodes_[a].g;
        const auto& og = t.nodes_[id].g;
        for (size_t i = 0; i < og.size(); ++i) ga[i] += og[i] * c;
      };
    return id;
  }

  Var concat_cols(Var a, Var b) {
    const auto& na = nodes_[a];
    const auto& nb = nodes_[b];
    check(na.rows == nb.rows, "concat_cols: row mismatch");
    Var id = alloc(na.rows, na.cols + nb.cols, na.needs_grad || nb.needs_grad);
    auto& out = nodes_[id].v;
    const int oc = na.cols + nb.cols;
    for (int r = 0; r < na.rows; ++r) {
      for (int c = 0; c < na.cols; ++c)
        out[static_cast<size_t>(r) * oc + c] = na.v[static_cast<size_t>(r) * na.cols + c];
      for (int c = 0; c < nb.cols; ++c)
        out[static_cast<size_t>(r) * oc + na.cols + c] = nb.v[static_cast<size_t>(r) * nb.cols + c];
    }
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, b, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& A = t.nodes_[a];
        auto& B = t.nodes_[b];
        for (int r = 0; r < O.rows; ++r) {
          if (A.needs_grad)
            for (int c = 0; c < A.cols; ++c)
              A.g[static_cast<size_t>(r) * A.cols + c] += O.g[static_cast<size_t>(r) * O.cols + c];
          if (B.needs_grad)
            for (int c = 0; c < B.cols; ++c)
              B.g[static_cast<size_t>(r) * B.cols + c] +=
                  O.g[static_cast<size_t>(r) * O.cols + A.cols + c];
        }
      };
    return id;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows: empty");
    int rows = 0;
    bool ng = false;
    const int cols = nodes_[parts[0]].cols;
    for (Var p : parts) {
      check(nodes_[p].cols == cols, "concat_rows: column mismatch");
      rows += nodes_[p].rows;
      ng = ng || nodes_[p].needs_grad;
    }
    Var id = alloc(rows, cols, ng);
    auto& out = nodes_[id].v;
    size_t off = 0;
    for (Var p : parts) {
      const auto& np = nodes_[p];
      std::copy(np.v.begin(), np.v.end(), out.begin() + off);
      off += np.v.size();
    }
    if (ng)
      nodes_[id].back = [parts, id](Tape& t) {
        const auto& O = t.nodes_[id];
        size_t off = 0;
        for (Var p : parts) {
          auto& P = t.nodes_[p];
          if (P.needs_grad)
            for (size_t i = 0; i < P.v.size(); ++i) P.g[i] += O.g[off + i];
          off += P.v.size();
        }
      };
    return id;
  }

  Var slice_rows(Var a, int r0, int nrows) {
    const auto& na = nodes_[a];
    check(r0 >= 0 && nrows > 0 && r0 + nrows <= na.rows, "slice_rows: range out of bounds");
    Var id = alloc(nrows, na.cols, na.needs_grad);
    auto& out = nodes_[id].v;
    std::copy(na.v.begin() + static_cast<size_t>(r0) * na.cols,
              na.v.begin() + static_cast<size_t>(r0 + nrows) * na.cols, out.begin());
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, r0, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& A = t.nodes_[a];
        S* dst = A.g.data() + static_cast<size_t>(r0) * A.cols;
        for (size_t i = 0; i < O.g.size(); ++i) dst[i] += O.g[i];
      };
    return id;
  }

  Var slice_cols(Var a, int c0, int ncols) {
    const auto& na = nodes_[a];
    check(c0 >= 0 && ncols > 0 && c0 + ncols <= na.cols, "slice_cols: range out of bounds");
    Var id = alloc(na.rows, ncols, na.needs_grad);
    auto& out = nodes_[id].v;
    for (int r = 0; r < na.rows; ++r)
      for (int c = 0; c < ncols; ++c)
        out[static_cast<size_t>(r) * ncols + c] = na.v[static_cast<size_t>(r) * na.cols + c0 + c];
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, c0, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& A = t.nodes_[a];
        for (int r = 0; r < O.rows; ++r)
          for (int c = 0; c < O.cols; ++c)
            A.g[static_cast<size_t>(r) * A.cols + c0 + c] +=
                O.g[static_cast<size_t>(r) * O.cols + c];
      };
    return id;
  }

  // Embedding lookup: output column k is `table` column idx[k].
  Var gather_cols(Var table, const std::vector<int>& idx) {
    const auto& nt = nodes_[table];
    for (int i : idx) check(i >= 0 && i < nt.cols, "gather_cols: index out of range");
    Var id = alloc(nt.rows, static_cast<int>(idx.size()), nt.needs_grad);
    auto& out = nodes_[id].v;
    const int oc = static_cast<int>(idx.size());
    for (int r = 0; r < nt.rows; ++r)
      for (int c = 0; c < oc; ++c)
        out[static_cast<size_t>(r) * oc + c] = nt.v[static_cast<size_t>(r) * nt.cols + idx[c]];
    if (nodes_[id].needs_grad)
      nodes_[id].back = [table, idx, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& T = t.nodes_[table];
        for (int r = 0; r < O.rows; ++r)
          for (int c = 0; c < O.cols; ++c)
            T.g[static_cast<size_t>(r) * T.cols + idx[c]] +=
                O.g[static_cast<size_t>(r) * O.cols + c];
      };
    return id;
  }

  // gelu, tanh approximation.
  Var gelu(Var a) {
    const auto& na = nodes_[a];
    Var id = alloc(na.rows, na.cols, na.needs_grad);
    auto& out = nodes_[id].v;
    for (size_t i = 0; i < na.v.size(); ++i) {
      const S x = na.v[i];
      const S u = kGeluC * (x + kGeluA * x * x * x);
      out[i] = S(0.5) * x * (S(1) + std::tanh(u));
    }
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& A = t.nodes_[a];
        for (size_t i = 0; i < O.g.size(); ++i) {
          const S x = A.v[i];
          const S u = kGeluC * (x + kGeluA * x * x * x);
          const S th = std::tanh(u);
          const S du = kGeluC * (S(1) + S(3) * kGeluA * x * x);
          const S dy = S(0.5) * (S(1) + th) + S(0.5) * x * (S(1) - th * th) * du;
          A.g[i] += O.g[i] * dy;
        }
      };
    return id;
  }

  Var sigmoid(Var a) {
    const auto& na = nodes_[a];
    Var id = alloc(na.rows, na.cols, na.needs_grad);
    auto& out = nodes_[id].v;
    for (size_t i = 0; i < na.v.size(); ++i) {
      const S x = na.v[i];
      out[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
    }
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& A = t.nodes_[a];
        for (size_t i = 0; i < O.g.size(); ++i) {
          const S s = O.v[i];
          A.g[i] += O.g[i] * s * (S(1) - s);
        }
      };
    return id;
  }

  // Pass-through gradient inside [lo, hi], zero outside.
  Var clamp(Var a, S lo, S hi) {
    const auto& na = nodes_[a];
    Var id = alloc(na.rows, na.cols, na.needs_grad);
    auto& out = nodes_[id].v;
    for (size_t i = 0; i < na.v.size(); ++i)
      out[i] = na.v[i] < lo ? lo : (na.v[i] > hi ? hi : na.v[i]);
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, lo, hi, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& A = t.nodes_[a];
        for (size_t i = 0; i < O.g.size(); ++i)
          if (A.v[i] >= lo && A.v[i] <= hi) A.g[i] += O.g[i];
      };
    return id;
  }

  // Normalizes each column of x over its rows, then applies the learnable
  // affine (gamma, beta), both rows x 1.
  Var layernorm_cols(Var x, Var gamma, Var beta) {
    const auto& nx = nodes_[x];
    const auto& ng = nodes_[gamma];
    const auto& nb = nodes_[beta];
    check(ng.rows == nx.rows && ng.cols == 1 && nb.rows == nx.rows && nb.cols == 1,
          "layernorm_cols: affine shape mismatch");
    Var id = alloc(nx.rows, nx.cols, nx.needs_grad || ng.needs_grad || nb.needs_grad);
    const int d = nx.rows, n = nx.cols;
    auto& out = nodes_[id].v;
    for (int c = 0; c < n; ++c) {
      S mu = S(0);
      for (int r = 0; r < d; ++r) mu += nx.v[static_cast<size_t>(r) * n + c];
      mu /= S(d);
      S var = S(0);
      for (int r = 0; r < d; ++r) {
        const S dx = nx.v[static_cast<size_t>(r) * n + c] - mu;
        var += dx * dx;
      }
      var /= S(d);
      const S inv = S(1) / std::sqrt(var + S(kLayernormEps));
      for (int r = 0; r < d; ++r) {
        const S xh = (nx.v[static_cast<size_t>(r) * n + c] - mu) * inv;
        out[static_cast<size_t>(r) * n + c] = ng.v[r] * xh + nb.v[r];
      }
    }
    if (nodes_[id].needs_grad)
      nodes_[id].back = [x, gamma, beta, id](Tape& t) {
        const auto& O = t.nodes_[id];
        auto& X = t.nodes_[x];
        auto& G = t.nodes_[gamma];
        auto& B = t.nodes_[beta];
        const int d = X.rows, n = X.cols;
        for (int c = 0; c < n; ++c) {
          S mu = S(0);
          for (int r = 0; r < d; ++r) mu += X.v[static_cast<size_t>(r) * n + c];
          mu /= S(d);
          S var = S(0);
          for (int r = 0; r < d; ++r) {
            const S dx = X.v[static_cast<size_t>(r) * n + c] - mu;
            var += dx * dx;
          }
          var /= S(d);
          const S inv = S(1) / std::sqrt(var + S(kLayernormEps));
          // dxh[r] = dy[r] * gamma[r]; reduce for the mean/variance terms.
          S sum_dxh = S(0), sum_dxh_xh = S(0);
          for (int r = 0; r < d; ++r) {
            const S xh = (X.v[static_cast<size_t>(r) * n + c] - mu) * inv;
            const S dy = O.g[static_cast<size_t>(r) * n + c];
            const S dxh = dy * G.v[r];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            if (G.needs_grad) G.g[r] += dy * xh;
            if (B.needs_grad) B.g[r] += dy;
          }
          if (X.needs_grad)
            for (int r = 0; r < d; ++r) {
              const S xh = (X.v[static_cast<size_t>(r) * n + c] - mu) * inv;
              const S dxh = O.g[static_cast<size_t>(r) * n + c] * G.v[r];
              X.g[static_cast<size_t>(r) * n + c] +=
                  inv * (dxh - sum_dxh / S(d) - xh * sum_dxh_xh / S(d));
            }
        }
      };
    return id;
  }

  // Mean over all elements of (a - b)^2.
  Var mse_loss(Var a, Var b) {
    const auto& na = nodes_[a];
    const auto& nb = nodes_[b];
    check(na.rows == nb.rows && na.cols == nb.cols, "mse_loss: shape mismatch");
    Var id = alloc(1, 1, na.needs_grad || nb.needs_grad);
    S acc = S(0);
    for (size_t i = 0; i < na.v.size(); ++i) {
      const S d = na.v[i] - nb.v[i];
      acc += d * d;
    }
    const S inv = S(1) / static_cast<S>(na.v.size());
    nodes_[id].v[0] = acc * inv;
    if (!std::isfinite(static_cast<double>(nodes_[id].v[0])))
      throw NumericError("mse_loss: non-finite value");
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, b, inv, id](Tape& t) {
        const S g = t.nodes_[id].g[0];
        auto& A = t.nodes_[a];
        auto& B = t.nodes_[b];
        for (size_t i = 0; i < A.v.size(); ++i) {
          const S d = S(2) * (A.v[i] - B.v[i]) * inv * g;
          if (A.needs_grad) A.g[i] += d;
          if (B.needs_grad) B.g[i] -= d;
        }
      };
    return id;
  }

  // coeff * sum over masked positions of the binary cross-entropy between
  // probability p[k] and target y[k]; unmasked positions contribute nothing.
  Var masked_bce_loss(Var p, const std::vector<int>& targets, const std::vector<char>& mask,
                      S coeff) {
    const auto& np = nodes_[p];
    check(static_cast<size_t>(np.rows) * np.cols == targets.size() && targets.size() == mask.size(),
          "masked_bce_loss: length mismatch");
    Var id = alloc(1, 1, np.needs_grad);
    S acc = S(0);
    for (size_t i = 0; i < targets.size(); ++i) {
      if (!mask[i]) continue;
      const S pi = np.v[i];
      if (!std::isfinite(static_cast<double>(pi)))
        throw NumericError("masked_bce_loss: non-finite probability");
      check(pi > S(0) && pi < S(1), "masked_bce_loss: probability outside (0, 1)");
      acc -= targets[i] ? std::log(pi) : std::log(S(1) - pi);
    }
    nodes_[id].v[0] = acc * coeff;
    if (!std::isfinite(static_cast<double>(nodes_[id].v[0])))
      throw NumericError("masked_bce_loss: non-finite value");
    if (nodes_[id].needs_grad)
      nodes_[id].back = [p, targets, mask, coeff, id](Tape& t) {
        const S g = t.nodes_[id].g[0] * coeff;
        auto& P = t.nodes_[p];
        for (size_t i = 0; i < targets.size(); ++i) {
          if (!mask[i]) continue;
          const S pi = P.v[i];
          P.g[i] += g * (targets[i] ? -S(1) / pi : S(1) / (S(1) - pi));
        }
      };
    return id;
  }

  Var sum_all(Var a) {
    const auto& na = nodes_[a];
    Var id = alloc(1, 1, na.needs_grad);
    S acc = S(0);
    for (S x : na.v) acc += x;
    nodes_[id].v[0] = acc;
    if (nodes_[id].needs_grad)
      nodes_[id].back = [a, id](Tape& t) {
        const S g = t.nodes_[id].g[0];
        auto& A = t.nodes_[a];
        for (size_t i = 0; i < A.g.size(); ++i) A.g[i] += g;
      };
    return id;
  }

  // Accumulates d(loss)/d(node) for every node reachable from `loss`; the
  // loss must be 1x1.  Gradients of earlier backward() calls are cleared.
  void backward(Var loss) {
    check(nodes_[loss].rows == 1 && nodes_[loss].cols == 1, "backward: loss must be scalar");
    if (!nodes_[loss].needs_grad) return;  // no trainable leaves feed the loss
    for (auto& n : nodes_) {
      if (n.needs_grad)
        n.g.assign(n.v.size(), S(0));
    }
    nodes_[loss].g[0] = S(1);
    for (Var i = loss; i >= 0; --i)
      if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back(*this);
  }

  // Adds each bound parameter's gradient into sink[pid]; sink entries must
  // already be sized.  Iterates in ascending pid order.
  void export_param_grads(std::vector<std::vector<S>>& sink) const {
    for (const auto& [pid, var] : bound_) {
      const auto& n = nodes_[var];
      check(pid >= 0 && pid < static_cast<int>(sink.size()), "export_param_grads: pid out of range");
      check(sink[pid].size() == n.v.size(), "export_param_grads: sink size mismatch");
      if (n.g.empty()) continue;
      for (size_t i = 0; i < n.g.size(); ++i) sink[pid][i] += n.g[i];
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int rows = 0, cols = 0;
    std::vector<S> v, g;
    int pid = -1;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  static constexpr S kGeluC = S(0.7978845608028653558798921198687);  // sqrt(2/pi)
  static constexpr S kGeluA = S(0.044715);

  static void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  Var alloc(int rows, int cols, bool needs_grad) {
    check(rows > 0 && cols > 0, "tensor: non-positive dimension");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.v.assign(static_cast<size_t>(rows) * cols, S(0));
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  // Deque keeps references to existing nodes valid while ops append new
  // ones mid-expression.
  std::deque<Node> nodes_;
  std::map<int, Var> bound_;
};

}  // namespace ad
}  // namespace qdf
