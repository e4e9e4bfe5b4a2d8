#include "qdf/gf2.hpp"

#include <bit>
#include <sstream>
#include <stdexcept>

namespace qdf::gf2 {

BitVec BitVec::from_bits(const std::vector<int>& bits) {
  BitVec v(static_cast<int>(bits.size()));
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) v.set(static_cast<int>(i), true);
  return v;
}

void BitVec::xor_with(const BitVec& o) {
  if (o.n_ != n_) throw std::invalid_argument("BitVec::xor_with: size mismatch");
  for (size_t i = 0; i < w_.size(); ++i) w_[i] ^= o.w_[i];
}

int BitVec::popcount() const {
  int c = 0;
  for (uint64_t w : w_) c += std::popcount(w);
  return c;
}

bool BitVec::any() const {
  for (uint64_t w : w_)
    if (w) return true;
  return false;
}

std::vector<int> BitVec::to_bits() const {
  std::vector<int> out(n_);
  for (int i = 0; i < n_; ++i) out[i] = get(i) ? 1 : 0;
  return out;
}

bool BitVec::lex_less(const BitVec& o) const {
  if (n_ != o.n_) throw std::invalid_argument("BitVec::lex_less: size mismatch");
  for (int i = 0; i < n_; ++i) {
    const bool a = get(i), b = o.get(i);
    if (a != b) return b;  // first differing bit: 0 < 1
  }
  return false;
}

BitMat BitMat::identity(int n) {
  BitMat m(n, n);
  for (int i = 0; i < n; ++i) m.set(i, i, true);
  return m;
}

BitMat BitMat::from_rows(const std::vector<std::vector<int>>& rows) {
  if (rows.empty()) return BitMat(0, 0);
  BitMat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw std::invalid_argument("BitMat::from_rows: ragged rows");
    for (size_t c = 0; c < rows[r].size(); ++c)
      if (rows[r][c]) m.set(static_cast<int>(r), static_cast<int>(c), true);
  }
  return m;
}

BitVec BitMat::row(int r) const {
  BitVec v(cols_);
  for (int wc = 0; wc < wpr_; ++wc) v.words()[wc] = w_[idx(r, wc)];
  return v;
}

void BitMat::xor_row_into(int src, int dst) {
  for (int wc = 0; wc < wpr_; ++wc) w_[idx(dst, wc)] ^= w_[idx(src, wc)];
}

BitMat BitMat::transposed() const {
  BitMat t(cols_, rows_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c)
      if (get(r, c)) t.set(c, r, true);
  return t;
}

BitMat BitMat::stacked(const BitMat& below) const {
  if (below.cols_ != cols_) throw std::invalid_argument("BitMat::stacked: column mismatch");
  BitMat out(rows_ + below.rows_, cols_);
  for (int r = 0; r < rows_; ++r)
    for (int wc = 0; wc < wpr_; ++wc) out.w_[out.idx(r, wc)] = w_[idx(r, wc)];
  for (int r = 0; r < below.rows_; ++r)
    for (int wc = 0; wc < wpr_; ++wc) out.w_[out.idx(rows_ + r, wc)] = below.w_[below.idx(r, wc)];
  return out;
}

BitVec BitMat::mul(const BitVec& x) const {
  if (x.size() != cols_) throw std::invalid_argument("BitMat::mul: dimension mismatch");
  BitVec y(rows_);
  const auto& xw = x.words();
  for (int r = 0; r < rows_; ++r) {
    uint64_t acc = 0;
    for (int wc = 0; wc < wpr_; ++wc) acc ^= w_[idx(r, wc)] & xw[wc];
    if (std::popcount(acc) & 1) y.set(r, true);
  }
  return y;
}

BitMat BitMat::mul(const BitMat& b) const {
  if (b.rows_ != cols_) throw std::invalid_argument("BitMat::mul: dimension mismatch");
  const BitMat bt = b.transposed();
  BitMat out(rows_, b.cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < b.cols_; ++c) {
      uint64_t acc = 0;
      for (int wc = 0; wc < wpr_; ++wc) acc ^= w_[idx(r, wc)] & bt.w_[bt.idx(c, wc)];
      if (std::popcount(acc) & 1) out.set(r, c, true);
    }
  return out;
}

std::vector<std::vector<int>> BitMat::int_gram(const BitMat& other) const {
  if (other.cols_ != cols_) throw std::invalid_argument("BitMat::int_gram: column mismatch");
  std::vector<std::vector<int>> g(rows_, std::vector<int>(other.rows_, 0));
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < other.rows_; ++j) {
      int acc = 0;
      for (int wc = 0; wc < wpr_; ++wc)
        acc += std::popcount(w_[idx(i, wc)] & other.w_[other.idx(j, wc)]);
      g[i][j] = acc;
    }
  return g;
}

BitMat BitMat::or_with(const BitMat& o) const {
  if (o.rows_ != rows_ || o.cols_ != cols_)
    throw std::invalid_argument("BitMat::or_with: shape mismatch");
  BitMat out = *this;
  for (size_t i = 0; i < w_.size(); ++i) out.w_[i] |= o.w_[i];
  return out;
}

int rank(const BitMat& m) {
  BitMat a = m;
  int rk = 0;
  for (int c = 0; c < a.cols() && rk < a.rows(); ++c) {
    int pivot = -1;
    for (int r = rk; r < a.rows(); ++r)
      if (a.get(r, c)) {
        pivot = r;
        break;
      }
    if (pivot < 0) continue;
    if (pivot != rk) {
      // swap rows by xor (rows are distinct here)
      a.xor_row_into(pivot, rk);
      a.xor_row_into(rk, pivot);
      a.xor_row_into(pivot, rk);
    }
    for (int r = 0; r < a.rows(); ++r)
      if (r != rk && a.get(r, c)) a.xor_row_into(rk, r);
    ++rk;
  }
  return rk;
}

SolveResult solve_with_pivots(const BitMat& m, const BitVec& s, const std::vector<int>& column_order) {
  if (s.size() != m.rows()) throw std::invalid_argument("solve_with_pivots: syndrome length mismatch");
  if (static_cast<int>(column_order.size()) != m.cols())
    throw std::invalid_argument("solve_with_pivots: column_order must be a permutation");
  std::vector<char> seen(m.cols(), 0);
  for (int c : column_order) {
    if (c < 0 || c >= m.cols() || seen[c])
      throw std::invalid_argument("solve_with_pivots: column_order must be a permutation");
    seen[c] = 1;
  }

  // Augmented elimination on [M | s].
  BitMat a = m;
  BitVec rhs = s;
  std::vector<int> pivot_col_of_row(m.rows(), -1);
  int rk = 0;
  for (int c : column_order) {
    if (rk >= a.rows()) break;
    int pivot = -1;
    for (int r = rk; r < a.rows(); ++r)
      if (a.get(r, c)) {
        pivot = r;
        break;
      }
    if (pivot < 0) continue;
    if (pivot != rk) {
      a.xor_row_into(pivot, rk);
      a.xor_row_into(rk, pivot);
      a.xor_row_into(pivot, rk);
      const bool t = rhs.get(pivot);
      rhs.set(pivot, rhs.get(rk));
      rhs.set(rk, t);
    }
    for (int r = 0; r < a.rows(); ++r)
      if (r != rk && a.get(r, c)) {
        a.xor_row_into(rk, r);
        if (rhs.get(rk)) rhs.flip(r);
      }
    pivot_col_of_row[rk] = c;
    ++rk;
  }

  for (int r = rk; r < a.rows(); ++r)
    if (rhs.get(r)) return {false, BitVec(), {}};

  SolveResult out;
  out.feasible = true;
  out.solution = BitVec(m.cols());
  for (int r = 0; r < rk; ++r) {
    out.pivot_cols.push_back(pivot_col_of_row[r]);
    if (rhs.get(r)) out.solution.set(pivot_col_of_row[r], true);
  }
  return out;
}

std::vector<BitVec> nullspace(const BitMat& m) {
  // Reduce [M^T | I] so kernel vectors appear next to zero rows.
  const BitMat mt = m.transposed();
  BitMat a = mt;
  BitMat id = BitMat::identity(mt.rows());
  int rk = 0;
  for (int c = 0; c < a.cols() && rk < a.rows(); ++c) {
    int pivot = -1;
    for (int r = rk; r < a.rows(); ++r)
      if (a.get(r, c)) {
        pivot = r;
        break;
      }
    if (pivot < 0) continue;
    if (pivot != rk) {
      a.xor_row_into(pivot, rk);
      a.xor_row_into(rk, pivot);
      a.xor_row_into(pivot, rk);
      id.xor_row_into(pivot, rk);
      id.xor_row_into(rk, pivot);
      id.xor_row_into(pivot, rk);
    }
    for (int r = 0; r < a.rows(); ++r)
      if (r != rk && a.get(r, c)) {
        a.xor_row_into(rk, r);
        id.xor_row_into(rk, r);
      }
    ++rk;
  }
  std::vector<BitVec> basis;
  for (int r = rk; r < a.rows(); ++r) basis.push_back(id.row(r));
  return basis;
}

std::string to_text(const BitMat& m) {
  std::ostringstream os;
  os << m.rows() << ' ' << m.cols() << '\n';
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) os << (m.get(r, c) ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

BitMat mat_from_text(const std::string& text) {
  std::istringstream is(text);
  int rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0)
    throw std::invalid_argument("mat_from_text: bad header");
  BitMat m(rows, cols);
  std::string line;
  for (int r = 0; r < rows; ++r) {
    if (!(is >> line) || static_cast<int>(line.size()) != cols)
      throw std::invalid_argument("mat_from_text: bad row " + std::to_string(r));
    for (int c = 0; c < cols; ++c) {
      if (line[c] == '1')
        m.set(r, c, true);
      else if (line[c] != '0')
        throw std::invalid_argument("mat_from_text: bad character in row " + std::to_string(r));
    }
  }
  return m;
}

}  // namespace qdf::gf2
