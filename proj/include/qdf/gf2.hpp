#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qdf::gf2 {

// Dense GF(2) vector packed into 64-bit words.
class BitVec {
 public:
  BitVec() = default;
  explicit BitVec(int n) : n_(n), w_((n + 63) / 64, 0) {}
  static BitVec from_bits(const std::vector<int>& bits);

  int size() const { return n_; }
  bool get(int i) const { return (w_[i >> 6] >> (i & 63)) & 1u; }
  void set(int i, bool v) {
    const uint64_t m = 1ull << (i & 63);
    if (v)
      w_[i >> 6] |= m;
    else
      w_[i >> 6] &= ~m;
  }
  void flip(int i) { w_[i >> 6] ^= 1ull << (i & 63); }

  void xor_with(const BitVec& o);
  int popcount() const;
  bool any() const;

  const std::vector<uint64_t>& words() const { return w_; }
  std::vector<uint64_t>& words() { return w_; }
  std::vector<int> to_bits() const;

  bool operator==(const BitVec& o) const { return n_ == o.n_ && w_ == o.w_; }
  bool operator!=(const BitVec& o) const { return !(*this == o); }

  // Strict lexicographic order on the bit string (index 0 most significant),
  // used for deterministic tie-breaking.
  bool lex_less(const BitVec& o) const;

 private:
  int n_ = 0;
  std::vector<uint64_t> w_;
};

// Dense GF(2) matrix, rows packed into 64-bit words.
class BitMat {
 public:
  BitMat() = default;
  BitMat(int rows, int cols)
      : rows_(rows), cols_(cols), wpr_((cols + 63) / 64), w_(static_cast<size_t>(rows) * wpr_, 0) {}
  static BitMat identity(int n);
  static BitMat from_rows(const std::vector<std::vector<int>>& rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool get(int r, int c) const { return (w_[idx(r, c >> 6)] >> (c & 63)) & 1u; }
  void set(int r, int c, bool v) {
    const uint64_t m = 1ull << (c & 63);
    if (v)
      w_[idx(r, c >> 6)] |= m;
    else
      w_[idx(r, c >> 6)] &= ~m;
  }

  BitVec row(int r) const;
  void xor_row_into(int src, int dst);
  BitMat transposed() const;

  // Vertical stack [this; below]; column counts must match.
  BitMat stacked(const BitMat& below) const;

  // y = M x over GF(2); parity of popcount(row & x) per row.
  BitVec mul(const BitVec& x) const;
  // C = A B over GF(2).
  BitMat mul(const BitMat& b) const;
  // Integer Gram product: out[i][j] = popcount(row_i & row_j of other).
  std::vector<std::vector<int>> int_gram(const BitMat& other) const;

  // Entrywise OR (used for cumulative support matrices).
  BitMat or_with(const BitMat& o) const;

  bool operator==(const BitMat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && w_ == o.w_;
  }

 private:
  size_t idx(int r, int wc) const { return static_cast<size_t>(r) * wpr_ + wc; }
  int rows_ = 0;
  int cols_ = 0;
  int wpr_ = 0;
  std::vector<uint64_t> w_;
};

int rank(const BitMat& m);

struct SolveResult {
  bool feasible = false;
  BitVec solution;              // empty when infeasible
  std::vector<int> pivot_cols;  // columns that took a pivot, elimination order
};

// Solves M e = s with Gaussian elimination that consumes candidate pivot
// columns in the given order (every column index exactly once).  The
// returned solution is supported on the pivot columns only; free columns
// stay zero.  Infeasible systems are reported, not thrown.
SolveResult solve_with_pivots(const BitMat& m, const BitVec& s, const std::vector<int>& column_order);

// Basis of the null space {x : M x = 0}, deterministic order.
std::vector<BitVec> nullspace(const BitMat& m);

// Text fixture format: first line "rows cols", then one '0'/'1' string per row.
std::string to_text(const BitMat& m);
BitMat mat_from_text(const std::string& text);

}  // namespace qdf::gf2
