#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "qdf/codes.hpp"
#include "qdf/gf2.hpp"
#include "qdf/rng.hpp"
#include "qdf/tensor.hpp"

namespace qdf::nn {

// Architecture hyperparameters shared by both decoder families.
struct NetConfig {
  std::string kind = "masked";  // "masked" or "continuous"
  int d_m = 32;   // transformer embedding width
  int d_f = 64;   // feed-forward width
  int n_h = 2;    // attention heads
  int n_dl = 2;   // decoder blocks
  int n_el = 2;   // encoder blocks (used when rounds >= 1)
  int d_t = 128;  // time-embedding width (continuous)
  int T = 4;      // diffusion steps the model is trained with
};

// Token geometry implied by the code model.
struct TokenGeometry {
  int n_l = 0;
  int n_c = 0;
  int rounds = 0;
  int n_s() const { return n_c * (rounds + 1); }
  int dec_tokens() const { return n_l + n_c; }
};

inline TokenGeometry geometry_of(const codes::CodeModel& m) {
  return TokenGeometry{m.n_l(), m.n_c, m.rounds};
}

// Named parameter tensors with stable integer ids.
template <typename S>
class ParamStore {
 public:
  int add(const std::string& name, ad::Mat<S> t) {
    for (const auto& n : names_)
      if (n == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return static_cast<int>(tensors_.size()) - 1;
  }
  int id_of(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("ParamStore: unknown name " + name);
  }
  int count() const { return static_cast<int>(tensors_.size()); }
  const std::string& name(int id) const { return names_[id]; }
  ad::Mat<S>& at(int id) { return tensors_[id]; }
  const ad::Mat<S>& at(int id) const { return tensors_[id]; }
  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }
  std::vector<int> ids_sorted_by_name() const {
    std::vector<int> ids(tensors_.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::sort(ids.begin(), ids.end(),
              [this](int a, int b) { return names_[a] < names_[b]; });
    return ids;
  }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Mat<S>> tensors_;
};

// Sinusoidal time embedding: (sin w_0 t ... sin w_{d/2-1} t, cos w_0 t ...)
// with w_k = 1000^(-2k / d_t).  d_t must be even and positive.
inline std::vector<double> time_embed(double t, int d_t) {
  if (d_t <= 0 || d_t % 2 != 0) throw std::invalid_argument("time_embed: d_t must be positive and even");
  std::vector<double> out(d_t);
  for (int k = 0; k < d_t / 2; ++k) {
    const double w = std::pow(1000.0, -2.0 * k / d_t);
    out[k] = std::sin(w * t);
    out[d_t / 2 + k] = std::cos(w * t);
  }
  return out;
}

namespace detail {

template <typename S>
void init_gaussian(ad::Mat<S>& m, Rng& rng, double std_dev) {
  for (auto& x : m.d) x = static_cast<S>(rng.gaussian() * std_dev);
}

inline std::string block_name(const char* prefix, int i, const char* field) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%02d.%s", prefix, i, field);
  return buf;
}

}  // namespace detail

// One transformer block's parameter ids.
struct BlockIds {
  int V = -1, bv = -1, U = -1, bu = -1;
  int ln1g = -1, ln1b = -1, ln2g = -1, ln2b = -1;
  int W1 = -1, b1 = -1, W2 = -1, b2 = -1;
  std::vector<int> A;  // one attention matrix per head
};

// Factored multi-head attention: x <- V x + b_v, split into heads along the
// embedding axis, each head multiplied by its trainable token-mixing matrix
// (optionally masked entrywise), restacked, then x <- U x + b_u.
template <typename S>
typename ad::Tape<S>::Var mhfa(ad::Tape<S>& t, typename ad::Tape<S>::Var x, const ParamStore<S>& ps,
                               const BlockIds& b, int n_h,
                               const typename ad::Tape<S>::Var* mask) {
  using Var = typename ad::Tape<S>::Var;
  const int d_m = ps.at(b.V).rows;
  if (d_m % n_h != 0) throw std::invalid_argument("mhfa: d_m must be divisible by n_h");
  const int d_h = d_m / n_h;
  Var v = t.add_colvec(t.matmul(t.param(ps.at(b.V), b.V), x), t.param(ps.at(b.bv), b.bv));
  std::vector<Var> parts;
  parts.reserve(n_h);
  for (int h = 0; h < n_h; ++h) {
    Var ah = t.param(ps.at(b.A[h]), b.A[h]);
    if (mask) ah = t.mul(ah, *mask);
    parts.push_back(t.matmul(t.slice_rows(v, h * d_h, d_h), ah));
  }
  Var st = t.concat_rows(parts);
  return t.add_colvec(t.matmul(t.param(ps.at(b.U), b.U), st), t.param(ps.at(b.bu), b.bu));
}

// LayerNorm(x + MHFA(x)) followed by LayerNorm(x + FF(x)).
template <typename S>
typename ad::Tape<S>::Var transformer_block(ad::Tape<S>& t, typename ad::Tape<S>::Var x,
                                            const ParamStore<S>& ps, const BlockIds& b, int n_h,
                                            const typename ad::Tape<S>::Var* mask) {
  using Var = typename ad::Tape<S>::Var;
  Var a = mhfa(t, x, ps, b, n_h, mask);
  x = t.layernorm_cols(t.add(x, a), t.param(ps.at(b.ln1g), b.ln1g), t.param(ps.at(b.ln1b), b.ln1b));
  Var h = t.add_colvec(t.matmul(t.param(ps.at(b.W1), b.W1), x), t.param(ps.at(b.b1), b.b1));
  Var f = t.add_colvec(t.matmul(t.param(ps.at(b.W2), b.W2), t.gelu(h)), t.param(ps.at(b.b2), b.b2));
  return t.layernorm_cols(t.add(x, f), t.param(ps.at(b.ln2g), b.ln2g),
                          t.param(ps.at(b.ln2b), b.ln2b));
}

inline constexpr int kMaskToken = 2;  // logical-token vocabulary {0, 1, masked}

// Transformer decoder over logical and syndrome tokens.  Code-capacity
// models (rounds = 0) embed the syndrome directly; models with rounds >= 1
// run an encoder stack per round whose attention is masked by the trainable
// per-round K matrices, and the decoder reads the final (or an
// intermediate) round summary.
template <typename S>
class MaskedNet {
 public:
  using Var = typename ad::Tape<S>::Var;

  MaskedNet(const NetConfig& cfg, const TokenGeometry& geo,
            const codes::StructuralMatrices* structural, Rng& rng)
      : cfg_(cfg), geo_(geo) {
    if (cfg.kind != "masked") throw std::invalid_argument("MaskedNet: config kind mismatch");
    if (geo.rounds >= 1 && structural == nullptr)
      throw std::invalid_argument("MaskedNet: structural matrices required when rounds >= 1");
    emb_l_ = add_gaussian("emb_l", cfg.d_m, 3, rng);
    emb_s_ = add_gaussian("emb_s", cfg.d_m, 2, rng);
    for (int i = 0; i < cfg.n_dl; ++i)
      dec_.push_back(add_block("dec", i, geo.dec_tokens(), rng));
    if (geo.rounds >= 1) {
      for (int i = 0; i < cfg.n_el; ++i) enc_.push_back(add_block("enc", i, geo.n_c, rng));
      const auto kinit = codes::init_attention_weights(*structural);
      for (int r = 0; r <= geo.rounds; ++r) {
        ad::Mat<S> k(geo.n_c, geo.n_c);
        for (int i = 0; i < geo.n_c; ++i)
          for (int j = 0; j < geo.n_c; ++j) k.at(i, j) = static_cast<S>(kinit[r][i][j]);
        char name[16];
        std::snprintf(name, sizeof name, "K%02d", r);
        kmask_.push_back(params_.add(name, std::move(k)));
      }
    }
    w0_ = add_gaussian("head.W0", 1, cfg.d_m, rng);
    b0_ = params_.add("head.b0", ad::Mat<S>(1, 1));
  }

  // Probabilities for each logical token given the partially masked word
  // l_tokens (values 0, 1, kMaskToken) and the syndrome.  For rounds >= 1,
  // uses encoder rounds 0..upto_round and decodes from that summary; pass
  // upto_round = rounds (or omit) for the final decode.
  Var forward(ad::Tape<S>& t, const std::vector<int>& l_tokens, const gf2::BitVec& s,
              int upto_round = -1) const {
    if (upto_round < 0) upto_round = geo_.rounds;
    if (upto_round > geo_.rounds) throw std::invalid_argument("MaskedNet: round out of range");
    if (static_cast<int>(l_tokens.size()) != geo_.n_l)
      throw std::invalid_argument("MaskedNet: logical token count mismatch");
    for (int v : l_tokens)
      if (v != 0 && v != 1 && v != kMaskToken)
        throw std::invalid_argument("MaskedNet: token outside vocabulary");
    if (s.size() != geo_.n_s()) throw std::invalid_argument("MaskedNet: syndrome length mismatch");

    Var el = t.gather_cols(t.param(params_.at(emb_l_), emb_l_), l_tokens);
    Var ctx = -1;
    if (geo_.rounds == 0) {
      ctx = embed_syndrome_round(t, s, 0);
    } else {
      Var m = -1;
      for (int r = 0; r <= upto_round; ++r) {
        Var es = embed_syndrome_round(t, s, r);
        Var y = (r == 0) ? es : t.add(m, es);
        Var kv = t.param(params_.at(kmask_[r]), kmask_[r]);
        for (const auto& blk : enc_) y = transformer_block(t, y, params_, blk, cfg_.n_h, &kv);
        m = y;
      }
      ctx = m;
    }
    Var x = t.concat_cols(el, ctx);
    for (const auto& blk : dec_) x = transformer_block(t, x, params_, blk, cfg_.n_h, nullptr);
    Var logits = t.add_colvec(t.matmul(t.param(params_.at(w0_), w0_), t.slice_cols(x, 0, geo_.n_l)),
                              t.param(params_.at(b0_), b0_));
    return t.clamp(t.sigmoid(logits), S(ad::kProbClamp), S(1) - S(ad::kProbClamp));
  }

  const NetConfig& config() const { return cfg_; }
  const TokenGeometry& geometry() const { return geo_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }
  int decoder_blocks() const { return static_cast<int>(dec_.size()); }
  int encoder_blocks() const { return static_cast<int>(enc_.size()); }
  const BlockIds& decoder_block(int i) const { return dec_[i]; }
  const BlockIds& encoder_block(int i) const { return enc_[i]; }
  const std::vector<int>& round_mask_ids() const { return kmask_; }

  // Closed-form parameter count for this configuration and geometry.
  static size_t expected_params(const NetConfig& cfg, const TokenGeometry& geo) {
    const size_t d = cfg.d_m, f = cfg.d_f;
    auto block = [&](size_t tokens) {
      return 2 * d * d + 2 * d                     // V, U and their biases
             + static_cast<size_t>(cfg.n_h) * tokens * tokens  // per-head mixing
             + 4 * d                               // two layernorm affines
             + d * f + f + f * d + d;              // feed-forward
    };
    size_t total = 3 * d + 2 * d;  // embeddings
    total += static_cast<size_t>(cfg.n_dl) * block(geo.dec_tokens());
    if (geo.rounds >= 1) {
      total += static_cast<size_t>(cfg.n_el) * block(geo.n_c);
      total += static_cast<size_t>(geo.rounds + 1) * geo.n_c * geo.n_c;
    }
    total += d + 1;  // head
    return total;
  }

 private:
  int add_gaussian(const std::string& name, int r, int c, Rng& rng) {
    ad::Mat<S> m(r, c);
    detail::init_gaussian(m, rng, 0.02);
    return params_.add(name, std::move(m));
  }

  BlockIds add_block(const char* prefix, int i, int tokens, Rng& rng) {
    using detail::block_name;
    BlockIds b;
    b.V = add_gaussian(block_name(prefix, i, "V"), cfg_.d_m, cfg_.d_m, rng);
    b.bv = params_.add(block_name(prefix, i, "bv"), ad::Mat<S>(cfg_.d_m, 1));
    for (int h = 0; h < cfg_.n_h; ++h) {
      char f[16];
      std::snprintf(f, sizeof f, "A%02d", h);
      b.A.push_back(add_gaussian(block_name(prefix, i, f), tokens, tokens, rng));
    }
    b.U = add_gaussian(block_name(prefix, i, "U"), cfg_.d_m, cfg_.d_m, rng);
    b.bu = params_.add(block_name(prefix, i, "bu"), ad::Mat<S>(cfg_.d_m, 1));
    ad::Mat<S> ones(cfg_.d_m, 1);
    for (auto& x : ones.d) x = S(1);
    b.ln1g = params_.add(block_name(prefix, i, "ln1.g"), ones);
    b.ln1b = params_.add(block_name(prefix, i, "ln1.b"), ad::Mat<S>(cfg_.d_m, 1));
    b.W1 = add_gaussian(block_name(prefix, i, "ff.W1"), cfg_.d_f, cfg_.d_m, rng);
    b.b1 = params_.add(block_name(prefix, i, "ff.b1"), ad::Mat<S>(cfg_.d_f, 1));
    b.W2 = add_gaussian(block_name(prefix, i, "ff.W2"), cfg_.d_m, cfg_.d_f, rng);
    b.b2 = params_.add(block_name(prefix, i, "ff.b2"), ad::Mat<S>(cfg_.d_m, 1));
    b.ln2g = params_.add(block_name(prefix, i, "ln2.g"), ones);
    b.ln2b = params_.add(block_name(prefix, i, "ln2.b"), ad::Mat<S>(cfg_.d_m, 1));
    return b;
  }

  typename ad::Tape<S>::Var embed_syndrome_round(ad::Tape<S>& t, const gf2::BitVec& s,
                                                 int r) const {
    std::vector<int> bits(geo_.n_c);
    for (int i = 0; i < geo_.n_c; ++i) bits[i] = s.get(r * geo_.n_c + i) ? 1 : 0;
    return t.gather_cols(t.param(params_.at(emb_s_), emb_s_), bits);
  }

  NetConfig cfg_;
  TokenGeometry geo_;
  ParamStore<S> params_;
  int emb_l_ = -1, emb_s_ = -1, w0_ = -1, b0_ = -1;
  std::vector<BlockIds> dec_, enc_;
  std::vector<int> kmask_;
};

// Five-layer feed-forward noise predictor for the continuous decoder.
// Rows are batch samples; the conditioning y = (emb(t), s - 0.5) is
// concatenated to the input and again before the third layer.
template <typename S>
class ContinuousNet {
 public:
  using Var = typename ad::Tape<S>::Var;

  ContinuousNet(const NetConfig& cfg, const TokenGeometry& geo, Rng& rng) : cfg_(cfg), geo_(geo) {
    if (cfg.kind != "continuous") throw std::invalid_argument("ContinuousNet: config kind mismatch");
    const int in = geo.n_l + cfg.d_t + geo.n_s();
    const int yin = cfg.d_t + geo.n_s();
    w_[0] = add_gaussian("W1", in, cfg.d_f, rng);
    w_[1] = add_gaussian("W2", cfg.d_f, cfg.d_f, rng);
    w_[2] = add_gaussian("W3", cfg.d_f + yin, cfg.d_f, rng);
    w_[3] = add_gaussian("W4", cfg.d_f, cfg.d_f, rng);
    w_[4] = add_gaussian("W5", cfg.d_f, geo.n_l, rng);
    b_[0] = params_.add("b1", ad::Mat<S>(1, cfg.d_f));
    b_[1] = params_.add("b2", ad::Mat<S>(1, cfg.d_f));
    b_[2] = params_.add("b3", ad::Mat<S>(1, cfg.d_f));
    b_[3] = params_.add("b4", ad::Mat<S>(1, cfg.d_f));
    b_[4] = params_.add("b5", ad::Mat<S>(1, geo.n_l));
  }

  // One row per sample: lt is B x n_l, s holds B syndromes, t holds B step
  // indices.  Returns the predicted noise, B x n_l.
  Var forward(ad::Tape<S>& t, Var lt, const std::vector<gf2::BitVec>& s,
              const std::vector<double>& steps) const {
    const int batch = t.rows(lt);
    if (t.cols(lt) != geo_.n_l) throw std::invalid_argument("ContinuousNet: l_t width mismatch");
    if (static_cast<int>(s.size()) != batch || static_cast<int>(steps.size()) != batch)
      throw std::invalid_argument("ContinuousNet: batch size mismatch");
    const int yin = cfg_.d_t + geo_.n_s();
    ad::Mat<S> ymat(batch, yin);
    for (int i = 0; i < batch; ++i) {
      if (s[i].size() != geo_.n_s()) throw std::invalid_argument("ContinuousNet: syndrome length mismatch");
      const auto emb = time_embed(steps[i], cfg_.d_t);
      for (int k = 0; k < cfg_.d_t; ++k) ymat.at(i, k) = static_cast<S>(emb[k]);
      for (int k = 0; k < geo_.n_s(); ++k)
        ymat.at(i, cfg_.d_t + k) = (s[i].get(k) ? S(1) : S(0)) - S(0.5);
    }
    Var y = t.constant(ymat);
    Var x = t.concat_cols(lt, y);
    x = t.gelu(layer(t, x, 0));
    x = t.gelu(layer(t, x, 1));
    x = t.concat_cols(x, y);
    x = t.gelu(layer(t, x, 2));
    x = t.gelu(layer(t, x, 3));
    Var out = layer(t, x, 4);
    for (S v : t.val(out))
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("ContinuousNet: non-finite output");
    return out;
  }

  const NetConfig& config() const { return cfg_; }
  const TokenGeometry& geometry() const { return geo_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  static size_t expected_params(const NetConfig& cfg, const TokenGeometry& geo) {
    const size_t in = geo.n_l + cfg.d_t + geo.n_s();
    const size_t yin = cfg.d_t + geo.n_s();
    const size_t f = cfg.d_f;
    return in * f + f * f + (f + yin) * f + f * f + f * geo.n_l  // weights
           + 4 * f + geo.n_l;                                    // biases
  }

 private:
  int add_gaussian(const std::string& name, int r, int c, Rng& rng) {
    ad::Mat<S> m(r, c);
    detail::init_gaussian(m, rng, 0.02);
    return params_.add(name, std::move(m));
  }
  Var layer(ad::Tape<S>& t, Var x, int i) const {
    return t.add_rowvec(t.matmul(x, t.param(params_.at(w_[i]), w_[i])),
                        t.param(params_.at(b_[i]), b_[i]));
  }

  NetConfig cfg_;
  TokenGeometry geo_;
  ParamStore<S> params_;
  int w_[5] = {-1, -1, -1, -1, -1};
  int b_[5] = {-1, -1, -1, -1, -1};
};

}  // namespace qdf::nn
