#include "qdf/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "omp_capture.hpp"
#include "qdf/checkpoint.hpp"

namespace qdf::train {
namespace {

// Sub-lane offset for per-shard rng streams; keeps them disjoint from the
// per-sample lanes, which are bounded by the batch size.
constexpr uint64_t kShardLane = uint64_t{1} << 20;

int shard_lo(int batch, int w) { return static_cast<int>(static_cast<long>(batch) * w / kShards); }

std::vector<std::vector<float>> make_sink(const nn::ParamStore<float>& params) {
  std::vector<std::vector<float>> sink(params.count());
  for (int pid = 0; pid < params.count(); ++pid) sink[pid].assign(params.at(pid).size(), 0.0f);
  return sink;
}

void zero_sink(std::vector<std::vector<float>>& sink) {
  for (auto& v : sink) std::fill(v.begin(), v.end(), 0.0f);
}

// grads = sum_w coeff[w] * sinks[w], accumulated in shard order.
void merge_sinks(const std::vector<std::vector<std::vector<float>>>& sinks,
                 const std::vector<float>& coeff, std::vector<std::vector<float>>& grads) {
  for (size_t pid = 0; pid < grads.size(); ++pid) {
    auto& g = grads[pid];
    std::fill(g.begin(), g.end(), 0.0f);
    for (int w = 0; w < kShards; ++w) {
      const auto& s = sinks[w][pid];
      for (size_t i = 0; i < g.size(); ++i) g[i] += coeff[w] * s[i];
    }
  }
}

bool all_finite(double loss, const std::vector<std::vector<float>>& grads) {
  if (!std::isfinite(loss)) return false;
  for (const auto& g : grads)
    for (float x : g)
      if (!std::isfinite(x)) return false;
  return true;
}

std::string checkpoint_path(const std::string& out_dir, const char* stem) {
  return out_dir + "/" + stem + ".ckpt";
}

struct RunContext {
  ckpt::CheckpointMeta meta;
  TrainResult result;
  std::string out_dir;

  void save(const nn::ParamStore<float>& params, const char* stem) {
    if (out_dir.empty()) return;
    const std::string path = checkpoint_path(out_dir, stem);
    ckpt::save_checkpoint(path, meta, params);
    result.checkpoint_paths.push_back(path);
  }
};

void validate_common(const TrainConfig& cfg) {
  if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (cfg.stages.empty()) throw std::invalid_argument("train: no stages");
  for (const auto& s : cfg.stages)
    if (s.iters < 0) throw std::invalid_argument("train: negative iteration count");
  if (cfg.val_every < 0) throw std::invalid_argument("train: val_every must be >= 0");
}

}  // namespace

double LrSchedule::at(long it) const {
  if (it < 0) throw std::invalid_argument("LrSchedule: negative iteration");
  switch (kind) {
    case Kind::kConstant:
      return start;
    case Kind::kCosine: {
      if (it >= horizon) return end;
      const double c = 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(it) / horizon));
      return end + (start - end) * c;
    }
    case Kind::kLinear: {
      if (it >= horizon) return end;
      return start + (end - start) * static_cast<double>(it) / horizon;
    }
  }
  throw std::invalid_argument("LrSchedule: unknown kind");
}

LrSchedule LrSchedule::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  auto num = [&](size_t i) {
    size_t pos = 0;
    const double v = std::stod(parts.at(i), &pos);
    if (pos != parts[i].size()) throw std::invalid_argument("LrSchedule: bad number " + parts[i]);
    return v;
  };
  LrSchedule s;
  try {
    if (parts.size() == 2 && parts[0] == "constant") {
      s.kind = Kind::kConstant;
      s.start = s.end = num(1);
      return s;
    }
    if (parts.size() == 4 && (parts[0] == "cosine" || parts[0] == "linear")) {
      s.kind = parts[0] == "cosine" ? Kind::kCosine : Kind::kLinear;
      s.start = num(1);
      s.end = num(2);
      s.horizon = static_cast<long>(num(3));
      if (s.horizon < 1) throw std::invalid_argument("LrSchedule: horizon must be >= 1");
      return s;
    }
  } catch (const std::out_of_range&) {
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("LrSchedule: ") + e.what());
  }
  throw std::invalid_argument("LrSchedule: cannot parse '" + text + "'");
}

AdamW::AdamW(const nn::ParamStore<float>& params, const AdamWConfig& cfg) : cfg_(cfg) {
  m_.resize(params.count());
  v_.resize(params.count());
  for (int pid = 0; pid < params.count(); ++pid) {
    m_[pid].assign(params.at(pid).size(), 0.0);
    v_[pid].assign(params.at(pid).size(), 0.0);
  }
}

void AdamW::reset() {
  for (auto& m : m_) std::fill(m.begin(), m.end(), 0.0);
  for (auto& v : v_) std::fill(v.begin(), v.end(), 0.0);
  t_ = 0;
}

void AdamW::step(nn::ParamStore<float>& params, const std::vector<std::vector<float>>& grads,
                 double lr) {
  if (static_cast<int>(grads.size()) != params.count())
    throw std::invalid_argument("AdamW: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (int pid = 0; pid < params.count(); ++pid) {
    auto& p = params.at(pid).d;
    if (grads[pid].size() != p.size()) throw std::invalid_argument("AdamW: gradient size mismatch");
    auto& m = m_[pid];
    auto& v = v_[pid];
    for (size_t i = 0; i < p.size(); ++i) {
      const double g = grads[pid][i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      const double x = static_cast<double>(p[i]);
      p[i] = static_cast<float>(x - lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * x));
    }
  }
}

double masked_val_ler(const nn::MaskedNet<float>& net, const noise::Sampler& sampler, uint64_t seed,
                      long samples, int t_inf) {
  if (samples < 1) throw std::invalid_argument("masked_val_ler: samples must be >= 1");
  const int eff = std::clamp(t_inf, 1, net.geometry().n_l);
  const Rng base(seed);
  long fails = 0;
  detail::OmpErrorCapture err;
#pragma omp parallel for reduction(+ : fails) schedule(static)
  for (long i = 0; i < samples; ++i) {
    try {
      Rng r = base.split(kLaneVal).split(static_cast<uint64_t>(i));
      const auto sample = sampler.draw(r);
      if (diffusion::masked_decode(net, sample.s, eff) != sample.l) ++fails;
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow_if_set();
  return static_cast<double>(fails) / static_cast<double>(samples);
}

double continuous_val_ler(const nn::ContinuousNet<float>& net, const noise::Sampler& sampler,
                          uint64_t seed, long samples) {
  if (samples < 1) throw std::invalid_argument("continuous_val_ler: samples must be >= 1");
  const diffusion::ContinuousSchedule sch(net.config().T);
  const Rng base(seed);
  long fails = 0;
  detail::OmpErrorCapture err;
#pragma omp parallel for reduction(+ : fails) schedule(static)
  for (long i = 0; i < samples; ++i) {
    try {
      Rng r = base.split(kLaneVal).split(static_cast<uint64_t>(i));
      const auto sample = sampler.draw(r);
      if (diffusion::continuous_decode(net, sample.s, sch) != sample.l) ++fails;
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow_if_set();
  return static_cast<double>(fails) / static_cast<double>(samples);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "# qdf metrics v1\n";
  out << "iteration,loss,lr,val_ler\n";
  char buf[128];
  for (const auto& r : rows) {
    if (std::isnan(r.val_ler))
      std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,\n", r.iteration, r.loss, r.lr);
    else
      std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g\n", r.iteration, r.loss, r.lr, r.val_ler);
    out << buf;
  }
  if (!out) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

TrainResult train_masked(nn::MaskedNet<float>& net, const codes::CodeModel& model,
                         const codes::StructuralMatrices* st, const noise::Sampler& sampler,
                         const TrainConfig& cfg) {
  validate_common(cfg);
  for (const auto& s : cfg.stages)
    if (s.r1 < 0 || s.r1 > s.r2 || s.r2 > model.rounds)
      throw std::invalid_argument("train_masked: stage round range invalid");
  const nn::TokenGeometry geo = nn::geometry_of(model);
  if (geo.n_l != net.geometry().n_l || geo.n_c != net.geometry().n_c ||
      geo.rounds != net.geometry().rounds)
    throw std::invalid_argument("train_masked: model and net geometry differ");

  RunContext ctx;
  ctx.meta.net = net.config();
  ctx.meta.geo = net.geometry();
  ctx.meta.seed = cfg.seed;
  ctx.out_dir = cfg.out_dir;
  if (!ctx.out_dir.empty()) std::filesystem::create_directories(ctx.out_dir);

  AdamW opt(net.params(), cfg.opt);
  const Rng base(cfg.seed);
  std::vector<std::vector<std::vector<float>>> sinks(kShards);
  for (auto& s : sinks) s = make_sink(net.params());
  std::vector<std::vector<float>> grads = make_sink(net.params());
  std::vector<double> shard_loss(kShards, 0.0);
  std::vector<float> coeff(kShards, 1.0f / static_cast<float>(cfg.batch));

  long global_it = 0;
  const int val_t = cfg.val_t_inf > 0 ? cfg.val_t_inf : net.config().T;
  for (size_t si = 0; si < cfg.stages.size(); ++si) {
    const Stage stage = cfg.stages[si];
    if (cfg.reset_optimizer_per_stage && si > 0) opt.reset();
    for (long k = 0; k < stage.iters; ++k, ++global_it) {
      const double lr = cfg.lr.at(global_it);
      std::fill(shard_loss.begin(), shard_loss.end(), 0.0);
      detail::OmpErrorCapture err;
#pragma omp parallel for schedule(static)
      for (int w = 0; w < kShards; ++w) {
        try {
          zero_sink(sinks[w]);
          for (int b = shard_lo(cfg.batch, w); b < shard_lo(cfg.batch, w + 1); ++b) {
            Rng rr = base.split(kLaneTrain).split(static_cast<uint64_t>(global_it)).split(b);
            Rng rs = rr.split(0);
            Rng rd = rr.split(1);
            const auto sample = sampler.draw(rs);
            ad::Tape<float> tape;
            const auto loss = staged_loss_term(tape, net, model, st, sample, stage.r1, stage.r2, rd);
            shard_loss[w] += static_cast<double>(tape.scalar(loss));
            tape.backward(loss);
            tape.export_param_grads(sinks[w]);
          }
        } catch (...) {
          err.capture();
        }
      }
      if (err) {
        ctx.save(net.params(), "aborted");
        err.rethrow_if_set();
      }
      double loss = 0.0;
      for (int w = 0; w < kShards; ++w) loss += shard_loss[w];
      loss /= cfg.batch;
      merge_sinks(sinks, coeff, grads);
      if (!all_finite(loss, grads)) {
        ctx.save(net.params(), "aborted");
        throw NumericError("train_masked: non-finite loss or gradient");
      }
      opt.step(net.params(), grads, lr);
      ctx.result.metrics.push_back({global_it, loss, lr, std::nan("")});
      ctx.result.final_loss = loss;
      if (cfg.val_every > 0 && (global_it + 1) % cfg.val_every == 0) {
        const double ler = masked_val_ler(net, sampler, cfg.seed, cfg.val_samples, val_t);
        ctx.result.metrics.back().val_ler = ler;
        ctx.result.final_val_ler = ler;
      }
    }
    ctx.meta.stages.push_back({stage.r1, stage.r2, stage.iters});
    char stem[16];
    std::snprintf(stem, sizeof stem, "stage%02zu", si);
    ctx.save(net.params(), stem);
  }
  if (cfg.val_every > 0)
    ctx.result.final_val_ler = masked_val_ler(net, sampler, cfg.seed, cfg.val_samples, val_t);
  ctx.save(net.params(), "final");
  if (!ctx.out_dir.empty()) write_metrics_csv(ctx.out_dir + "/metrics.csv", ctx.result.metrics);
  ctx.result.iterations = global_it;
  return ctx.result;
}

TrainResult train_continuous(nn::ContinuousNet<float>& net, const codes::CodeModel& model,
                             const noise::Sampler& sampler, const TrainConfig& cfg) {
  validate_common(cfg);
  for (const auto& s : cfg.stages)
    if (s.r1 != 0 || s.r2 != 0)
      throw std::invalid_argument("train_continuous: stages cannot select rounds");
  const nn::TokenGeometry geo = nn::geometry_of(model);
  if (geo.n_l != net.geometry().n_l || geo.n_s() != net.geometry().n_s())
    throw std::invalid_argument("train_continuous: model and net geometry differ");

  RunContext ctx;
  ctx.meta.net = net.config();
  ctx.meta.geo = net.geometry();
  ctx.meta.seed = cfg.seed;
  ctx.out_dir = cfg.out_dir;
  if (!ctx.out_dir.empty()) std::filesystem::create_directories(ctx.out_dir);

  const diffusion::ContinuousSchedule sch(net.config().T);
  AdamW opt(net.params(), cfg.opt);
  const Rng base(cfg.seed);
  std::vector<std::vector<std::vector<float>>> sinks(kShards);
  for (auto& s : sinks) s = make_sink(net.params());
  std::vector<std::vector<float>> grads = make_sink(net.params());
  std::vector<double> shard_loss(kShards, 0.0);
  std::vector<float> coeff(kShards, 0.0f);
  for (int w = 0; w < kShards; ++w)
    coeff[w] = static_cast<float>(shard_lo(cfg.batch, w + 1) - shard_lo(cfg.batch, w)) /
               static_cast<float>(cfg.batch);

  long global_it = 0;
  for (size_t si = 0; si < cfg.stages.size(); ++si) {
    const Stage stage = cfg.stages[si];
    if (cfg.reset_optimizer_per_stage && si > 0) opt.reset();
    for (long k = 0; k < stage.iters; ++k, ++global_it) {
      const double lr = cfg.lr.at(global_it);
      std::fill(shard_loss.begin(), shard_loss.end(), 0.0);
      detail::OmpErrorCapture err;
#pragma omp parallel for schedule(static)
      for (int w = 0; w < kShards; ++w) {
        try {
          zero_sink(sinks[w]);
          const int lo = shard_lo(cfg.batch, w);
          const int hi = shard_lo(cfg.batch, w + 1);
          if (lo == hi) continue;
          std::vector<std::pair<gf2::BitVec, gf2::BitVec>> slice;
          for (int b = lo; b < hi; ++b) {
            Rng rs =
                base.split(kLaneTrain).split(static_cast<uint64_t>(global_it)).split(b).split(0);
            const auto sample = sampler.draw(rs);
            slice.emplace_back(sample.l, sample.s);
          }
          Rng rd = base.split(kLaneTrain)
                       .split(static_cast<uint64_t>(global_it))
                       .split(kShardLane + static_cast<uint64_t>(w));
          ad::Tape<float> tape;
          const auto loss = diffusion::continuous_loss_term(tape, net, slice, sch, rd);
          shard_loss[w] += static_cast<double>(tape.scalar(loss)) * (hi - lo);
          tape.backward(loss);
          tape.export_param_grads(sinks[w]);
        } catch (...) {
          err.capture();
        }
      }
      if (err) {
        ctx.save(net.params(), "aborted");
        err.rethrow_if_set();
      }
      double loss = 0.0;
      for (int w = 0; w < kShards; ++w) loss += shard_loss[w];
      loss /= cfg.batch;
      merge_sinks(sinks, coeff, grads);
      if (!all_finite(loss, grads)) {
        ctx.save(net.params(), "aborted");
        throw NumericError("train_continuous: non-finite loss or gradient");
      }
      opt.step(net.params(), grads, lr);
      ctx.result.metrics.push_back({global_it, loss, lr, std::nan("")});
      ctx.result.final_loss = loss;
      if (cfg.val_every > 0 && (global_it + 1) % cfg.val_every == 0) {
        const double ler = continuous_val_ler(net, sampler, cfg.seed, cfg.val_samples);
        ctx.result.metrics.back().val_ler = ler;
        ctx.result.final_val_ler = ler;
      }
    }
    ctx.meta.stages.push_back({stage.r1, stage.r2, stage.iters});
    char stem[16];
    std::snprintf(stem, sizeof stem, "stage%02zu", si);
    ctx.save(net.params(), stem);
  }
  if (cfg.val_every > 0)
    ctx.result.final_val_ler = continuous_val_ler(net, sampler, cfg.seed, cfg.val_samples);
  ctx.save(net.params(), "final");
  if (!ctx.out_dir.empty()) write_metrics_csv(ctx.out_dir + "/metrics.csv", ctx.result.metrics);
  ctx.result.iterations = global_it;
  return ctx.result;
}

}  // namespace qdf::train
