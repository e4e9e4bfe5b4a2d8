#include "qdf/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "omp_capture.hpp"

namespace qdf::eval {

std::pair<double, double> wilson_interval(long failures, long samples) {
  if (samples < 1) throw std::invalid_argument("wilson_interval: samples must be >= 1");
  if (failures < 0 || failures > samples)
    throw std::invalid_argument("wilson_interval: failures outside [0, samples]");
  const double z = 1.96;
  const double n = static_cast<double>(samples);
  const double phat = static_cast<double>(failures) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (phat + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

EvalResult evaluate(const noise::Sampler& sampler, const DecodeFn& decode, long samples,
                    uint64_t seed, long latency_samples) {
  if (samples < 1) throw std::invalid_argument("evaluate: samples must be >= 1");
  if (latency_samples < 0) throw std::invalid_argument("evaluate: negative latency_samples");
  const noise::SampleStream stream(sampler, seed);

  long failures = 0;
  detail::OmpErrorCapture err;
#pragma omp parallel for reduction(+ : failures) schedule(static)
  for (long i = 0; i < samples; ++i) {
    try {
      const auto sample = stream.at(static_cast<uint64_t>(i));
      if (decode(sample.s) != sample.l) ++failures;
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow_if_set();

  EvalResult res;
  res.samples = samples;
  res.failures = failures;
  res.ler = static_cast<double>(failures) / static_cast<double>(samples);
  std::tie(res.wilson_lo, res.wilson_hi) = wilson_interval(failures, samples);

  if (latency_samples > 0) {
    std::vector<gf2::BitVec> syndromes;
    syndromes.reserve(latency_samples);
    for (long i = 0; i < latency_samples; ++i)
      syndromes.push_back(stream.at(static_cast<uint64_t>(i)).s);
    std::vector<double> us(latency_samples);
    for (long i = 0; i < latency_samples; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile bool sink = decode(syndromes[i]).any();
      (void)sink;
      const auto t1 = std::chrono::steady_clock::now();
      us[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
    }
    double total = 0.0;
    for (double u : us) total += u;
    std::sort(us.begin(), us.end());
    res.latency.mean_us = total / static_cast<double>(latency_samples);
    res.latency.p50_us = us[static_cast<size_t>(0.50 * (latency_samples - 1))];
    res.latency.p99_us = us[static_cast<size_t>(0.99 * (latency_samples - 1))];
    res.latency.max_us = us.back();
  }
  return res;
}

DecodeFn make_decoder(const DecoderSpec& spec) {
  if (spec.name == "mld") {
    if (spec.posterior == nullptr) throw std::invalid_argument("make_decoder: mld needs a posterior");
    const auto* table = spec.posterior;
    return [table](const gf2::BitVec& s) { return baselines::mld_decode(*table, s); };
  }
  if (spec.name == "bp-osd") {
    if (spec.model == nullptr) throw std::invalid_argument("make_decoder: bp-osd needs a model");
    const auto* model = spec.model;
    const auto cfg = spec.bp;
    return [model, cfg](const gf2::BitVec& s) {
      return model->l.mul(baselines::bp_osd_decode(*model, s, cfg));
    };
  }
  if (spec.name == "masked-df" || spec.name == "lr") {
    if (spec.masked == nullptr) throw std::invalid_argument("make_decoder: " + spec.name + " needs a masked net");
    const auto* net = spec.masked;
    int t_inf = spec.name == "lr" ? 1 : spec.t_inf;
    if (t_inf <= 0) t_inf = net->config().T;
    t_inf = std::clamp(t_inf, 1, net->geometry().n_l);
    return [net, t_inf](const gf2::BitVec& s) { return diffusion::masked_decode(*net, s, t_inf); };
  }
  if (spec.name == "continuous-df") {
    if (spec.continuous == nullptr)
      throw std::invalid_argument("make_decoder: continuous-df needs a continuous net");
    const auto* net = spec.continuous;
    auto sch = std::make_shared<diffusion::ContinuousSchedule>(net->config().T);
    return [net, sch](const gf2::BitVec& s) { return diffusion::continuous_decode(*net, s, *sch); };
  }
  throw std::invalid_argument("make_decoder: unknown decoder '" + spec.name + "'");
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_eval_csv: cannot open " + path);
  out << "# qdf eval v1\n";
  out << "decoder,model,p,t_inf,samples,failures,ler,wilson_lo,wilson_hi,"
         "lat_mean_us,lat_p50_us,lat_p99_us,lat_max_us\n";
  char buf[320];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%d,%ld,%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  row.decoder.c_str(), row.model.c_str(), row.p, row.t_inf, row.r.samples,
                  row.r.failures, row.r.ler, row.r.wilson_lo, row.r.wilson_hi, row.r.latency.mean_us,
                  row.r.latency.p50_us, row.r.latency.p99_us, row.r.latency.max_us);
    out << buf;
  }
  if (!out) throw std::runtime_error("write_eval_csv: write failed for " + path);
}

}  // namespace qdf::eval
