#include "qdf/noise.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qdf::noise {

void validate_dem(const DetectorErrorModel& dem) {
  if (dem.n_c <= 0 || dem.rounds < 0) throw std::invalid_argument("DEM: bad geometry");
  if (dem.n_s != dem.n_c * (dem.rounds + 1))
    throw std::invalid_argument("DEM: ns must equal nc * (rounds + 1)");
  if (dem.n_l <= 0) throw std::invalid_argument("DEM: nl must be positive");
  if (dem.events.empty()) throw std::invalid_argument("DEM: needs at least one event");
  for (const auto& ev : dem.events) {
    if (!(ev.p > 0.0 && ev.p < 1.0)) throw std::invalid_argument("DEM: event probability outside (0, 1)");
    for (int d : ev.detectors)
      if (d < 0 || d >= dem.n_s) throw std::invalid_argument("DEM: detector index out of range");
    for (int o : ev.observables)
      if (o < 0 || o >= dem.n_l) throw std::invalid_argument("DEM: observable index out of range");
  }
}

DetectorErrorModel parse_qdem(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream probe(line);
    std::string tok;
    if (probe >> tok) lines.push_back(line);
  }
  if (lines.size() < 2) throw std::invalid_argument("qdem: truncated input");

  {
    std::istringstream hdr(lines[0]);
    std::string magic;
    int version = 0;
    if (!(hdr >> magic >> version) || magic != "qdem" || version != 1)
      throw std::invalid_argument("qdem: expected 'qdem 1' header");
  }

  DetectorErrorModel dem;
  {
    std::istringstream geo(lines[1]);
    std::string kns, knl, knc, kr;
    if (!(geo >> kns >> dem.n_s >> knl >> dem.n_l >> knc >> dem.n_c >> kr >> dem.rounds) ||
        kns != "ns" || knl != "nl" || knc != "nc" || kr != "rounds")
      throw std::invalid_argument("qdem: bad geometry line");
  }

  for (size_t i = 2; i < lines.size(); ++i) {
    std::istringstream ev(lines[i]);
    std::string tag;
    ev >> tag;
    if (tag != "e") throw std::invalid_argument("qdem: expected event line, got '" + lines[i] + "'");
    DemEvent event;
    if (!(ev >> event.p)) throw std::invalid_argument("qdem: event missing probability");
    std::string ref;
    while (ev >> ref) {
      if (ref.size() < 2 || (ref[0] != 'D' && ref[0] != 'L'))
        throw std::invalid_argument("qdem: bad reference '" + ref + "'");
      int idx = 0;
      try {
        size_t used = 0;
        idx = std::stoi(ref.substr(1), &used);
        if (used != ref.size() - 1) throw std::invalid_argument("");
      } catch (...) {
        throw std::invalid_argument("qdem: bad reference '" + ref + "'");
      }
      (ref[0] == 'D' ? event.detectors : event.observables).push_back(idx);
    }
    dem.events.push_back(std::move(event));
  }
  validate_dem(dem);
  return dem;
}

std::string write_qdem(const DetectorErrorModel& dem) {
  validate_dem(dem);
  std::ostringstream os;
  os << "qdem 1\n";
  os << "ns " << dem.n_s << " nl " << dem.n_l << " nc " << dem.n_c << " rounds " << dem.rounds
     << '\n';
  char buf[64];
  for (const auto& ev : dem.events) {
    std::snprintf(buf, sizeof buf, "%.17g", ev.p);
    os << "e " << buf;
    for (int d : ev.detectors) os << " D" << d;
    for (int o : ev.observables) os << " L" << o;
    os << '\n';
  }
  return os.str();
}

DetectorErrorModel load_qdem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open DEM file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_qdem(ss.str());
}

void save_qdem_file(const DetectorErrorModel& dem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write DEM file: " + path);
  out << write_qdem(dem);
}

codes::CodeModel model_from_dem(const std::string& name, const DetectorErrorModel& dem) {
  validate_dem(dem);
  codes::CodeModel m;
  m.name = name;
  m.n_c = dem.n_c;
  m.rounds = dem.rounds;
  m.h = gf2::BitMat(dem.n_s, static_cast<int>(dem.events.size()));
  m.l = gf2::BitMat(dem.n_l, static_cast<int>(dem.events.size()));
  for (size_t j = 0; j < dem.events.size(); ++j) {
    for (int d : dem.events[j].detectors) m.h.set(d, static_cast<int>(j), true);
    for (int o : dem.events[j].observables) m.l.set(o, static_cast<int>(j), true);
    m.priors.push_back(dem.events[j].p);
  }
  codes::validate_model(m);
  return m;
}

PauliError sample_depolarizing(int n, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("sample_depolarizing: p outside [0, 1)");
  PauliError err{gf2::BitVec(n), gf2::BitVec(n)};
  for (int q = 0; q < n; ++q) {
    const double u = rng.uniform();
    if (u < p) {
      const double third = p / 3.0;
      if (u < third) {
        err.x.set(q, true);  // X
      } else if (u < 2.0 * third) {
        err.x.set(q, true);  // Y
        err.z.set(q, true);
      } else {
        err.z.set(q, true);  // Z
      }
    }
  }
  return err;
}

codes::CodeModel code_capacity_model(const codes::CssCode& code, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("code_capacity_model: p outside (0, 1)");
  codes::CodeModel m;
  m.name = code.name;
  m.rounds = 0;
  m.n_c = code.hx.rows() + code.hz.rows();
  const int n = code.n;
  m.h = gf2::BitMat(m.n_c, 2 * n);
  m.l = gf2::BitMat(2 * code.k, 2 * n);
  // Event order: Z error bits on qubits 0..n-1, then X error bits.
  for (int r = 0; r < code.hx.rows(); ++r)
    for (int q = 0; q < n; ++q)
      if (code.hx.get(r, q)) m.h.set(r, q, true);
  for (int r = 0; r < code.hz.rows(); ++r)
    for (int q = 0; q < n; ++q)
      if (code.hz.get(r, q)) m.h.set(code.hx.rows() + r, n + q, true);
  for (int r = 0; r < code.k; ++r)
    for (int q = 0; q < n; ++q) {
      if (code.lx.get(r, q)) m.l.set(r, q, true);
      if (code.lz.get(r, q)) m.l.set(code.k + r, n + q, true);
    }
  m.priors.assign(2 * n, 2.0 * p / 3.0);
  codes::validate_model(m);
  return m;
}

Sample apply_events(const codes::CodeModel& m, const gf2::BitVec& fired) {
  if (fired.size() != m.n_e()) throw std::invalid_argument("apply_events: event length mismatch");
  Sample out;
  out.e = fired;
  out.s = m.h.mul(fired);
  out.l = m.l.mul(fired);
  return out;
}

Sampler::Sampler(const codes::CodeModel& m, const codes::CssCode& code, double p)
    : model_(&m), depolarizing_(true), n_qubits_(code.n), p_(p) {
  if (m.n_e() != 2 * code.n)
    throw std::invalid_argument("Sampler: model does not match code-capacity layout");
}

Sampler::Sampler(const codes::CodeModel& m) : model_(&m) {}

Sample Sampler::draw(Rng& rng) const {
  gf2::BitVec fired(model_->n_e());
  if (depolarizing_) {
    const PauliError err = sample_depolarizing(n_qubits_, p_, rng);
    for (int q = 0; q < n_qubits_; ++q) {
      if (err.z.get(q)) fired.set(q, true);
      if (err.x.get(q)) fired.set(n_qubits_ + q, true);
    }
  } else {
    for (int j = 0; j < model_->n_e(); ++j)
      if (rng.bernoulli(model_->priors[j])) fired.set(j, true);
  }
  return apply_events(*model_, fired);
}

std::vector<Sample> generate_dataset(const Sampler& sampler, int count, uint64_t seed) {
  if (count < 0) throw std::invalid_argument("generate_dataset: negative count");
  SampleStream stream(sampler, seed);
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(stream.at(i));
  return out;
}

DetectorErrorModel phenomenological_dem(const codes::CssCode& code, char sector, int rounds,
                                        double p_data, double p_meas) {
  if (sector != 'x' && sector != 'z')
    throw std::invalid_argument("phenomenological_dem: sector must be 'x' or 'z'");
  if (rounds < 1) throw std::invalid_argument("phenomenological_dem: rounds must be >= 1");
  if (!(p_data > 0.0 && p_data < 1.0) || !(p_meas > 0.0 && p_meas < 1.0))
    throw std::invalid_argument("phenomenological_dem: probabilities outside (0, 1)");
  const gf2::BitMat& h = sector == 'x' ? code.hx : code.hz;
  const gf2::BitMat& l = sector == 'x' ? code.lx : code.lz;

  DetectorErrorModel dem;
  dem.n_c = h.rows();
  dem.rounds = rounds;
  dem.n_s = dem.n_c * (rounds + 1);
  dem.n_l = code.k;
  for (int r = 0; r < rounds; ++r) {
    for (int q = 0; q < code.n; ++q) {
      DemEvent ev;
      ev.p = p_data;
      for (int c = 0; c < h.rows(); ++c)
        if (h.get(c, q)) ev.detectors.push_back(r * dem.n_c + c);
      for (int o = 0; o < code.k; ++o)
        if (l.get(o, q)) ev.observables.push_back(o);
      dem.events.push_back(std::move(ev));
    }
    for (int c = 0; c < dem.n_c; ++c) {
      DemEvent ev;
      ev.p = p_meas;
      ev.detectors = {r * dem.n_c + c, (r + 1) * dem.n_c + c};
      dem.events.push_back(std::move(ev));
    }
  }
  validate_dem(dem);
  return dem;
}

}  // namespace qdf::noise
