#include "qdf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "qdf/baselines.hpp"
#include "qdf/checkpoint.hpp"
#include "qdf/codes.hpp"
#include "qdf/eval.hpp"
#include "qdf/noise.hpp"
#include "qdf/train.hpp"

namespace qdf::cli {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

long to_long(const std::string& v, const std::string& what) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& what) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected a number, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& v, const std::string& what) {
  try {
    size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected an unsigned integer, got '" + v + "'");
  }
}

// A decoding model plus the sampler that draws from its measure.
struct ModelBundle {
  bool preset = false;
  codes::CssCode code;
  noise::DetectorErrorModel dem;
  codes::CodeModel model;
  std::unique_ptr<noise::Sampler> sampler;
  double p = 0.0;  // reporting value: preset rate or mean event prior
};

std::unique_ptr<ModelBundle> make_bundle(const std::string& code_name, const std::string& dem_path,
                                         double p) {
  if (code_name.empty() == dem_path.empty())
    throw ConfigError("exactly one of a code preset and a DEM path is required");
  auto b = std::make_unique<ModelBundle>();
  if (!code_name.empty()) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("preset models need p in (0, 1)");
    b->preset = true;
    b->code = codes::make_code(code_name);
    b->model = noise::code_capacity_model(b->code, p);
    b->sampler = std::make_unique<noise::Sampler>(b->model, b->code, p);
    b->p = p;
  } else {
    b->dem = noise::load_qdem_file(dem_path);
    b->model = noise::model_from_dem(dem_path, b->dem);
    b->sampler = std::make_unique<noise::Sampler>(b->model);
    b->p = b->model.priors.empty()
               ? 0.0
               : std::accumulate(b->model.priors.begin(), b->model.priors.end(), 0.0) /
                     b->model.priors.size();
  }
  return b;
}

// Checkpointed networks rebuilt against a model's geometry.
struct NetBundle {
  ckpt::LoadedCheckpoint ck;
  std::unique_ptr<nn::MaskedNet<float>> masked;
  std::unique_ptr<nn::ContinuousNet<float>> continuous;
};

std::unique_ptr<NetBundle> load_nets(const std::string& path, const codes::CodeModel& model) {
  if (path.empty()) throw ConfigError("this decoder needs --checkpoint");
  auto nb = std::make_unique<NetBundle>();
  nb->ck = ckpt::load_checkpoint(path);
  const auto geo = nn::geometry_of(model);
  const auto& mg = nb->ck.meta.geo;
  if (geo.n_l != mg.n_l || geo.n_c != mg.n_c || geo.rounds != mg.rounds)
    throw ConfigError("checkpoint geometry does not match the model");
  Rng init = Rng(nb->ck.meta.seed).split(train::kLaneInit);
  if (nb->ck.meta.net.kind == "masked") {
    if (geo.rounds >= 1) {
      const auto st = codes::build_structural(model);
      nb->masked = std::make_unique<nn::MaskedNet<float>>(nb->ck.meta.net, geo, &st, init);
    } else {
      nb->masked = std::make_unique<nn::MaskedNet<float>>(nb->ck.meta.net, geo, nullptr, init);
    }
    ckpt::load_into(nb->masked->params(), nb->ck);
  } else if (nb->ck.meta.net.kind == "continuous") {
    nb->continuous = std::make_unique<nn::ContinuousNet<float>>(nb->ck.meta.net, geo, init);
    ckpt::load_into(nb->continuous->params(), nb->ck);
  } else {
    throw ConfigError("checkpoint has unknown network kind '" + nb->ck.meta.net.kind + "'");
  }
  return nb;
}

void print_rows(const std::vector<eval::EvalRow>& rows) {
  std::printf("decoder,model,p,t_inf,samples,failures,ler,wilson_lo,wilson_hi,lat_mean_us\n");
  for (const auto& row : rows)
    std::printf("%s,%s,%.9g,%d,%ld,%ld,%.9g,%.9g,%.9g,%.9g\n", row.decoder.c_str(),
                row.model.c_str(), row.p, row.t_inf, row.r.samples, row.r.failures, row.r.ler,
                row.r.wilson_lo, row.r.wilson_hi, row.r.latency.mean_us);
}

struct EvalArgs {
  std::string code, dem, p_list, decoders, checkpoint, out;
  int t_inf = 0;
  int bp_iters = 100;
  double bp_scale = 0.5;
  int osd_order = 0;
  long samples = 10000;
  long latency_samples = 0;
  uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<double> ps;
  if (!a.code.empty()) {
    for (const auto& tok : split(a.p_list, ','))
      if (!tok.empty()) ps.push_back(to_double(tok, "--p"));
    if (ps.empty()) throw ConfigError("preset evaluation needs --p");
  } else {
    ps.push_back(0.0);  // DEM priors come from the file
  }
  const auto decoder_names = split(a.decoders, ',');
  if (decoder_names.empty() || decoder_names.front().empty())
    throw ConfigError("--decoder must name at least one decoder");

  std::vector<eval::EvalRow> rows;
  std::unique_ptr<NetBundle> nets;
  for (const double p : ps) {
    auto bundle = make_bundle(a.code, a.dem, p);
    const bool needs_net =
        std::any_of(decoder_names.begin(), decoder_names.end(), [](const std::string& d) {
          return d == "masked-df" || d == "continuous-df" || d == "lr";
        });
    if (needs_net && !nets) nets = load_nets(a.checkpoint, bundle->model);

    baselines::PosteriorTable posterior;
    if (std::find(decoder_names.begin(), decoder_names.end(), "mld") != decoder_names.end())
      posterior = bundle->preset ? baselines::exact_mld_depolarizing(bundle->model, bundle->code, p)
                                 : baselines::exact_mld(bundle->model);

    for (const auto& name : decoder_names) {
      eval::DecoderSpec spec;
      spec.name = name;
      spec.posterior = &posterior;
      spec.model = &bundle->model;
      spec.bp.bp.max_iters = a.bp_iters;
      spec.bp.bp.scaling = a.bp_scale;
      spec.bp.osd.order = a.osd_order;
      spec.t_inf = a.t_inf;
      if (nets) {
        spec.masked = nets->masked.get();
        spec.continuous = nets->continuous.get();
      }
      if ((name == "masked-df" || name == "lr") && (!nets || !nets->masked))
        throw ConfigError(name + " needs a masked checkpoint");
      if (name == "continuous-df" && (!nets || !nets->continuous))
        throw ConfigError("continuous-df needs a continuous checkpoint");
      const auto decode = eval::make_decoder(spec);
      eval::EvalRow row;
      row.decoder = name;
      row.model = bundle->model.name;
      row.p = bundle->preset ? p : bundle->p;
      if (name == "lr")
        row.t_inf = 1;
      else if (name == "masked-df")
        row.t_inf = a.t_inf > 0 ? a.t_inf : nets->masked->config().T;
      row.r = eval::evaluate(*bundle->sampler, decode, a.samples, a.seed, a.latency_samples);
      rows.push_back(std::move(row));
    }
  }
  print_rows(rows);
  if (!a.out.empty()) eval::write_eval_csv(a.out, rows);
  return 0;
}

struct TsweepArgs {
  std::string code, dem, checkpoint, t_list, out;
  double p = 0.0;
  long samples = 10000;
  long latency_samples = 1000;
  uint64_t seed = 1;
};

int cmd_tsweep(const TsweepArgs& a) {
  std::vector<int> ts;
  for (const auto& tok : split(a.t_list, ','))
    if (!tok.empty()) ts.push_back(static_cast<int>(to_long(tok, "--t")));
  if (ts.empty()) throw ConfigError("--t must list at least one step count");
  auto bundle = make_bundle(a.code, a.dem, a.code.empty() ? 0.0 : a.p);
  auto nets = load_nets(a.checkpoint, bundle->model);
  if (!nets->masked) throw ConfigError("tsweep needs a masked checkpoint");

  std::vector<eval::EvalRow> rows;
  for (const int t : ts) {
    eval::DecoderSpec spec;
    spec.name = "masked-df";
    spec.masked = nets->masked.get();
    spec.t_inf = t;
    const auto decode = eval::make_decoder(spec);
    eval::EvalRow row;
    row.decoder = "masked-df";
    row.model = bundle->model.name;
    row.p = bundle->p;
    row.t_inf = t;
    row.r = eval::evaluate(*bundle->sampler, decode, a.samples, a.seed, a.latency_samples);
    rows.push_back(std::move(row));
  }
  print_rows(rows);
  if (!a.out.empty()) eval::write_eval_csv(a.out, rows);
  return 0;
}

const char* const kTrainKeys[] = {"arch",       "code",        "p",           "T",
                                  "d_m",        "d_f",         "n_h",         "n_dl",
                                  "n_el",       "d_t",         "batch",       "stages",
                                  "iters",      "lr",          "seed",        "val_every",
                                  "val_samples", "val_t_inf",  "weight_decay", "reset_opt_per_stage",
                                  "out"};

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a) {
  auto kv = load_config_file(a.config);
  for (const auto& ov : a.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + ov + "'");
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
  for (const auto& [key, value] : kv) {
    (void)value;
    if (std::find_if(std::begin(kTrainKeys), std::end(kTrainKeys),
                     [&](const char* k) { return key == k; }) == std::end(kTrainKeys))
      throw ConfigError("unknown config key '" + key + "'");
  }
  auto get = [&](const char* key, const std::string& dflt) {
    const auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
  };

  const std::string arch = get("arch", "masked");
  if (arch != "masked" && arch != "continuous")
    throw ConfigError("arch must be 'masked' or 'continuous'");
  nn::NetConfig nc;
  nc.kind = arch;
  nc.d_m = static_cast<int>(to_long(get("d_m", "32"), "d_m"));
  nc.d_f = static_cast<int>(to_long(get("d_f", "64"), "d_f"));
  nc.n_h = static_cast<int>(to_long(get("n_h", "2"), "n_h"));
  nc.n_dl = static_cast<int>(to_long(get("n_dl", "2"), "n_dl"));
  nc.n_el = static_cast<int>(to_long(get("n_el", "2"), "n_el"));
  nc.d_t = static_cast<int>(to_long(get("d_t", "128"), "d_t"));
  nc.T = static_cast<int>(to_long(get("T", arch == "masked" ? "4" : "200"), "T"));

  const std::string code = get("code", "");
  std::string code_name, dem_path;
  if (code.rfind("dem:", 0) == 0)
    dem_path = code.substr(4);
  else
    code_name = code;
  const double p = kv.count("p") ? to_double(kv["p"], "p") : 0.0;
  auto bundle = make_bundle(code_name, dem_path, p);

  train::TrainConfig tc;
  tc.batch = static_cast<int>(to_long(get("batch", "64"), "batch"));
  tc.seed = to_u64(get("seed", "1"), "seed");
  tc.lr = train::LrSchedule::parse(get("lr", "constant:1e-3"));
  tc.val_every = to_long(get("val_every", "0"), "val_every");
  tc.val_samples = to_long(get("val_samples", "2000"), "val_samples");
  tc.val_t_inf = static_cast<int>(to_long(get("val_t_inf", "0"), "val_t_inf"));
  tc.opt.weight_decay = to_double(get("weight_decay", "1e-4"), "weight_decay");
  tc.reset_optimizer_per_stage = to_long(get("reset_opt_per_stage", "0"), "reset_opt_per_stage") != 0;
  tc.out_dir = get("out", "");

  const int rounds = bundle->model.rounds;
  std::string stages_text = get("stages", "");
  if (stages_text.empty()) {
    if (!kv.count("iters")) throw ConfigError("config needs 'stages' or 'iters'");
    stages_text = std::to_string(rounds) + ":" + std::to_string(rounds) + ":" + kv["iters"];
  }
  for (const auto& part : split(stages_text, ';')) {
    if (part.empty()) continue;
    const auto f = split(part, ':');
    train::Stage st;
    if (f.size() == 1) {
      st.r1 = st.r2 = rounds;
      st.iters = to_long(f[0], "stages");
    } else if (f.size() == 3) {
      st.r1 = static_cast<int>(to_long(f[0], "stages"));
      st.r2 = static_cast<int>(to_long(f[1], "stages"));
      st.iters = to_long(f[2], "stages");
    } else {
      throw ConfigError("stages: expected 'iters' or 'r1:r2:iters', got '" + part + "'");
    }
    tc.stages.push_back(st);
  }

  const auto geo = nn::geometry_of(bundle->model);
  Rng init = Rng(tc.seed).split(train::kLaneInit);
  train::TrainResult result;
  if (arch == "masked") {
    std::unique_ptr<codes::StructuralMatrices> st;
    if (geo.rounds >= 1)
      st = std::make_unique<codes::StructuralMatrices>(codes::build_structural(bundle->model));
    nn::MaskedNet<float> net(nc, geo, st.get(), init);
    result = train::train_masked(net, bundle->model, st.get(), *bundle->sampler, tc);
  } else {
    nn::ContinuousNet<float> net(nc, geo, init);
    result = train::train_continuous(net, bundle->model, *bundle->sampler, tc);
  }

  std::printf("trained %ld iterations, final loss %.6g\n", result.iterations, result.final_loss);
  if (!std::isnan(result.final_val_ler))
    std::printf("final validation ler %.6g\n", result.final_val_ler);
  for (const auto& path : result.checkpoint_paths) std::printf("checkpoint %s\n", path.c_str());
  return 0;
}

struct GenDemArgs {
  std::string code, sector = "x", out;
  int rounds = 1;
  double p_data = 0.0, p_meas = 0.0;
};

int cmd_gen_dem(const GenDemArgs& a) {
  if (a.sector != "x" && a.sector != "z") throw ConfigError("--sector must be x or z");
  const auto code = codes::make_code(a.code);
  const auto dem = noise::phenomenological_dem(code, a.sector[0], a.rounds, a.p_data, a.p_meas);
  if (a.out.empty()) {
    std::fputs(noise::write_qdem(dem).c_str(), stdout);
  } else {
    noise::save_qdem_file(dem, a.out);
    std::printf("wrote %s: %d detectors, %d observables, %zu events\n", a.out.c_str(), dem.n_s,
                dem.n_l, dem.events.size());
  }
  return 0;
}

struct ExportArgs {
  std::string checkpoint, code, dem, out;
  double p = 0.01;  // geometry only; structural matrices ignore priors
};

int cmd_export_attention(const ExportArgs& a) {
  auto bundle = make_bundle(a.code, a.dem, a.code.empty() ? 0.0 : a.p);
  auto nets = load_nets(a.checkpoint, bundle->model);
  if (!nets->masked) throw ConfigError("export-attention needs a masked checkpoint");
  const auto st = codes::build_structural(bundle->model);
  ckpt::export_attention_json(a.out, *nets->masked, &st);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"diffusion and classical decoders for quantum LDPC codes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "qdf 1.0.0");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Monte Carlo decoder benchmark");
  ev_cmd->add_option("--code", ev.code, "code preset (toy422, steane, bb72, bb144)");
  ev_cmd->add_option("--dem", ev.dem, "detector error model file");
  ev_cmd->add_option("--p", ev.p_list, "comma-separated physical error rates (presets)");
  ev_cmd->add_option("--decoder", ev.decoders,
                     "comma-separated: mld, bp-osd, masked-df, lr, continuous-df")
      ->required();
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "trained network checkpoint");
  ev_cmd->add_option("--t-inf", ev.t_inf, "masked decode steps (0 = trained T)");
  ev_cmd->add_option("--samples", ev.samples, "Monte Carlo shots per point");
  ev_cmd->add_option("--latency-samples", ev.latency_samples, "decode-only timing shots");
  ev_cmd->add_option("--seed", ev.seed, "sampling seed");
  ev_cmd->add_option("--bp-iters", ev.bp_iters, "BP iteration cap");
  ev_cmd->add_option("--bp-scale", ev.bp_scale, "min-sum normalization factor");
  ev_cmd->add_option("--osd-order", ev.osd_order, "OSD combination sweep order (0-3)");
  ev_cmd->add_option("--out", ev.out, "CSV output path");

  TsweepArgs tw;
  auto* tw_cmd = app.add_subcommand("tsweep", "sweep masked decode step counts");
  tw_cmd->add_option("--code", tw.code, "code preset");
  tw_cmd->add_option("--dem", tw.dem, "detector error model file");
  tw_cmd->add_option("--p", tw.p, "physical error rate (presets)");
  tw_cmd->add_option("--checkpoint", tw.checkpoint, "masked checkpoint")->required();
  tw_cmd->add_option("--t", tw.t_list, "comma-separated step counts")->required();
  tw_cmd->add_option("--samples", tw.samples, "Monte Carlo shots per point");
  tw_cmd->add_option("--latency-samples", tw.latency_samples, "decode-only timing shots");
  tw_cmd->add_option("--seed", tw.seed, "sampling seed");
  tw_cmd->add_option("--out", tw.out, "CSV output path");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "train a diffusion decoder");
  tr_cmd->add_option("--config", tr.config, "key = value config file")->required();
  tr_cmd->add_option("--set", tr.overrides, "override config entries (key=value)");

  GenDemArgs gd;
  auto* gd_cmd = app.add_subcommand("gen-dem", "generate a phenomenological DEM");
  gd_cmd->add_option("--code", gd.code, "code preset")->required();
  gd_cmd->add_option("--sector", gd.sector, "x or z");
  gd_cmd->add_option("--rounds", gd.rounds, "noisy measurement rounds")->required();
  gd_cmd->add_option("--p-data", gd.p_data, "data error probability per qubit per round")->required();
  gd_cmd->add_option("--p-meas", gd.p_meas, "measurement flip probability")->required();
  gd_cmd->add_option("--out", gd.out, "output path (default: stdout)");

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-attention", "dump learned attention matrices as JSON");
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "masked checkpoint")->required();
  ex_cmd->add_option("--code", ex.code, "code preset");
  ex_cmd->add_option("--dem", ex.dem, "detector error model file");
  ex_cmd->add_option("--p", ex.p, "physical rate used to instantiate the preset model");
  ex_cmd->add_option("--out", ex.out, "JSON output path")->required();

  int rc = 0;
  ev_cmd->callback([&] { rc = cmd_eval(ev); });
  tw_cmd->callback([&] { rc = cmd_tsweep(tw); });
  tr_cmd->callback([&] { rc = cmd_train(tr); });
  gd_cmd->callback([&] { rc = cmd_gen_dem(gd); });
  ex_cmd->callback([&] { rc = cmd_export_attention(ex); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return rc;
}

}  // namespace qdf::cli
