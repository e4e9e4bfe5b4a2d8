#include "qdf/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace qdf::ckpt {
namespace {

using nlohmann::json;

json net_to_json(const nn::NetConfig& c) {
  return json{{"kind", c.kind}, {"d_m", c.d_m}, {"d_f", c.d_f},   {"n_h", c.n_h},
              {"n_dl", c.n_dl}, {"n_el", c.n_el}, {"d_t", c.d_t}, {"T", c.T}};
}

nn::NetConfig net_from_json(const json& j) {
  nn::NetConfig c;
  c.kind = j.at("kind").get<std::string>();
  c.d_m = j.at("d_m").get<int>();
  c.d_f = j.at("d_f").get<int>();
  c.n_h = j.at("n_h").get<int>();
  c.n_dl = j.at("n_dl").get<int>();
  c.n_el = j.at("n_el").get<int>();
  c.d_t = j.at("d_t").get<int>();
  c.T = j.at("T").get<int>();
  return c;
}

json mat_to_json(const std::vector<std::vector<double>>& m) { return json(m); }

json var_matrix(const nn::MaskedNet<float>& net, int id) {
  const auto& m = net.params().at(id);
  std::vector<std::vector<double>> rows(m.rows, std::vector<double>(m.cols));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) rows[r][c] = m.at(r, c);
  return mat_to_json(rows);
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const nn::ParamStore<float>& params) {
  json shapes = json::object();
  const auto ids = params.ids_sorted_by_name();
  for (int id : ids) {
    const auto& t = params.at(id);
    shapes[params.name(id)] = json::array({t.rows, t.cols});
  }
  json stages = json::array();
  for (const auto& s : meta.stages) stages.push_back(json::array({s.r1, s.r2, s.iters}));
  json header{{"version", meta.version},
              {"net", net_to_json(meta.net)},
              {"geo", json{{"n_l", meta.geo.n_l}, {"n_c", meta.geo.n_c}, {"rounds", meta.geo.rounds}}},
              {"seed", meta.seed},
              {"stages", stages},
              {"params", shapes}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << header.dump() << '\n';
  for (int id : ids) {
    const auto& t = params.at(id);
    out.write(reinterpret_cast<const char*>(t.d.data()),
              static_cast<std::streamsize>(t.d.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: missing header");
  json header = json::parse(line);

  LoadedCheckpoint ck;
  ck.meta.version = header.at("version").get<int>();
  if (ck.meta.version != 1) throw std::runtime_error("load_checkpoint: unsupported version");
  ck.meta.net = net_from_json(header.at("net"));
  const auto& g = header.at("geo");
  ck.meta.geo = nn::TokenGeometry{g.at("n_l").get<int>(), g.at("n_c").get<int>(),
                                  g.at("rounds").get<int>()};
  ck.meta.seed = header.at("seed").get<uint64_t>();
  for (const auto& s : header.at("stages"))
    ck.meta.stages.push_back(StageRecord{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<long>()});

  for (const auto& [name, shape] : header.at("params").items()) {
    const int rows = shape.at(0).get<int>();
    const int cols = shape.at(1).get<int>();
    if (rows <= 0 || cols <= 0) throw std::runtime_error("load_checkpoint: bad shape for " + name);
    ad::Mat<float> m(rows, cols);
    in.read(reinterpret_cast<char*>(m.d.data()),
            static_cast<std::streamsize>(m.d.size() * sizeof(float)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload at " + name);
    ck.tensors.emplace_back(name, std::move(m));
  }
  char extra;
  if (in.read(&extra, 1)) throw std::runtime_error("load_checkpoint: trailing bytes");
  return ck;
}

void load_into(nn::ParamStore<float>& params, const LoadedCheckpoint& ck) {
  if (static_cast<int>(ck.tensors.size()) != params.count())
    throw std::runtime_error("load_into: tensor count mismatch");
  for (const auto& [name, m] : ck.tensors) {
    const int id = params.id_of(name);  // throws on unknown name
    auto& dst = params.at(id);
    if (dst.rows != m.rows || dst.cols != m.cols)
      throw std::runtime_error("load_into: shape mismatch for " + name);
    dst.d = m.d;
  }
}

void export_attention_json(const std::string& path, const nn::MaskedNet<float>& net,
                           const codes::StructuralMatrices* st) {
  json out;
  out["geometry"] = json{{"n_l", net.geometry().n_l},
                         {"n_c", net.geometry().n_c},
                         {"rounds", net.geometry().rounds}};
  json dec = json::array();
  for (int i = 0; i < net.decoder_blocks(); ++i) {
    json heads = json::array();
    for (int id : net.decoder_block(i).A) heads.push_back(var_matrix(net, id));
    dec.push_back(json{{"heads", heads}});
  }
  out["decoder"] = dec;
  json enc = json::array();
  for (int i = 0; i < net.encoder_blocks(); ++i) {
    json heads = json::array();
    for (int id : net.encoder_block(i).A) heads.push_back(var_matrix(net, id));
    enc.push_back(json{{"heads", heads}});
  }
  out["encoder"] = enc;
  json masks = json::array();
  for (int id : net.round_mask_ids()) masks.push_back(var_matrix(net, id));
  out["round_masks"] = masks;
  if (st != nullptr) {
    out["check_overlap"] = json(st->ktilde);
    out["logical_overlap"] = json(st->j);
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("export_attention_json: cannot open " + path);
  f << out.dump(2) << '\n';
}

}  // namespace qdf::ckpt
