#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qdf/codes.hpp"
#include "qdf/nn.hpp"

namespace qdf::ckpt {

struct StageRecord {
  int r1 = 0;
  int r2 = 0;
  long iters = 0;
};

struct CheckpointMeta {
  nn::NetConfig net;
  nn::TokenGeometry geo;
  uint64_t seed = 0;
  std::vector<StageRecord> stages;
  int version = 1;
};

// File layout: one JSON header line (sorted keys, includes every tensor's
// shape), then raw float32 little-endian payloads concatenated in
// lexicographic tensor-name order.  Round-trips bit exactly.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const nn::ParamStore<float>& params);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, ad::Mat<float>>> tensors;  // name order
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies every stored tensor into the store; names and shapes must match
// exactly in both directions.
void load_into(nn::ParamStore<float>& params, const LoadedCheckpoint& ck);

// Learned attention structure as JSON: decoder and encoder per-head mixing
// matrices, the per-round syndrome masks, and (when given) the structural
// overlap matrices they were initialized from.
void export_attention_json(const std::string& path, const nn::MaskedNet<float>& net,
                           const codes::StructuralMatrices* st);

}  // namespace qdf::ckpt
