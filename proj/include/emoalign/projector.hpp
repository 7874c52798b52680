// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Projector network: per-segment input projection, a stack of post-norm
// self-attention encoder blocks over the segment sequence, mean pooling over
// segments and an output projection into the label-embedding space.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/diffmath.hpp"

namespace emoalign {

class Rng;

struct ProjectorConfig {
  std::size_t d_in = 3072;  // four concatenated 768-wide encoder layers
  std::size_t d_model = 256;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t out_dim = 384;
  double ln_eps = 1e-5;
  double dropout = 0.0;

  void validate() const;
  std::size_t head_dim() const { return d_model / heads; }
  bool operator==(const ProjectorConfig&) const = default;
};

struct AttentionBlock {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gain, ln2_bias;
};

struct ProjectorParams {
  ProjectorConfig config;
  Tensor in_w, in_b;
  std::vector<AttentionBlock> blocks;
  Tensor out_w, out_b;

  /// Every tensor with its canonical name, in canonical (checkpoint) order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> tensors();
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) rounded to float32 precision,
/// biases 0, layer-norm gains 1.
ProjectorParams init_projector(const ProjectorConfig& cfg, std::uint64_t seed);

/// Parameters bound to one tape.
struct ProjectorVars {
  struct Block {
    Var wq, bq, wk, bk, wv, bv, wo, bo, ln1_gain, ln1_bias, ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_gain, ln2_bias;
  };
  Var in_w, in_b;
  std::vector<Block> blocks;
  Var out_w, out_b;
};

/// Binds params as tape parameters; gradients land in each tensor's grad().
ProjectorVars bind_parameters(Tape& tape, ProjectorParams& params);
/// Binds params as constants for inference.
ProjectorVars bind_constants(Tape& tape, const ProjectorParams& params);

/// Records the forward pass for one sample (features T x d_in) and returns
/// the [out_dim] projection. Dropout is applied only when `dropout_rng` is
/// given and the configured rate is positive.
Var forward(Tape& tape, const ProjectorVars& vars, const ProjectorConfig& cfg, Var features,
            Rng* dropout_rng = nullptr);

/// Gradient-free forward pass.
std::vector<double> project(const ProjectorParams& params, const Tensor& features);

nlohmann::ordered_json projector_config_to_json(const ProjectorConfig& cfg);
/// Unknown keys are rejected; missing keys keep their defaults.
ProjectorConfig projector_config_from_json(const nlohmann::json& j, ProjectorConfig base = {});

// EMOCKPT1 checkpoints ---------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "EMOCKPT1";

struct Checkpoint {
  ProjectorParams params;
  nlohmann::ordered_json metadata;
};

void save_checkpoint(const ProjectorParams& params, const nlohmann::ordered_json& metadata,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace emoalign
