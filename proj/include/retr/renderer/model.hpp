// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "retr/extractor/extractor.hpp"
#include "retr/nn/attention.hpp"

namespace retr::render {

/// One stacked block: causally masked self-attention over {meta token,
/// samples} followed by the per-point MLP with the pre-attention residual,
/// f_i <- MLP(MHA(Q=f_i, K,V={tok, f_1..i}) + f_i).
struct OcclusionBlockParams {
  nn::MhaParams mha;
  nn::MlpParams mlp;
};

/// All learnable state for one renderer flavour. The extractor and the
/// FeatureFusion block are shared between flavours; the transformer stack
/// exists only for kRetr, the sigma/blend heads only for the baseline.
struct Model {
  ModelConfig cfg;
  nn::ParamStore store;

  ext::ExtractorParams extractor;
  ext::FusionParams fusion;

  // transformer renderer
  int meta_token = -1;  // [1, dim], the global learnable query
  std::vector<OcclusionBlockParams> occ_blocks;
  nn::MhaParams render_mha;
  nn::MlpParams color_mlp;  // dim -> 3, sigmoid applied outside

  // classical baseline
  nn::MlpParams sigma_mlp;        // dim -> 1, softplus outside
  nn::MlpParams blend_mlp;        // dim + C0 + 3 + 1 -> 1 per view

  std::string config_text() const { return cfg.serialize(); }
};

/// Deterministic construction from (config, seed).
Model build_model(const ModelConfig& cfg, uint64_t seed);

}  // namespace retr::render
