// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "retr/geometry/sampling.hpp"
#include "retr/renderer/model.hpp"

namespace retr::render {

struct SamplingConfig {
  int n_coarse = 64;
  int n_fine = 64;
  bool stratified = true;
  uint64_t seed = 0;
};

/// Differentiable per-ray outputs; tensors live on the rendering tape.
struct RenderOutputs {
  ad::Tensor color;      // [1,3] in (0,1)
  ad::Tensor depth;      // [1]
  ad::Tensor attention;  // [N], non-negative, sums to 1
  std::vector<double> t;
};

/// Plain-value view; construction re-checks the output contract
/// (non-negative attention summing to 1, depth inside [near, far]).
struct RenderResult {
  std::array<double, 3> color{0, 0, 0};
  double depth = 0;
  std::vector<double> attention;
  std::vector<double> t;
};

RenderResult to_result(const RenderOutputs& out, const geom::Ray& ray);

/// Causally masked refinement of the sample sequence (one stacked block):
/// each sample attends to the meta token and the samples in front of it,
/// then f_i <- MLP(attn_i + f_i). Outputs for indices < j are exactly
/// independent of inputs at j, in values and in gradients.
ad::Tensor occlusion_transform(ad::Tape& tape, const nn::Binding& p,
                               const OcclusionBlockParams& blk, const ad::Tensor& token,
                               const ad::Tensor& feats);

/// Single-query cross-attention of the meta token over the ray: keys from
/// the occlusion-refined features, values from the pre-occlusion fused
/// features. Per-head attention maps are averaged into the sample weights.
struct RenderTransformOut {
  ad::Tensor feature;  // [1, dim]
  ad::Tensor alpha;    // [N]
};
RenderTransformOut render_transform(ad::Tape& tape, const nn::Binding& p,
                                    const nn::MhaParams& mha, const ad::Tensor& token,
                                    const ad::Tensor& keys, const ad::Tensor& values);

/// Color head: MLP + sigmoid, components in (0,1).
ad::Tensor decode_color(ad::Tape& tape, const nn::Binding& p, const nn::MlpParams& mlp,
                        const ad::Tensor& feature);

/// Attention-weighted expected depth, sum_i alpha_i t_i (plain values).
double render_depth(const std::vector<double>& attention, const std::vector<double>& t);

/// Full per-ray pipeline for the configured renderer flavour: coarse
/// sampling, feature fusion, positional encoding, the transformer stack (or
/// the classical sigma/blend path), one optional round of attention-guided
/// fine sampling that re-runs the pipeline on the merged set, then color and
/// depth decoding.
RenderOutputs render_ray(ad::Tape& tape, const nn::Binding& p, const Model& model,
                         const ext::SceneContext& ctx, const geom::Ray& ray,
                         const SamplingConfig& scfg);

}  // namespace retr::render
