// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "retr/config.hpp"
#include "retr/geometry/camera.hpp"
#include "retr/nn/layers.hpp"
#include "retr/scenes/dataset.hpp"

namespace retr::ext {

/// Conv weights for the image pyramid (one 3x3 conv per level, level 0 at
/// stride 1, deeper levels stride 2) and the decoder-only volume 3D CNN:
/// a pointwise fuse layer, then a 7-point-stencil spatial layer.
struct ExtractorParams {
  std::vector<nn::LinearIds> level_convs;  // weight [9*Cin, Cout]
  nn::LinearIds decoder1;                  // [stats, volume_dim] pointwise
  nn::LinearIds decoder2;                  // [7*volume_dim, volume_dim]
};

/// FeatureFusion: maps concat(volume feature, per-view image-feature mean,
/// variance, projected RGB mean, visibility fraction) to the model feature.
struct FusionParams {
  nn::MlpParams mlp;
  int input_dim = 0;
};

ExtractorParams make_extractor(nn::ParamStore& store, const ModelConfig& cfg, Rng& rng);
FusionParams make_fusion(nn::ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// One level of per-view image features: tensor [H*W, C] plus its dims.
struct FeatureMap {
  ad::Tensor data;
  int height = 0, width = 0;
};

using ImageFeaturePyramid = std::vector<FeatureMap>;

/// Stride-2 conv pyramid. Level sizes follow ceil-halving; an image smaller
/// than 4 * 2^(levels-1) on either side is rejected as too small for the
/// requested level count (16 px at the default 3 levels).
ImageFeaturePyramid extract_image_features(ad::Tape& tape, const nn::Binding& p,
                                           const ExtractorParams& params,
                                           const ModelConfig& cfg,
                                           const scenes::PosedView& view);

/// Everything render_ray needs about the source views, with feature tensors
/// living on the tape that built them.
struct SceneContext {
  const scenes::Dataset* dataset = nullptr;
  std::vector<int> source_views;          // indices into dataset->views
  std::vector<ImageFeaturePyramid> pyramids;
  std::vector<ad::Tensor> images;         // per view [H*W, 3] constants
  ad::Tensor volume;                      // [R^3, volume_dim]
  geom::Bounds bounds;
  int volume_res = 0;

  /// Copy with all tensors detached from their tape, for use as constants or
  /// fresh leaves on per-ray tapes.
  SceneContext detached() const;
};

/// Pre-decoder volume statistics: projects every voxel center into every
/// view at every pyramid level, aggregates bilinear samples across views as
/// (mean, variance) with invalid views masked out, and concatenates levels.
/// Output [R^3, sum_l 2*C_l].
ad::Tensor build_volume_stats(ad::Tape& tape, const ModelConfig& cfg,
                              const scenes::Dataset& dataset,
                              const std::vector<int>& source_views,
                              const std::vector<ImageFeaturePyramid>& pyramids, int volume_res);

/// Full context: pyramids, volume statistics, and the 3D CNN decode.
SceneContext build_scene_context(ad::Tape& tape, const nn::Binding& p,
                                 const ExtractorParams& params, const ModelConfig& cfg,
                                 const scenes::Dataset& dataset,
                                 const std::vector<int>& source_views);

/// Tape leaves over the context tensors a ray batch reads (the volume and
/// each view's finest feature level), so their gradients can be chained back
/// into the context-building tape.
struct BoundContext {
  SceneContext ctx;  // volume / level-0 tensors replaced by leaves
  std::vector<ad::Tensor> leaves;  // [volume, view0.level0, view1.level0, ...]

  void accumulate_grads(const ad::Gradients& grads,
                        std::vector<std::vector<double>>& sink) const;
};

BoundContext bind_context(ad::Tape& tape, const SceneContext& detached_ctx);

/// Per-view bilinear gathers at a batch of world points: finest-level
/// features, source RGB, and the per-view visibility masks.
struct ViewPointGathers {
  std::vector<ad::Tensor> features;  // per view [N, C0]
  std::vector<ad::Tensor> rgbs;      // per view [N, 3]
  std::vector<std::vector<uint8_t>> valid;
};

ViewPointGathers gather_view_points(ad::Tape& tape, const SceneContext& ctx,
                                    const std::vector<geom::Vec3>& points);

/// Per-point fused features f^f for a batch of world points: [N, dim].
/// Points outside every view (or outside the volume) contribute zeros with
/// visibility 0; the fused input carries the visibility fraction so the MLP
/// can discount them. Pass precomputed gathers to share them with other
/// heads; otherwise they are built internally.
ad::Tensor fuse_point_features(ad::Tape& tape, const nn::Binding& p, const FusionParams& fusion,
                               const ModelConfig& cfg, const SceneContext& ctx,
                               const std::vector<geom::Vec3>& points,
                               const ViewPointGathers* pre = nullptr);

}  // namespace retr::ext
