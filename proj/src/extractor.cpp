// SPDX-License-Identifier: Apache-2.0
#include "retr/extractor/extractor.hpp"

#include <cmath>
#include <stdexcept>

#include "retr/geometry/interp.hpp"

namespace retr::ext {

using ad::GatherIndex;
using ad::GatherTaps;
using ad::Shape;
using ad::Tensor;

namespace {

// im2col index table for a same-padded kxk conv over an HxW grid.
GatherIndex im2col_2d(int h, int w, int kernel, int stride) {
  int pad = (kernel - 1) / 2;
  int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  GatherIndex gi;
  gi.rows = static_cast<int64_t>(oh) * ow;
  gi.taps = kernel * kernel;
  gi.index.resize(gi.rows * gi.taps);
  int64_t n = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          int iy = oy * stride + ky - pad;
          int ix = ox * stride + kx - pad;
          gi.index[n++] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                              ? static_cast<int32_t>(iy * w + ix)
                              : -1;
        }
      }
    }
  }
  return gi;
}

// 7-point stencil (center + 6 face neighbors) over the R^3 voxel grid,
// zero-padded; flat layout (ix*R + iy)*R + iz.
GatherIndex stencil_3d(int r) {
  static const int offs[7][3] = {{0, 0, 0}, {-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                 {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  GatherIndex gi;
  gi.rows = static_cast<int64_t>(r) * r * r;
  gi.taps = 7;
  gi.index.resize(gi.rows * 7);
  int64_t n = 0;
  for (int x = 0; x < r; ++x) {
    for (int y = 0; y < r; ++y) {
      for (int z = 0; z < r; ++z) {
        for (const auto& o : offs) {
          int ix = x + o[0], iy = y + o[1], iz = z + o[2];
          bool ok = ix >= 0 && ix < r && iy >= 0 && iy < r && iz >= 0 && iz < r;
          gi.index[n++] = ok ? static_cast<int32_t>((ix * r + iy) * r + iz) : -1;
        }
      }
    }
  }
  return gi;
}

Tensor conv(ad::Tape& tape, const nn::Binding& p, const nn::LinearIds& ids, const Tensor& x,
            const GatherIndex& gi) {
  return tape.add(tape.matmul(tape.gather_concat(x, gi), p[ids.w]), p[ids.b]);
}

}  // namespace

ExtractorParams make_extractor(nn::ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  ExtractorParams ep;
  int in_ch = 3;
  for (int l = 0; l < cfg.levels; ++l) {
    ep.level_convs.push_back(
        nn::make_linear(store, "extractor.conv" + std::to_string(l), 9 * in_ch, cfg.channels[l],
                        rng));
    in_ch = cfg.channels[l];
  }
  int stats = 0;
  for (int c : cfg.channels) stats += 2 * c;
  ep.decoder1 = nn::make_linear(store, "extractor.dec1", stats, cfg.volume_dim, rng);
  ep.decoder2 = nn::make_linear(store, "extractor.dec2", 7 * cfg.volume_dim, cfg.volume_dim, rng);
  return ep;
}

FusionParams make_fusion(nn::ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  FusionParams fp;
  fp.input_dim = cfg.volume_dim + 2 * cfg.channels[0] + 3 + 1;
  fp.mlp = nn::make_mlp(store, "fusion", {fp.input_dim, cfg.fusion_hidden, cfg.dim}, rng,
                        /*input_norm=*/true);
  return fp;
}

ImageFeaturePyramid extract_image_features(ad::Tape& tape, const nn::Binding& p,
                                           const ExtractorParams& params, const ModelConfig& cfg,
                                           const scenes::PosedView& view) {
  int h = view.camera.height(), w = view.camera.width();
  int min_side = 4 << (cfg.levels - 1);
  if (h < min_side || w < min_side) {
    throw std::invalid_argument("extract_image_features: image " + std::to_string(w) + "x" +
                                std::to_string(h) + " too small for " +
                                std::to_string(cfg.levels) + " levels (needs >= " +
                                std::to_string(min_side) + ")");
  }
  ImageFeaturePyramid pyr;
  Tensor x({h * w, 3}, view.image);
  for (int l = 0; l < cfg.levels; ++l) {
    int stride = l == 0 ? 1 : 2;
    Tensor y = tape.relu(conv(tape, p, params.level_convs[l], x, im2col_2d(h, w, 3, stride)));
    h = (h + stride - 1) / stride;
    w = (w + stride - 1) / stride;
    pyr.push_back(FeatureMap{y, h, w});
    x = y;
  }
  return pyr;
}

SceneContext SceneContext::detached() const {
  SceneContext out = *this;
  out.volume = volume.detached();
  for (auto& pyr : out.pyramids) {
    for (auto& fm : pyr) fm.data = fm.data.detached();
  }
  for (auto& img : out.images) img = img.detached();
  return out;
}

namespace {

std::vector<geom::Vec3> voxel_centers(const geom::Bounds& bounds, int r) {
  std::vector<geom::Vec3> centers;
  centers.reserve(static_cast<size_t>(r) * r * r);
  geom::Vec3 e = bounds.extent();
  for (int x = 0; x < r; ++x) {
    for (int y = 0; y < r; ++y) {
      for (int z = 0; z < r; ++z) {
        centers.push_back({bounds.min.x + e.x * x / (r - 1), bounds.min.y + e.y * y / (r - 1),
                           bounds.min.z + e.z * z / (r - 1)});
      }
    }
  }
  return centers;
}

// Bilinear tap table over a feature level for a batch of world points.
// level_scale divides image pixel coordinates (2^level).
GatherTaps project_taps(const std::vector<geom::Vec3>& points, const geom::Camera& cam,
                        int level_h, int level_w, double level_scale,
                        std::vector<uint8_t>* valid_out) {
  GatherTaps taps;
  taps.rows = static_cast<int64_t>(points.size());
  taps.taps = 4;
  taps.index.assign(taps.rows * 4, -1);
  taps.weight.assign(taps.rows * 4, 0.0);
  if (valid_out) valid_out->assign(points.size(), 0);
  for (size_t i = 0; i < points.size(); ++i) {
    geom::Projection pr = geom::project(points[i], cam);
    if (!pr.valid) continue;
    geom::Taps4 t4 =
        geom::bilinear_taps(level_h, level_w, pr.u / level_scale, pr.v / level_scale);
    if (!t4.valid) continue;
    for (int k = 0; k < 4; ++k) {
      taps.index[i * 4 + k] = t4.index[k];
      taps.weight[i * 4 + k] = t4.weight[k];
    }
    if (valid_out) (*valid_out)[i] = 1;
  }
  return taps;
}

}  // namespace

ad::Tensor build_volume_stats(ad::Tape& tape, const ModelConfig& cfg,
                              const scenes::Dataset& dataset,
                              const std::vector<int>& source_views,
                              const std::vector<ImageFeaturePyramid>& pyramids, int volume_res) {
  auto centers = voxel_centers(dataset.bounds, volume_res);
  std::vector<Tensor> level_stats;
  for (int l = 0; l < cfg.levels; ++l) {
    std::vector<Tensor> gathered;
    std::vector<std::vector<uint8_t>> valid;
    double scale = static_cast<double>(1 << l);
    for (size_t v = 0; v < pyramids.size(); ++v) {
      const FeatureMap& fm = pyramids[v][l];
      std::vector<uint8_t> vmask;
      GatherTaps taps = project_taps(centers, dataset.views.at(source_views[v]).camera,
                                     fm.height, fm.width, scale, &vmask);
      gathered.push_back(tape.weighted_gather(fm.data, taps));
      valid.push_back(std::move(vmask));
    }
    auto [mean, var] = tape.view_stats(gathered, valid);
    level_stats.push_back(mean);
    level_stats.push_back(var);
  }
  return tape.concat(level_stats, 1);
}

SceneContext build_scene_context(ad::Tape& tape, const nn::Binding& p,
                                 const ExtractorParams& params, const ModelConfig& cfg,
                                 const scenes::Dataset& dataset,
                                 const std::vector<int>& source_views) {
  if (source_views.size() < 2) {
    throw std::invalid_argument("build_scene_context: need at least 2 source views");
  }
  SceneContext ctx;
  ctx.dataset = &dataset;
  ctx.source_views = source_views;
  ctx.bounds = dataset.bounds;
  ctx.volume_res = cfg.volume_res;

  for (int vi : source_views) {
    const auto& view = dataset.views.at(vi);
    ctx.pyramids.push_back(extract_image_features(tape, p, params, cfg, view));
    ctx.images.push_back(Tensor({view.camera.height() * view.camera.width(), 3}, view.image));
  }

  const int r = cfg.volume_res;
  Tensor stats = build_volume_stats(tape, cfg, dataset, source_views, ctx.pyramids, r);
  Tensor h = tape.relu(tape.add(tape.matmul(stats, p[params.decoder1.w]), p[params.decoder1.b]));
  ctx.volume = conv(tape, p, params.decoder2, h, stencil_3d(r));
  return ctx;
}

BoundContext bind_context(ad::Tape& tape, const SceneContext& detached_ctx) {
  BoundContext bc;
  bc.ctx = detached_ctx;
  bc.leaves.push_back(tape.leaf(detached_ctx.volume));
  bc.ctx.volume = bc.leaves.back();
  for (size_t v = 0; v < detached_ctx.pyramids.size(); ++v) {
    bc.leaves.push_back(tape.leaf(detached_ctx.pyramids[v][0].data));
    bc.ctx.pyramids[v][0].data = bc.leaves.back();
  }
  return bc;
}

void BoundContext::accumulate_grads(const ad::Gradients& grads,
                                    std::vector<std::vector<double>>& sink) const {
  if (sink.size() < leaves.size()) sink.resize(leaves.size());
  for (size_t i = 0; i < leaves.size(); ++i) {
    const auto* g = grads.find(leaves[i]);
    if (!g) continue;
    if (sink[i].empty()) sink[i].assign(g->size(), 0.0);
    for (size_t j = 0; j < g->size(); ++j) sink[i][j] += (*g)[j];
  }
}

ViewPointGathers gather_view_points(ad::Tape& tape, const SceneContext& ctx,
                                    const std::vector<geom::Vec3>& points) {
  ViewPointGathers g;
  for (size_t v = 0; v < ctx.pyramids.size(); ++v) {
    const auto& cam = ctx.dataset->views.at(ctx.source_views[v]).camera;
    const FeatureMap& fm = ctx.pyramids[v][0];
    std::vector<uint8_t> vmask;
    GatherTaps taps = project_taps(points, cam, fm.height, fm.width, 1.0, &vmask);
    g.features.push_back(tape.weighted_gather(fm.data, taps));
    g.rgbs.push_back(tape.weighted_gather(ctx.images[v], taps));
    g.valid.push_back(std::move(vmask));
  }
  return g;
}

ad::Tensor fuse_point_features(ad::Tape& tape, const nn::Binding& p, const FusionParams& fusion,
                               const ModelConfig& cfg, const SceneContext& ctx,
                               const std::vector<geom::Vec3>& points,
                               const ViewPointGathers* pre) {
  const int n = static_cast<int>(points.size());
  if (n == 0) throw std::invalid_argument("fuse_point_features: empty point list");
  const int M = static_cast<int>(ctx.pyramids.size());

  // volume features (zero outside the box)
  GatherTaps vtaps;
  vtaps.rows = n;
  vtaps.taps = 8;
  vtaps.index.assign(static_cast<size_t>(n) * 8, -1);
  vtaps.weight.assign(static_cast<size_t>(n) * 8, 0.0);
  for (int i = 0; i < n; ++i) {
    geom::Taps8 t8 = geom::trilinear_taps(ctx.volume_res, ctx.bounds.to_normalized(points[i]));
    if (!t8.valid) continue;
    for (int k = 0; k < 8; ++k) {
      vtaps.index[static_cast<size_t>(i) * 8 + k] = t8.index[k];
      vtaps.weight[static_cast<size_t>(i) * 8 + k] = t8.weight[k];
    }
  }
  Tensor vol_feat = tape.weighted_gather(ctx.volume, vtaps);

  ViewPointGathers local;
  const ViewPointGathers& g = pre ? *pre : (local = gather_view_points(tape, ctx, points));
  auto [feat_mean, feat_var] = tape.view_stats(g.features, g.valid);
  auto [rgb_mean, rgb_var] = tape.view_stats(g.rgbs, g.valid);
  (void)rgb_var;

  std::vector<double> vis(n);
  for (int i = 0; i < n; ++i) {
    int c = 0;
    for (int v = 0; v < M; ++v) c += g.valid[v][i];
    vis[i] = static_cast<double>(c) / M;
  }
  Tensor vis_col({n, 1}, std::move(vis));

  Tensor fused_in = tape.concat({vol_feat, feat_mean, feat_var, rgb_mean, vis_col}, 1);
  (void)cfg;
  return nn::mlp_forward(tape, p, fusion.mlp, fused_in);
}

}  // namespace retr::ext
