// SPDX-License-Identifier: Apache-2.0
#include "retr/renderer/render.hpp"

#include <cmath>
#include <stdexcept>

#include "retr/renderer/cpe.hpp"
#include "retr/util/rng.hpp"

namespace retr::render {

using ad::Tensor;

RenderResult to_result(const RenderOutputs& out, const geom::Ray& ray) {
  RenderResult r;
  for (int c = 0; c < 3; ++c) r.color[c] = out.color[c];
  r.depth = out.depth.value();
  r.attention = out.attention.data();
  r.t = out.t;
  double sum = 0.0;
  for (double a : r.attention) {
    if (a < 0.0) throw std::logic_error("render_ray: negative attention weight");
    sum += a;
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::logic_error("render_ray: attention sums to " + std::to_string(sum));
  }
  if (r.depth < ray.near - 1e-9 || r.depth > ray.far + 1e-9) {
    throw std::logic_error("render_ray: depth outside [near, far]");
  }
  return r;
}

ad::Tensor occlusion_transform(ad::Tape& tape, const nn::Binding& p,
                               const OcclusionBlockParams& blk, const ad::Tensor& token,
                               const ad::Tensor& feats) {
  const int n = feats.shape()[0];
  if (n < 1) throw std::invalid_argument("occlusion_transform: empty sample list");
  Tensor keys = tape.concat({token, feats}, 0);  // [N+1, D]
  std::vector<uint8_t> mask(static_cast<size_t>(n) * (n + 1), 0);
  for (int i = 0; i < n; ++i) {
    mask[static_cast<size_t>(i) * (n + 1)] = 1;  // the meta-ray token
    for (int j = 0; j <= i; ++j) mask[static_cast<size_t>(i) * (n + 1) + 1 + j] = 1;
  }
  auto [attended, attn] = nn::mha_forward(tape, p, blk.mha, feats, keys, keys, &mask);
  (void)attn;
  return nn::mlp_forward(tape, p, blk.mlp, tape.add(attended, feats));
}

RenderTransformOut render_transform(ad::Tape& tape, const nn::Binding& p,
                                    const nn::MhaParams& mha, const ad::Tensor& token,
                                    const ad::Tensor& keys, const ad::Tensor& values) {
  const int n = keys.shape()[0];
  auto [feature, attn] = nn::mha_forward(tape, p, mha, token, keys, values);
  // average per-head maps into the sample weights (rows each sum to 1)
  Tensor alpha = tape.mean_axis(tape.reshape(attn, {mha.heads, n}), 0);
  return {feature, alpha};
}

ad::Tensor decode_color(ad::Tape& tape, const nn::Binding& p, const nn::MlpParams& mlp,
                        const ad::Tensor& feature) {
  return tape.sigmoid(nn::mlp_forward(tape, p, mlp, feature));
}

double render_depth(const std::vector<double>& attention, const std::vector<double>& t) {
  if (attention.size() != t.size()) {
    throw std::invalid_argument("render_depth: weight/depth count mismatch");
  }
  double sum = 0.0, d = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    sum += attention[i];
    d += attention[i] * t[i];
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("render_depth: weights sum to " + std::to_string(sum));
  }
  return d;
}

namespace {

// Merges fine samples into the coarse set while reusing the already fused
// coarse features: fuses only the genuinely new points and permutes rows
// into depth order with an exact-match index (merged depths are copies of
// the originals, so double equality is safe).
struct MergedFeatures {
  geom::RaySamples samples;
  Tensor fused;  // [N_merged, D]
};

MergedFeatures merge_and_fuse(ad::Tape& tape, const nn::Binding& p, const Model& model,
                              const ext::SceneContext& ctx, const geom::RaySamples& coarse,
                              const Tensor& coarse_fused, const std::vector<double>& alpha,
                              int n_fine, uint64_t seed) {
  MergedFeatures out;
  out.samples = geom::sample_fine_from_attention(coarse, alpha, n_fine, seed);

  std::vector<geom::Vec3> new_points;
  std::vector<int32_t> order;  // row into [coarse | new] per merged sample
  order.reserve(out.samples.t.size());
  for (size_t i = 0; i < out.samples.t.size(); ++i) {
    double tv = out.samples.t[i];
    int found = -1;
    for (int j = 0; j < coarse.count(); ++j) {
      if (coarse.t[j] == tv) {
        found = j;
        break;
      }
    }
    if (found >= 0) {
      order.push_back(found);
    } else {
      order.push_back(coarse.count() + static_cast<int32_t>(new_points.size()));
      new_points.push_back(out.samples.x[i]);
    }
  }
  Tensor all = coarse_fused;
  if (!new_points.empty()) {
    Tensor fresh = ext::fuse_point_features(tape, p, model.fusion, model.cfg, ctx, new_points);
    all = tape.concat({coarse_fused, fresh}, 0);
  }
  ad::GatherTaps perm;
  perm.rows = static_cast<int64_t>(order.size());
  perm.taps = 1;
  perm.index = order;
  perm.weight.assign(order.size(), 1.0);
  out.fused = tape.weighted_gather(all, perm);
  return out;
}

// transformer stack + render transform over one sample set
RenderTransformOut run_transformers(ad::Tape& tape, const nn::Binding& p, const Model& model,
                                    const Tensor& fused_pe) {
  Tensor token = p[model.meta_token];
  Tensor g = fused_pe;
  for (const auto& blk : model.occ_blocks) {
    g = occlusion_transform(tape, p, blk, token, g);
  }
  return render_transform(tape, p, model.render_mha, token, g, fused_pe);
}

RenderOutputs render_ray_retr(ad::Tape& tape, const nn::Binding& p, const Model& model,
                              const ext::SceneContext& ctx, const geom::Ray& ray,
                              const SamplingConfig& scfg) {
  geom::RaySamples samples =
      geom::sample_coarse(ray, scfg.n_coarse, scfg.stratified, Rng::mix(scfg.seed, 1));
  Tensor fused = ext::fuse_point_features(tape, p, model.fusion, model.cfg, ctx, samples.x);
  Tensor pe = cpe_tensor(samples.t, model.cfg.cpe_beta, model.cfg.dim);
  Tensor g0 = tape.add(fused, pe);
  RenderTransformOut rt = run_transformers(tape, p, model, g0);

  if (scfg.n_fine > 0) {
    MergedFeatures merged = merge_and_fuse(tape, p, model, ctx, samples, fused,
                                           rt.alpha.data(), scfg.n_fine, Rng::mix(scfg.seed, 2));
    samples = std::move(merged.samples);
    Tensor pe2 = cpe_tensor(samples.t, model.cfg.cpe_beta, model.cfg.dim);
    Tensor g1 = tape.add(merged.fused, pe2);
    rt = run_transformers(tape, p, model, g1);
  }

  RenderOutputs out;
  out.color = decode_color(tape, p, model.color_mlp, rt.feature);
  out.attention = rt.alpha;
  out.t = samples.t;
  out.depth = tape.sum(tape.mul(rt.alpha, Tensor({samples.count()}, samples.t)));
  return out;
}

// classical baseline: sigma head + per-view color blending + the
// transmittance recurrence, expressed in tensor ops so it trains the same way
struct ClassicalPass {
  Tensor color;   // [1,3]
  Tensor alpha;   // [N] normalized weights
};

ClassicalPass classical_pass(ad::Tape& tape, const nn::Binding& p, const Model& model,
                             const ext::SceneContext& ctx, const geom::RaySamples& samples) {
  const int n = samples.count();
  const int m = static_cast<int>(ctx.source_views.size());
  ext::ViewPointGathers g = ext::gather_view_points(tape, ctx, samples.x);
  Tensor fused = ext::fuse_point_features(tape, p, model.fusion, model.cfg, ctx, samples.x, &g);
  Tensor sigma = tape.softplus(nn::mlp_forward(tape, p, model.sigma_mlp, fused));  // [N,1]

  // per-view blend logits; invalid views pushed to -1e30 before the softmax
  std::vector<Tensor> logit_cols;
  for (int v = 0; v < m; ++v) {
    std::vector<double> valid_col(n), mask_off(n);
    for (int i = 0; i < n; ++i) {
      valid_col[i] = g.valid[v][i];
      mask_off[i] = g.valid[v][i] ? 0.0 : -1e30;
    }
    Tensor in = tape.concat(
        {fused, g.features[v], g.rgbs[v], Tensor({n, 1}, valid_col)}, 1);
    Tensor logit = nn::mlp_forward(tape, p, model.blend_mlp, in);
    logit_cols.push_back(tape.add(logit, Tensor({n, 1}, mask_off)));
  }
  Tensor weights = tape.softmax(tape.concat(logit_cols, 1), 1);  // [N, M]
  Tensor point_color = Tensor::zeros({n, 3});
  for (int v = 0; v < m; ++v) {
    Tensor w_col = tape.broadcast_to(tape.slice(weights, 1, v, 1), {n, 3});
    point_color = tape.add(point_color, tape.mul(w_col, g.rgbs[v]));
  }

  // w_i = exp(-prefix) (1 - exp(-sigma_i)) via a strict lower-triangular matmul
  std::vector<double> lower(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) lower[static_cast<size_t>(i) * n + j] = 1.0;
  Tensor prefix = tape.matmul(Tensor({n, n}, lower), sigma);            // [N,1]
  Tensor transmittance = tape.exp(tape.mul(prefix, -1.0));
  Tensor opacity = tape.sub(Tensor::full({n, 1}, 1.0), tape.exp(tape.mul(sigma, -1.0)));
  Tensor w = tape.mul(transmittance, opacity);                          // [N,1]

  ClassicalPass out;
  out.color = tape.matmul(tape.transpose(w), point_color);              // [1,3]
  double wsum = 0.0;
  for (int i = 0; i < n; ++i) wsum += w[i];
  if (wsum > 1e-12) {
    out.alpha = tape.reshape(tape.div(w, tape.sum(w)), {n});
  } else {
    // free space everywhere; fall back to a uniform distribution
    out.alpha = Tensor::full({n}, 1.0 / n);
  }
  return out;
}

RenderOutputs render_ray_classical(ad::Tape& tape, const nn::Binding& p, const Model& model,
                                   const ext::SceneContext& ctx, const geom::Ray& ray,
                                   const SamplingConfig& scfg) {
  geom::RaySamples samples =
      geom::sample_coarse(ray, scfg.n_coarse, scfg.stratified, Rng::mix(scfg.seed, 1));
  ClassicalPass pass = classical_pass(tape, p, model, ctx, samples);

  if (scfg.n_fine > 0) {
    samples = geom::sample_fine_from_attention(samples, pass.alpha.data(), scfg.n_fine,
                                               Rng::mix(scfg.seed, 2));
    pass = classical_pass(tape, p, model, ctx, samples);
  }

  RenderOutputs out;
  // the blended color is already a convex combination of source colors in
  // [0,1]; clamp-free
  out.color = pass.color;
  out.attention = pass.alpha;
  out.t = samples.t;
  out.depth = tape.sum(tape.mul(pass.alpha, Tensor({samples.count()}, samples.t)));
  return out;
}

}  // namespace

RenderOutputs render_ray(ad::Tape& tape, const nn::Binding& p, const Model& model,
                         const ext::SceneContext& ctx, const geom::Ray& ray,
                         const SamplingConfig& scfg) {
  if (model.cfg.renderer == RendererKind::kRetr) {
    return render_ray_retr(tape, p, model, ctx, ray, scfg);
  }
  return render_ray_classical(tape, p, model, ctx, ray, scfg);
}

}  // namespace retr::render
