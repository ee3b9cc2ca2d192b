// SPDX-License-Identifier: Apache-2.0
#include "retr/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "retr/nn/checkpoint.hpp"
#include "retr/util/rng.hpp"
#include "retr/util/threading.hpp"

namespace retr::harness {

namespace {

constexpr uint64_t kViewTag = 0x76696577;
constexpr uint64_t kPixelTag = 0x706978;
constexpr uint64_t kRayTag = 0x726179;

// nearest source views by camera-center distance, deterministic order
std::vector<int> pick_sources(const scenes::Dataset& ds, const std::vector<int>& pool,
                              int target, int max_views) {
  std::vector<int> rest;
  for (int v : pool) {
    if (v != target) rest.push_back(v);
  }
  if (static_cast<int>(rest.size()) > max_views) {
    geom::Vec3 tc = ds.views[target].camera.center();
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
      double da = (ds.views[a].camera.center() - tc).norm();
      double db = (ds.views[b].camera.center() - tc).norm();
      return da < db;
    });
    rest.resize(max_views);
    std::sort(rest.begin(), rest.end());
  }
  return rest;
}

void write_log(const std::string& path, const std::vector<LossRow>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "step,lr,loss,loss_color,loss_depth\n";
  char buf[256];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", row.step, row.lr, row.loss,
                  row.loss_color, row.loss_depth);
    out << buf;
  }
}

}  // namespace

TrainResult train(render::Model& model, const scenes::Dataset& dataset, const TrainConfig& cfg,
                  const std::string& out_dir) {
  if (cfg.steps < 0 || cfg.rays_per_step <= 0) {
    throw std::invalid_argument("train: steps must be >= 0, rays_per_step positive");
  }
  std::vector<int> pool = cfg.train_views;
  if (pool.empty()) {
    for (size_t v = 0; v < dataset.views.size(); ++v) pool.push_back(static_cast<int>(v));
  }
  if (pool.size() < 3) throw std::invalid_argument("train: need at least 3 training views");
  for (int v : pool) {
    if (v < 0 || v >= static_cast<int>(dataset.views.size())) {
      throw std::invalid_argument("train: view index " + std::to_string(v) + " out of range");
    }
  }

  std::filesystem::create_directories(out_dir);
  const std::string final_path = out_dir + "/checkpoint.bin";
  const std::string latest_path = out_dir + "/checkpoint_latest.bin";
  const std::string log_path = out_dir + "/loss_log.csv";

  nn::AdamState adam(model.store);
  TrainResult result;
  result.checkpoint_path = final_path;
  save_checkpoint(latest_path, model.store, model.config_text());

  const int w = dataset.width, h = dataset.height;
  for (int step = 0; step < cfg.steps; ++step) {
    double lr = nn::cosine_lr(step, cfg.steps, cfg.lr_start, cfg.lr_end);

    Rng view_rng(Rng::mix(Rng::mix(cfg.seed, kViewTag), step));
    int target = pool[view_rng.uniform_index(pool.size())];
    std::vector<int> sources = pick_sources(dataset, pool, target, cfg.max_source_views);
    const scenes::PosedView& tv = dataset.views[target];

    Rng pix_rng(Rng::mix(Rng::mix(cfg.seed, kPixelTag), step));
    std::vector<int> xs(cfg.rays_per_step), ys(cfg.rays_per_step);
    std::vector<std::array<double, 3>> gt_colors(cfg.rays_per_step);
    std::vector<double> gt_depths(cfg.rays_per_step);
    int s1 = 0;
    for (int r = 0; r < cfg.rays_per_step; ++r) {
      xs[r] = static_cast<int>(pix_rng.uniform_index(w));
      ys[r] = static_cast<int>(pix_rng.uniform_index(h));
      for (int c = 0; c < 3; ++c) gt_colors[r][c] = tv.pixel(xs[r], ys[r], c);
      gt_depths[r] = tv.depth_at(xs[r], ys[r]);
      if (gt_depths[r] > 0.0) ++s1;
    }

    // stage A: pyramids and feature volume on a shared tape
    ad::Tape ctx_tape;
    nn::Binding ctx_binding(ctx_tape, model.store);
    ext::SceneContext ctx = ext::build_scene_context(ctx_tape, ctx_binding, model.extractor,
                                                     model.cfg, dataset, sources);
    ext::SceneContext frozen = ctx.detached();

    // stage B: ray chunks, each with its own tape; fixed chunk count and
    // in-order reduction keep gradients independent of the thread budget
    const int kChunks = std::min(32, cfg.rays_per_step);
    struct ChunkAccum {
      std::vector<std::vector<double>> param_grads;
      std::vector<std::vector<double>> ctx_grads;
      double color = 0, depth = 0;
      bool finite = true;
    };
    std::vector<ChunkAccum> acc(kChunks);

    parallel_chunks(cfg.rays_per_step, kChunks, [&](int chunk, int64_t b, int64_t e) {
      ChunkAccum& a = acc[chunk];
      try {
        ad::Tape tape;
        nn::Binding binding(tape, model.store);
        ext::BoundContext bound = ext::bind_context(tape, frozen);
        std::vector<render::RenderOutputs> outs;
        std::vector<std::array<double, 3>> gc;
        std::vector<double> gd;
        render::SamplingConfig scfg{cfg.n_coarse, cfg.n_fine, true, 0};
        for (int64_t r = b; r < e; ++r) {
          scfg.seed = Rng::mix(Rng::mix(Rng::mix(cfg.seed, kRayTag), step), r);
          geom::Ray ray = geom::generate_ray(tv.camera, xs[r], ys[r], dataset.near, dataset.far);
          outs.push_back(render::render_ray(tape, binding, model, bound.ctx, ray, scfg));
          gc.push_back(gt_colors[r]);
          gd.push_back(gt_depths[r]);
        }
        LossBreakdown part =
            loss_total(tape, outs, gc, gd, cfg.alpha, cfg.rays_per_step, s1);
        a.color = part.color_term;
        a.depth = part.depth_term;
        ad::Gradients grads = tape.backward(part.total);
        binding.accumulate_grads(grads, a.param_grads);
        bound.accumulate_grads(grads, a.ctx_grads);
      } catch (const std::domain_error&) {
        a.finite = false;  // non-finite activations; reported after the join
      }
    });

    double loss_color = 0, loss_depth = 0;
    std::vector<std::vector<double>> param_grads(model.store.size());
    std::vector<std::vector<double>> ctx_grads;
    bool finite = true;
    for (const auto& a : acc) {
      finite = finite && a.finite;
      loss_color += a.color;
      loss_depth += a.depth;
      for (size_t i = 0; i < a.param_grads.size(); ++i) {
        if (a.param_grads[i].empty()) continue;
        if (param_grads[i].empty()) param_grads[i].assign(a.param_grads[i].size(), 0.0);
        for (size_t j = 0; j < a.param_grads[i].size(); ++j)
          param_grads[i][j] += a.param_grads[i][j];
      }
      if (ctx_grads.size() < a.ctx_grads.size()) ctx_grads.resize(a.ctx_grads.size());
      for (size_t i = 0; i < a.ctx_grads.size(); ++i) {
        if (a.ctx_grads[i].empty()) continue;
        if (ctx_grads[i].empty()) ctx_grads[i].assign(a.ctx_grads[i].size(), 0.0);
        for (size_t j = 0; j < a.ctx_grads[i].size(); ++j) ctx_grads[i][j] += a.ctx_grads[i][j];
      }
    }
    double loss = loss_color + cfg.alpha * loss_depth;
    if (!finite || !std::isfinite(loss)) {
      write_log(log_path, result.log);
      result.aborted_step = step;
      result.checkpoint_path = latest_path;
      return result;
    }

    // chain context gradients back through stage A
    if (!ctx_grads.empty()) {
      std::vector<std::pair<ad::Tensor, std::vector<double>>> seeds;
      if (!ctx_grads[0].empty()) seeds.emplace_back(ctx.volume, ctx_grads[0]);
      for (size_t v = 0; v < ctx.pyramids.size(); ++v) {
        if (ctx_grads.size() > v + 1 && !ctx_grads[v + 1].empty()) {
          seeds.emplace_back(ctx.pyramids[v][0].data, ctx_grads[v + 1]);
        }
      }
      if (!seeds.empty()) {
        ad::Gradients ctx_param_grads = ctx_tape.backward_seeded(seeds);
        ctx_binding.accumulate_grads(ctx_param_grads, param_grads);
      }
    }

    try {
      adam.step(model.store, param_grads, lr);
    } catch (const std::domain_error&) {
      write_log(log_path, result.log);
      result.aborted_step = step;
      result.checkpoint_path = latest_path;
      return result;
    }

    result.log.push_back(LossRow{step, lr, loss, loss_color, loss_depth});
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(latest_path, model.store, model.config_text());
    }
  }

  write_log(log_path, result.log);
  save_checkpoint(final_path, model.store, model.config_text());
  return result;
}

std::vector<double> smoothed_loss(const std::vector<LossRow>& log, int window) {
  std::vector<double> out(log.size());
  double acc = 0;
  for (size_t i = 0; i < log.size(); ++i) {
    acc += log[i].loss;
    if (i >= static_cast<size_t>(window)) acc -= log[i - window].loss;
    out[i] = acc / std::min<size_t>(i + 1, window);
  }
  return out;
}

}  // namespace retr::harness
