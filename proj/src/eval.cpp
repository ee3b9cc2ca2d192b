// SPDX-License-Identifier: Apache-2.0
#include "retr/harness/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "retr/util/rng.hpp"
#include "retr/util/threading.hpp"

namespace retr::harness {

DepthEval eval_depth(const std::vector<double>& pred, const std::vector<double>& gt,
                     double scene_extent) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("eval_depth: prediction/ground-truth size mismatch");
  }
  DepthEval ev;
  double err_sum = 0;
  int within[3] = {0, 0, 0};
  const double tau[3] = {0.01 * scene_extent, 0.02 * scene_extent, 0.04 * scene_extent};
  for (size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] <= 0.0) continue;
    ++ev.valid_pixels;
    double e = std::fabs(pred[i] - gt[i]);
    err_sum += e;
    for (int k = 0; k < 3; ++k) {
      if (e < tau[k]) ++within[k];
    }
  }
  if (ev.valid_pixels == 0) return ev;  // stays marked empty
  ev.empty = false;
  ev.mae = err_sum / ev.valid_pixels;
  ev.acc_1pct = 100.0 * within[0] / ev.valid_pixels;
  ev.acc_2pct = 100.0 * within[1] / ev.valid_pixels;
  ev.acc_4pct = 100.0 * within[2] / ev.valid_pixels;
  return ev;
}

double attention_kurtosis(const std::vector<double>& attention, const std::vector<double>& t) {
  if (attention.size() != t.size() || attention.empty()) {
    throw std::invalid_argument("attention_kurtosis: weight/depth count mismatch");
  }
  double sum = 0;
  for (double a : attention) sum += a;
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("attention_kurtosis: weights sum to " + std::to_string(sum));
  }
  double mu = 0;
  for (size_t i = 0; i < t.size(); ++i) mu += attention[i] * t[i];
  double m2 = 0, m4 = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    double d = t[i] - mu;
    m2 += attention[i] * d * d;
    m4 += attention[i] * d * d * d * d;
  }
  if (m2 == 0.0) return std::numeric_limits<double>::infinity();
  return m4 / (m2 * m2) - 3.0;
}

std::vector<geom::Vec3> fuse_point_cloud(const std::vector<std::vector<double>>& depth_maps,
                                         const std::vector<geom::Camera>& cameras,
                                         const geom::Bounds& bounds, double near, double far) {
  if (depth_maps.size() != cameras.size()) {
    throw std::invalid_argument("fuse_point_cloud: depth map / camera count mismatch");
  }
  std::vector<geom::Vec3> points;
  for (size_t v = 0; v < cameras.size(); ++v) {
    const auto& cam = cameras[v];
    if (depth_maps[v].size() != static_cast<size_t>(cam.width()) * cam.height()) {
      throw std::invalid_argument("fuse_point_cloud: depth map size mismatch for view " +
                                  std::to_string(v));
    }
    for (int y = 0; y < cam.height(); ++y) {
      for (int x = 0; x < cam.width(); ++x) {
        double d = depth_maps[v][static_cast<size_t>(y) * cam.width() + x];
        if (d <= 0.0) continue;
        geom::Vec3 p = geom::generate_ray(cam, x, y, near, far).at(d);
        if (bounds.contains(p)) points.push_back(p);
      }
    }
  }
  return points;
}

namespace {

// Exact nearest-neighbor distances via a uniform grid with expanding-ring
// search: a point in a cell at Chebyshev ring k is at least (k-1)*h away, so
// the scan can stop once best <= (k-1)*h.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<geom::Vec3>& pts) : pts_(pts) {
    lo_ = pts[0];
    geom::Vec3 hi = pts[0];
    for (const auto& p : pts) {
      lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y), std::min(lo_.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    geom::Vec3 span = hi - lo_;
    double max_span = std::max({span.x, span.y, span.z, 1e-9});
    h_ = max_span / 32.0;
    cell_min_ = cell_max_ = cell_of(pts[0]);
    for (size_t i = 0; i < pts.size(); ++i) {
      auto c = cell_of(pts[i]);
      for (int a = 0; a < 3; ++a) {
        cell_min_[a] = std::min(cell_min_[a], c[a]);
        cell_max_[a] = std::max(cell_max_[a], c[a]);
      }
      cells_[key(c)].push_back(i);
    }
  }

  double nearest(const geom::Vec3& q) const {
    auto c = cell_of(q);
    // last ring that can contain any point of the cloud
    int64_t cap = 0;
    for (int a = 0; a < 3; ++a) {
      cap = std::max(cap, std::max(c[a] - cell_min_[a], cell_max_[a] - c[a]));
    }
    double best = std::numeric_limits<double>::infinity();
    for (int64_t ring = 0; ring <= cap; ++ring) {
      // a point in Chebyshev ring r is at least (r-1)*h away from q
      if (ring > 0 && best <= (ring - 1) * h_) break;
      scan_ring(q, c, ring, &best);
    }
    return best;
  }

 private:
  std::array<int64_t, 3> cell_of(const geom::Vec3& p) const {
    return {static_cast<int64_t>(std::floor((p.x - lo_.x) / h_)),
            static_cast<int64_t>(std::floor((p.y - lo_.y) / h_)),
            static_cast<int64_t>(std::floor((p.z - lo_.z) / h_))};
  }
  static int64_t key(const std::array<int64_t, 3>& c) {
    return (c[0] * 73856093) ^ (c[1] * 19349663) ^ (c[2] * 83492791);
  }

  void scan_ring(const geom::Vec3& q, const std::array<int64_t, 3>& c, int64_t ring,
                 double* best) const {
    for (int64_t dx = -ring; dx <= ring; ++dx) {
      for (int64_t dy = -ring; dy <= ring; ++dy) {
        for (int64_t dz = -ring; dz <= ring; ++dz) {
          if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != ring) continue;
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (size_t i : it->second) {
            double d = (pts_[i] - q).norm();
            *best = std::min(*best, d);
          }
        }
      }
    }
  }

  const std::vector<geom::Vec3>& pts_;
  geom::Vec3 lo_;
  double h_ = 1.0;
  std::array<int64_t, 3> cell_min_{0, 0, 0}, cell_max_{0, 0, 0};
  std::unordered_map<int64_t, std::vector<size_t>> cells_;
};

}  // namespace

double completeness_bruteforce(const std::vector<geom::Vec3>& points,
                               const std::vector<geom::Vec3>& surface_samples) {
  double sum = 0;
  for (const auto& s : surface_samples) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : points) best = std::min(best, (p - s).norm());
    sum += best;
  }
  return surface_samples.empty() ? 0.0 : sum / surface_samples.size();
}

ChamferEval chamfer_eval(const std::vector<geom::Vec3>& points,
                         const scenes::AnalyticScene& scene, int n_surface_samples,
                         uint64_t seed) {
  ChamferEval ev;
  if (points.empty()) {
    ev.empty_cloud = true;
    ev.completeness = std::numeric_limits<double>::infinity();
    ev.chamfer = std::numeric_limits<double>::infinity();
    return ev;
  }
  double acc = 0;
  for (const auto& p : points) acc += std::fabs(scenes::sdf_eval(scene, p).distance);
  ev.accuracy = acc / points.size();

  auto samples = scenes::sample_surface(scene, n_surface_samples, seed);
  PointGrid grid(points);
  double comp = 0;
  for (const auto& s : samples) comp += grid.nearest(s);
  ev.completeness = samples.empty() ? 0.0 : comp / samples.size();
  ev.chamfer = 0.5 * (ev.accuracy + ev.completeness);
  return ev;
}

ViewRender render_view(const render::Model& model, const ext::SceneContext& ctx,
                       const geom::Camera& camera, double near, double far,
                       const render::SamplingConfig& scfg) {
  const int w = camera.width(), h = camera.height();
  ViewRender out;
  out.image.assign(static_cast<size_t>(w) * h * 3, 0.0);
  out.depth.assign(static_cast<size_t>(w) * h, 0.0);
  out.kurtosis.assign(static_cast<size_t>(w) * h, 0.0);

  std::vector<ad::Tensor> consts;
  for (const auto& e : model.store.entries()) consts.push_back(e.value.detached());
  nn::Binding p(std::move(consts));

  parallel_chunks(static_cast<int64_t>(w) * h, 32, [&](int, int64_t b, int64_t e) {
    ad::Tape tape;  // constants everywhere; nothing records, reused per chunk
    for (int64_t px = b; px < e; ++px) {
      int x = static_cast<int>(px % w), y = static_cast<int>(px / w);
      geom::Ray ray = geom::generate_ray(camera, x, y, near, far);
      render::SamplingConfig ray_cfg = scfg;
      ray_cfg.seed = Rng::mix(scfg.seed, static_cast<uint64_t>(px));
      render::RenderOutputs ro = render::render_ray(tape, p, model, ctx, ray, ray_cfg);
      render::RenderResult rr = render::to_result(ro, ray);
      for (int c = 0; c < 3; ++c) out.image[px * 3 + c] = rr.color[c];
      out.depth[px] = rr.depth;
      out.kurtosis[px] = attention_kurtosis(rr.attention, rr.t);
    }
  });
  return out;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "depth_mae " << depth_mae << "\n";
  os << "acc_1pct " << acc_1pct << "\n";
  os << "acc_2pct " << acc_2pct << "\n";
  os << "acc_4pct " << acc_4pct << "\n";
  os << "psnr " << psnr << "\n";
  os << "mean_kurtosis " << mean_kurtosis << "\n";
  os << "pc_accuracy " << pc_accuracy << "\n";
  os << "pc_completeness " << pc_completeness << "\n";
  os << "pc_chamfer " << pc_chamfer << "\n";
  os << "eval_views " << eval_views << "\n";
  os << "hit_rays " << hit_rays << "\n";
  os << "depth_empty " << (depth_empty ? 1 : 0) << "\n";
  return os.str();
}

std::string EvalReport::csv_header() {
  return "depth_mae,acc_1pct,acc_2pct,acc_4pct,psnr,mean_kurtosis,pc_accuracy,"
         "pc_completeness,pc_chamfer,eval_views,hit_rays,depth_empty";
}

std::string EvalReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d",
                depth_mae, acc_1pct, acc_2pct, acc_4pct, psnr, mean_kurtosis, pc_accuracy,
                pc_completeness, pc_chamfer, eval_views, hit_rays, depth_empty ? 1 : 0);
  return buf;
}

EvalReport evaluate(const render::Model& model, const scenes::Dataset& ds,
                    const std::vector<int>& eval_views, const std::vector<int>& source_views,
                    const render::SamplingConfig& scfg, int n_surface_samples, uint64_t seed) {
  EvalReport report;
  report.eval_views = static_cast<int>(eval_views.size());

  // context from the source views only; constants are fine for evaluation
  ad::Tape tape;
  std::vector<ad::Tensor> consts;
  for (const auto& e : model.store.entries()) consts.push_back(e.value.detached());
  nn::Binding p(std::move(consts));
  ext::SceneContext ctx =
      ext::build_scene_context(tape, p, model.extractor, model.cfg, ds, source_views);

  double err_sum = 0, mse_sum = 0, kurt_sum = 0;
  int valid = 0, within[3] = {0, 0, 0};
  int64_t pixels = 0;
  double extent = ds.bounds.max_extent();
  const double tau[3] = {0.01 * extent, 0.02 * extent, 0.04 * extent};

  std::vector<std::vector<double>> pred_depths;
  std::vector<geom::Camera> cams;
  for (size_t k = 0; k < eval_views.size(); ++k) {
    const auto& view = ds.views.at(eval_views[k]);
    render::SamplingConfig view_cfg = scfg;
    view_cfg.seed = Rng::mix(seed, 0xe7a1 + k);
    ViewRender vr = render_view(model, ctx, view.camera, ds.near, ds.far, view_cfg);
    for (size_t i = 0; i < vr.image.size(); ++i) {
      double d = vr.image[i] - view.image[i];
      mse_sum += d * d;
    }
    pixels += static_cast<int64_t>(vr.depth.size());
    for (size_t i = 0; i < vr.depth.size(); ++i) {
      if (view.depth[i] <= 0.0) continue;
      ++valid;
      double e = std::fabs(vr.depth[i] - view.depth[i]);
      err_sum += e;
      for (int t = 0; t < 3; ++t) {
        if (e < tau[t]) ++within[t];
      }
      kurt_sum += vr.kurtosis[i];
      ++report.hit_rays;
    }
    pred_depths.push_back(vr.depth);
    cams.push_back(view.camera);
  }

  if (valid > 0) {
    report.depth_mae = err_sum / valid;
    report.acc_1pct = 100.0 * within[0] / valid;
    report.acc_2pct = 100.0 * within[1] / valid;
    report.acc_4pct = 100.0 * within[2] / valid;
    report.mean_kurtosis = kurt_sum / valid;
  } else {
    report.depth_empty = true;
  }
  double mse = mse_sum / (3.0 * pixels);
  report.psnr = mse > 0 ? -10.0 * std::log10(mse) : std::numeric_limits<double>::infinity();

  auto cloud = fuse_point_cloud(pred_depths, cams, ds.bounds, ds.near, ds.far);
  ChamferEval ch = chamfer_eval(cloud, ds.scene, n_surface_samples, Rng::mix(seed, 0xc4af));
  report.pc_accuracy = ch.accuracy;
  report.pc_completeness = ch.completeness;
  report.pc_chamfer = ch.chamfer;
  return report;
}

void write_ply(const std::string& path, const std::vector<geom::Vec3>& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : points) out << p.x << " " << p.y << " " << p.z << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace retr::harness
