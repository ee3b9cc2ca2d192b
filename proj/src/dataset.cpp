// SPDX-License-Identifier: Apache-2.0
#include "retr/scenes/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>
#include <stdexcept>

#include "retr/scenes/image_io.hpp"
#include "retr/util/binary.hpp"
#include "retr/util/threading.hpp"

namespace retr::scenes {

namespace {
constexpr char kMagic[8] = {'R', 'E', 'T', 'R', 'D', 'A', 'T', 'A'};
constexpr uint32_t kVersion = 1;

void expect_tag(BinaryReader& r, const char* tag) {
  r.section = tag;
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, tag, 4) != 0) {
    throw std::runtime_error(r.path + ": missing section '" + tag + "' (found '" +
                             std::string(got, 4) + "')");
  }
}
}  // namespace

Dataset generate_dataset(const AnalyticScene& scene, const std::vector<geom::Camera>& cameras,
                         const Bounds& bounds, double near, double far, uint64_t rng_seed) {
  if (cameras.size() < 3) {
    throw std::invalid_argument("generate_dataset: need at least 3 cameras, got " +
                                std::to_string(cameras.size()));
  }
  (void)rng_seed;
  Dataset ds;
  ds.scene_id = scene.id;
  ds.scene = scene;
  ds.bounds = bounds;
  ds.near = near;
  ds.far = far;
  ds.width = cameras[0].width();
  ds.height = cameras[0].height();

  Vec3 mid = (bounds.min + bounds.max) * 0.5;
  for (const auto& cam : cameras) {
    auto pr = geom::project(mid, cam);
    if (!pr.valid || pr.u < 0 || pr.u > cam.width() - 1 || pr.v < 0 || pr.v > cam.height() - 1) {
      std::cerr << "warning: camera does not look at the scene bounds\n";
    }
  }

  std::vector<int> warnings(cameras.size(), 0);
  for (size_t vi = 0; vi < cameras.size(); ++vi) {
    const auto& cam = cameras[vi];
    if (cam.width() != ds.width || cam.height() != ds.height) {
      throw std::invalid_argument("generate_dataset: cameras disagree on image size");
    }
    PosedView view{std::vector<double>(static_cast<size_t>(ds.width) * ds.height * 3),
                   std::vector<double>(static_cast<size_t>(ds.width) * ds.height, 0.0), cam};
    const int kChunks = 16;
    std::vector<int> chunk_warn(kChunks, 0);
    parallel_chunks(ds.height, kChunks, [&](int chunk, int64_t y0, int64_t y1) {
      for (int64_t y = y0; y < y1; ++y) {
        for (int x = 0; x < ds.width; ++x) {
          Ray ray = geom::generate_ray(cam, x, y, near, far);
          TraceResult tr = sphere_trace(scene, ray);
          if (tr.exhausted) ++chunk_warn[chunk];
          size_t px = static_cast<size_t>(y) * ds.width + x;
          if (tr.hit) {
            SdfResult sr = sdf_eval(scene, ray.at(tr.t));
            double lambert = std::max(0.0, tr.normal.dot(scene.light_dir));
            for (int c = 0; c < 3; ++c) {
              view.image[px * 3 + c] = std::clamp(sr.albedo[c] * (lambert + 0.1), 0.0, 1.0);
            }
            view.depth[px] = tr.t;
          } else {
            for (int c = 0; c < 3; ++c) view.image[px * 3 + c] = scene.background[c];
          }
        }
      }
    });
    for (int c : chunk_warn) warnings[vi] += c;
    ds.views.push_back(std::move(view));
  }
  for (int w : warnings) ds.trace_warnings += w;
  return ds;
}

void dataset_save(const Dataset& ds, const std::string& path) {
  BinaryWriter w(path);
  w.bytes(kMagic, 8);
  w.u32(kVersion);

  w.bytes("META", 4);
  w.str(ds.scene_id);
  for (double v : ds.scene.background) w.f64(v);
  w.f64(ds.scene.light_dir.x);
  w.f64(ds.scene.light_dir.y);
  w.f64(ds.scene.light_dir.z);
  w.u32(static_cast<uint32_t>(ds.scene.primitives.size()));
  for (const auto& p : ds.scene.primitives) {
    w.u32(static_cast<uint32_t>(p.kind));
    w.f64(p.center.x);
    w.f64(p.center.y);
    w.f64(p.center.z);
    w.f64(p.size.x);
    w.f64(p.size.y);
    w.f64(p.size.z);
    w.f64(p.rounding);
    for (double a : p.albedo) w.f64(a);
  }
  w.f64(ds.bounds.min.x);
  w.f64(ds.bounds.min.y);
  w.f64(ds.bounds.min.z);
  w.f64(ds.bounds.max.x);
  w.f64(ds.bounds.max.y);
  w.f64(ds.bounds.max.z);
  w.f64(ds.near);
  w.f64(ds.far);
  w.u32(static_cast<uint32_t>(ds.views.size()));
  w.u32(static_cast<uint32_t>(ds.width));
  w.u32(static_cast<uint32_t>(ds.height));

  w.bytes("CAMS", 4);
  for (const auto& v : ds.views) {
    const auto& R = v.camera.rotation();
    const Vec3& t = v.camera.translation();
    // [R|t] as a row-major 3x4
    double ext[12] = {R[0], R[1], R[2], t.x, R[3], R[4], R[5], t.y, R[6], R[7], R[8], t.z};
    w.bytes(ext, sizeof(ext));
    double K[9] = {v.camera.fx(), 0, v.camera.cx(), 0, v.camera.fy(), v.camera.cy(), 0, 0, 1};
    w.bytes(K, sizeof(K));
    w.u32(static_cast<uint32_t>(v.camera.width()));
    w.u32(static_cast<uint32_t>(v.camera.height()));
  }

  w.bytes("IMGS", 4);
  for (const auto& v : ds.views) w.f64s(v.image);
  w.bytes("DPTH", 4);
  for (const auto& v : ds.views) w.f64s(v.depth);
  w.bytes("END ", 4);
  w.finish(path);
}

Dataset dataset_load(const std::string& path) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error(path + ": not a dataset file (bad magic)");
  }
  uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error(path + ": unsupported dataset version " + std::to_string(version));
  }

  Dataset ds;
  expect_tag(r, "META");
  ds.scene_id = r.str();
  ds.scene.id = ds.scene_id;
  for (double& v : ds.scene.background) v = r.f64();
  ds.scene.light_dir = {r.f64(), r.f64(), r.f64()};
  uint32_t nprim = r.u32();
  for (uint32_t i = 0; i < nprim; ++i) {
    Primitive p;
    uint32_t kind = r.u32();
    if (kind > 2) throw std::runtime_error(path + ": unknown primitive kind");
    p.kind = static_cast<PrimitiveKind>(kind);
    p.center = {r.f64(), r.f64(), r.f64()};
    p.size = {r.f64(), r.f64(), r.f64()};
    p.rounding = r.f64();
    for (double& a : p.albedo) a = r.f64();
    ds.scene.primitives.push_back(p);
  }
  ds.bounds.min = {r.f64(), r.f64(), r.f64()};
  ds.bounds.max = {r.f64(), r.f64(), r.f64()};
  ds.near = r.f64();
  ds.far = r.f64();
  uint32_t nviews = r.u32();
  ds.width = static_cast<int>(r.u32());
  ds.height = static_cast<int>(r.u32());

  expect_tag(r, "CAMS");
  std::vector<geom::Camera> cams;
  for (uint32_t i = 0; i < nviews; ++i) {
    double ext[12];
    r.bytes(ext, sizeof(ext));
    double K[9];
    r.bytes(K, sizeof(K));
    uint32_t cw = r.u32(), ch = r.u32();
    std::array<double, 9> R{ext[0], ext[1], ext[2], ext[4], ext[5], ext[6], ext[8], ext[9],
                            ext[10]};
    cams.emplace_back(K[0], K[4], K[2], K[5], R, Vec3{ext[3], ext[7], ext[11]},
                      static_cast<int>(cw), static_cast<int>(ch));
  }

  expect_tag(r, "IMGS");
  size_t px = static_cast<size_t>(ds.width) * ds.height;
  std::vector<std::vector<double>> images;
  for (uint32_t i = 0; i < nviews; ++i) images.push_back(r.f64s(px * 3));
  expect_tag(r, "DPTH");
  for (uint32_t i = 0; i < nviews; ++i) {
    ds.views.push_back(PosedView{std::move(images[i]), r.f64s(px), cams[i]});
  }
  expect_tag(r, "END ");
  return ds;
}

void write_view_png(const PosedView& view, const std::string& path) {
  int w = view.camera.width(), h = view.camera.height();
  std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
  for (size_t i = 0; i < rgb.size(); ++i) {
    rgb[i] = static_cast<uint8_t>(std::lround(std::clamp(view.image[i], 0.0, 1.0) * 255.0));
  }
  write_png_rgb8(path, w, h, rgb.data());
}

}  // namespace retr::scenes
