// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "retr/scenes/dataset.hpp"
#include "retr/scenes/image_io.hpp"
#include "retr/util/rng.hpp"

using namespace retr;
using namespace retr::scenes;
using geom::Ray;
using geom::Vec3;

namespace {

AnalyticScene unit_sphere_scene() {
  AnalyticScene s;
  s.id = "unit-sphere";
  Primitive p;
  p.kind = PrimitiveKind::kSphere;
  p.center = {0, 0, 0};
  p.size = {1, 1, 1};
  p.albedo = {0.95, 0.5, 0.2};
  s.primitives = {p};
  s.light_dir = Vec3{0, 0, -1};
  return s;
}

}  // namespace

TEST_CASE("sdf_eval") {
  AnalyticScene s = unit_sphere_scene();
  CHECK(sdf_eval(s, {2, 0, 0}).distance == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::fabs(sdf_eval(s, {0, 1, 0}).distance) < 1e-12);

  Primitive box;
  box.kind = PrimitiveKind::kBox;
  box.size = {1, 1, 1};
  box.albedo = {0, 1, 0};
  s.primitives.push_back(box);
  // outside an edge of the box: distance sqrt(1^2 + 1^2)
  CHECK(sdf_eval(s, {2, 2, 0}).distance == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  // nearest-primitive albedo
  CHECK(sdf_eval(s, {0.99, 0, 0}).albedo[0] == doctest::Approx(0.95));

  SUBCASE("rounded box = core box dilated") {
    Primitive rb;
    rb.kind = PrimitiveKind::kRoundedBox;
    rb.size = {0.5, 0.5, 0.5};
    rb.rounding = 0.1;
    AnalyticScene rs;
    rs.id = "rb";
    rs.primitives = {rb};
    CHECK(sdf_eval(rs, {1.0, 0, 0}).distance == doctest::Approx(0.5).epsilon(1e-12));
    // at a corner direction the surface bulges by the rounding radius
    Vec3 corner_dir = Vec3{1, 1, 1}.normalized();
    Vec3 corner = Vec3{0.4, 0.4, 0.4} + corner_dir * 0.1;
    CHECK(std::fabs(sdf_eval(rs, corner).distance) < 1e-12);
  }
}

TEST_CASE("sphere_trace") {
  AnalyticScene s = unit_sphere_scene();
  SUBCASE("head-on hit at t=2") {
    Ray ray{{0, 0, -3}, {0, 0, 1}, 0.1, 10.0};
    TraceResult tr = sphere_trace(s, ray);
    REQUIRE(tr.hit);
    CHECK(std::fabs(tr.t - 2.0) < 1e-5);
    CHECK(tr.normal.z == doctest::Approx(-1.0).epsilon(1e-5));
  }
  SUBCASE("miss") {
    Ray ray{{0, 3, -3}, {0, 0, 1}, 0.1, 10.0};
    TraceResult tr = sphere_trace(s, ray);
    CHECK_FALSE(tr.hit);
    CHECK_FALSE(tr.exhausted);
  }
  SUBCASE("grazing tangent ray stops near the analytic tangency point") {
    // exactly tangent at (1, 0, 0): with hit tolerance 1e-6 the march stops
    // within sqrt(2e-6) of the tangency point along z
    Ray ray{{1.0, 0, -3}, {0, 0, 1}, 0.1, 10.0};
    TraceResult tr = sphere_trace(s, ray);
    REQUIRE(tr.hit);
    Vec3 hit = ray.at(tr.t);
    Vec3 tangency{1.0, 0, 0};
    CHECK((hit - tangency).norm() < 2e-3);
    CHECK(std::fabs(tr.normal.dot(ray.direction)) < 2e-3);
  }
}

TEST_CASE("surface sampling sits on the union boundary") {
  AnalyticScene s = builtin_scene("three-blobs");
  auto pts = sample_surface(s, 500, 77);
  REQUIRE(pts.size() == 500);
  for (const auto& p : pts) CHECK(std::fabs(sdf_eval(s, p).distance) < 1e-9);
  // deterministic under the seed
  auto pts2 = sample_surface(s, 500, 77);
  CHECK(std::memcmp(pts.data(), pts2.data(), pts.size() * sizeof(Vec3)) == 0);
}

TEST_CASE("generate_dataset shading and depth") {
  AnalyticScene s = unit_sphere_scene();
  // 33x33 so the center pixel looks exactly down the optical axis; f=22
  // leaves the unit sphere well inside the frame at distance 3
  geom::Camera cam(22, 22, 16.5, 16.5, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 3}, 33, 33);
  // camera at (0,0,-3) (t = -R C), looking along +z; light along -z
  Bounds bounds{{-1.2, -1.2, -1.2}, {1.2, 1.2, 1.2}};
  Dataset ds = generate_dataset(s, {cam, cam, cam}, bounds, 0.5, 6.0, 1);

  SUBCASE("head-on pixel: color = albedo * 1.1 clamped, depth = 2") {
    const PosedView& v = ds.views[0];
    CHECK(v.depth_at(16, 16) == doctest::Approx(2.0).epsilon(1e-5));
    CHECK(v.pixel(16, 16, 0) == doctest::Approx(1.0).epsilon(1e-9));      // 0.95*1.1 clamped
    CHECK(v.pixel(16, 16, 1) == doctest::Approx(0.55).epsilon(1e-6));
    CHECK(v.pixel(16, 16, 2) == doctest::Approx(0.22).epsilon(1e-6));
  }
  SUBCASE("background pixel keeps background color and depth 0") {
    const PosedView& v = ds.views[0];
    CHECK(v.depth_at(0, 0) == 0.0);
    CHECK(v.pixel(0, 0, 0) == doctest::Approx(s.background[0]));
  }
  SUBCASE("hit pixels back-project onto the surface (|sdf| < 1e-4)") {
    const PosedView& v = ds.views[0];
    int hits = 0;
    for (int y = 0; y < 33; ++y) {
      for (int x = 0; x < 33; ++x) {
        double d = v.depth_at(x, y);
        if (d == 0.0) continue;
        ++hits;
        Ray ray = geom::generate_ray(cam, x, y, 0.5, 6.0);
        CHECK(std::fabs(sdf_eval(s, ray.at(d)).distance) < 1e-4);
      }
    }
    CHECK(hits > 50);
  }
  SUBCASE("same seed is bit-identical") {
    Dataset ds2 = generate_dataset(s, {cam, cam, cam}, bounds, 0.5, 6.0, 1);
    CHECK(std::memcmp(ds.views[0].image.data(), ds2.views[0].image.data(),
                      ds.views[0].image.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(ds.views[0].depth.data(), ds2.views[0].depth.data(),
                      ds.views[0].depth.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("multi-view depth consistency on the builtin scene") {
  AnalyticScene scene = builtin_scene("sphere-box");
  auto all_cams = ring_cameras(8, 128, 128);
  // two neighboring ring cameras (45 degrees apart) plus one filler
  std::vector<geom::Camera> cams{all_cams[0], all_cams[1], all_cams[4]};
  Dataset ds = generate_dataset(scene, cams, builtin_bounds(), kBuiltinNear, kBuiltinFar, 0);

  int checked = 0;
  const PosedView& a = ds.views[0];
  const PosedView& b = ds.views[1];
  for (int y = 1; y < 127; ++y) {
    for (int x = 1; x < 127; ++x) {
      double da = a.depth_at(x, y);
      if (da == 0.0) continue;
      Vec3 p = geom::generate_ray(a.camera, x, y, ds.near, ds.far).at(da);
      auto pr = geom::project(p, b.camera);
      if (!pr.valid || pr.u < 1 || pr.u > 126 || pr.v < 1 || pr.v > 126) continue;
      // interpolate B's stored ray depth; restrict to locally smooth, fully
      // hit neighborhoods so silhouettes and occlusion boundaries are out
      int u0 = static_cast<int>(pr.u), v0 = static_cast<int>(pr.v);
      double dmin = 1e30, dmax = -1e30;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          double d = b.depth_at(u0 + dx, v0 + dy);
          dmin = std::min(dmin, d);
          dmax = std::max(dmax, d);
        }
      if (dmin == 0.0 || dmax - dmin > 0.0125) continue;
      auto normal_at = [&](const Vec3& q) {
        const double eps = 1e-5;
        return Vec3{sdf_eval(scene, {q.x + eps, q.y, q.z}).distance -
                        sdf_eval(scene, {q.x - eps, q.y, q.z}).distance,
                    sdf_eval(scene, {q.x, q.y + eps, q.z}).distance -
                        sdf_eval(scene, {q.x, q.y - eps, q.z}).distance,
                    sdf_eval(scene, {q.x, q.y, q.z + eps}).distance -
                        sdf_eval(scene, {q.x, q.y, q.z - eps}).distance}
            .normalized();
      };
      Vec3 n = normal_at(p);
      // exclude grazing incidence from B (ray depth varies too fast between
      // pixel centers) and crease neighborhoods (depth slope breaks, so
      // bilinear interpolation of it is invalid)
      Vec3 dir_b = (p - b.camera.center()).normalized();
      if (std::fabs(n.dot(dir_b)) < 0.35) continue;
      bool crease = false;
      for (int dy = 0; dy < 2 && !crease; ++dy)
        for (int dx = 0; dx < 2 && !crease; ++dx) {
          geom::Ray rb = geom::generate_ray(b.camera, u0 + dx, v0 + dy, ds.near, ds.far);
          Vec3 nn = normal_at(rb.at(b.depth_at(u0 + dx, v0 + dy)));
          if (nn.dot(n) < 0.9) crease = true;
        }
      if (crease) continue;
      double fu = pr.u - u0, fv = pr.v - v0;
      double interp = (1 - fu) * (1 - fv) * b.depth_at(u0, v0) +
                      fu * (1 - fv) * b.depth_at(u0 + 1, v0) +
                      (1 - fu) * fv * b.depth_at(u0, v0 + 1) +
                      fu * fv * b.depth_at(u0 + 1, v0 + 1);
      double expected = (p - b.camera.center()).norm();
      if (interp < expected - 1e-3) continue;  // p occluded in B
      CHECK(std::fabs(interp - expected) < 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("dataset save/load round trip") {
  AnalyticScene scene = builtin_scene("sphere-box");
  auto cams = ring_cameras(3, 16, 16);
  Dataset ds = generate_dataset(scene, cams, builtin_bounds(), kBuiltinNear, kBuiltinFar, 0);
  const std::string path = "test_dataset.bin";
  dataset_save(ds, path);
  Dataset back = dataset_load(path);

  CHECK(back.scene_id == ds.scene_id);
  CHECK(back.near == ds.near);
  CHECK(back.far == ds.far);
  CHECK(back.bounds.min.x == ds.bounds.min.x);
  CHECK(back.scene.primitives.size() == ds.scene.primitives.size());
  REQUIRE(back.views.size() == ds.views.size());
  for (size_t i = 0; i < ds.views.size(); ++i) {
    CHECK(std::memcmp(back.views[i].image.data(), ds.views[i].image.data(),
                      ds.views[i].image.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(back.views[i].depth.data(), ds.views[i].depth.data(),
                      ds.views[i].depth.size() * sizeof(double)) == 0);
    CHECK(back.views[i].camera.rotation() == ds.views[i].camera.rotation());
  }

  SUBCASE("loaded camera reprojects a stored depth pixel onto itself") {
    const PosedView& v = back.views[0];
    bool found = false;
    for (int y = 0; y < 16 && !found; ++y) {
      for (int x = 0; x < 16 && !found; ++x) {
        double d = v.depth_at(x, y);
        if (d == 0.0) continue;
        Vec3 p = geom::generate_ray(v.camera, x, y, back.near, back.far).at(d);
        auto pr = geom::project(p, v.camera);
        REQUIRE(pr.valid);
        CHECK(std::fabs(pr.u - x) < 1e-6);
        CHECK(std::fabs(pr.v - y) < 1e-6);
        found = true;
      }
    }
    CHECK(found);
  }

  SUBCASE("truncated file names the missing section") {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out("test_dataset_trunc.bin", std::ios::binary);
    out.write(all.data(), all.size() / 3);
    out.close();
    CHECK_THROWS_WITH_AS(dataset_load("test_dataset_trunc.bin"), doctest::Contains("truncated"),
                         std::runtime_error);
    std::remove("test_dataset_trunc.bin");
  }
  SUBCASE("bad magic rejected") {
    std::ofstream out("test_dataset_bad.bin", std::ios::binary);
    out.write("NOTADATA", 8);
    out.close();
    CHECK_THROWS_WITH_AS(dataset_load("test_dataset_bad.bin"), doctest::Contains("magic"),
                         std::runtime_error);
    std::remove("test_dataset_bad.bin");
  }
  std::remove(path.c_str());
}

TEST_CASE("png writer emits a valid signature and geometry") {
  std::vector<uint8_t> rgb(8 * 4 * 3, 200);
  write_png_rgb8("test_img.png", 8, 4, rgb.data());
  std::ifstream in("test_img.png", std::ios::binary);
  REQUIRE(in.good());
  uint8_t sig[8];
  in.read(reinterpret_cast<char*>(sig), 8);
  const uint8_t expect[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  CHECK(std::memcmp(sig, expect, 8) == 0);
  // IHDR width/height big-endian at offsets 16 and 20
  in.seekg(16);
  uint8_t dims[8];
  in.read(reinterpret_cast<char*>(dims), 8);
  CHECK(dims[3] == 8);
  CHECK(dims[7] == 4);
  std::remove("test_img.png");
}
