// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "retr/autodiff/grad_check.hpp"
#include "retr/extractor/extractor.hpp"
#include "retr/geometry/interp.hpp"
#include "retr/util/rng.hpp"

using namespace retr;
using namespace retr::ext;
using ad::Tape;
using ad::Tensor;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.levels = 2;
  cfg.channels = {2, 3};
  cfg.volume_res = 8;
  cfg.volume_dim = 4;
  cfg.fusion_hidden = 8;
  cfg.occ_hidden = 8;
  cfg.color_hidden = 8;
  cfg.head_hidden = 6;
  return cfg;
}

scenes::Dataset toy_dataset(int size = 8, int views = 3) {
  auto scene = scenes::builtin_scene("sphere-box");
  auto cams = scenes::ring_cameras(views, size, size);
  return scenes::generate_dataset(scene, cams, scenes::builtin_bounds(), scenes::kBuiltinNear,
                                  scenes::kBuiltinFar, 0);
}

}  // namespace

TEST_CASE("pyramid level shapes follow ceil-halving") {
  ModelConfig cfg;  // defaults: 3 levels, 8/16/32 channels
  nn::ParamStore store;
  Rng rng(1);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  scenes::Dataset ds = toy_dataset(32);
  Tape tape;
  nn::Binding p(tape, store);
  auto pyr = extract_image_features(tape, p, ep, cfg, ds.views[0]);
  REQUIRE(pyr.size() == 3);
  CHECK(pyr[0].height == 32);
  CHECK(pyr[0].width == 32);
  CHECK(pyr[0].data.shape() == ad::Shape{32 * 32, 8});
  CHECK(pyr[1].height == 16);
  CHECK(pyr[2].height == 8);
  CHECK(pyr[2].data.shape() == ad::Shape{8 * 8, 32});

  SUBCASE("image too small for the level count is rejected") {
    scenes::Dataset tiny = toy_dataset(8);
    CHECK_THROWS_AS(extract_image_features(tape, p, ep, cfg, tiny.views[0]),
                    std::invalid_argument);
  }
}

TEST_CASE("zero conv weights give an all-zero pyramid") {
  ModelConfig cfg = toy_config();
  nn::ParamStore store;
  Rng rng(2);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  for (size_t i = 0; i < store.size(); ++i)
    store.set_value(static_cast<int>(i), Tensor::zeros(store.value(i).shape()));
  scenes::Dataset ds = toy_dataset(8);
  Tape tape;
  nn::Binding p(tape, store);
  auto pyr = extract_image_features(tape, p, ep, cfg, ds.views[0]);
  for (const auto& fm : pyr) {
    for (int64_t i = 0; i < fm.data.numel(); ++i) CHECK(fm.data[i] == 0.0);
  }
}

TEST_CASE("level-0 conv matches hand convolution") {
  ModelConfig cfg = toy_config();
  cfg.channels = {1, 1};
  nn::ParamStore store;
  Rng rng(3);
  ExtractorParams ep = make_extractor(store, cfg, rng);

  // kernel reads only the red channel; known 4x4 grayscale image
  std::vector<double> kernel{0.5, 1.0, 0.25, 2.0, 3.0, 0.0, 0.75, 1.5, 0.125};
  std::vector<double> w(9 * 3 * 1, 0.0);
  for (int tap = 0; tap < 9; ++tap) w[(tap * 3 + 0) * 1 + 0] = kernel[tap];
  store.set_value(ep.level_convs[0].w, Tensor({27, 1}, w));
  store.set_value(ep.level_convs[0].b, Tensor::zeros({1, 1}));

  const int m = 8;
  scenes::PosedView view{
      std::vector<double>(m * m * 3), std::vector<double>(m * m, 0.0),
      geom::Camera(16, 16, 4, 4, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 3}, m, m)};
  std::vector<double> img(m * m);
  Rng irng(9);
  for (int i = 0; i < m * m; ++i) img[i] = irng.uniform(0, 1);
  for (int i = 0; i < m * m; ++i)
    for (int c = 0; c < 3; ++c) view.image[i * 3 + c] = img[i];

  Tape tape;
  nn::Binding p(tape, store);
  auto pyr = extract_image_features(tape, p, ep, cfg, view);

  // hand-rolled same-padding convolution oracle
  auto manual = [&](int y, int x) {
    double acc = 0.0;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        int iy = y + ky - 1, ix = x + kx - 1;
        if (iy < 0 || iy >= m || ix < 0 || ix >= m) continue;
        acc += kernel[ky * 3 + kx] * img[iy * m + ix];
      }
    return std::max(acc, 0.0);  // relu
  };
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x)
      CHECK(pyr[0].data[y * m + x] == doctest::Approx(manual(y, x)).epsilon(1e-12));
}

TEST_CASE("volume stats match direct per-view bilinear sampling") {
  ModelConfig cfg = toy_config();
  nn::ParamStore store;
  Rng rng(4);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  scenes::Dataset ds = toy_dataset(16);
  Tape tape;
  nn::Binding p(tape, store);
  std::vector<int> src{0, 1, 2};
  std::vector<ImageFeaturePyramid> pyrs;
  for (int v : src) pyrs.push_back(extract_image_features(tape, p, ep, cfg, ds.views[v]));
  const int r = cfg.volume_res;
  Tensor stats = build_volume_stats(tape, cfg, ds, src, pyrs, r);

  Rng pick(5);
  geom::Vec3 e = ds.bounds.extent();
  for (int trial = 0; trial < 10; ++trial) {
    int ix = pick.uniform_index(r), iy = pick.uniform_index(r), iz = pick.uniform_index(r);
    geom::Vec3 center{ds.bounds.min.x + e.x * ix / (r - 1), ds.bounds.min.y + e.y * iy / (r - 1),
                      ds.bounds.min.z + e.z * iz / (r - 1)};
    int64_t row = (static_cast<int64_t>(ix) * r + iy) * r + iz;
    // level-0 mean channel 0 against a manual mean of bilinear samples
    double sum = 0.0;
    int cnt = 0;
    for (size_t vi = 0; vi < src.size(); ++vi) {
      auto pr = geom::project(center, ds.views[src[vi]].camera);
      if (!pr.valid) continue;
      const auto& fm = pyrs[vi][0];
      std::vector<double> out(cfg.channels[0]);
      if (!geom::bilinear_sample(fm.data.data().data(), fm.height, fm.width, cfg.channels[0],
                                 pr.u, pr.v, out.data())) {
        continue;
      }
      sum += out[0];
      ++cnt;
    }
    double expect = cnt > 0 ? sum / cnt : 0.0;
    CHECK(stats[row * stats.shape()[1] + 0] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("volume stats agree across resolutions where lattices coincide") {
  // align-corners grids at R and 2R-1 share every even-index voxel
  ModelConfig cfg = toy_config();
  nn::ParamStore store;
  Rng rng(6);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  scenes::Dataset ds = toy_dataset(16);
  Tape tape;
  nn::Binding p(tape, store);
  std::vector<int> src{0, 1, 2};
  std::vector<ImageFeaturePyramid> pyrs;
  for (int v : src) pyrs.push_back(extract_image_features(tape, p, ep, cfg, ds.views[v]));
  const int r = 8, r2 = 15;
  Tensor coarse = build_volume_stats(tape, cfg, ds, src, pyrs, r);
  Tensor fine = build_volume_stats(tape, cfg, ds, src, pyrs, r2);
  int cols = coarse.shape()[1];
  for (int ix = 0; ix < r; ++ix)
    for (int iy = 0; iy < r; ++iy)
      for (int iz = 0; iz < r; ++iz) {
        int64_t rc = (static_cast<int64_t>(ix) * r + iy) * r + iz;
        int64_t rf = (static_cast<int64_t>(2 * ix) * r2 + 2 * iy) * r2 + 2 * iz;
        for (int c = 0; c < cols; ++c) {
          CHECK(std::fabs(coarse[rc * cols + c] - fine[rf * cols + c]) < 1e-9);
        }
      }
}

TEST_CASE("fused features: view permutation invariance and fixed width") {
  ModelConfig cfg = toy_config();
  nn::ParamStore store;
  Rng rng(7);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  FusionParams fp = make_fusion(store, cfg, rng);
  scenes::Dataset ds = toy_dataset(8);
  Tape tape;
  nn::Binding p(tape, store);

  std::vector<geom::Vec3> points;
  Rng prng(8);
  for (int i = 0; i < 12; ++i) {
    points.push_back({prng.uniform(-0.45, 0.45), prng.uniform(-0.45, 0.45),
                      prng.uniform(-0.45, 0.45)});
  }
  // one point far outside every view and the volume
  points.push_back({50, 50, 50});

  SceneContext a = build_scene_context(tape, p, ep, cfg, ds, {0, 1, 2});
  SceneContext b = build_scene_context(tape, p, ep, cfg, ds, {2, 0, 1});
  Tensor fa = fuse_point_features(tape, p, fp, cfg, a, points);
  Tensor fb = fuse_point_features(tape, p, fp, cfg, b, points);
  CHECK(fa.shape() == ad::Shape{13, cfg.dim});
  CHECK(std::memcmp(fa.data().data(), fb.data().data(), fa.numel() * sizeof(double)) == 0);
}

TEST_CASE("duplicated view keeps variance stats exactly zero") {
  ModelConfig cfg = toy_config();
  nn::ParamStore store;
  Rng rng(9);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  scenes::Dataset ds = toy_dataset(8);
  Tape tape;
  nn::Binding p(tape, store);
  std::vector<int> src{0, 0};
  std::vector<ImageFeaturePyramid> pyrs;
  for (int v : src) pyrs.push_back(extract_image_features(tape, p, ep, cfg, ds.views[v]));
  Tensor stats = build_volume_stats(tape, cfg, ds, src, pyrs, cfg.volume_res);
  // layout per level: [mean C_l | var C_l]; all var columns must be 0
  int col = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    int c = cfg.channels[l];
    for (int64_t row = 0; row < stats.shape()[0]; ++row) {
      for (int j = 0; j < c; ++j) {
        CHECK(stats[row * stats.shape()[1] + col + c + j] == 0.0);
      }
    }
    col += 2 * c;
  }
}

TEST_CASE("fused feature gradient w.r.t. volume voxels matches finite differences") {
  ModelConfig cfg = toy_config();
  nn::ParamStore store;
  Rng rng(10);
  ExtractorParams ep = make_extractor(store, cfg, rng);
  FusionParams fp = make_fusion(store, cfg, rng);
  scenes::Dataset ds = toy_dataset(8);

  // detached context so the probe can swap the volume tensor freely
  Tape build_tape;
  nn::Binding bp(build_tape, store);
  SceneContext base = build_scene_context(build_tape, bp, ep, cfg, ds, {0, 1}).detached();

  std::vector<geom::Vec3> points{{0.1, -0.2, 0.05}, {-0.3, 0.2, 0.1}};
  Rng wrng(11);
  std::vector<double> wsum(2 * cfg.dim);
  for (auto& v : wsum) v = wrng.uniform(-1, 1);
  Tensor w({2, cfg.dim}, wsum);

  auto f = [&](Tape& t, const std::vector<Tensor>& pv) {
    SceneContext ctx = base;
    ctx.volume = pv[0];
    std::vector<Tensor> bound;
    for (const auto& e : store.entries()) bound.push_back(Tensor(e.value.shape(), e.value.data()));
    nn::Binding probe(std::move(bound));
    return t.sum(t.mul(fuse_point_features(t, probe, fp, cfg, ctx, points), w));
  };
  CHECK(ad::grad_check(f, {base.volume}, 1e-5) < 1e-5);
}
