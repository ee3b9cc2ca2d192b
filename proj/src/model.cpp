// SPDX-License-Identifier: Apache-2.0
#include "retr/renderer/model.hpp"

namespace retr::render {

Model build_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(Rng::mix(seed, 0x6d6f64656c));

  m.extractor = ext::make_extractor(m.store, cfg, rng);
  m.fusion = ext::make_fusion(m.store, cfg, rng);

  if (cfg.renderer == RendererKind::kRetr) {
    m.meta_token = m.store.add_gaussian("meta_token", {1, cfg.dim}, 0.02, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
      OcclusionBlockParams blk;
      std::string prefix = "occ" + std::to_string(b);
      blk.mha = nn::make_mha(m.store, prefix + ".mha", cfg.dim, cfg.heads, rng);
      blk.mlp = nn::make_mlp(m.store, prefix + ".mlp", {cfg.dim, cfg.occ_hidden, cfg.dim}, rng);
      m.occ_blocks.push_back(std::move(blk));
    }
    m.render_mha = nn::make_mha(m.store, "render.mha", cfg.dim, cfg.heads, rng);
    m.color_mlp = nn::make_mlp(m.store, "color", {cfg.dim, cfg.color_hidden, 3}, rng);
  } else {
    m.sigma_mlp = nn::make_mlp(m.store, "sigma", {cfg.dim, cfg.head_hidden, 1}, rng);
    int blend_in = cfg.dim + cfg.channels[0] + 3 + 1;
    m.blend_mlp = nn::make_mlp(m.store, "blend", {blend_in, cfg.head_hidden, 1}, rng);
  }
  return m;
}

}  // namespace retr::render
