// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace retr {

/// Renderer flavour: the transformer pipeline, or the classical volume
/// rendering baseline (sigma head + per-view color blending) on the same
/// extracted features.
enum class RendererKind { kRetr, kClassicalBaseline };

std::string renderer_kind_name(RendererKind k);
RendererKind renderer_kind_from_name(const std::string& name);

/// Model architecture knobs. Defaults are the desk-scale reference
/// configuration; everything is overridable from the CLI config.
struct ModelConfig {
  int dim = 64;      // transformer feature dim D
  int heads = 4;
  int blocks = 1;    // stacked occlusion blocks (1 = base, 2 = L, 3 = XL)
  int levels = 3;    // image pyramid levels
  std::vector<int> channels = {8, 16, 32};  // per-level conv widths
  int volume_res = 32;   // R
  int volume_dim = 64;   // feature volume channels
  int fusion_hidden = 64;
  int occ_hidden = 64;
  int color_hidden = 64;
  int head_hidden = 32;  // baseline sigma/blend heads
  double cpe_beta = 100.0;
  RendererKind renderer = RendererKind::kRetr;

  void validate() const;
  std::string serialize() const;                       // key=value lines
  static ModelConfig deserialize(const std::string&);  // strict
};

}  // namespace retr
