// SPDX-License-Identifier: Apache-2.0
#include "retr/config.hpp"

#include <sstream>
#include <stdexcept>

namespace retr {

std::string renderer_kind_name(RendererKind k) {
  return k == RendererKind::kRetr ? "retr" : "classical-baseline";
}

RendererKind renderer_kind_from_name(const std::string& name) {
  if (name == "retr") return RendererKind::kRetr;
  if (name == "classical-baseline") return RendererKind::kClassicalBaseline;
  throw std::invalid_argument("unknown renderer kind '" + name +
                              "' (expected retr or classical-baseline)");
}

void ModelConfig::validate() const {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("model.dim must be positive even");
  if (heads <= 0 || dim % heads != 0) {
    throw std::invalid_argument("model.dim must be divisible by model.heads");
  }
  if (blocks < 1) throw std::invalid_argument("model.blocks must be >= 1");
  if (levels < 2) throw std::invalid_argument("model.levels must be >= 2");
  if (static_cast<int>(channels.size()) != levels) {
    throw std::invalid_argument("model.channels must list one width per level");
  }
  for (int c : channels) {
    if (c <= 0) throw std::invalid_argument("model.channels entries must be positive");
  }
  if (volume_res < 8) throw std::invalid_argument("model.volume_res must be >= 8");
  if (volume_dim <= 0 || fusion_hidden <= 0 || occ_hidden <= 0 || color_hidden <= 0 ||
      head_hidden <= 0) {
    throw std::invalid_argument("model hidden widths must be positive");
  }
  if (!(cpe_beta > 0.0)) throw std::invalid_argument("model.cpe_beta must be positive");
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "dim=" << dim << "\n";
  os << "heads=" << heads << "\n";
  os << "blocks=" << blocks << "\n";
  os << "levels=" << levels << "\n";
  os << "channels=";
  for (size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
  os << "\n";
  os << "volume_res=" << volume_res << "\n";
  os << "volume_dim=" << volume_dim << "\n";
  os << "fusion_hidden=" << fusion_hidden << "\n";
  os << "occ_hidden=" << occ_hidden << "\n";
  os << "color_hidden=" << color_hidden << "\n";
  os << "head_hidden=" << head_hidden << "\n";
  os << "cpe_beta=" << cpe_beta << "\n";
  os << "renderer=" << renderer_kind_name(renderer) << "\n";
  return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("model config: malformed line '" + line + "'");
    }
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "dim") cfg.dim = std::stoi(val);
    else if (key == "heads") cfg.heads = std::stoi(val);
    else if (key == "blocks") cfg.blocks = std::stoi(val);
    else if (key == "levels") cfg.levels = std::stoi(val);
    else if (key == "channels") {
      cfg.channels.clear();
      std::istringstream cs(val);
      std::string tok;
      while (std::getline(cs, tok, ',')) cfg.channels.push_back(std::stoi(tok));
    } else if (key == "volume_res") cfg.volume_res = std::stoi(val);
    else if (key == "volume_dim") cfg.volume_dim = std::stoi(val);
    else if (key == "fusion_hidden") cfg.fusion_hidden = std::stoi(val);
    else if (key == "occ_hidden") cfg.occ_hidden = std::stoi(val);
    else if (key == "color_hidden") cfg.color_hidden = std::stoi(val);
    else if (key == "head_hidden") cfg.head_hidden = std::stoi(val);
    else if (key == "cpe_beta") cfg.cpe_beta = std::stod(val);
    else if (key == "renderer") cfg.renderer = renderer_kind_from_name(val);
    else throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace retr
