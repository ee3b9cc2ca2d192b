// SPDX-License-Identifier: Apache-2.0
#include "retr/geometry/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "retr/util/rng.hpp"

namespace retr::geom {

RaySamples sample_coarse(const Ray& ray, int n, bool stratified, uint64_t rng_seed) {
  if (n < 2) throw std::invalid_argument("sample_coarse: need n >= 2");
  RaySamples s;
  s.ray = ray;
  s.t.resize(n);
  Rng rng(rng_seed);
  double width = (ray.far - ray.near) / n;
  for (int i = 0; i < n; ++i) {
    double frac = stratified ? rng.uniform() : 0.5;
    s.t[i] = ray.near + (i + frac) * width;
  }
  s.x.reserve(n);
  for (double t : s.t) s.x.push_back(ray.at(t));
  return s;
}

RaySamples sample_fine_from_attention(const RaySamples& coarse, const std::vector<double>& attn,
                                      int n_fine, uint64_t rng_seed) {
  const int n = coarse.count();
  if (static_cast<int>(attn.size()) != n) {
    throw std::invalid_argument("sample_fine_from_attention: got " +
                                std::to_string(attn.size()) + " weights for " +
                                std::to_string(n) + " samples");
  }
  if (n_fine < 0) throw std::invalid_argument("sample_fine_from_attention: negative n_fine");
  double total = 0.0;
  for (double a : attn) {
    if (a < 0.0 || !std::isfinite(a)) {
      throw std::invalid_argument("sample_fine_from_attention: weights must be non-negative");
    }
    total += a;
  }
  if (total == 0.0) {
    throw std::invalid_argument("sample_fine_from_attention: all-zero attention");
  }
  if (std::fabs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("sample_fine_from_attention: weights sum to " +
                                std::to_string(total) + ", expected 1");
  }

  // bin edges: near, midpoints between consecutive coarse t, far
  std::vector<double> edge(n + 1);
  edge[0] = coarse.ray.near;
  for (int i = 0; i + 1 < n; ++i) edge[i + 1] = 0.5 * (coarse.t[i] + coarse.t[i + 1]);
  edge[n] = coarse.ray.far;

  std::vector<double> cdf(n + 1, 0.0);
  for (int i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + attn[i] / total;
  cdf[n] = 1.0;

  Rng rng(rng_seed);
  std::vector<double> fine;
  fine.reserve(n_fine);
  for (int i = 0; i < n_fine; ++i) {
    double u = rng.uniform();
    int k = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end() - 1, u) - cdf.begin()) - 1;
    k = std::clamp(k, 0, n - 1);
    double mass = cdf[k + 1] - cdf[k];
    double frac = mass > 0.0 ? (u - cdf[k]) / mass : 0.5;
    fine.push_back(edge[k] + frac * (edge[k + 1] - edge[k]));
  }

  RaySamples merged;
  merged.ray = coarse.ray;
  merged.t = coarse.t;  // coarse depths always retained
  for (double tf : fine) {
    auto pos = std::lower_bound(merged.t.begin(), merged.t.end(), tf);
    bool dup = (pos != merged.t.end() && std::fabs(*pos - tf) < 1e-9) ||
               (pos != merged.t.begin() && std::fabs(*(pos - 1) - tf) < 1e-9);
    if (!dup) merged.t.insert(pos, tf);
  }
  merged.x.reserve(merged.t.size());
  for (double t : merged.t) merged.x.push_back(merged.ray.at(t));
  return merged;
}

}  // namespace retr::geom
