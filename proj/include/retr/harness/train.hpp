// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "retr/harness/loss.hpp"
#include "retr/nn/adam.hpp"

namespace retr::harness {

struct TrainConfig {
  int rays_per_step = 256;
  int steps = 2000;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  double alpha = 1.0;  // depth-loss weight
  int n_coarse = 64;
  int n_fine = 64;
  uint64_t seed = 0;
  int max_source_views = 4;
  int checkpoint_every = 500;
  std::vector<int> train_views;  // empty = all dataset views
};

struct LossRow {
  int step = 0;
  double lr = 0, loss = 0, loss_color = 0, loss_depth = 0;
};

struct TrainResult {
  std::vector<LossRow> log;
  std::string checkpoint_path;       // final (or last good on abort)
  std::optional<int> aborted_step;   // set when a non-finite loss stopped training
};

/// Writes `loss_log.csv` (header step,lr,loss,loss_color,loss_depth),
/// `checkpoint.bin` and periodic `checkpoint_latest.bin` under out_dir.
/// Deterministic for a fixed seed: per-step view/pixel draws and per-ray
/// sampling seeds derive from (seed, step, ray); ray chunks are fixed-count
/// and reduced in order, so results do not depend on the thread budget.
/// A non-finite loss aborts with the step recorded and the last periodic
/// checkpoint left on disk.
TrainResult train(render::Model& model, const scenes::Dataset& dataset, const TrainConfig& cfg,
                  const std::string& out_dir);

/// Trailing-window mean of the loss column, the smoothed series the
/// acceptance gate reads (window 50).
std::vector<double> smoothed_loss(const std::vector<LossRow>& log, int window = 50);

}  // namespace retr::harness
