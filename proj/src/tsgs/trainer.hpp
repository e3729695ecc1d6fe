#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tsgs/adaptive_control.hpp"
#include "tsgs/dataset_io.hpp"
#include "tsgs/optimizer.hpp"

namespace tsgs {

struct TrainConfig {
  OptimizerConfig optimizer;
  LossConfig loss;
  ControlConfig control;
  int init_points = 10000;
  int sh_degree = 0;
  /// Off: no identity loss, no ROI gating, no semantic pruning, full-frame losses.
  bool semantic = true;
  /// Off: λ_D = 0.
  bool depth_reg = true;
  int holdout_every = 500;
  int checkpoint_every = 1000;  // 0 writes only the final checkpoint
  std::uint64_t seed = 0;
};

/// Config with the ablation switches and iteration clamps applied.
TrainConfig effective_config(const TrainConfig& config);
void validate(const TrainConfig& config);

struct MetricRecord {
  int iter = 0;
  LossTerms terms;
  std::size_t n_gaussians = 0;
  std::optional<double> psnr_holdout;
};

/// One NDJSON line (no trailing newline).
std::string to_json_line(const MetricRecord& record);

struct PruneEvent {
  int iteration = 0;
  const GaussianCloud* survivors = nullptr;
  const ClassHead* head = nullptr;
  const ControlConfig* control = nullptr;
  std::size_t removed = 0;
  std::size_t densified_size = 0;  // cloud size between densify and prune
};

struct TrainHooks {
  std::function<void(const PruneEvent&)> on_prune;
  std::ostream* metrics = nullptr;          // receives NDJSON lines as they are produced
  std::optional<std::filesystem::path> out_dir;  // checkpoints are written here when set
};

struct TrainResult {
  GaussianCloud cloud;
  ClassHead head;
  std::vector<MetricRecord> metrics;
  std::uint64_t render_calls = 0;  // training renders only
  int iterations = 0;
};

RenderSettings training_render_settings(const Dataset& dataset, const TrainConfig& config);
/// 1.1 × the largest camera distance from the camera centroid.
double scene_extent(const std::vector<Camera>& cameras);
/// Manifest bounds, or a cube around the camera centroid sized by the camera spread.
Box3 initial_bounds(const Dataset& dataset);

double mean_holdout_psnr(const GaussianCloud& cloud, const Dataset& dataset, const RenderSettings& settings);

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks = {});

/// Key = value overrides. Returns the keys that were set. Unknown or repeated
/// keys and unparsable values raise a configuration error.
std::vector<std::string> apply_config_text(TrainConfig& config, const std::string& text);
std::vector<std::string> config_keys();

}  // namespace tsgs
