#pragma once

#include <cstdint>
#include <vector>

#include "tsgs/core_types.hpp"
#include "tsgs/renderer.hpp"

namespace tsgs {

struct ControlConfig {
  int densify_interval = 100;
  int densify_from = 500;
  int densify_until = 7500;
  double grad_threshold = 2e-4;
  double split_scale_threshold = 0.01;
  double roi_prob_threshold = 0.6;
  int semantic_prune_from = 1500;
  double opacity_prune_eps = 0.005;
  int mask_dilation_px = 12;
  double max_screen_fraction = 0.2;
  /// When false, statistics accumulate for every Gaussian and out-of-ROI pruning is off.
  bool semantic = true;
};

void validate(const ControlConfig& config, int total_iterations);

/// Argmax class is non-background and its probability is at least the threshold.
std::vector<std::uint8_t> roi_membership(const GaussianCloud& cloud, const ClassHead& head,
                                         const ControlConfig& config);

/// Running densification statistics, one entry per Gaussian.
struct DensityStats {
  std::vector<double> accum_grad2d;   // running mean of per-view screen-space gradient norms
  std::vector<std::uint32_t> seen_count;
  std::vector<Vec3> accum_center_grad;  // summed world-space center gradients (clone direction)
  std::vector<double> max_radius_frac;  // largest screen radius / image extent over seen views

  static DensityStats zeros(std::size_t n);
  std::size_t size() const { return accum_grad2d.size(); }
  void reset();
  /// Keeps entries source[k] (new Gaussians, marked -1, start at zero).
  DensityStats remap(const std::vector<std::int64_t>& source) const;
};

/// Adds one view's gradient norms for visible Gaussians in `roi`.
void accumulate(DensityStats& stats, const GradientSet& grads, const std::vector<std::uint8_t>& roi);
/// Tracks the screen-space radius as a fraction of the larger image side.
void track_radii(DensityStats& stats, const std::vector<double>& radii, const Camera& camera);

struct StructuralEdit {
  GaussianCloud cloud;
  /// Old index for every Gaussian of the new cloud; -1 for newly created ones.
  std::vector<std::int64_t> source;
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t removed = 0;
};

inline constexpr int kSplitChildren = 2;
inline constexpr double kSplitScaleDivisor = 1.6;

StructuralEdit densify(const GaussianCloud& cloud, const DensityStats& stats, const std::vector<std::uint8_t>& roi,
                       const ControlConfig& config, double scene_extent, std::uint64_t seed);

/// Removal reasons for one Gaussian.
struct PruneDecision {
  bool low_opacity = false;
  bool oversized = false;
  bool outside_roi = false;
  bool remove() const { return low_opacity || oversized || outside_roi; }
};

std::vector<PruneDecision> prune_decisions(const GaussianCloud& cloud, const std::vector<std::uint8_t>& roi,
                                           const DensityStats& stats, const ControlConfig& config, int iteration);

StructuralEdit prune(const GaussianCloud& cloud, const std::vector<std::uint8_t>& roi, const DensityStats& stats,
                     const ControlConfig& config, int iteration);

/// Exact squared Euclidean distance to the nearest pixel with id > 0 (infinite when none).
std::vector<double> squared_distance_transform(const LabelImage& id_mask);

/// Disc dilation of the union of target IDs.
MaskImage build_floating_mask(const LabelImage& id_mask, int dilation_px);

}  // namespace tsgs
