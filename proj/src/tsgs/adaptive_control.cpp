#include "tsgs/adaptive_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tsgs/error.hpp"
#include "tsgs/semantics.hpp"

namespace tsgs {

void validate(const ControlConfig& c, int total_iterations) {
  if (c.densify_interval < 1) throw config_error("control: densify_interval must be positive");
  if (c.densify_from < 0 || c.densify_from >= c.densify_until)
    throw config_error("control: densify_from must be below densify_until");
  if (c.densify_until > total_iterations) throw config_error("control: densify_until exceeds the iteration count");
  if (!(c.roi_prob_threshold > 0 && c.roi_prob_threshold < 1))
    throw config_error("control: roi_prob_threshold must lie in (0, 1)");
  if (!(c.grad_threshold >= 0) || !(c.split_scale_threshold > 0) || !(c.opacity_prune_eps >= 0) ||
      !(c.max_screen_fraction > 0) || c.mask_dilation_px < 0)
    throw config_error("control: thresholds out of range");
}

std::vector<std::uint8_t> roi_membership(const GaussianCloud& cloud, const ClassHead& head,
                                         const ControlConfig& config) {
  const auto labels = gaussian_class(cloud, head);
  std::vector<std::uint8_t> roi(cloud.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    roi[i] = (labels[i].cls > 0 && labels[i].prob >= config.roi_prob_threshold) ? 1 : 0;
  return roi;
}

DensityStats DensityStats::zeros(std::size_t n) {
  DensityStats s;
  s.accum_grad2d.assign(n, 0.0);
  s.seen_count.assign(n, 0);
  s.accum_center_grad.assign(n, Vec3::Zero());
  s.max_radius_frac.assign(n, 0.0);
  return s;
}

void DensityStats::reset() { *this = zeros(size()); }

DensityStats DensityStats::remap(const std::vector<std::int64_t>& source) const {
  DensityStats s = zeros(source.size());
  for (std::size_t k = 0; k < source.size(); ++k) {
    if (source[k] < 0) continue;
    const auto i = static_cast<std::size_t>(source[k]);
    if (i >= size()) throw contract_violation("DensityStats::remap: source index out of range");
    s.accum_grad2d[k] = accum_grad2d[i];
    s.seen_count[k] = seen_count[i];
    s.accum_center_grad[k] = accum_center_grad[i];
    s.max_radius_frac[k] = max_radius_frac[i];
  }
  return s;
}

void accumulate(DensityStats& stats, const GradientSet& grads, const std::vector<std::uint8_t>& roi) {
  if (grads.size() != stats.size() || roi.size() != stats.size())
    throw contract_violation("accumulate: size mismatch");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (!roi[i] || !grads.visible[i]) continue;
    const double n = ++stats.seen_count[i];
    stats.accum_grad2d[i] += (grads.grad2d[i] - stats.accum_grad2d[i]) / n;
    stats.accum_center_grad[i] += grads.centers[i];
  }
}

void track_radii(DensityStats& stats, const std::vector<double>& radii, const Camera& camera) {
  if (radii.size() != stats.size()) throw contract_violation("track_radii: size mismatch");
  const double extent = std::max(camera.width, camera.height);
  for (std::size_t i = 0; i < radii.size(); ++i)
    stats.max_radius_frac[i] = std::max(stats.max_radius_frac[i], radii[i] / extent);
}

StructuralEdit densify(const GaussianCloud& cloud, const DensityStats& stats, const std::vector<std::uint8_t>& roi,
                       const ControlConfig& config, double scene_extent, std::uint64_t seed) {
  if (stats.size() != cloud.size() || roi.size() != cloud.size()) throw contract_violation("densify: size mismatch");
  StructuralEdit edit;
  edit.cloud.sh_degree = cloud.sh_degree;
  std::vector<std::size_t> clones, splits;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const bool eligible = config.semantic ? roi[i] != 0 : true;
    if (!eligible || !(stats.accum_grad2d[i] > config.grad_threshold)) {
      edit.cloud.push_back_from(cloud, i);
      edit.source.push_back(static_cast<std::int64_t>(i));
      continue;
    }
    if (cloud.scale(i).maxCoeff() <= config.split_scale_threshold * scene_extent) {
      edit.cloud.push_back_from(cloud, i);
      edit.source.push_back(static_cast<std::int64_t>(i));
      clones.push_back(i);
    } else {
      splits.push_back(i);
    }
  }

  for (std::size_t i : clones) {
    edit.cloud.push_back_from(cloud, i);
    edit.source.push_back(-1);
    const double g = stats.accum_center_grad[i].norm();
    if (g > 0) edit.cloud.centers.back() -= 0.5 * cloud.scale(i).maxCoeff() * stats.accum_center_grad[i] / g;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shrink = std::log(kSplitScaleDivisor);
  for (std::size_t i : splits) {
    const Mat3 r = rotation_from_quaternion(cloud.rotations[i].normalized());
    const Vec3 s = cloud.scale(i);
    for (int c = 0; c < kSplitChildren; ++c) {
      Vec3 z;
      for (int a = 0; a < 3; ++a) z[a] = normal(rng);
      edit.cloud.push_back_from(cloud, i);
      edit.source.push_back(-1);
      edit.cloud.centers.back() = cloud.centers[i] + r * s.cwiseProduct(z);
      edit.cloud.log_scales.back() = cloud.log_scales[i] - Vec3::Constant(shrink);
    }
  }
  edit.cloned = clones.size();
  edit.split = splits.size();
  return edit;
}

std::vector<PruneDecision> prune_decisions(const GaussianCloud& cloud, const std::vector<std::uint8_t>& roi,
                                           const DensityStats& stats, const ControlConfig& config, int iteration) {
  if (stats.size() != cloud.size() || roi.size() != cloud.size()) throw contract_violation("prune: size mismatch");
  const bool semantic_active = config.semantic && iteration >= config.semantic_prune_from;
  std::vector<PruneDecision> d(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    d[i].low_opacity = cloud.opacity(i) < config.opacity_prune_eps;
    d[i].oversized = stats.max_radius_frac[i] > config.max_screen_fraction;
    d[i].outside_roi = semantic_active && !roi[i];
  }
  return d;
}

StructuralEdit prune(const GaussianCloud& cloud, const std::vector<std::uint8_t>& roi, const DensityStats& stats,
                     const ControlConfig& config, int iteration) {
  const auto decisions = prune_decisions(cloud, roi, stats, config, iteration);
  StructuralEdit edit;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (decisions[i].remove()) {
      ++edit.removed;
    } else {
      keep.push_back(i);
      edit.source.push_back(static_cast<std::int64_t>(i));
    }
  }
  edit.cloud = GaussianCloud::gather(cloud, keep);
  return edit;
}

namespace {

// Lower envelope of parabolas: d[q] = min_p (q - p)² + f[p].
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      k = 0;
      continue;
    }
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (s <= z[static_cast<std::size_t>(k)]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[q] = static_cast<double>(q - p) * (q - p) + f[p];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const LabelImage& id_mask) {
  const int w = id_mask.width, h = id_mask.height;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t p = 0; p < grid.size(); ++p) grid[p] = id_mask.data[p] > 0 ? 0.0 : inf;
  const int n = std::max(w, h);
  std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n) + 1);
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y * w + x)];
    edt_1d(f.data(), d.data(), h, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y * w + x)] = d[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y * w + x)];
    edt_1d(f.data(), d.data(), w, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y * w + x)] = d[static_cast<std::size_t>(x)];
  }
  return grid;
}

MaskImage build_floating_mask(const LabelImage& id_mask, int dilation_px) {
  if (dilation_px < 0) throw parameter_error("build_floating_mask: negative dilation");
  const auto d2 = squared_distance_transform(id_mask);
  MaskImage out(id_mask.width, id_mask.height, 1);
  const double r2 = static_cast<double>(dilation_px) * dilation_px;
  for (std::size_t p = 0; p < d2.size(); ++p) out.data[p] = d2[p] <= r2 ? 1 : 0;
  return out;
}

}  // namespace tsgs
