#pragma once

#include <cstdint>
#include <vector>

#include "tsgs/core_types.hpp"
#include "tsgs/depth_reg.hpp"
#include "tsgs/photometric.hpp"
#include "tsgs/renderer.hpp"
#include "tsgs/semantics.hpp"

namespace tsgs {

struct OptimizerConfig {
  double lr_centers = 1.6e-4;
  double lr_centers_final_factor = 0.01;  // center lr decays log-linearly to this fraction at the last iteration
  double lr_log_scales = 5e-3;
  double lr_rotations = 1e-3;
  double lr_opacity = 5e-2;
  double lr_colors = 2.5e-3;
  double lr_identity = 2.5e-3;
  double lr_head = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
  /// Multiplies the center lr (scene extent for world-scale invariance).
  double spatial_lr_scale = 1.0;
  int total_iterations = 10000;
};

void validate(const OptimizerConfig& config);

/// Center learning rate at a 1-based iteration.
double center_lr(const OptimizerConfig& config, int iteration);

struct AdamMoments {
  std::vector<double> m, v;
  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

struct AdamState {
  std::int64_t step = 0;
  AdamMoments centers, log_scales, rotations, opacity, colors, identity, head_weight, head_bias;

  static AdamState zeros(const GaussianCloud& cloud, const ClassHead& head);
  /// Moments follow `source` (old index per new Gaussian, -1 starts at zero).
  void remap(const std::vector<std::int64_t>& source, const GaussianCloud& new_cloud);
};

/// One Adam update of every parameter. Entries whose update is nonzero are
/// stored at float32 precision; updated quaternions are renormalized.
void adam_step(GaussianCloud& cloud, ClassHead& head, const GradientSet& grads, const HeadGradient& head_grad,
               AdamState& state, const OptimizerConfig& config, int iteration);

struct LossConfig {
  double lambda_color = 1.0;
  double lambda_id = 1.0;
  double lambda_d = 0.1;
  PhotometricConfig photometric;
  GroupingConfig grouping;
  DepthRegConfig depth;
  /// Restrict color and depth losses to the floating mask.
  bool use_floating_mask = true;
  /// Let the identity loss move geometry and opacity; otherwise it trains codes and head only.
  bool identity_reaches_geometry = false;
};

void validate(const LossConfig& config);

struct LossTerms {
  double l_color = 0, l_2d = 0, l_3d = 0, l_hard = 0, l_soft = 0, l_gl = 0, total = 0;
};

struct TotalLoss {
  LossTerms terms;
  GradientSet grads;
  HeadGradient head_grad;
  RenderOutput render;
};

/// Renders the view once and differentiates
/// λ_c·L_color + λ_id·(λ_2d·L_2d + λ_3d·L_3d) + λ_D·(λ_SH·(L_hard + L_soft) + λ_GL·L_GL).
/// Hard-depth adjoints reach centers only, soft-depth adjoints opacities only.
TotalLoss total_loss(const GaussianCloud& cloud, const ClassHead& head, const Camera& camera, const ViewBundle& view,
                     const LossConfig& config, const RenderSettings& settings, std::uint64_t sample_seed);

}  // namespace tsgs
