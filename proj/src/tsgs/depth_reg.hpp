#pragma once

#include "tsgs/core_types.hpp"
#include "tsgs/renderer.hpp"

namespace tsgs {

inline constexpr double kStdFloor = 1e-6;

struct DepthRegConfig {
  double lambda_sh = 1.0;
  double lambda_gl = 1.0;
  double gamma = 0.1;
  int patch_size = 8;
  double hard_override_omega = kDefaultHardOpacity;
  /// Least-squares scale/shift fit of the prior to the rendered depth before the soft/hard MSE.
  bool align_prior = true;
  /// Global-local term on the hard depth map instead of the soft one.
  bool gl_on_hard_depth = false;
};

void validate(const DepthRegConfig& config);

/// Pixels that are both inside the floating mask and labelled as a target.
MaskImage target_region(const LabelImage& id_mask, const MaskImage& floating_mask);

struct DepthLoss {
  double value = 0;
  ImageD d_depth;  // adjoint on the rendered depth map
};

/// Mean squared error between `rendered` and the (optionally aligned) prior over `region`.
DepthLoss masked_depth_mse(const ImageD& rendered, const ImageD& prior, const MaskImage& region, bool align);

/// Uses only the hard depth channel; the caller routes the adjoint to centers only.
DepthLoss hard_depth_loss(const RenderOutput& render, const ViewBundle& view, const DepthRegConfig& config);
/// Uses only the soft depth channel; the caller routes the adjoint to opacities only.
DepthLoss soft_depth_loss(const RenderOutput& render, const ViewBundle& view, const DepthRegConfig& config);

struct SoftHardLoss {
  double value = 0;
  DepthLoss hard;
  DepthLoss soft;
};

SoftHardLoss soft_hard_loss(const RenderOutput& render, const ViewBundle& view, const DepthRegConfig& config);

/// Patch mean removed, divided by the patch std (floored). Pixels outside mask are 0.
ImageD normalize_local(const ImageD& depth, const MaskImage& mask, int patch_size);
/// Patch mean removed, divided by the global std over the mask (floored).
ImageD normalize_global(const ImageD& depth, const MaskImage& mask, int patch_size);

/// MSE of global-normalized maps + γ · MSE of local-normalized maps; adjoint on `rendered`.
DepthLoss global_local_loss(const ImageD& rendered, const ImageD& prior, const MaskImage& mask,
                            const DepthRegConfig& config);

struct MultiScaleDepthLoss {
  double value = 0;
  SoftHardLoss soft_hard;
  DepthLoss global_local;
  // Adjoints already scaled by λ_SH / λ_GL.
  ImageD d_hard_centers_only;
  ImageD d_soft_opacity_only;
  ImageD d_gl;  // on soft depth, or hard depth when gl_on_hard_depth
};

MultiScaleDepthLoss multi_scale_depth_loss(const RenderOutput& render, const ViewBundle& view,
                                           const DepthRegConfig& config);

}  // namespace tsgs
