#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tsgs/core_types.hpp"

namespace tsgs {

// Splatting constants.
inline constexpr double kCovDilation = 0.3;          // px², added to both axes of the 2D covariance
inline constexpr double kAlphaMax = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;     // smaller contributions are skipped
inline constexpr double kTransmittanceStop = 1e-4;
inline constexpr double kNearPlane = 0.2;
inline constexpr double kAccumFloor = 1e-3;          // depth normalization threshold on accumulated alpha
inline constexpr double kDefaultHardOpacity = 0.95;
inline constexpr int kTileSize = 16;

struct RenderSettings {
  /// Depth written where accumulated alpha is below kAccumFloor.
  double background_depth = 10.0;
  /// Opacity override used for the hard depth chain.
  double hard_opacity = kDefaultHardOpacity;
  Vec3 background_color = Vec3::Zero();
};

/// Background depth convention: 1.1 × the diameter of the sphere around the
/// camera centers' centroid that contains every camera.
double default_background_depth(std::span<const Camera> cameras);

struct ProjectedGaussian {
  std::size_t source_index = 0;
  Vec3 cam_point = Vec3::Zero();
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  Vec3 conic = Vec3::Zero();  // (a, b, c) with cov2d⁻¹ = [[a, b], [b, c]]
  double view_depth = 0;
  double opacity = 0;
  Vec3 eval_color = Vec3::Zero();
  std::array<bool, 3> color_clamped{};
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // pixel rectangle [x0, x1) × [y0, y1) that may receive alpha ≥ kAlphaMin
  double radius = 0;                   // 3σ of the major axis, pixels
  double q_cut = 0;                    // beyond this Mahalanobis distance² neither chain reaches kAlphaMin
};

/// EWA projection with depth sort (ascending view depth, ties by source index).
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& camera,
                                       const RenderSettings& settings = {});

/// dᵀ Σ⁻¹ d at pixel center (px, py); the falloff is exp(-½ q).
inline double splat_q(const ProjectedGaussian& g, double px, double py, double& dx, double& dy) {
  dx = px - g.mean2d.x();
  dy = py - g.mean2d.y();
  return g.conic.x() * dx * dx + 2.0 * g.conic.y() * dx * dy + g.conic.z() * dy * dy;
}

enum Channel : unsigned {
  kChannelColor = 1u << 0,
  kChannelId = 1u << 1,
  kChannelSoftDepth = 1u << 2,
  kChannelHardDepth = 1u << 3,
  kChannelAlpha = 1u << 4,
  kChannelAll = 0x1Fu,
};

struct RenderState;

struct RenderOutput {
  ImageD color;        // H×W×3
  ImageD id_feature;   // H×W×16
  ImageD soft_depth;   // H×W
  ImageD hard_depth;   // H×W
  ImageD accum_alpha;  // H×W
  /// Screen radius per source Gaussian for this view, 0 when culled.
  std::vector<double> radii;
  std::shared_ptr<const RenderState> backward_state;
};

/// Front-to-back tile compositing of a depth-sorted projection.
RenderOutput composite(std::span<const ProjectedGaussian> projected, const Camera& camera, const GaussianCloud& cloud,
                       const RenderSettings& settings = {}, unsigned channels = kChannelAll);

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings = {},
                    unsigned channels = kChannelAll);

enum ParamGroup : unsigned {
  kParamCenters = 1u << 0,
  kParamLogScales = 1u << 1,
  kParamRotations = 1u << 2,
  kParamOpacities = 1u << 3,
  kParamColors = 1u << 4,
  kParamIdentity = 1u << 5,
  kParamAll = 0x3Fu,
};

/// dL/d(output pixel) per channel. Empty images stand for zero adjoints.
struct PixelAdjoints {
  ImageD color;
  ImageD id_feature;
  ImageD soft_depth;
  ImageD hard_depth;
  ImageD accum_alpha;
};

/// Adjoints whose gradient may only reach the parameter groups in `params`.
struct AdjointGroup {
  PixelAdjoints adjoints;
  unsigned params = kParamAll;
};

struct GradientSet {
  std::vector<Vec3> centers;
  std::vector<Vec3> log_scales;
  std::vector<Vec4> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> colors;
  std::vector<IdCode> identity_codes;
  /// Screen-space positional gradient norm (NDC units) for the rendered view.
  std::vector<double> grad2d;
  std::vector<std::uint8_t> visible;

  static GradientSet zeros_like(const GaussianCloud& cloud);
  std::size_t size() const { return centers.size(); }
  /// this += scale · other over the parameter gradients; grad2d and visible are left as they are.
  void add(const GradientSet& other, double scale = 1.0);
};

GradientSet backward(const RenderOutput& output, const GaussianCloud& cloud, std::span<const AdjointGroup> groups);
GradientSet backward(const RenderOutput& output, const GaussianCloud& cloud, const PixelAdjoints& adjoints);

}  // namespace tsgs
