#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsgs/image.hpp"

namespace tsgs {

inline constexpr int kIdDim = 16;
inline constexpr int kMaxShDegree = 3;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternion stored (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using IdCode = Eigen::Matrix<double, kIdDim, 1>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double inverse_sigmoid(double p) { return std::log(p / (1.0 - p)); }

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// The optimizable scene. Attributes are stored struct-of-arrays; colors hold
/// sh_coeff_count(sh_degree) RGB triples per Gaussian, coefficient-major.
struct GaussianCloud {
  int sh_degree = 0;
  std::vector<Vec3> centers;
  std::vector<Vec3> log_scales;
  std::vector<Vec4> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> colors;
  std::vector<IdCode> identity_codes;

  std::size_t size() const { return centers.size(); }
  int color_stride() const { return 3 * sh_coeff_count(sh_degree); }

  double opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
  Vec3 scale(std::size_t i) const { return log_scales[i].array().exp(); }

  void resize(std::size_t n);
  /// Appends a copy of Gaussian i of src (which must share sh_degree).
  void push_back_from(const GaussianCloud& src, std::size_t i);
  /// New cloud holding Gaussians src[indices[k]] in order.
  static GaussianCloud gather(const GaussianCloud& src, const std::vector<std::size_t>& indices);
};

struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();
  int width = 1, height = 1;

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
};

/// One training view. floating_mask is 1 where a pixel takes part in losses.
struct ViewBundle {
  ImageD image;            // H×W×3, linear RGB
  LabelImage id_mask;      // H×W, 0 = background
  ImageD prior_depth;      // H×W
  MaskImage floating_mask; // H×W
};

/// Linear identity classifier: logits = weightᵀ·e + bias over C+1 classes.
struct ClassHead {
  Eigen::MatrixXd weight;  // kIdDim × (C+1)
  Eigen::VectorXd bias;    // C+1

  ClassHead() = default;
  explicit ClassHead(int instance_count)
      : weight(Eigen::MatrixXd::Zero(kIdDim, instance_count + 1)), bias(Eigen::VectorXd::Zero(instance_count + 1)) {}

  int class_count() const { return static_cast<int>(bias.size()); }
  int instance_count() const { return class_count() - 1; }
};

struct Box3 {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
};

struct Violation {
  std::int64_t index;  // -1 for cloud-level violations
  std::string message;
};

std::vector<Violation> validate_scene(const GaussianCloud& cloud);
std::vector<Violation> validate_camera(const Camera& camera);
std::vector<Violation> validate_view(const ViewBundle& view, const Camera& camera, int instance_count);

inline constexpr double kInitialOpacity = 0.1;
inline constexpr double kInitialCodeStd = 0.01;

/// Uniform random cloud inside bounds. Each initial standard deviation is the
/// mean distance to the three nearest initial centers.
GaussianCloud init_random_cloud(std::size_t count, const Box3& bounds, std::uint64_t seed, int sh_degree = 0);

/// Random head with uniform(-r, r) weights and zero bias.
ClassHead init_class_head(int instance_count, std::uint64_t seed, double range = 0.25);

Mat3 rotation_from_quaternion(const Vec4& q_unit);

/// Rounds every parameter to float32, the storage precision of checkpoints.
void snap_to_float(GaussianCloud& cloud);
void snap_to_float(ClassHead& head);

}  // namespace tsgs
