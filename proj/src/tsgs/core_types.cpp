#include "tsgs/core_types.hpp"

#include <Eigen/LU>
#include <cmath>
#include <random>
#include <sstream>

#include "tsgs/error.hpp"
#include "tsgs/kdtree.hpp"

namespace tsgs {

void GaussianCloud::resize(std::size_t n) {
  centers.resize(n, Vec3::Zero());
  log_scales.resize(n, Vec3::Zero());
  rotations.resize(n, Vec4(1, 0, 0, 0));
  opacity_logits.resize(n, 0.0);
  colors.resize(n * static_cast<std::size_t>(color_stride()), 0.0);
  identity_codes.resize(n, IdCode::Zero());
}

void GaussianCloud::push_back_from(const GaussianCloud& src, std::size_t i) {
  centers.push_back(src.centers[i]);
  log_scales.push_back(src.log_scales[i]);
  rotations.push_back(src.rotations[i]);
  opacity_logits.push_back(src.opacity_logits[i]);
  const auto stride = static_cast<std::size_t>(src.color_stride());
  colors.insert(colors.end(), src.colors.begin() + static_cast<std::ptrdiff_t>(i * stride),
                src.colors.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
  identity_codes.push_back(src.identity_codes[i]);
}

GaussianCloud GaussianCloud::gather(const GaussianCloud& src, const std::vector<std::size_t>& indices) {
  GaussianCloud out;
  out.sh_degree = src.sh_degree;
  out.centers.reserve(indices.size());
  for (std::size_t i : indices) out.push_back_from(src, i);
  return out;
}

namespace {

std::string describe(const char* what, std::size_t got, std::size_t want) {
  std::ostringstream os;
  os << what << " has length " << got << ", expected " << want;
  return os.str();
}

bool finite3(const Vec3& v) { return v.allFinite(); }

}  // namespace

std::vector<Violation> validate_scene(const GaussianCloud& cloud) {
  std::vector<Violation> out;
  const std::size_t n = cloud.size();
  if (cloud.sh_degree < 0 || cloud.sh_degree > kMaxShDegree) {
    out.push_back({-1, "sh_degree must lie in [0, 3]"});
    return out;
  }
  if (cloud.log_scales.size() != n) out.push_back({-1, describe("log_scales", cloud.log_scales.size(), n)});
  if (cloud.rotations.size() != n) out.push_back({-1, describe("rotations", cloud.rotations.size(), n)});
  if (cloud.opacity_logits.size() != n)
    out.push_back({-1, describe("opacity_logits", cloud.opacity_logits.size(), n)});
  if (cloud.identity_codes.size() != n)
    out.push_back({-1, describe("identity_codes", cloud.identity_codes.size(), n)});
  const std::size_t want_colors = n * static_cast<std::size_t>(cloud.color_stride());
  if (cloud.colors.size() != want_colors) out.push_back({-1, describe("colors", cloud.colors.size(), want_colors)});
  if (!out.empty()) return out;

  const auto stride = static_cast<std::size_t>(cloud.color_stride());
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::int64_t>(i);
    if (!finite3(cloud.centers[i])) out.push_back({idx, "center is not finite"});
    if (!finite3(cloud.log_scales[i])) out.push_back({idx, "log_scale is not finite"});
    const double qn = cloud.rotations[i].norm();
    if (!std::isfinite(qn) || std::abs(qn - 1.0) > 1e-6) {
      std::ostringstream os;
      os << "rotation quaternion norm " << qn << " deviates from 1";
      out.push_back({idx, os.str()});
    }
    if (!std::isfinite(cloud.opacity_logits[i])) out.push_back({idx, "opacity logit is not finite"});
    for (std::size_t c = 0; c < stride; ++c) {
      if (!std::isfinite(cloud.colors[i * stride + c])) {
        out.push_back({idx, "color coefficient is not finite"});
        break;
      }
    }
    if (!cloud.identity_codes[i].allFinite()) out.push_back({idx, "identity code is not finite"});
  }
  return out;
}

std::vector<Violation> validate_camera(const Camera& cam) {
  std::vector<Violation> out;
  if (cam.width <= 0 || cam.height <= 0) out.push_back({-1, "image dimensions must be positive"});
  if (!(cam.fx > 0) || !(cam.fy > 0)) out.push_back({-1, "focal lengths must be positive"});
  if (!(cam.cx >= 0 && cam.cx < cam.width) || !(cam.cy >= 0 && cam.cy < cam.height))
    out.push_back({-1, "principal point lies outside the image"});
  const Mat3 rrt = cam.rotation * cam.rotation.transpose();
  if (!((rrt - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6) || !(std::abs(cam.rotation.determinant() - 1) <= 1e-6))
    out.push_back({-1, "rotation is not orthonormal with determinant +1"});
  if (!cam.translation.allFinite()) out.push_back({-1, "translation is not finite"});
  return out;
}

std::vector<Violation> validate_view(const ViewBundle& view, const Camera& cam, int instance_count) {
  std::vector<Violation> out;
  auto shape_ok = [&](int w, int h) { return w == cam.width && h == cam.height; };
  if (!shape_ok(view.image.width, view.image.height) || view.image.channels != 3)
    out.push_back({-1, "image shape does not match camera"});
  if (!shape_ok(view.id_mask.width, view.id_mask.height)) out.push_back({-1, "id mask shape does not match camera"});
  if (!shape_ok(view.prior_depth.width, view.prior_depth.height))
    out.push_back({-1, "prior depth shape does not match camera"});
  if (!shape_ok(view.floating_mask.width, view.floating_mask.height))
    out.push_back({-1, "floating mask shape does not match camera"});
  if (!out.empty()) return out;
  for (std::size_t p = 0; p < view.id_mask.pixel_count(); ++p) {
    const int id = view.id_mask.data[p];
    if (id < 0 || id > instance_count) {
      std::ostringstream os;
      os << "id mask value " << id << " exceeds instance count " << instance_count;
      out.push_back({static_cast<std::int64_t>(p), os.str()});
      break;
    }
  }
  for (std::size_t p = 0; p < view.prior_depth.pixel_count(); ++p) {
    const double d = view.prior_depth.data[p];
    if (view.floating_mask.data[p] && !(std::isfinite(d) && d > 0)) {
      out.push_back({static_cast<std::int64_t>(p), "prior depth is not positive under the floating mask"});
      break;
    }
  }
  return out;
}

GaussianCloud init_random_cloud(std::size_t count, const Box3& bounds, std::uint64_t seed, int sh_degree) {
  if (count == 0) throw parameter_error("init_random_cloud: count must be at least 1");
  const Vec3 extent = bounds.hi - bounds.lo;
  if (!(extent.minCoeff() > 0) || !extent.allFinite())
    throw parameter_error("init_random_cloud: bounding box is degenerate");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) throw parameter_error("init_random_cloud: sh_degree out of range");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> code_noise(0.0, kInitialCodeStd);

  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (int a = 0; a < 3; ++a) cloud.centers[i][a] = bounds.lo[a] + unit(rng) * extent[a];
  }
  for (std::size_t i = 0; i < count; ++i) {
    for (int d = 0; d < kIdDim; ++d) cloud.identity_codes[i][d] = code_noise(rng);
  }

  const double fallback = 0.01 * extent.norm();
  const KdTree tree(cloud.centers);
  const std::size_t k = std::min<std::size_t>(3, count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    double sigma = fallback;
    if (k > 0) {
      const auto nn = tree.nearest(cloud.centers[i], k, static_cast<std::int64_t>(i));
      double sum = 0;
      for (const auto& n : nn) sum += std::sqrt(n.dist2);
      sigma = sum / static_cast<double>(nn.size());
      if (!(sigma > 0)) sigma = fallback;
    }
    cloud.log_scales[i] = Vec3::Constant(std::log(sigma));
    cloud.opacity_logits[i] = inverse_sigmoid(kInitialOpacity);
  }
  return cloud;
}

ClassHead init_class_head(int instance_count, std::uint64_t seed, double range) {
  if (instance_count < 0) throw parameter_error("init_class_head: negative instance count");
  ClassHead head(instance_count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-range, range);
  for (Eigen::Index c = 0; c < head.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < head.weight.rows(); ++r) head.weight(r, c) = u(rng);
  return head;
}

Mat3 rotation_from_quaternion(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

namespace {
inline void snap(double& v) { v = static_cast<double>(static_cast<float>(v)); }
}  // namespace

void snap_to_float(GaussianCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      snap(cloud.centers[i][a]);
      snap(cloud.log_scales[i][a]);
    }
    for (int a = 0; a < 4; ++a) snap(cloud.rotations[i][a]);
    snap(cloud.opacity_logits[i]);
    for (int d = 0; d < kIdDim; ++d) snap(cloud.identity_codes[i][d]);
  }
  for (double& v : cloud.colors) snap(v);
}

void snap_to_float(ClassHead& head) {
  for (Eigen::Index j = 0; j < head.weight.size(); ++j) snap(head.weight.data()[j]);
  for (Eigen::Index j = 0; j < head.bias.size(); ++j) snap(head.bias[j]);
}

}  // namespace tsgs
