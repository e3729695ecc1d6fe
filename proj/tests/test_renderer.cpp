#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <Eigen/Eigenvalues>

#include "support/oracles.hpp"
#include "tsgs/error.hpp"
#include "tsgs/parallel.hpp"
#include "tsgs/sh.hpp"

using namespace tsgs;

namespace {

// One isotropic Gaussian on the optical axis at depth d.
GaussianCloud on_axis(std::initializer_list<double> depths, double sigma = 0.1, double opacity = 0.5) {
  GaussianCloud c;
  c.resize(depths.size());
  std::size_t i = 0;
  for (double d : depths) {
    c.centers[i] = Vec3(0, 0, d);
    c.log_scales[i] = Vec3::Constant(std::log(sigma));
    c.opacity_logits[i] = inverse_sigmoid(opacity);
    c.identity_codes[i] = IdCode::Constant(static_cast<double>(i + 1));
    for (int k = 0; k < 3; ++k) c.colors[3 * i + k] = color_to_dc(0.2 * static_cast<double>(i + 1) + 0.1 * k);
    ++i;
  }
  return c;
}

Camera centered_camera(int w, int h, double f) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2 + 0.5;
  cam.cy = h / 2 + 0.5;
  cam.width = w;
  cam.height = h;
  return cam;
}

double max_diff(const ImageD& a, const ImageD& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
  return d;
}

bool bit_equal(const ImageD& a, const ImageD& b) {
  return a.data.size() == b.data.size() && std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

PixelAdjoints random_adjoints(std::mt19937_64& rng, const Camera& cam) {
  PixelAdjoints pa;
  pa.color = oracle::random_image(rng, cam.width, cam.height, 3, -1, 1);
  pa.id_feature = oracle::random_image(rng, cam.width, cam.height, kIdDim, -1, 1);
  pa.soft_depth = oracle::random_image(rng, cam.width, cam.height, 1, -1, 1);
  pa.hard_depth = oracle::random_image(rng, cam.width, cam.height, 1, -1, 1);
  pa.accum_alpha = oracle::random_image(rng, cam.width, cam.height, 1, -1, 1);
  return pa;
}

double dot(const ImageD& adj, const ImageD& img) {
  if (adj.empty()) return 0;
  double v = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) v += adj.data[i] * img.data[i];
  return v;
}

double functional(const PixelAdjoints& pa, const RenderOutput& o) {
  return dot(pa.color, o.color) + dot(pa.id_feature, o.id_feature) + dot(pa.soft_depth, o.soft_depth) +
         dot(pa.hard_depth, o.hard_depth) + dot(pa.accum_alpha, o.accum_alpha);
}

}  // namespace

TEST_SUITE("renderer") {

TEST_CASE("on-axis Gaussian projects to the principal point") {
  const Camera cam = oracle::simple_camera(16, 12, 20);
  const auto p = project(on_axis({3.0}), cam);
  REQUIRE(p.size() == 1);
  CHECK(p[0].mean2d.x() == doctest::Approx(cam.cx).epsilon(1e-12));
  CHECK(p[0].mean2d.y() == doctest::Approx(cam.cy).epsilon(1e-12));
}

TEST_CASE("isotropic on-axis covariance has the closed form") {
  const Camera cam = oracle::simple_camera(16, 12, 20);
  const double sigma = 0.15, d = 2.5;
  const auto p = project(on_axis({d}, sigma), cam);
  REQUIRE(p.size() == 1);
  const double want = std::pow(cam.fx * sigma / d, 2) + 0.3;
  CHECK(std::abs(p[0].cov2d(0, 0) - want) < 1e-6);
  CHECK(std::abs(p[0].cov2d(1, 1) - want) < 1e-6);
  CHECK(std::abs(p[0].cov2d(0, 1)) < 1e-12);
}

TEST_CASE("projection sorts by depth") {
  const Camera cam = oracle::simple_camera(16, 12, 20);
  const auto p = project(on_axis({2.0, 1.0}), cam);
  REQUIRE(p.size() == 2);
  CHECK(p[0].view_depth == doctest::Approx(1.0));
  CHECK(p[1].view_depth == doctest::Approx(2.0));
  CHECK(p[0].source_index == 1);
}

TEST_CASE("equal depths tie-break on source index") {
  const Camera cam = oracle::simple_camera(16, 12, 20);
  const auto p = project(on_axis({2.0, 2.0, 2.0}), cam);
  REQUIRE(p.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i].source_index == i);
}

TEST_CASE("Gaussians behind the near plane are culled") {
  const Camera cam = oracle::simple_camera(16, 12, 20);
  CHECK(project(on_axis({0.1, -1.0}), cam).empty());
}

TEST_CASE("projected covariance respects the dilation floor") {
  std::mt19937_64 rng(4);
  const Camera cam = oracle::simple_camera(16, 16, 18);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 20, 0);
  for (const auto& g : project(cloud, cam)) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(g.cov2d);
    CHECK(es.eigenvalues().minCoeff() >= kCovDilation - 1e-12);
    CHECK(g.view_depth > kNearPlane);
  }
}

TEST_CASE("single Gaussian at half alpha") {
  const Camera cam = centered_camera(9, 9, 10);
  const GaussianCloud cloud = on_axis({2.0}, 0.1, 0.5);
  const RenderOutput out = render(cloud, cam);
  const int x = 4, y = 4;  // pixel center coincides with the splat mean
  CHECK(out.accum_alpha.at(x, y) == doctest::Approx(0.5).epsilon(1e-12));
  for (int d = 0; d < kIdDim; ++d) CHECK(out.id_feature.at(x, y, d) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.soft_depth.at(x, y) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("two Gaussians at half alpha weigh 0.5 and 0.25") {
  const Camera cam = centered_camera(9, 9, 10);
  GaussianCloud cloud = on_axis({2.0, 3.0}, 0.1, 0.5);
  cloud.identity_codes[0] = IdCode::Zero();
  cloud.identity_codes[0][0] = 1.0;
  cloud.identity_codes[1] = IdCode::Zero();
  cloud.identity_codes[1][1] = 1.0;
  const RenderOutput out = render(cloud, cam);
  CHECK(out.accum_alpha.at(4, 4) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(out.id_feature.at(4, 4, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.id_feature.at(4, 4, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out.soft_depth.at(4, 4) == doctest::Approx((0.5 * 2 + 0.25 * 3) / 0.75).epsilon(1e-12));
  // hard chain: both alphas overridden to 0.95
  CHECK(out.hard_depth.at(4, 4) == doctest::Approx((0.95 * 2 + 0.05 * 0.95 * 3) / (0.95 + 0.05 * 0.95)).epsilon(1e-12));
}

TEST_CASE("uncovered pixels get the background depth") {
  const Camera cam = centered_camera(32, 32, 40);
  RenderSettings s;
  s.background_depth = 7.5;
  const RenderOutput out = render(on_axis({2.0}, 0.01), cam, s);
  CHECK(out.accum_alpha.at(0, 0) == 0.0);
  CHECK(out.soft_depth.at(0, 0) == 7.5);
  CHECK(out.hard_depth.at(0, 0) == 7.5);
  CHECK(out.color.at(0, 0, 1) == 0.0);
}

TEST_CASE("tile renderer matches the reference loop") {
  std::mt19937_64 rng(21);
  for (int s = 0; s < 10; ++s) {
    const Camera cam = oracle::simple_camera(8 + s, 8 + (s * 3) % 9, 12);
    const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 3 + s % 8, s % 4);
    const RenderOutput out = render(cloud, cam);
    const auto ref = oracle::reference_render(cloud, cam);
    CHECK(max_diff(out.color, ref.color) < 1e-6);
    CHECK(max_diff(out.id_feature, ref.id_feature) < 1e-6);
    CHECK(max_diff(out.soft_depth, ref.soft_depth) < 1e-6);
    CHECK(max_diff(out.hard_depth, ref.hard_depth) < 1e-6);
    CHECK(max_diff(out.accum_alpha, ref.accum_alpha) < 1e-6);
    CHECK(ref.transmittance_monotone);
  }
}

TEST_CASE("large scenes span several tiles") {
  std::mt19937_64 rng(8);
  const Camera cam = oracle::simple_camera(40, 35, 45);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 30, 1);
  const RenderOutput out = render(cloud, cam);
  const auto ref = oracle::reference_render(cloud, cam);
  CHECK(max_diff(out.color, ref.color) < 1e-6);
  CHECK(max_diff(out.soft_depth, ref.soft_depth) < 1e-6);
}

TEST_CASE("accumulated alpha and identity features stay bounded") {
  std::mt19937_64 rng(12);
  const Camera cam = oracle::simple_camera(16, 16, 18);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 12, 0);
  const RenderOutput out = render(cloud, cam);
  double max_code = 0;
  for (const auto& e : cloud.identity_codes) max_code = std::max(max_code, e.norm());
  for (std::size_t p = 0; p < out.accum_alpha.pixel_count(); ++p) {
    CHECK(out.accum_alpha.data[p] >= 0.0);
    CHECK(out.accum_alpha.data[p] <= 1.0);
    double n = 0;
    for (double v : out.id_feature.pixel(p)) n += v * v;
    CHECK(std::sqrt(n) <= max_code + 1e-12);
  }
}

TEST_CASE("permuted projections re-sort to identical output") {
  std::mt19937_64 rng(17);
  const Camera cam = oracle::simple_camera(16, 16, 18);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 9, 1);
  auto proj = project(cloud, cam);
  const RenderOutput a = composite(proj, cam, cloud);
  std::shuffle(proj.begin(), proj.end(), rng);
  std::sort(proj.begin(), proj.end(), [](const ProjectedGaussian& x, const ProjectedGaussian& y) {
    return x.view_depth < y.view_depth || (x.view_depth == y.view_depth && x.source_index < y.source_index);
  });
  const RenderOutput b = composite(proj, cam, cloud);
  CHECK(bit_equal(a.color, b.color));
  CHECK(bit_equal(a.id_feature, b.id_feature));
  CHECK(bit_equal(a.hard_depth, b.hard_depth));
}

TEST_CASE("unsorted input is a contract violation") {
  const Camera cam = oracle::simple_camera(16, 12, 20);
  const GaussianCloud cloud = on_axis({1.0, 2.0});
  auto proj = project(cloud, cam);
  std::swap(proj[0], proj[1]);
  try {
    composite(proj, cam, cloud);
    FAIL("expected a contract violation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::contract);
  }
}

TEST_CASE("zero adjoints give zero gradients") {
  std::mt19937_64 rng(2);
  const Camera cam = oracle::simple_camera(8, 8, 10);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 3, 1);
  const RenderOutput out = render(cloud, cam);
  const GradientSet g = backward(out, cloud, PixelAdjoints{});
  for (double v : oracle::flatten_gradient(g, cloud, kParamAll)) CHECK(v == 0.0);
}

TEST_CASE("every parameter gradient matches central differences") {
  std::mt19937_64 rng(31);
  for (int s = 0; s < 4; ++s) {
    const Camera cam = oracle::simple_camera(8, 8, 10);
    GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 3, s);
    const PixelAdjoints pa = random_adjoints(rng, cam);
    const RenderOutput out = render(cloud, cam);
    const GradientSet g = backward(out, cloud, pa);
    auto f = [&] { return functional(pa, render(cloud, cam)); };
    const auto rep = oracle::check_gradient(f, oracle::parameter_pointers(cloud, kParamAll),
                                            oracle::flatten_gradient(g, cloud, kParamAll));
    CHECK(rep.checked > 0);
    CHECK(rep.failed == 0);
  }
}

TEST_CASE("color adjoint leaves identity gradients at zero") {
  std::mt19937_64 rng(3);
  const Camera cam = oracle::simple_camera(8, 8, 10);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 3, 0);
  PixelAdjoints pa;
  pa.color = oracle::random_image(rng, 8, 8, 3, -1, 1);
  const GradientSet g = backward(render(cloud, cam), cloud, pa);
  for (const auto& e : g.identity_codes) CHECK(e.isZero(0));
}

TEST_CASE("hard depth gradients never reach opacities or colors") {
  std::mt19937_64 rng(6);
  const Camera cam = oracle::simple_camera(8, 8, 10);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 4, 0);
  PixelAdjoints pa;
  pa.hard_depth = oracle::random_image(rng, 8, 8, 1, -1, 1);
  const GradientSet g = backward(render(cloud, cam), cloud, pa);
  for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(g.opacity_logits[i] == 0.0);
  for (double v : g.colors) CHECK(v == 0.0);
  double center_norm = 0;
  for (const auto& c : g.centers) center_norm += c.norm();
  CHECK(center_norm > 0);
}

TEST_CASE("parameter masks freeze the unselected groups exactly") {
  std::mt19937_64 rng(14);
  const Camera cam = oracle::simple_camera(8, 8, 10);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 4, 1);
  const RenderOutput out = render(cloud, cam);
  for (unsigned mask : {unsigned(kParamCenters), unsigned(kParamOpacities), unsigned(kParamColors | kParamIdentity)}) {
    AdjointGroup grp{random_adjoints(rng, cam), mask};
    const GradientSet g = backward(out, cloud, std::span<const AdjointGroup>(&grp, 1));
    const GradientSet full = backward(out, cloud, grp.adjoints);
    for (unsigned bit = 1; bit < kParamAll; bit <<= 1) {
      const auto got = oracle::flatten_gradient(g, cloud, bit);
      const auto want = oracle::flatten_gradient(full, cloud, bit);
      for (std::size_t k = 0; k < got.size(); ++k) {
        if (mask & bit)
          CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
        else
          CHECK(got[k] == 0.0);
      }
    }
  }
}

TEST_CASE("gradients of several groups add up") {
  std::mt19937_64 rng(15);
  const Camera cam = oracle::simple_camera(10, 9, 11);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 5, 0);
  const RenderOutput out = render(cloud, cam);
  const AdjointGroup groups[2] = {{random_adjoints(rng, cam), kParamAll}, {random_adjoints(rng, cam), kParamAll}};
  const GradientSet both = backward(out, cloud, groups);
  GradientSet sum = backward(out, cloud, groups[0].adjoints);
  sum.add(backward(out, cloud, groups[1].adjoints));
  const auto a = oracle::flatten_gradient(both, cloud, kParamAll);
  const auto b = oracle::flatten_gradient(sum, cloud, kParamAll);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-10));
}

TEST_CASE("results do not depend on the thread count") {
  std::mt19937_64 rng(19);
  const Camera cam = oracle::simple_camera(48, 40, 50);
  const GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 40, 1);
  const PixelAdjoints pa = random_adjoints(rng, cam);
  const int before = thread_count();
  set_thread_count(1);
  const RenderOutput a = render(cloud, cam);
  const auto ga = oracle::flatten_gradient(backward(a, cloud, pa), cloud, kParamAll);
  set_thread_count(4);
  const RenderOutput b = render(cloud, cam);
  const auto gb = oracle::flatten_gradient(backward(b, cloud, pa), cloud, kParamAll);
  set_thread_count(before);
  CHECK(bit_equal(a.color, b.color));
  CHECK(bit_equal(a.soft_depth, b.soft_depth));
  CHECK(std::memcmp(ga.data(), gb.data(), ga.size() * sizeof(double)) == 0);
}

TEST_CASE("screen-space gradient statistics are reported for visible Gaussians") {
  std::mt19937_64 rng(23);
  const Camera cam = oracle::simple_camera(8, 8, 10);
  GaussianCloud cloud = oracle::random_visible_cloud(rng, cam, 3, 0);
  cloud.centers.push_back(Vec3(0, 0, -5));
  cloud.log_scales.push_back(Vec3::Zero());
  cloud.rotations.push_back(Vec4(1, 0, 0, 0));
  cloud.opacity_logits.push_back(0);
  cloud.colors.insert(cloud.colors.end(), 3, 0.0);
  cloud.identity_codes.push_back(IdCode::Zero());
  PixelAdjoints pa;
  pa.color = oracle::random_image(rng, 8, 8, 3, -1, 1);
  const RenderOutput out = render(cloud, cam);
  const GradientSet g = backward(out, cloud, pa);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g.visible[i] == 1);
    CHECK(g.grad2d[i] > 0);
  }
  CHECK(g.visible[3] == 0);
  CHECK(g.grad2d[3] == 0.0);
  CHECK(out.radii[3] == 0.0);
}

TEST_CASE("background depth follows the camera spread") {
  std::vector<Camera> cams(2, oracle::simple_camera(8, 8, 10));
  cams[0].translation = Vec3(1, 0, 0);
  cams[1].translation = Vec3(-1, 0, 0);
  CHECK(default_background_depth(cams) == doctest::Approx(1.1 * 2.0 * 1.0));
}

}  // TEST_SUITE
