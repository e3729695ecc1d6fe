#include "tsgs/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "tsgs/error.hpp"
#include "tsgs/parallel.hpp"
#include "tsgs/sh.hpp"

namespace tsgs {

struct RenderState {
  Camera camera;
  RenderSettings settings;
  unsigned channels = 0;
  std::size_t cloud_size = 0;
  std::vector<ProjectedGaussian> projected;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::uint32_t> tile_offsets;  // CSR offsets into tile_entries
  std::vector<std::uint32_t> tile_entries;  // indices into projected, depth order per tile
  // Per pixel.
  std::vector<double> final_t, final_t_hard;
  std::vector<double> depth_sum, depth_sum_hard;  // unnormalized Σ w·z
  std::vector<std::uint32_t> n_soft, n_hard;     // one past the last contributing list position
};

double default_background_depth(std::span<const Camera> cameras) {
  if (cameras.empty()) return 10.0;
  Vec3 centroid = Vec3::Zero();
  for (const auto& c : cameras) centroid += c.center();
  centroid /= static_cast<double>(cameras.size());
  double radius = 0;
  for (const auto& c : cameras) radius = std::max(radius, (c.center() - centroid).norm());
  if (cameras.size() == 1 || radius <= 0) radius = cameras.front().center().norm();
  if (radius <= 0) radius = 1.0;
  return 1.1 * 2.0 * radius;
}

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& camera,
                                       const RenderSettings& settings) {
  std::vector<ProjectedGaussian> out;
  out.reserve(cloud.size());
  const Mat3& w = camera.rotation;
  const Vec3 cam_center = camera.center();
  const double log255 = std::log(255.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 t = camera.to_camera(cloud.centers[i]);
    if (!(t.z() > kNearPlane)) continue;

    const Vec4 q = cloud.rotations[i].normalized();
    const Mat3 r = rotation_from_quaternion(q);
    const Vec3 s = cloud.log_scales[i].array().exp();
    const Mat3 m3 = r * s.asDiagonal();
    const Mat3 sigma = m3 * m3.transpose();

    const double iz = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.fx * iz, 0, -camera.fx * t.x() * iz * iz, 0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> tm = j * w;
    Mat2 cov = tm * sigma * tm.transpose();
    cov(0, 0) += kCovDilation;
    cov(1, 1) += kCovDilation;
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    if (!(det > 0) || !std::isfinite(det)) continue;

    ProjectedGaussian g;
    g.source_index = i;
    g.cam_point = t;
    g.mean2d = Vec2(camera.fx * t.x() * iz + camera.cx, camera.fy * t.y() * iz + camera.cy);
    g.cov2d = cov;
    g.conic = Vec3(cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det);
    g.view_depth = t.z();
    g.opacity = cloud.opacity(i);

    // Largest q with alpha ≥ kAlphaMin on either compositing chain.
    const double peak = std::max(g.opacity, settings.hard_opacity);
    const double q_max = 2.0 * (log255 + std::log(peak));
    if (!(q_max > 0)) continue;
    g.q_cut = q_max + 1e-9;
    const double ex = std::sqrt(q_max * cov(0, 0));
    const double ey = std::sqrt(q_max * cov(1, 1));
    auto lo = [](double v, int size) {
      return static_cast<int>(std::floor(std::clamp(v, -2.0, static_cast<double>(size) + 2.0))) - 1;
    };
    auto hi = [](double v, int size) {
      return static_cast<int>(std::ceil(std::clamp(v, -2.0, static_cast<double>(size) + 2.0))) + 2;
    };
    g.x0 = std::max(0, lo(g.mean2d.x() - ex - 0.5, camera.width));
    g.x1 = std::min(camera.width, hi(g.mean2d.x() + ex - 0.5, camera.width));
    g.y0 = std::max(0, lo(g.mean2d.y() - ey - 0.5, camera.height));
    g.y1 = std::min(camera.height, hi(g.mean2d.y() + ey - 0.5, camera.height));
    if (g.x0 >= g.x1 || g.y0 >= g.y1) continue;

    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    g.radius = 3.0 * std::sqrt(mid + std::sqrt(std::max(0.0, mid * mid - det)));

    const Vec3 dir = (cloud.centers[i] - cam_center).normalized();
    const ShBasis basis = sh_basis(dir, cloud.sh_degree);
    g.eval_color = sh_to_color(basis, cloud.sh_degree,
                               cloud.colors.data() + i * static_cast<std::size_t>(cloud.color_stride()),
                               &g.color_clamped);
    out.push_back(g);
  }
  std::sort(out.begin(), out.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
    return a.view_depth < b.view_depth || (a.view_depth == b.view_depth && a.source_index < b.source_index);
  });
  return out;
}

namespace {

void check_sorted(std::span<const ProjectedGaussian> p) {
  for (std::size_t k = 1; k < p.size(); ++k) {
    const auto& a = p[k - 1];
    const auto& b = p[k];
    if (b.view_depth < a.view_depth || (b.view_depth == a.view_depth && b.source_index <= a.source_index))
      throw contract_violation("composite: projected Gaussians are not depth sorted");
  }
}

double normalized_depth(double sum, double transmittance, double background) {
  const double acc = 1.0 - transmittance;
  return acc > kAccumFloor ? sum / acc : background;
}

}  // namespace

RenderOutput composite(std::span<const ProjectedGaussian> projected, const Camera& camera, const GaussianCloud& cloud,
                       const RenderSettings& settings, unsigned channels) {
  check_sorted(projected);
  for (const auto& g : projected) {
    if (g.source_index >= cloud.size()) throw contract_violation("composite: projection refers to a missing Gaussian");
  }
  const int width = camera.width, height = camera.height;
  auto state = std::make_shared<RenderState>();
  state->camera = camera;
  state->settings = settings;
  state->channels = channels;
  state->cloud_size = cloud.size();
  state->projected.assign(projected.begin(), projected.end());
  state->tiles_x = (width + kTileSize - 1) / kTileSize;
  state->tiles_y = (height + kTileSize - 1) / kTileSize;
  const std::size_t tiles = static_cast<std::size_t>(state->tiles_x) * static_cast<std::size_t>(state->tiles_y);

  // Bin into tiles (two passes, CSR). Iterating in depth order keeps each tile list sorted.
  std::vector<std::uint32_t> counts(tiles + 1, 0);
  for (const auto& g : projected) {
    for (int ty = g.y0 / kTileSize; ty <= (g.y1 - 1) / kTileSize; ++ty)
      for (int tx = g.x0 / kTileSize; tx <= (g.x1 - 1) / kTileSize; ++tx)
        ++counts[static_cast<std::size_t>(ty * state->tiles_x + tx) + 1];
  }
  for (std::size_t t = 0; t < tiles; ++t) counts[t + 1] += counts[t];
  state->tile_offsets = counts;
  state->tile_entries.resize(counts[tiles]);
  std::vector<std::uint32_t> fill(counts.begin(), counts.end() - 1);
  for (std::size_t k = 0; k < projected.size(); ++k) {
    const auto& g = projected[k];
    for (int ty = g.y0 / kTileSize; ty <= (g.y1 - 1) / kTileSize; ++ty)
      for (int tx = g.x0 / kTileSize; tx <= (g.x1 - 1) / kTileSize; ++tx)
        state->tile_entries[fill[static_cast<std::size_t>(ty * state->tiles_x + tx)]++] =
            static_cast<std::uint32_t>(k);
  }

  const std::size_t npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  state->final_t.assign(npix, 1.0);
  state->final_t_hard.assign(npix, 1.0);
  state->depth_sum.assign(npix, 0.0);
  state->depth_sum_hard.assign(npix, 0.0);
  state->n_soft.assign(npix, 0);
  state->n_hard.assign(npix, 0);

  RenderOutput out;
  const bool want_id = channels & kChannelId;
  const bool want_hard = channels & kChannelHardDepth;
  out.color = ImageD(width, height, 3);
  if (want_id) out.id_feature = ImageD(width, height, kIdDim);
  out.soft_depth = ImageD(width, height, 1);
  if (want_hard) out.hard_depth = ImageD(width, height, 1);
  out.accum_alpha = ImageD(width, height, 1);

  const double omega = settings.hard_opacity;
  parallel_for(tiles, [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % static_cast<std::size_t>(state->tiles_x));
    const int ty = static_cast<int>(tile / static_cast<std::size_t>(state->tiles_x));
    const std::uint32_t begin = state->tile_offsets[tile], end = state->tile_offsets[tile + 1];
    for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
        const double px = x + 0.5, py = y + 0.5;
        double t = 1.0, th = 1.0, dsum = 0.0, dsum_h = 0.0;
        Vec3 color = Vec3::Zero();
        IdCode id = IdCode::Zero();
        bool soft_done = false, hard_done = !want_hard;
        std::uint32_t n_soft = 0, n_hard = 0;
        for (std::uint32_t pos = begin; pos < end && !(soft_done && hard_done); ++pos) {
          const ProjectedGaussian& g = state->projected[state->tile_entries[pos]];
          if (x < g.x0 || x >= g.x1 || y < g.y0 || y >= g.y1) continue;
          double dx, dy;
          const double q = splat_q(g, px, py, dx, dy);
          if (q > g.q_cut) continue;
          const double falloff = std::exp(-0.5 * q);
          if (!soft_done) {
            const double a = std::min(kAlphaMax, g.opacity * falloff);
            if (a >= kAlphaMin) {
              const double wgt = a * t;
              color += wgt * g.eval_color;
              if (want_id) id += wgt * cloud.identity_codes[g.source_index];
              dsum += wgt * g.view_depth;
              t *= 1.0 - a;
              n_soft = pos - begin + 1;
              if (t < kTransmittanceStop) soft_done = true;
            }
          }
          if (!hard_done) {
            const double a = std::min(kAlphaMax, omega * falloff);
            if (a >= kAlphaMin) {
              dsum_h += a * th * g.view_depth;
              th *= 1.0 - a;
              n_hard = pos - begin + 1;
              if (th < kTransmittanceStop) hard_done = true;
            }
          }
        }
        state->final_t[p] = t;
        state->final_t_hard[p] = th;
        state->depth_sum[p] = dsum;
        state->depth_sum_hard[p] = dsum_h;
        state->n_soft[p] = n_soft;
        state->n_hard[p] = n_hard;
        for (int c = 0; c < 3; ++c) out.color.data[p * 3 + c] = color[c] + t * settings.background_color[c];
        if (want_id)
          for (int d = 0; d < kIdDim; ++d) out.id_feature.data[p * kIdDim + d] = id[d];
        out.accum_alpha.data[p] = 1.0 - t;
        out.soft_depth.data[p] = normalized_depth(dsum, t, settings.background_depth);
        if (want_hard) out.hard_depth.data[p] = normalized_depth(dsum_h, th, settings.background_depth);
      }
    }
  });

  out.radii.assign(cloud.size(), 0.0);
  for (const auto& g : projected) out.radii[g.source_index] = g.radius;
  out.backward_state = std::move(state);
  return out;
}

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings,
                    unsigned channels) {
  const auto projected = project(cloud, camera, settings);
  return composite(projected, camera, cloud, settings, channels);
}

GradientSet GradientSet::zeros_like(const GaussianCloud& cloud) {
  GradientSet g;
  const std::size_t n = cloud.size();
  g.centers.assign(n, Vec3::Zero());
  g.log_scales.assign(n, Vec3::Zero());
  g.rotations.assign(n, Vec4::Zero());
  g.opacity_logits.assign(n, 0.0);
  g.colors.assign(cloud.colors.size(), 0.0);
  g.identity_codes.assign(n, IdCode::Zero());
  g.grad2d.assign(n, 0.0);
  g.visible.assign(n, 0);
  return g;
}

void GradientSet::add(const GradientSet& o, double scale) {
  if (o.size() != size() || o.colors.size() != colors.size())
    throw contract_violation("GradientSet::add: size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    centers[i] += scale * o.centers[i];
    log_scales[i] += scale * o.log_scales[i];
    rotations[i] += scale * o.rotations[i];
    opacity_logits[i] += scale * o.opacity_logits[i];
    identity_codes[i] += scale * o.identity_codes[i];
  }
  for (std::size_t k = 0; k < colors.size(); ++k) colors[k] += scale * o.colors[k];
}

namespace {

/// Gradient with respect to the screen-space quantities of one projected Gaussian.
struct ScreenGrad {
  double mean[2] = {0, 0};
  double conic[3] = {0, 0, 0};  // d/da, d/db (b as it appears in 2b·dx·dy), d/dc
  double opacity = 0;           // with respect to sigmoid(logit)
  double color[3] = {0, 0, 0};
  double depth = 0;

  void add(const ScreenGrad& o) {
    mean[0] += o.mean[0];
    mean[1] += o.mean[1];
    for (int k = 0; k < 3; ++k) conic[k] += o.conic[k];
    opacity += o.opacity;
    for (int k = 0; k < 3; ++k) color[k] += o.color[k];
    depth += o.depth;
  }
};

struct GroupView {
  const PixelAdjoints* adj;
  unsigned params;
  bool color, id, alpha, soft, hard;
};

void check_adjoint(const ImageD& img, const RenderState& st, int channels, const char* name) {
  if (img.empty()) return;
  if (img.width != st.camera.width || img.height != st.camera.height || img.channels != channels)
    throw contract_violation(std::string("backward: adjoint shape mismatch for channel ") + name);
}

// Chain rule from screen space to the Gaussian's parameters, restricted to `params`.
void project_backward(const ProjectedGaussian& pg, const GaussianCloud& cloud, const Camera& cam,
                      const ScreenGrad& sg, unsigned params, GradientSet& out) {
  const std::size_t i = pg.source_index;
  if (params & kParamOpacities) {
    out.opacity_logits[i] += sg.opacity * pg.opacity * (1.0 - pg.opacity);
  }

  Vec3 dmu = Vec3::Zero();
  const bool want_center = params & kParamCenters;
  if (params & (kParamColors | kParamCenters)) {
    Vec3 dcolor(sg.color[0], sg.color[1], sg.color[2]);
    for (int c = 0; c < 3; ++c)
      if (pg.color_clamped[c]) dcolor[c] = 0;
    if (dcolor.squaredNorm() > 0) {
      const Vec3 raw = cloud.centers[i] - cam.center();
      const double len = raw.norm();
      const Vec3 dir = raw / len;
      const ShBasis basis = sh_basis(dir, cloud.sh_degree);
      const int k = sh_coeff_count(cloud.sh_degree);
      const std::size_t base = i * static_cast<std::size_t>(cloud.color_stride());
      if (params & kParamColors) {
        for (int b = 0; b < k; ++b)
          for (int c = 0; c < 3; ++c) out.colors[base + 3 * b + c] += basis.value[b] * dcolor[c];
      }
      if (want_center && cloud.sh_degree > 0) {
        Vec3 ddir = Vec3::Zero();
        for (int b = 1; b < k; ++b) {
          double s = 0;
          for (int c = 0; c < 3; ++c) s += cloud.colors[base + 3 * b + c] * dcolor[c];
          ddir += s * basis.grad[b];
        }
        dmu += (ddir - dir * dir.dot(ddir)) / len;
      }
    }
  }

  if (!(params & (kParamCenters | kParamLogScales | kParamRotations))) return;

  const Vec3& t = pg.cam_point;
  const Mat3& w = cam.rotation;
  const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
  const double fx = cam.fx, fy = cam.fy;

  // conic = cov⁻¹  ->  dL/dcov = -conic · G · conic
  Mat2 conic;
  conic << pg.conic.x(), pg.conic.y(), pg.conic.y(), pg.conic.z();
  Mat2 gconic;
  gconic << sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2];
  const Mat2 gcov = -conic * gconic * conic;

  const Vec4 q = cloud.rotations[i].normalized();
  const Mat3 r = rotation_from_quaternion(q);
  const Vec3 s = cloud.log_scales[i].array().exp();
  const Mat3 m3 = r * s.asDiagonal();
  const Mat3 sigma = m3 * m3.transpose();
  Eigen::Matrix<double, 2, 3> j;
  j << fx * iz, 0, -fx * t.x() * iz2, 0, fy * iz, -fy * t.y() * iz2;
  const Eigen::Matrix<double, 2, 3> tm = j * w;

  if (want_center) {
    const Eigen::Matrix<double, 2, 3> gt = 2.0 * gcov * tm * sigma;
    const Eigen::Matrix<double, 2, 3> gj = gt * w.transpose();
    Vec3 dt = Vec3::Zero();
    dt.x() += gj(0, 2) * (-fx * iz2);
    dt.y() += gj(1, 2) * (-fy * iz2);
    dt.z() += gj(0, 0) * (-fx * iz2) + gj(0, 2) * (2.0 * fx * t.x() * iz3) + gj(1, 1) * (-fy * iz2) +
              gj(1, 2) * (2.0 * fy * t.y() * iz3);
    dt.x() += sg.mean[0] * fx * iz;
    dt.y() += sg.mean[1] * fy * iz;
    dt.z() += -sg.mean[0] * fx * t.x() * iz2 - sg.mean[1] * fy * t.y() * iz2;
    dt.z() += sg.depth;
    dmu += w.transpose() * dt;
    out.centers[i] += dmu;
  }

  if (params & (kParamLogScales | kParamRotations)) {
    const Mat3 gsigma = tm.transpose() * gcov * tm;
    const Mat3 gm3 = 2.0 * gsigma * m3;
    if (params & kParamLogScales) {
      for (int a = 0; a < 3; ++a) {
        double ds = 0;
        for (int row = 0; row < 3; ++row) ds += gm3(row, a) * r(row, a);
        out.log_scales[i][a] += ds * s[a];
      }
    }
    if (params & kParamRotations) {
      Mat3 gr;
      for (int row = 0; row < 3; ++row)
        for (int a = 0; a < 3; ++a) gr(row, a) = gm3(row, a) * s[a];
      const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
      Vec4 dq;
      dq[0] = 2 * (-qz * gr(0, 1) + qy * gr(0, 2) + qz * gr(1, 0) - qx * gr(1, 2) - qy * gr(2, 0) + qx * gr(2, 1));
      dq[1] = 2 * (qy * gr(0, 1) + qz * gr(0, 2) + qy * gr(1, 0) - 2 * qx * gr(1, 1) - qw * gr(1, 2) +
                   qz * gr(2, 0) + qw * gr(2, 1) - 2 * qx * gr(2, 2));
      dq[2] = 2 * (-2 * qy * gr(0, 0) + qx * gr(0, 1) + qw * gr(0, 2) + qx * gr(1, 0) + qz * gr(1, 2) -
                   qw * gr(2, 0) + qz * gr(2, 1) - 2 * qy * gr(2, 2));
      dq[3] = 2 * (-2 * qz * gr(0, 0) - qw * gr(0, 1) + qx * gr(0, 2) + qw * gr(1, 0) - 2 * qz * gr(1, 1) +
                   qy * gr(1, 2) + qx * gr(2, 0) + qy * gr(2, 1));
      const double qn = cloud.rotations[i].norm();
      out.rotations[i] += (dq - q * q.dot(dq)) / qn;
    }
  }
}

}  // namespace

GradientSet backward(const RenderOutput& output, const GaussianCloud& cloud, std::span<const AdjointGroup> groups) {
  if (!output.backward_state) throw contract_violation("backward: render output carries no backward state");
  const RenderState& st = *output.backward_state;
  if (st.cloud_size != cloud.size()) throw contract_violation("backward: cloud size differs from the rendered cloud");

  std::vector<GroupView> views;
  for (const auto& g : groups) {
    check_adjoint(g.adjoints.color, st, 3, "color");
    check_adjoint(g.adjoints.id_feature, st, kIdDim, "id_feature");
    check_adjoint(g.adjoints.soft_depth, st, 1, "soft_depth");
    check_adjoint(g.adjoints.hard_depth, st, 1, "hard_depth");
    check_adjoint(g.adjoints.accum_alpha, st, 1, "accum_alpha");
    if (!g.adjoints.id_feature.empty() && !(st.channels & kChannelId))
      throw contract_violation("backward: id_feature adjoint given but the channel was not rendered");
    if (!g.adjoints.hard_depth.empty() && !(st.channels & kChannelHardDepth))
      throw contract_violation("backward: hard_depth adjoint given but the channel was not rendered");
    views.push_back({&g.adjoints, g.params, !g.adjoints.color.empty(), !g.adjoints.id_feature.empty(),
                     !g.adjoints.accum_alpha.empty(), !g.adjoints.soft_depth.empty(),
                     !g.adjoints.hard_depth.empty()});
  }

  GradientSet grads = GradientSet::zeros_like(cloud);
  const std::size_t ng = views.size();
  if (ng == 0) return grads;

  const int width = st.camera.width, height = st.camera.height;
  const std::size_t tiles = static_cast<std::size_t>(st.tiles_x) * static_cast<std::size_t>(st.tiles_y);
  const double omega = st.settings.hard_opacity;
  const Vec3& bg_color = st.settings.background_color;

  // Each tile accumulates into its own buffer (entry-major, group-minor); the
  // buffers are reduced in tile order afterwards so results do not depend on scheduling.
  // Identity codes only receive the id channel, so one buffer serves every group allowed to reach them.
  std::vector<std::vector<ScreenGrad>> tile_grads(tiles);
  std::vector<std::vector<double>> tile_id(tiles);
  bool any_id = false;
  for (const auto& gv : views) any_id = any_id || (gv.id && (gv.params & kParamIdentity));
  parallel_for(tiles, [&](std::size_t tile) {
    const std::uint32_t begin = st.tile_offsets[tile], end = st.tile_offsets[tile + 1];
    auto& local = tile_grads[tile];
    local.assign(static_cast<std::size_t>(end - begin) * ng, ScreenGrad{});
    auto& local_id = tile_id[tile];
    if (any_id) local_id.assign(static_cast<std::size_t>(end - begin) * kIdDim, 0.0);
    const int tx = static_cast<int>(tile % static_cast<std::size_t>(st.tiles_x));
    const int ty = static_cast<int>(tile / static_cast<std::size_t>(st.tiles_x));

    std::vector<double> u_suffix(ng), uh_suffix(ng), g_depth(ng), g_acc(ng), g_depth_h(ng), g_acc_h(ng);
    std::vector<const double*> gcol(ng), gid(ng);
    std::vector<std::uint8_t> soft_active(ng), hard_active(ng);

    for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
        const std::uint32_t n_soft = st.n_soft[p], n_hard = st.n_hard[p];
        const std::uint32_t n_any = std::max(n_soft, n_hard);
        if (n_any == 0) continue;

        const double acc = 1.0 - st.final_t[p];
        const double acc_h = 1.0 - st.final_t_hard[p];
        bool any = false;
        for (std::size_t g = 0; g < ng; ++g) {
          const GroupView& gv = views[g];
          gcol[g] = gv.color ? &gv.adj->color.data[p * 3] : nullptr;
          gid[g] = gv.id ? &gv.adj->id_feature.data[p * kIdDim] : nullptr;
          // Normalized depth D = S / A: dS = gD / A, dA = -gD·S / A².
          double gd = 0, ga = gv.alpha ? gv.adj->accum_alpha.data[p] : 0.0;
          if (gv.soft && acc > kAccumFloor) {
            const double gsoft = gv.adj->soft_depth.data[p];
            gd = gsoft / acc;
            ga += -gsoft * st.depth_sum[p] / (acc * acc);
          }
          double gdh = 0, gah = 0;
          if (gv.hard && acc_h > kAccumFloor) {
            const double ghard = gv.adj->hard_depth.data[p];
            gdh = ghard / acc_h;
            gah = -ghard * st.depth_sum_hard[p] / (acc_h * acc_h);
          }
          g_depth[g] = gd;
          g_acc[g] = ga;
          g_depth_h[g] = gdh;
          g_acc_h[g] = gah;
          u_suffix[g] = 0;
          uh_suffix[g] = 0;
          soft_active[g] = gcol[g] || gid[g] || gd != 0 || ga != 0;
          hard_active[g] = gdh != 0 || gah != 0;
          any = any || soft_active[g] || hard_active[g];
        }
        if (!any) continue;
        // The background acts as a final contributor with weight T_final.
        for (std::size_t g = 0; g < ng; ++g)
          if (gcol[g]) u_suffix[g] = st.final_t[p] * (gcol[g][0] * bg_color[0] + gcol[g][1] * bg_color[1] + gcol[g][2] * bg_color[2]);

        const double px = x + 0.5, py = y + 0.5;
        double t = st.final_t[p], th = st.final_t_hard[p];
        for (std::uint32_t k = n_any; k-- > 0;) {
          const std::uint32_t pos = begin + k;
          const ProjectedGaussian& pg = st.projected[st.tile_entries[pos]];
          if (x < pg.x0 || x >= pg.x1 || y < pg.y0 || y >= pg.y1) continue;
          double dx, dy;
          const double q = splat_q(pg, px, py, dx, dy);
          if (q > pg.q_cut) continue;
          const double falloff = std::exp(-0.5 * q);

          const double raw_soft = pg.opacity * falloff;
          const double a = std::min(kAlphaMax, raw_soft);
          const bool soft_on = k < n_soft && a >= kAlphaMin;
          const double raw_hard = omega * falloff;
          const double ah = std::min(kAlphaMax, raw_hard);
          const bool hard_on = k < n_hard && ah >= kAlphaMin;
          if (!soft_on && !hard_on) continue;

          double ti = 0, wgt = 0, ti_h = 0, wgt_h = 0;
          if (soft_on) {
            ti = t / (1.0 - a);
            t = ti;
            wgt = a * ti;
          }
          if (hard_on) {
            ti_h = th / (1.0 - ah);
            th = ti_h;
            wgt_h = ah * ti_h;
          }
          const IdCode& code = cloud.identity_codes[pg.source_index];
          const std::size_t slot = static_cast<std::size_t>(k) * ng;
          for (std::size_t g = 0; g < ng; ++g) {
            ScreenGrad& sg = local[slot + g];
            double dalpha = 0, dalpha_h = 0;
            if (soft_on && soft_active[g]) {
              double u = g_depth[g] * pg.view_depth + g_acc[g];
              if (gcol[g]) {
                for (int c = 0; c < 3; ++c) {
                  u += gcol[g][c] * pg.eval_color[c];
                  sg.color[c] += gcol[g][c] * wgt;
                }
              }
              if (gid[g]) {
                const bool to_codes = views[g].params & kParamIdentity;
                double* acc_id = to_codes ? &local_id[static_cast<std::size_t>(k) * kIdDim] : nullptr;
                for (int d = 0; d < kIdDim; ++d) {
                  u += gid[g][d] * code[d];
                  if (acc_id) acc_id[d] += gid[g][d] * wgt;
                }
              }
              sg.depth += g_depth[g] * wgt;
              dalpha = u * ti - u_suffix[g] / (1.0 - a);
              u_suffix[g] += u * wgt;
            }
            if (hard_on && hard_active[g]) {
              const double uh = g_depth_h[g] * pg.view_depth + g_acc_h[g];
              sg.depth += g_depth_h[g] * wgt_h;
              dalpha_h = uh * ti_h - uh_suffix[g] / (1.0 - ah);
              uh_suffix[g] += uh * wgt_h;
            }
            double dfalloff = 0;
            if (soft_on && raw_soft < kAlphaMax) {
              sg.opacity += dalpha * falloff;
              dfalloff += dalpha * pg.opacity;
            }
            if (hard_on && raw_hard < kAlphaMax) dfalloff += dalpha_h * omega;
            if (dfalloff == 0) continue;
            const double dq = -0.5 * falloff * dfalloff;
            const double ca = pg.conic.x(), cb = pg.conic.y(), cc = pg.conic.z();
            sg.conic[0] += dq * dx * dx;
            sg.conic[1] += dq * 2.0 * dx * dy;
            sg.conic[2] += dq * dy * dy;
            sg.mean[0] += dq * (-2.0) * (ca * dx + cb * dy);
            sg.mean[1] += dq * (-2.0) * (cb * dx + cc * dy);
          }
        }
      }
    }
  });

  // Deterministic reduction: tiles in index order.
  const std::size_t np = st.projected.size();
  std::vector<ScreenGrad> screen(np * ng);
  std::vector<IdCode> screen_id(any_id ? np : 0, IdCode::Zero());
  for (std::size_t tile = 0; tile < tiles; ++tile) {
    const std::uint32_t begin = st.tile_offsets[tile];
    const auto& local = tile_grads[tile];
    const std::size_t entries = local.size() / ng;
    for (std::size_t e = 0; e < entries; ++e) {
      const std::size_t proj = st.tile_entries[begin + e];
      for (std::size_t g = 0; g < ng; ++g) screen[proj * ng + g].add(local[e * ng + g]);
      if (any_id)
        for (int d = 0; d < kIdDim; ++d) screen_id[proj][d] += tile_id[tile][e * kIdDim + static_cast<std::size_t>(d)];
    }
  }

  parallel_for(np, [&](std::size_t k) {
    const ProjectedGaussian& pg = st.projected[k];
    if (any_id) grads.identity_codes[pg.source_index] += screen_id[k];
    double gx = 0, gy = 0;
    for (std::size_t g = 0; g < ng; ++g) {
      const ScreenGrad& sg = screen[k * ng + g];
      project_backward(pg, cloud, st.camera, sg, views[g].params, grads);
      if (views[g].params & kParamCenters) {
        gx += sg.mean[0];
        gy += sg.mean[1];
      }
    }
    // Pixel -> NDC: x_pix = ((x_ndc + 1)·W - 1) / 2.
    gx *= 0.5 * width;
    gy *= 0.5 * height;
    grads.grad2d[pg.source_index] = std::sqrt(gx * gx + gy * gy);
    grads.visible[pg.source_index] = 1;
  });
  return grads;
}

GradientSet backward(const RenderOutput& output, const GaussianCloud& cloud, const PixelAdjoints& adjoints) {
  const AdjointGroup group{adjoints, kParamAll};
  return backward(output, cloud, std::span<const AdjointGroup>(&group, 1));
}

}  // namespace tsgs
