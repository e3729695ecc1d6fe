#include "tsgs/depth_reg.hpp"

#include <algorithm>
#include <cmath>

#include "tsgs/error.hpp"

namespace tsgs {

void validate(const DepthRegConfig& c) {
  if (c.patch_size < 2) throw config_error("depth: patch_size must be at least 2");
  if (!(c.lambda_sh >= 0) || !(c.lambda_gl >= 0) || !(c.gamma >= 0))
    throw config_error("depth: weights must be non-negative");
  if (!(c.hard_override_omega > 0 && c.hard_override_omega <= 1))
    throw config_error("depth: hard_override_omega must lie in (0, 1]");
}

MaskImage target_region(const LabelImage& id_mask, const MaskImage& floating_mask) {
  if (!id_mask.same_shape(floating_mask)) throw contract_violation("target_region: shape mismatch");
  MaskImage out(id_mask.width, id_mask.height, 1);
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    out.data[p] = (floating_mask.data[p] && id_mask.data[p] > 0) ? 1 : 0;
  return out;
}

DepthLoss masked_depth_mse(const ImageD& rendered, const ImageD& prior, const MaskImage& region, bool align) {
  if (!rendered.same_shape(prior) || !rendered.same_shape(region))
    throw contract_violation("depth loss: shape mismatch");
  DepthLoss out;
  out.d_depth = ImageD(rendered.width, rendered.height, 1);
  std::size_t n = 0;
  double mean_r = 0, mean_p = 0;
  for (std::size_t p = 0; p < region.pixel_count(); ++p) {
    if (!region.data[p]) continue;
    ++n;
    mean_r += rendered.data[p];
    mean_p += prior.data[p];
  }
  if (n == 0) return out;
  mean_r /= static_cast<double>(n);
  mean_p /= static_cast<double>(n);

  double scale = 1.0, shift = 0.0;
  if (align) {
    double cov = 0, var = 0;
    for (std::size_t p = 0; p < region.pixel_count(); ++p) {
      if (!region.data[p]) continue;
      const double dp = prior.data[p] - mean_p;
      cov += dp * (rendered.data[p] - mean_r);
      var += dp * dp;
    }
    scale = var > 1e-12 * static_cast<double>(n) ? cov / var : 0.0;
    shift = mean_r - scale * mean_p;
  }
  // With the fit optimal for the current render, dL/dD is 2·residual/n (envelope theorem).
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t p = 0; p < region.pixel_count(); ++p) {
    if (!region.data[p]) continue;
    const double r = rendered.data[p] - (scale * prior.data[p] + shift);
    out.value += r * r * inv;
    out.d_depth.data[p] = 2.0 * r * inv;
  }
  return out;
}

DepthLoss hard_depth_loss(const RenderOutput& render, const ViewBundle& view, const DepthRegConfig& config) {
  if (render.hard_depth.empty()) throw contract_violation("hard_depth_loss: hard depth was not rendered");
  return masked_depth_mse(render.hard_depth, view.prior_depth, target_region(view.id_mask, view.floating_mask),
                          config.align_prior);
}

DepthLoss soft_depth_loss(const RenderOutput& render, const ViewBundle& view, const DepthRegConfig& config) {
  return masked_depth_mse(render.soft_depth, view.prior_depth, target_region(view.id_mask, view.floating_mask),
                          config.align_prior);
}

SoftHardLoss soft_hard_loss(const RenderOutput& render, const ViewBundle& view, const DepthRegConfig& config) {
  SoftHardLoss out;
  out.hard = hard_depth_loss(render, view, config);
  out.soft = soft_depth_loss(render, view, config);
  out.value = out.hard.value + out.soft.value;
  return out;
}

namespace {

struct PatchGrid {
  int cols, rows, size;
  PatchGrid(int w, int h, int s) : cols((w + s - 1) / s), rows((h + s - 1) / s), size(s) {}
  int count() const { return cols * rows; }
  int of(int x, int y) const { return (y / size) * cols + x / size; }
};

struct PatchStats {
  std::vector<double> mean, stddev;
  std::vector<std::size_t> count;
};

PatchStats patch_stats(const ImageD& d, const MaskImage& mask, const PatchGrid& grid) {
  PatchStats s;
  s.mean.assign(static_cast<std::size_t>(grid.count()), 0.0);
  s.stddev.assign(s.mean.size(), 0.0);
  s.count.assign(s.mean.size(), 0);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const std::size_t p = d.index(x, y);
      if (!mask.data[p]) continue;
      const auto k = static_cast<std::size_t>(grid.of(x, y));
      s.mean[k] += d.data[p];
      ++s.count[k];
    }
  for (std::size_t k = 0; k < s.mean.size(); ++k)
    if (s.count[k]) s.mean[k] /= static_cast<double>(s.count[k]);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const std::size_t p = d.index(x, y);
      if (!mask.data[p]) continue;
      const auto k = static_cast<std::size_t>(grid.of(x, y));
      const double r = d.data[p] - s.mean[k];
      s.stddev[k] += r * r;
    }
  for (std::size_t k = 0; k < s.mean.size(); ++k)
    if (s.count[k]) s.stddev[k] = std::sqrt(s.stddev[k] / static_cast<double>(s.count[k]));
  return s;
}

struct GlobalStats {
  double mean = 0, stddev = 0;
  std::size_t count = 0;
};

GlobalStats global_stats(const ImageD& d, const MaskImage& mask) {
  GlobalStats g;
  for (std::size_t p = 0; p < d.pixel_count(); ++p)
    if (mask.data[p]) {
      g.mean += d.data[p];
      ++g.count;
    }
  if (!g.count) return g;
  g.mean /= static_cast<double>(g.count);
  for (std::size_t p = 0; p < d.pixel_count(); ++p)
    if (mask.data[p]) g.stddev += (d.data[p] - g.mean) * (d.data[p] - g.mean);
  g.stddev = std::sqrt(g.stddev / static_cast<double>(g.count));
  return g;
}

void check_normalize_args(const ImageD& depth, const MaskImage& mask, int patch_size) {
  if (!depth.same_shape(mask) || depth.channels != 1) throw contract_violation("normalize: shape mismatch");
  if (patch_size < 1) throw parameter_error("normalize: patch_size must be positive");
}

// Backward of normalize_local for the adjoint g on its output.
void local_backward(const ImageD& depth, const MaskImage& mask, const PatchGrid& grid, const PatchStats& st,
                    const ImageD& normalized, const ImageD& g, ImageD& dx) {
  std::vector<double> gsum(st.mean.size(), 0.0), gy(st.mean.size(), 0.0);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t p = depth.index(x, y);
      if (!mask.data[p]) continue;
      const auto k = static_cast<std::size_t>(grid.of(x, y));
      gsum[k] += g.data[p];
      gy[k] += g.data[p] * normalized.data[p];
    }
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t p = depth.index(x, y);
      if (!mask.data[p]) continue;
      const auto k = static_cast<std::size_t>(grid.of(x, y));
      const double n = static_cast<double>(st.count[k]);
      const bool floored = !(st.stddev[k] > kStdFloor);
      const double s = floored ? kStdFloor : st.stddev[k];
      double v = (g.data[p] - gsum[k] / n) / s;
      if (!floored) v -= normalized.data[p] * gy[k] / (n * s);
      dx.data[p] += v;
    }
}

void global_backward(const ImageD& depth, const MaskImage& mask, const PatchGrid& grid, const PatchStats& st,
                     const GlobalStats& gs, const ImageD& normalized, const ImageD& g, ImageD& dx) {
  std::vector<double> gsum(st.mean.size(), 0.0);
  double gy = 0;
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t p = depth.index(x, y);
      if (!mask.data[p]) continue;
      gsum[static_cast<std::size_t>(grid.of(x, y))] += g.data[p];
      gy += g.data[p] * normalized.data[p];
    }
  const bool floored = !(gs.stddev > kStdFloor);
  const double s = floored ? kStdFloor : gs.stddev;
  const double n_total = static_cast<double>(gs.count);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t p = depth.index(x, y);
      if (!mask.data[p]) continue;
      const auto k = static_cast<std::size_t>(grid.of(x, y));
      double v = (g.data[p] - gsum[k] / static_cast<double>(st.count[k])) / s;
      if (!floored) v -= gy * (depth.data[p] - gs.mean) / (n_total * s * s);
      dx.data[p] += v;
    }
}

// Masked MSE between a and b; writes dL/da into `da`.
double masked_mse(const ImageD& a, const ImageD& b, const MaskImage& mask, std::size_t n, ImageD& da) {
  double v = 0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (!mask.data[p]) continue;
    const double r = a.data[p] - b.data[p];
    v += r * r * inv;
    da.data[p] = 2.0 * r * inv;
  }
  return v;
}

}  // namespace

ImageD normalize_local(const ImageD& depth, const MaskImage& mask, int patch_size) {
  check_normalize_args(depth, mask, patch_size);
  const PatchGrid grid(depth.width, depth.height, patch_size);
  const PatchStats st = patch_stats(depth, mask, grid);
  ImageD out(depth.width, depth.height, 1);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t p = depth.index(x, y);
      if (!mask.data[p]) continue;
      const auto k = static_cast<std::size_t>(grid.of(x, y));
      out.data[p] = (depth.data[p] - st.mean[k]) / std::max(st.stddev[k], kStdFloor);
    }
  return out;
}

ImageD normalize_global(const ImageD& depth, const MaskImage& mask, int patch_size) {
  check_normalize_args(depth, mask, patch_size);
  const PatchGrid grid(depth.width, depth.height, patch_size);
  const PatchStats st = patch_stats(depth, mask, grid);
  const double s = std::max(global_stats(depth, mask).stddev, kStdFloor);
  ImageD out(depth.width, depth.height, 1);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t p = depth.index(x, y);
      if (!mask.data[p]) continue;
      out.data[p] = (depth.data[p] - st.mean[static_cast<std::size_t>(grid.of(x, y))]) / s;
    }
  return out;
}

DepthLoss global_local_loss(const ImageD& rendered, const ImageD& prior, const MaskImage& mask,
                            const DepthRegConfig& config) {
  if (!rendered.same_shape(prior)) throw contract_violation("global_local_loss: shape mismatch");
  check_normalize_args(rendered, mask, config.patch_size);
  DepthLoss out;
  out.d_depth = ImageD(rendered.width, rendered.height, 1);
  const GlobalStats gs = global_stats(rendered, mask);
  if (gs.count == 0) return out;

  const PatchGrid grid(rendered.width, rendered.height, config.patch_size);
  const PatchStats st = patch_stats(rendered, mask, grid);

  const ImageD r_gn = normalize_global(rendered, mask, config.patch_size);
  const ImageD p_gn = normalize_global(prior, mask, config.patch_size);
  ImageD g_gn(rendered.width, rendered.height, 1);
  out.value += masked_mse(r_gn, p_gn, mask, gs.count, g_gn);
  global_backward(rendered, mask, grid, st, gs, r_gn, g_gn, out.d_depth);

  if (config.gamma != 0) {
    const ImageD r_ln = normalize_local(rendered, mask, config.patch_size);
    const ImageD p_ln = normalize_local(prior, mask, config.patch_size);
    ImageD g_ln(rendered.width, rendered.height, 1);
    out.value += config.gamma * masked_mse(r_ln, p_ln, mask, gs.count, g_ln);
    for (double& v : g_ln.data) v *= config.gamma;
    local_backward(rendered, mask, grid, st, r_ln, g_ln, out.d_depth);
  }
  return out;
}

MultiScaleDepthLoss multi_scale_depth_loss(const RenderOutput& render, const ViewBundle& view,
                                           const DepthRegConfig& config) {
  MultiScaleDepthLoss out;
  out.soft_hard = soft_hard_loss(render, view, config);
  const MaskImage region = target_region(view.id_mask, view.floating_mask);
  const ImageD& gl_source = config.gl_on_hard_depth ? render.hard_depth : render.soft_depth;
  if (gl_source.empty()) throw contract_violation("multi_scale_depth_loss: depth channel was not rendered");
  out.global_local = global_local_loss(gl_source, view.prior_depth, region, config);
  out.value = config.lambda_sh * out.soft_hard.value + config.lambda_gl * out.global_local.value;

  auto scaled = [](const ImageD& img, double s) {
    ImageD r = img;
    for (double& v : r.data) v *= s;
    return r;
  };
  out.d_hard_centers_only = scaled(out.soft_hard.hard.d_depth, config.lambda_sh);
  out.d_soft_opacity_only = scaled(out.soft_hard.soft.d_depth, config.lambda_sh);
  out.d_gl = scaled(out.global_local.d_depth, config.lambda_gl);
  return out;
}

}  // namespace tsgs
