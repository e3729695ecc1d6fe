#include "tsgs/photometric.hpp"

#include <algorithm>
#include <cmath>

#include "tsgs/error.hpp"

namespace tsgs {

void validate(const PhotometricConfig& c) {
  if (!(c.lambda_dssim >= 0 && c.lambda_dssim <= 1)) throw config_error("photometric: lambda_dssim must lie in [0, 1]");
  if (c.ssim_window < 1 || c.ssim_window % 2 == 0) throw config_error("photometric: ssim_window must be odd");
  if (!(c.ssim_sigma > 0)) throw config_error("photometric: ssim_sigma must be positive");
  if (!(c.dynamic_range > 0)) throw config_error("photometric: dynamic_range must be positive");
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const int half = size / 2;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

namespace {

// Separable zero-padded convolution of a single-channel plane.
std::vector<double> blur(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
  const int half = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -half; t <= half; ++t) {
        const int xx = x + t;
        if (xx >= 0 && xx < w) s += k[static_cast<std::size_t>(t + half)] * src[static_cast<std::size_t>(y * w + xx)];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -half; t <= half; ++t) {
        const int yy = y + t;
        if (yy >= 0 && yy < h) s += k[static_cast<std::size_t>(t + half)] * tmp[static_cast<std::size_t>(yy * w + x)];
      }
      out[static_cast<std::size_t>(y * w + x)] = s;
    }
  return out;
}

std::vector<double> plane(const ImageD& img, int c) {
  std::vector<double> p(img.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * static_cast<std::size_t>(img.channels) + static_cast<std::size_t>(c)];
  return p;
}

struct SsimMaps {
  std::vector<double> mu_x, mu_y, e_xx, e_yy, e_xy;
};

SsimMaps moments(const std::vector<double>& x, const std::vector<double>& y, int w, int h,
                 const std::vector<double>& k) {
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  return {blur(x, w, h, k), blur(y, w, h, k), blur(xx, w, h, k), blur(yy, w, h, k), blur(xy, w, h, k)};
}

double ssim_at(const SsimMaps& m, std::size_t p, double c1, double c2) {
  const double mx = m.mu_x[p], my = m.mu_y[p];
  const double a = 2 * mx * my + c1;
  const double b = 2 * (m.e_xy[p] - mx * my) + c2;
  const double c = mx * mx + my * my + c1;
  const double d = (m.e_xx[p] - mx * mx) + (m.e_yy[p] - my * my) + c2;
  return a * b / (c * d);
}

void check_pair(const ImageD& a, const ImageD& b) {
  if (!a.same_shape(b) || a.channels != b.channels || a.empty()) throw contract_violation("image pair shape mismatch");
}

}  // namespace

ColorLoss color_loss(const ImageD& rendered, const ImageD& target, const MaskImage& mask,
                     const PhotometricConfig& config) {
  check_pair(rendered, target);
  if (!rendered.same_shape(mask)) throw contract_violation("color_loss: mask shape mismatch");
  const int w = rendered.width, h = rendered.height, nc = rendered.channels;
  ColorLoss out;
  out.d_rendered = ImageD(w, h, nc);
  std::size_t n_pix = 0;
  for (auto v : mask.data) n_pix += v ? 1 : 0;
  if (n_pix == 0) return out;

  const double inv = 1.0 / static_cast<double>(n_pix * static_cast<std::size_t>(nc));
  for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
    if (!mask.data[p]) continue;
    for (int c = 0; c < nc; ++c) {
      const std::size_t i = p * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c);
      const double r = rendered.data[i] - target.data[i];
      out.l1 += std::abs(r) * inv;
      out.d_rendered.data[i] = (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) * inv;
    }
  }
  out.value = out.l1;
  if (config.lambda_dssim == 0) return out;

  const auto k = gaussian_window(config.ssim_window, config.ssim_sigma);
  const double c1 = kSsimC1 * config.dynamic_range * config.dynamic_range;
  const double c2 = kSsimC2 * config.dynamic_range * config.dynamic_range;
  const double coef = -0.5 * config.lambda_dssim * inv;  // d(loss)/d(S_p) on masked pixels
  double ssim_sum = 0;
  for (int c = 0; c < nc; ++c) {
    std::vector<double> x = plane(rendered, c), y = plane(target, c);
    for (std::size_t p = 0; p < x.size(); ++p)
      if (!mask.data[p]) x[p] = y[p] = 0;
    const SsimMaps m = moments(x, y, w, h, k);
    std::vector<double> g_mu(x.size(), 0.0), g_xx(x.size(), 0.0), g_xy(x.size(), 0.0);
    for (std::size_t p = 0; p < x.size(); ++p) {
      if (!mask.data[p]) continue;
      const double mx = m.mu_x[p], my = m.mu_y[p];
      const double a = 2 * mx * my + c1;
      const double b = 2 * (m.e_xy[p] - mx * my) + c2;
      const double cc = mx * mx + my * my + c1;
      const double d = (m.e_xx[p] - mx * mx) + (m.e_yy[p] - my * my) + c2;
      const double s = a * b / (cc * d);
      ssim_sum += s;
      const double g = coef * s;
      g_mu[p] = g * (2 * my / a - 2 * my / b - 2 * mx / cc + 2 * mx / d);
      g_xx[p] = g * (-1.0 / d);
      g_xy[p] = g * (2.0 / b);
    }
    // The symmetric zero-padded window is its own adjoint.
    const auto b_mu = blur(g_mu, w, h, k), b_xx = blur(g_xx, w, h, k), b_xy = blur(g_xy, w, h, k);
    for (std::size_t p = 0; p < x.size(); ++p) {
      if (!mask.data[p]) continue;
      out.d_rendered.data[p * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)] +=
          b_mu[p] + 2.0 * x[p] * b_xx[p] + y[p] * b_xy[p];
    }
  }
  out.ssim = ssim_sum * inv;
  out.value += config.lambda_dssim * (1.0 - out.ssim) / 2.0;
  return out;
}

double mse(const ImageD& a, const ImageD& b) {
  check_pair(a, b);
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

double psnr(const ImageD& a, const ImageD& b, double dynamic_range) {
  const double e = mse(a, b);
  if (e < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(dynamic_range * dynamic_range / e));
}

double ssim(const ImageD& a, const ImageD& b, const PhotometricConfig& config) {
  check_pair(a, b);
  const auto k = gaussian_window(config.ssim_window, config.ssim_sigma);
  const double c1 = kSsimC1 * config.dynamic_range * config.dynamic_range;
  const double c2 = kSsimC2 * config.dynamic_range * config.dynamic_range;
  double sum = 0;
  for (int c = 0; c < a.channels; ++c) {
    const SsimMaps m = moments(plane(a, c), plane(b, c), a.width, a.height, k);
    for (std::size_t p = 0; p < a.pixel_count(); ++p) sum += ssim_at(m, p, c1, c2);
  }
  return sum / static_cast<double>(a.data.size());
}

}  // namespace tsgs
