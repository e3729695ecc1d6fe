#pragma once

#include "tsgs/core_types.hpp"

namespace tsgs {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 100.0;

struct PhotometricConfig {
  double lambda_dssim = 0.2;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double dynamic_range = 1.0;
};

void validate(const PhotometricConfig& config);

struct ColorLoss {
  double value = 0;
  double l1 = 0;
  double ssim = 1;  // masked SSIM used by the D-SSIM term
  ImageD d_rendered;
};

/// Masked mean |rendered - target| + λ·(1 - SSIM)/2. The SSIM term windows the
/// mask-zeroed images and averages the SSIM map over masked pixels.
ColorLoss color_loss(const ImageD& rendered, const ImageD& target, const MaskImage& mask,
                     const PhotometricConfig& config = {});

double mse(const ImageD& a, const ImageD& b);
/// 10·log10(range²/MSE), capped at 100 dB when MSE < 1e-10.
double psnr(const ImageD& a, const ImageD& b, double dynamic_range = 1.0);
/// Full-frame mean SSIM over pixels and channels.
double ssim(const ImageD& a, const ImageD& b, const PhotometricConfig& config = {});

/// Normalized 1D Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

}  // namespace tsgs
