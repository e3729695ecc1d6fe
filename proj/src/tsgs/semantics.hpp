#pragma once

#include <cstdint>
#include <vector>

#include "tsgs/core_types.hpp"

namespace tsgs {

inline constexpr double kProbFloor = 1e-12;

struct GroupingConfig {
  double lambda_2d = 1.0;
  double lambda_3d = 2.0;
  int knn_k = 5;
  int sample_m = 1000;
};

struct HeadGradient {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  static HeadGradient zeros_like(const ClassHead& head);
  void add(const HeadGradient& other, double scale = 1.0);
};

/// softmax(weightᵀ·feature + bias).
Eigen::VectorXd class_probabilities(const double* feature, const ClassHead& head);

/// Per-pixel class distribution of an H×W×16 feature image (H×W×(C+1)).
ImageD classify(const ImageD& features, const ClassHead& head);

/// Per-pixel argmax class of the classified features (lowest index wins ties).
LabelImage classify_labels(const ImageD& features, const ClassHead& head);

struct Loss2d {
  double value = 0;
  ImageD d_feature;
  HeadGradient d_head;
};

/// Mean cross-entropy between id_mask and classify(id_feature) over pixels where mask is set.
Loss2d loss_2d(const ImageD& id_feature, const LabelImage& id_mask, const MaskImage& mask, const ClassHead& head);

struct Loss3d {
  double value = 0;
  std::vector<IdCode> d_codes;  // one per Gaussian
  std::vector<std::size_t> samples;
};

/// Mean KL(F(e_j) ‖ F(e_i)) between m sampled Gaussians and their K nearest
/// neighbours. The head is held constant.
Loss3d loss_3d(const GaussianCloud& cloud, const ClassHead& head, const GroupingConfig& config, std::uint64_t seed);

struct GroupingLoss {
  double value = 0;
  double l2d = 0;
  double l3d = 0;
  ImageD d_feature;
  HeadGradient d_head;
  std::vector<IdCode> d_codes;
};

GroupingLoss grouping_loss(const Loss2d& l2d, const Loss3d& l3d, const GroupingConfig& config);

struct GaussianLabel {
  int cls = 0;
  double prob = 0;
};

std::vector<GaussianLabel> gaussian_class(const GaussianCloud& cloud, const ClassHead& head);

}  // namespace tsgs
