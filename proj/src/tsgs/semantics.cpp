#include "tsgs/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tsgs/error.hpp"
#include "tsgs/kdtree.hpp"

namespace tsgs {

HeadGradient HeadGradient::zeros_like(const ClassHead& head) {
  return {Eigen::MatrixXd::Zero(head.weight.rows(), head.weight.cols()), Eigen::VectorXd::Zero(head.bias.size())};
}

void HeadGradient::add(const HeadGradient& o, double scale) {
  weight += scale * o.weight;
  bias += scale * o.bias;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp();
  return e / e.sum();
}

void check_head(const ClassHead& head) {
  if (head.weight.rows() != kIdDim || head.weight.cols() != head.bias.size() || head.bias.size() < 1)
    throw contract_violation("class head has inconsistent dimensions");
}

// dL/dlogits from dL/dp through the softmax Jacobian.
Eigen::VectorXd softmax_backward(const Eigen::VectorXd& p, const Eigen::VectorXd& dp) {
  return p.array() * (dp.array() - p.dot(dp));
}

}  // namespace

Eigen::VectorXd class_probabilities(const double* feature, const ClassHead& head) {
  const Eigen::Map<const IdCode> e(feature);
  return softmax(head.weight.transpose() * e + head.bias);
}

ImageD classify(const ImageD& features, const ClassHead& head) {
  check_head(head);
  if (features.channels != kIdDim) throw contract_violation("classify: features must have 16 channels");
  ImageD out(features.width, features.height, head.class_count());
  for (std::size_t p = 0; p < features.pixel_count(); ++p) {
    const Eigen::VectorXd prob = class_probabilities(&features.data[p * kIdDim], head);
    std::copy(prob.data(), prob.data() + prob.size(), &out.data[p * static_cast<std::size_t>(out.channels)]);
  }
  return out;
}

LabelImage classify_labels(const ImageD& features, const ClassHead& head) {
  const ImageD prob = classify(features, head);
  LabelImage out(features.width, features.height, 1);
  for (std::size_t p = 0; p < prob.pixel_count(); ++p) {
    const auto px = prob.pixel(p);
    out.data[p] = static_cast<std::int32_t>(std::max_element(px.begin(), px.end()) - px.begin());
  }
  return out;
}

Loss2d loss_2d(const ImageD& id_feature, const LabelImage& id_mask, const MaskImage& mask, const ClassHead& head) {
  check_head(head);
  if (id_feature.channels != kIdDim || !id_feature.same_shape(id_mask) || !id_feature.same_shape(mask))
    throw contract_violation("loss_2d: feature, label and mask shapes disagree");
  Loss2d out;
  out.d_feature = ImageD(id_feature.width, id_feature.height, kIdDim);
  out.d_head = HeadGradient::zeros_like(head);

  std::size_t count = 0;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) count += mask.data[p] ? 1 : 0;
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);
  const int classes = head.class_count();

  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    if (!mask.data[p]) continue;
    const int label = id_mask.data[p];
    if (label < 0 || label >= classes) throw contract_violation("loss_2d: label outside the head's class range");
    const Eigen::Map<const IdCode> e(&id_feature.data[p * kIdDim]);
    const Eigen::VectorXd prob = softmax(head.weight.transpose() * e + head.bias);
    const double py = prob[label];
    out.value += -std::log(std::max(py, kProbFloor)) * inv;
    if (!(py > kProbFloor)) continue;
    Eigen::VectorXd dlogits = prob * inv;
    dlogits[label] -= inv;
    Eigen::Map<IdCode> de(&out.d_feature.data[p * kIdDim]);
    de = head.weight * dlogits;
    out.d_head.weight.noalias() += e * dlogits.transpose();
    out.d_head.bias += dlogits;
  }
  return out;
}

Loss3d loss_3d(const GaussianCloud& cloud, const ClassHead& head, const GroupingConfig& config, std::uint64_t seed) {
  check_head(head);
  const std::size_t n = cloud.size();
  if (config.knn_k < 1 || config.sample_m < 1) throw config_error("loss_3d: knn_k and sample_m must be at least 1");
  const auto k = static_cast<std::size_t>(config.knn_k);
  if (n <= k) throw config_error("loss_3d: need more Gaussians than knn_k");

  Loss3d out;
  out.d_codes.assign(n, IdCode::Zero());

  // Uniform sample without replacement (partial Fisher-Yates).
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(config.sample_m), n);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < m; ++s) {
    std::uniform_int_distribution<std::size_t> pick(s, n - 1);
    std::swap(idx[s], idx[pick(rng)]);
  }
  out.samples.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));

  const KdTree tree(cloud.centers);
  const Eigen::MatrixXd wt = head.weight.transpose();
  std::vector<Eigen::VectorXd> prob(n);
  std::vector<std::uint8_t> have(n, 0);
  auto probs = [&](std::size_t i) -> const Eigen::VectorXd& {
    if (!have[i]) {
      prob[i] = softmax(wt * cloud.identity_codes[i] + head.bias);
      have[i] = 1;
    }
    return prob[i];
  };

  const double norm = 1.0 / static_cast<double>(m * k);
  for (std::size_t j : out.samples) {
    const Eigen::VectorXd& p = probs(j);
    const Eigen::VectorXd logp = p.cwiseMax(kProbFloor).array().log();
    Eigen::VectorXd dp_total = Eigen::VectorXd::Zero(p.size());
    for (const Neighbor& nb : tree.nearest(cloud.centers[j], k, static_cast<std::int64_t>(j))) {
      const Eigen::VectorXd& q = probs(nb.index);
      const Eigen::VectorXd logq = q.cwiseMax(kProbFloor).array().log();
      out.value += p.dot(logp - logq) * norm;
      Eigen::VectorXd dp = logp - logq;
      Eigen::VectorXd dq(q.size());
      for (Eigen::Index c = 0; c < p.size(); ++c) {
        if (p[c] > kProbFloor) dp[c] += 1.0;
        dq[c] = q[c] > kProbFloor ? -p[c] / q[c] : 0.0;
      }
      dp_total += dp;
      out.d_codes[nb.index] += head.weight * softmax_backward(q, dq) * norm;
    }
    out.d_codes[j] += head.weight * softmax_backward(p, dp_total) * norm;
  }
  return out;
}

GroupingLoss grouping_loss(const Loss2d& l2d, const Loss3d& l3d, const GroupingConfig& config) {
  GroupingLoss out;
  out.l2d = l2d.value;
  out.l3d = l3d.value;
  out.value = config.lambda_2d * l2d.value + config.lambda_3d * l3d.value;
  out.d_feature = l2d.d_feature;
  for (double& v : out.d_feature.data) v *= config.lambda_2d;
  out.d_head = l2d.d_head;
  out.d_head.weight *= config.lambda_2d;
  out.d_head.bias *= config.lambda_2d;
  out.d_codes = l3d.d_codes;
  for (auto& c : out.d_codes) c *= config.lambda_3d;
  return out;
}

std::vector<GaussianLabel> gaussian_class(const GaussianCloud& cloud, const ClassHead& head) {
  check_head(head);
  std::vector<GaussianLabel> out(cloud.size());
  const Eigen::MatrixXd wt = head.weight.transpose();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::VectorXd p = softmax(wt * cloud.identity_codes[i] + head.bias);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.size(); ++c)
      if (p[c] > p[best]) best = c;
    out[i] = {static_cast<int>(best), p[best]};
  }
  return out;
}

}  // namespace tsgs
