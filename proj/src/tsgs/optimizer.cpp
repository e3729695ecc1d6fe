#include "tsgs/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "tsgs/error.hpp"

namespace tsgs {

void validate(const OptimizerConfig& c) {
  for (double lr : {c.lr_centers, c.lr_log_scales, c.lr_rotations, c.lr_opacity, c.lr_colors, c.lr_identity, c.lr_head})
    if (!(lr > 0)) throw config_error("optimizer: learning rates must be positive");
  if (!(c.lr_centers_final_factor > 0)) throw config_error("optimizer: lr_centers_final_factor must be positive");
  if (!(c.beta1 > 0 && c.beta1 < 1) || !(c.beta2 > 0 && c.beta2 < 1))
    throw config_error("optimizer: betas must lie in (0, 1)");
  if (!(c.eps > 0)) throw config_error("optimizer: eps must be positive");
  if (!(c.spatial_lr_scale > 0)) throw config_error("optimizer: spatial_lr_scale must be positive");
  if (c.total_iterations < 0) throw config_error("optimizer: total_iterations must be non-negative");
}

double center_lr(const OptimizerConfig& c, int iteration) {
  const double frac = c.total_iterations > 0 ? std::clamp(static_cast<double>(iteration) / c.total_iterations, 0.0, 1.0) : 0.0;
  return c.spatial_lr_scale * c.lr_centers * std::exp(frac * std::log(c.lr_centers_final_factor));
}

AdamState AdamState::zeros(const GaussianCloud& cloud, const ClassHead& head) {
  AdamState s;
  const std::size_t n = cloud.size();
  s.centers.resize(3 * n);
  s.log_scales.resize(3 * n);
  s.rotations.resize(4 * n);
  s.opacity.resize(n);
  s.colors.resize(cloud.colors.size());
  s.identity.resize(static_cast<std::size_t>(kIdDim) * n);
  s.head_weight.resize(static_cast<std::size_t>(head.weight.size()));
  s.head_bias.resize(static_cast<std::size_t>(head.bias.size()));
  return s;
}

namespace {

void remap_moments(AdamMoments& mom, const std::vector<std::int64_t>& source, std::size_t width) {
  AdamMoments out;
  out.resize(source.size() * width);
  for (std::size_t k = 0; k < source.size(); ++k) {
    if (source[k] < 0) continue;
    const auto i = static_cast<std::size_t>(source[k]);
    if ((i + 1) * width > mom.m.size()) throw contract_violation("AdamState::remap: source index out of range");
    for (std::size_t j = 0; j < width; ++j) {
      out.m[k * width + j] = mom.m[i * width + j];
      out.v[k * width + j] = mom.v[i * width + j];
    }
  }
  mom = std::move(out);
}

struct StepCoefficients {
  double beta1, beta2, eps, bc1, bc2;
};

// Returns true when the stored value changed.
inline bool adam_update(double& x, double g, double& m, double& v, double lr, const StepCoefficients& k) {
  m = k.beta1 * m + (1.0 - k.beta1) * g;
  v = k.beta2 * v + (1.0 - k.beta2) * g * g;
  const double update = lr * (m / k.bc1) / (std::sqrt(v / k.bc2) + k.eps);
  if (update == 0.0) return false;
  x = static_cast<double>(static_cast<float>(x - update));
  return true;
}

}  // namespace

void AdamState::remap(const std::vector<std::int64_t>& source, const GaussianCloud& new_cloud) {
  if (source.size() != new_cloud.size()) throw contract_violation("AdamState::remap: mapping size mismatch");
  remap_moments(centers, source, 3);
  remap_moments(log_scales, source, 3);
  remap_moments(rotations, source, 4);
  remap_moments(opacity, source, 1);
  remap_moments(colors, source, static_cast<std::size_t>(new_cloud.color_stride()));
  remap_moments(identity, source, kIdDim);
}

void adam_step(GaussianCloud& cloud, ClassHead& head, const GradientSet& grads, const HeadGradient& head_grad,
               AdamState& s, const OptimizerConfig& config, int iteration) {
  const std::size_t n = cloud.size();
  if (grads.size() != n || grads.colors.size() != cloud.colors.size() || s.centers.m.size() != 3 * n ||
      s.colors.m.size() != cloud.colors.size())
    throw contract_violation("adam_step: gradient or state size does not match the cloud");
  const bool head_has_grad = head_grad.weight.size() == head.weight.size() && head_grad.bias.size() == head.bias.size();
  if (head_grad.weight.size() != 0 && !head_has_grad) throw contract_violation("adam_step: head gradient shape mismatch");
  if (s.head_weight.m.size() != static_cast<std::size_t>(head.weight.size()))
    throw contract_violation("adam_step: head state size mismatch");

  ++s.step;
  const double t = static_cast<double>(s.step);
  const StepCoefficients k{config.beta1, config.beta2, config.eps, 1.0 - std::pow(config.beta1, t),
                           1.0 - std::pow(config.beta2, t)};
  const double lr_mu = center_lr(config, iteration);

  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      const std::size_t j = 3 * i + static_cast<std::size_t>(a);
      adam_update(cloud.centers[i][a], grads.centers[i][a], s.centers.m[j], s.centers.v[j], lr_mu, k);
      adam_update(cloud.log_scales[i][a], grads.log_scales[i][a], s.log_scales.m[j], s.log_scales.v[j],
                  config.lr_log_scales, k);
    }
    bool rotated = false;
    for (int a = 0; a < 4; ++a) {
      const std::size_t j = 4 * i + static_cast<std::size_t>(a);
      rotated |= adam_update(cloud.rotations[i][a], grads.rotations[i][a], s.rotations.m[j], s.rotations.v[j],
                             config.lr_rotations, k);
    }
    if (rotated) {
      const Vec4 q = cloud.rotations[i].normalized();
      for (int a = 0; a < 4; ++a) cloud.rotations[i][a] = static_cast<double>(static_cast<float>(q[a]));
    }
    adam_update(cloud.opacity_logits[i], grads.opacity_logits[i], s.opacity.m[i], s.opacity.v[i], config.lr_opacity, k);
    for (int d = 0; d < kIdDim; ++d) {
      const std::size_t j = static_cast<std::size_t>(kIdDim) * i + static_cast<std::size_t>(d);
      adam_update(cloud.identity_codes[i][d], grads.identity_codes[i][d], s.identity.m[j], s.identity.v[j],
                  config.lr_identity, k);
    }
  }
  for (std::size_t j = 0; j < cloud.colors.size(); ++j)
    adam_update(cloud.colors[j], grads.colors[j], s.colors.m[j], s.colors.v[j], config.lr_colors, k);

  for (Eigen::Index j = 0; j < head.weight.size(); ++j) {
    const double g = head_has_grad ? head_grad.weight.data()[j] : 0.0;
    const auto u = static_cast<std::size_t>(j);
    adam_update(head.weight.data()[j], g, s.head_weight.m[u], s.head_weight.v[u], config.lr_head, k);
  }
  for (Eigen::Index j = 0; j < head.bias.size(); ++j) {
    const double g = head_has_grad ? head_grad.bias[j] : 0.0;
    const auto u = static_cast<std::size_t>(j);
    adam_update(head.bias[j], g, s.head_bias.m[u], s.head_bias.v[u], config.lr_head, k);
  }
}

void validate(const LossConfig& c) {
  if (!(c.lambda_color >= 0) || !(c.lambda_id >= 0) || !(c.lambda_d >= 0))
    throw config_error("loss: weights must be non-negative");
  if (!(c.grouping.lambda_2d >= 0) || !(c.grouping.lambda_3d >= 0))
    throw config_error("grouping: weights must be non-negative");
  if (c.grouping.knn_k < 1 || c.grouping.sample_m < 1) throw config_error("grouping: knn_k and sample_m must be positive");
  validate(c.photometric);
  validate(c.depth);
}

namespace {

ImageD scaled(const ImageD& img, double s) {
  ImageD r = img;
  for (double& v : r.data) v *= s;
  return r;
}

}  // namespace

TotalLoss total_loss(const GaussianCloud& cloud, const ClassHead& head, const Camera& camera, const ViewBundle& view,
                     const LossConfig& config, const RenderSettings& settings, std::uint64_t sample_seed) {
  TotalLoss out;
  out.render = render(cloud, camera, settings, kChannelAll);
  const RenderOutput& r = out.render;
  if (!r.color.same_shape(view.image)) throw contract_violation("total_loss: view and camera sizes differ");

  MaskImage full(camera.width, camera.height, 1, 1);
  const MaskImage& loss_mask = config.use_floating_mask ? view.floating_mask : full;

  AdjointGroup free_group;
  free_group.params = kParamAll;
  AdjointGroup hard_group;
  hard_group.params = kParamCenters;
  AdjointGroup soft_group;
  soft_group.params = kParamOpacities;
  AdjointGroup id_group;
  id_group.params = config.identity_reaches_geometry ? kParamAll : kParamIdentity;

  if (config.lambda_color != 0) {
    const ColorLoss cl = color_loss(r.color, view.image, loss_mask, config.photometric);
    out.terms.l_color = cl.value;
    free_group.adjoints.color = scaled(cl.d_rendered, config.lambda_color);
  }

  out.head_grad = HeadGradient::zeros_like(head);
  std::vector<IdCode> code_grads;
  if (config.lambda_id != 0) {
    const Loss2d l2 = loss_2d(r.id_feature, view.id_mask, full, head);
    out.terms.l_2d = l2.value;
    const double w2 = config.lambda_id * config.grouping.lambda_2d;
    id_group.adjoints.id_feature = scaled(l2.d_feature, w2);
    out.head_grad.add(l2.d_head, w2);
    if (config.grouping.lambda_3d != 0 && cloud.size() > static_cast<std::size_t>(config.grouping.knn_k)) {
      Loss3d l3 = loss_3d(cloud, head, config.grouping, sample_seed);
      out.terms.l_3d = l3.value;
      code_grads = std::move(l3.d_codes);
    }
  }

  if (config.lambda_d != 0) {
    ViewBundle masked = view;
    if (!config.use_floating_mask) masked.floating_mask = full;
    const MultiScaleDepthLoss dl = multi_scale_depth_loss(r, masked, config.depth);
    out.terms.l_hard = dl.soft_hard.hard.value;
    out.terms.l_soft = dl.soft_hard.soft.value;
    out.terms.l_gl = dl.global_local.value;
    hard_group.adjoints.hard_depth = scaled(dl.d_hard_centers_only, config.lambda_d);
    soft_group.adjoints.soft_depth = scaled(dl.d_soft_opacity_only, config.lambda_d);
    if (config.depth.gl_on_hard_depth)
      free_group.adjoints.hard_depth = scaled(dl.d_gl, config.lambda_d);
    else
      free_group.adjoints.soft_depth = scaled(dl.d_gl, config.lambda_d);
  }

  const AdjointGroup groups[] = {free_group, hard_group, soft_group, id_group};
  out.grads = backward(r, cloud, groups);
  if (!code_grads.empty()) {
    const double w3 = config.lambda_id * config.grouping.lambda_3d;
    for (std::size_t i = 0; i < cloud.size(); ++i) out.grads.identity_codes[i] += w3 * code_grads[i];
  }

  const LossTerms& t = out.terms;
  out.terms.total = config.lambda_color * t.l_color +
                    config.lambda_id * (config.grouping.lambda_2d * t.l_2d + config.grouping.lambda_3d * t.l_3d) +
                    config.lambda_d * (config.depth.lambda_sh * (t.l_hard + t.l_soft) + config.depth.lambda_gl * t.l_gl);
  return out;
}

}  // namespace tsgs
