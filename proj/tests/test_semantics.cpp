#include <doctest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "tsgs/error.hpp"
#include "tsgs/kdtree.hpp"
#include "tsgs/semantics.hpp"

using namespace tsgs;

namespace {

ClassHead random_head(std::mt19937_64& rng, int instances, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  ClassHead h(instances);
  for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < h.bias.size(); ++i) h.bias[i] = nd(rng);
  return h;
}

Eigen::VectorXd reference_probs(const double* e, const ClassHead& h) {
  const int c = h.class_count();
  std::vector<double> logits(c);
  double mx = -1e300;
  for (int k = 0; k < c; ++k) {
    logits[k] = h.bias[k];
    for (int d = 0; d < kIdDim; ++d) logits[k] += h.weight(d, k) * e[d];
    mx = std::max(mx, logits[k]);
  }
  Eigen::VectorXd p(c);
  double sum = 0;
  for (int k = 0; k < c; ++k) sum += (p[k] = std::exp(logits[k] - mx));
  return p / sum;
}

double kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double v = 0;
  for (Eigen::Index c = 0; c < p.size(); ++c) v += p[c] * std::log(p[c] / q[c]);
  return v;
}

GaussianCloud line_cloud(std::size_t n, std::mt19937_64& rng) {
  GaussianCloud c;
  c.resize(n);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < n; ++i) {
    c.centers[i] = Vec3(nd(rng), nd(rng), nd(rng));
    for (int d = 0; d < kIdDim; ++d) c.identity_codes[i][d] = nd(rng);
  }
  return c;
}

}  // namespace

TEST_SUITE("semantics") {

TEST_CASE("zero head classifies uniformly") {
  ClassHead head(3);
  ImageD feat(2, 2, kIdDim, 0.7);
  const ImageD p = classify(feat, head);
  for (double v : p.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("background bias dominates") {
  ClassHead head(3);
  head.bias[0] = 10;
  ImageD feat(1, 1, kIdDim, 0.0);
  const ImageD p = classify(feat, head);
  const double e = std::exp(-10.0);
  CHECK(p.data[0] == doctest::Approx(1.0 / (1.0 + 3.0 * e)).epsilon(1e-14));
  CHECK(p.data[1] == doctest::Approx(e / (1.0 + 3.0 * e)).epsilon(1e-12));
}

TEST_CASE("classification matches a direct exp/sum recomputation") {
  std::mt19937_64 rng(1);
  const ClassHead head = random_head(rng, 4);
  const ImageD feat = oracle::random_image(rng, 5, 4, kIdDim, -2, 2);
  const ImageD p = classify(feat, head);
  for (std::size_t px = 0; px < feat.pixel_count(); ++px) {
    const Eigen::VectorXd want = reference_probs(feat.pixel(px).data(), head);
    double sum = 0;
    for (int c = 0; c < 5; ++c) {
      CHECK(std::abs(p.pixel(px)[c] - want[c]) < 1e-9);
      CHECK(p.pixel(px)[c] > 0);
      sum += p.pixel(px)[c];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("perfect predictions give zero cross-entropy") {
  ClassHead head(2);
  head.weight(0, 1) = 2000;  // feature 0 selects class 1
  head.weight(1, 2) = 2000;
  ImageD feat(2, 1, kIdDim, 0.0);
  feat.at(0, 0, 0) = 1;
  feat.at(1, 0, 1) = 1;
  LabelImage labels(2, 1);
  labels.at(0, 0) = 1;
  labels.at(1, 0) = 2;
  const Loss2d l = loss_2d(feat, labels, MaskImage(2, 1, 1, 1), head);
  CHECK(l.value == 0.0);
}

TEST_CASE("uniform predictions give ln(C+1)") {
  ClassHead head(4);
  std::mt19937_64 rng(2);
  const ImageD feat = oracle::random_image(rng, 3, 3, kIdDim);
  LabelImage labels(3, 3);
  for (std::size_t i = 0; i < labels.data.size(); ++i) labels.data[i] = static_cast<int>(i % 5);
  const Loss2d l = loss_2d(feat, labels, MaskImage(3, 3, 1, 1), head);
  CHECK(l.value == doctest::Approx(std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("an empty mask gives zero loss and zero gradients") {
  std::mt19937_64 rng(3);
  const ClassHead head = random_head(rng, 2);
  const ImageD feat = oracle::random_image(rng, 3, 3, kIdDim);
  const Loss2d l = loss_2d(feat, LabelImage(3, 3), MaskImage(3, 3, 1, 0), head);
  CHECK(l.value == 0.0);
  for (double v : l.d_feature.data) CHECK(v == 0.0);
  CHECK(l.d_head.weight.isZero(0));
}

TEST_CASE("masked pixels do not contribute") {
  std::mt19937_64 rng(4);
  const ClassHead head = random_head(rng, 2);
  const ImageD feat = oracle::random_image(rng, 2, 1, kIdDim);
  LabelImage labels(2, 1);
  labels.at(0, 0) = 1;
  labels.at(1, 0) = 2;
  MaskImage mask(2, 1, 1, 1);
  mask.at(1, 0) = 0;
  const Loss2d l = loss_2d(feat, labels, mask, head);
  const Eigen::VectorXd p = reference_probs(feat.pixel(0).data(), head);
  CHECK(l.value == doctest::Approx(-std::log(p[1])).epsilon(1e-12));
  for (int d = 0; d < kIdDim; ++d) CHECK(l.d_feature.at(1, 0, d) == 0.0);
}

TEST_CASE("identity loss gradient matches central differences") {
  std::mt19937_64 rng(5);
  ClassHead head = random_head(rng, 3);
  ImageD feat = oracle::random_image(rng, 4, 4, kIdDim, -1, 1);
  LabelImage labels(4, 4);
  for (auto& v : labels.data) v = static_cast<int>(rng() % 4);
  MaskImage mask(4, 4, 1, 1);
  mask.at(2, 1) = 0;
  const Loss2d l = loss_2d(feat, labels, mask, head);
  auto f = [&] { return loss_2d(feat, labels, mask, head).value; };
  std::vector<double*> params;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < feat.data.size(); ++i) {
    params.push_back(&feat.data[i]);
    analytic.push_back(l.d_feature.data[i]);
  }
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) {
    params.push_back(head.weight.data() + i);
    analytic.push_back(l.d_head.weight.data()[i]);
  }
  for (Eigen::Index i = 0; i < head.bias.size(); ++i) {
    params.push_back(head.bias.data() + i);
    analytic.push_back(l.d_head.bias[i]);
  }
  const auto rep = oracle::check_gradient(f, params, analytic, 1e-5);
  CHECK(rep.failed == 0);
  CHECK(rep.worst_rel < 1e-5);
}

TEST_CASE("equal codes give zero grouping regularizer") {
  std::mt19937_64 rng(6);
  GaussianCloud cloud = line_cloud(40, rng);
  for (auto& e : cloud.identity_codes) e = cloud.identity_codes[0];
  const ClassHead head = random_head(rng, 3);
  GroupingConfig cfg;
  cfg.sample_m = 10;
  for (std::uint64_t seed : {1, 2, 3}) CHECK(loss_3d(cloud, head, cfg, seed).value == 0.0);
}

TEST_CASE("two Gaussians with m = 1 and K = 1 give a hand computed KL") {
  std::mt19937_64 rng(7);
  GaussianCloud cloud = line_cloud(2, rng);
  const ClassHead head = random_head(rng, 2);
  GroupingConfig cfg;
  cfg.knn_k = 1;
  cfg.sample_m = 1;
  const Loss3d l = loss_3d(cloud, head, cfg, 9);
  REQUIRE(l.samples.size() == 1);
  const std::size_t j = l.samples[0], i = 1 - j;
  const double want = kl(reference_probs(cloud.identity_codes[j].data(), head),
                         reference_probs(cloud.identity_codes[i].data(), head));
  CHECK(l.value == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("grouping regularizer gradient matches central differences") {
  std::mt19937_64 rng(8);
  GaussianCloud cloud = line_cloud(12, rng);
  const ClassHead head = random_head(rng, 3);
  GroupingConfig cfg;
  cfg.knn_k = 3;
  cfg.sample_m = 5;
  const Loss3d l = loss_3d(cloud, head, cfg, 4);
  auto f = [&] { return loss_3d(cloud, head, cfg, 4).value; };
  std::vector<double*> params;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int d = 0; d < kIdDim; ++d) {
      params.push_back(&cloud.identity_codes[i][d]);
      analytic.push_back(l.d_codes[i][d]);
    }
  CHECK(oracle::check_gradient(f, params, analytic).failed == 0);
}

TEST_CASE("too few Gaussians for K is a configuration error") {
  std::mt19937_64 rng(9);
  const GaussianCloud cloud = line_cloud(5, rng);
  GroupingConfig cfg;
  cfg.knn_k = 5;
  try {
    loss_3d(cloud, ClassHead(2), cfg, 1);
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::configuration);
  }
}

TEST_CASE("neighbour search agrees with brute force on 200 Gaussians") {
  std::mt19937_64 rng(10);
  const GaussianCloud cloud = line_cloud(200, rng);
  const KdTree tree(cloud.centers);
  for (std::size_t j = 0; j < 200; ++j) {
    const auto got = tree.nearest(cloud.centers[j], 5, static_cast<std::int64_t>(j));
    const auto want = oracle::brute_knn(cloud.centers, cloud.centers[j], 5, static_cast<std::int64_t>(j));
    REQUIRE(got.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) CHECK(got[k].index == want[k]);
  }
}

TEST_CASE("grouping combination is linear") {
  std::mt19937_64 rng(11);
  GaussianCloud cloud = line_cloud(20, rng);
  const ClassHead head = random_head(rng, 2);
  const ImageD feat = oracle::random_image(rng, 3, 3, kIdDim);
  LabelImage labels(3, 3);
  for (auto& v : labels.data) v = static_cast<int>(rng() % 3);
  const Loss2d l2 = loss_2d(feat, labels, MaskImage(3, 3, 1, 1), head);
  GroupingConfig cfg;
  cfg.sample_m = 8;
  const Loss3d l3 = loss_3d(cloud, head, cfg, 3);

  cfg.lambda_3d = 0;
  CHECK(grouping_loss(l2, l3, cfg).value == l2.value);
  cfg.lambda_2d = cfg.lambda_3d = 1;
  CHECK(std::abs(grouping_loss(l2, l3, cfg).value - (l2.value + l3.value)) < 1e-12);
  cfg.lambda_2d = 0.5;
  cfg.lambda_3d = 3;
  const GroupingLoss g = grouping_loss(l2, l3, cfg);
  GroupingConfig scaled = cfg;
  scaled.lambda_2d *= 2;
  scaled.lambda_3d *= 2;
  CHECK(grouping_loss(l2, l3, scaled).value == doctest::Approx(2 * g.value).epsilon(1e-14));
  for (std::size_t i = 0; i < feat.data.size(); ++i) CHECK(g.d_feature.data[i] == 0.5 * l2.d_feature.data[i]);
  for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(g.d_codes[i] == 3.0 * l3.d_codes[i]);
  CHECK(l2.value >= 0);
  CHECK(l3.value >= 0);
}

TEST_CASE("a code pushed along a class direction takes that class") {
  ClassHead head(3);
  head.weight(2, 2) = 1.0;
  GaussianCloud cloud;
  cloud.resize(1);
  cloud.identity_codes[0][2] = 50;
  const auto lab = gaussian_class(cloud, head);
  CHECK(lab[0].cls == 2);
  CHECK(lab[0].prob == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero head labels everything as background") {
  std::mt19937_64 rng(12);
  const GaussianCloud cloud = line_cloud(10, rng);
  for (const auto& l : gaussian_class(cloud, ClassHead(4))) {
    CHECK(l.cls == 0);
    CHECK(l.prob == doctest::Approx(0.2));
  }
}

TEST_CASE("per-Gaussian labels match classify and argmax") {
  std::mt19937_64 rng(13);
  const GaussianCloud cloud = line_cloud(50, rng);
  const ClassHead head = random_head(rng, 4);
  const auto labels = gaussian_class(cloud, head);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::VectorXd p = reference_probs(cloud.identity_codes[i].data(), head);
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    CHECK(labels[i].cls == best);
    CHECK(labels[i].prob == doctest::Approx(p[best]).epsilon(1e-12));
  }
}

TEST_CASE("classify_labels takes the lowest index on ties") {
  ImageD feat(2, 2, kIdDim, 0.0);
  const LabelImage lab = classify_labels(feat, ClassHead(3));
  for (int v : lab.data) CHECK(v == 0);
}

}  // TEST_SUITE
