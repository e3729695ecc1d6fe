#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsgs/core_types.hpp"
#include "tsgs/dataset_io.hpp"
#include "tsgs/renderer.hpp"

namespace tsgs {

struct SceneObject {
  int class_id = 1;
  Vec3 center = Vec3::Zero();
  Vec3 extent = Vec3::Constant(0.5);  // ellipsoid semi-axes
  int count = 100;
  Vec3 color = Vec3::Constant(0.5);   // linear RGB
};

struct SceneSpec {
  std::vector<SceneObject> objects;
};

SceneSpec parse_scene_spec(const std::string& text);
std::string format_scene_spec(const SceneSpec& spec);

struct SyntheticScene {
  GaussianCloud cloud;
  std::vector<int> labels;  // ground-truth class per Gaussian
  int instance_count = 0;
  Box3 bounds;              // object boxes, padded
};

SyntheticScene make_scene(const SceneSpec& spec, std::uint64_t seed);

struct RingSpec {
  int count = 12;
  double radius = 4.0;
  double elevation_deg = 25.0;
  Vec3 target = Vec3::Zero();
  int width = 64;
  int height = 64;
  double fov_deg = 50.0;
};

/// Cameras evenly spaced on a circle around target, looking at it (z up, OpenCV axes).
std::vector<Camera> camera_ring(const RingSpec& ring);
Camera look_at(const Vec3& position, const Vec3& target, int width, int height, double fov_deg);

/// Exact color, ID mask and soft depth for one camera. A pixel takes the class with the largest
/// composited weight where accumulated alpha reaches 0.5, background otherwise.
ViewBundle render_ground_truth(const SyntheticScene& scene, const Camera& camera, const RenderSettings& settings);

struct SynthOptions {
  RingSpec ring;
  bool noisy_depth = false;
  double depth_noise = 0.05;   // multiplicative N(1, σ)
  double depth_scale = 0.5;    // prior = scale · noisy + shift
  double depth_shift = 1.0;
  std::uint64_t seed = 0;
  int dilation_px = 12;
};

/// Renders the ring, writes images/, masks/, depths/ and manifest.txt under out_dir, and returns
/// the dataset exactly as load_dataset will read it back.
Dataset render_dataset(const SyntheticScene& scene, const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace tsgs
