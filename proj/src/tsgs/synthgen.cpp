#include "tsgs/synthgen.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "tsgs/adaptive_control.hpp"
#include "tsgs/error.hpp"
#include "tsgs/parallel.hpp"
#include "tsgs/sh.hpp"

namespace fs = std::filesystem;

namespace tsgs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Vec3 parse_vec3(const std::string& v, const std::string& where) {
  std::istringstream ss(v);
  Vec3 out;
  std::string extra;
  if (!(ss >> out[0] >> out[1] >> out[2]) || (ss >> extra)) throw corruption_error(where + ": expected three numbers");
  return out;
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec spec;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> seen;
  auto finish = [&]() {
    if (spec.objects.empty()) return;
    for (const char* k : {"class", "center", "extent", "count", "color"})
      if (std::find(seen.begin(), seen.end(), k) == seen.end())
        throw corruption_error("scene spec: object " + std::to_string(spec.objects.size()) + " is missing '" + k + "'");
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "scene spec line " + std::to_string(line_no);
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s == "[object]") {
      finish();
      spec.objects.emplace_back();
      seen.clear();
      continue;
    }
    if (spec.objects.empty()) throw corruption_error(where + ": entries must follow an [object] header");
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw corruption_error(where + ": expected key = value");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw corruption_error(where + ": duplicate key '" + key + "'");
    seen.push_back(key);
    SceneObject& o = spec.objects.back();
    try {
      std::size_t used = 0;
      if (key == "class") {
        o.class_id = std::stoi(value, &used);
        if (used != value.size() || o.class_id < 1 || o.class_id > 255)
          throw corruption_error(where + ": class must be an integer in [1, 255]");
      } else if (key == "count") {
        o.count = std::stoi(value, &used);
        if (used != value.size() || o.count < 1) throw corruption_error(where + ": count must be a positive integer");
      } else if (key == "center") {
        o.center = parse_vec3(value, where);
      } else if (key == "extent") {
        o.extent = parse_vec3(value, where);
        if (!(o.extent.array() > 0).all()) throw corruption_error(where + ": extent must be positive");
      } else if (key == "color") {
        o.color = parse_vec3(value, where);
        if (!(o.color.array() >= 0).all() || !(o.color.array() <= 1).all())
          throw corruption_error(where + ": color must lie in [0, 1]");
      } else {
        throw corruption_error(where + ": unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw corruption_error(where + ": malformed value '" + value + "'");
    }
  }
  finish();
  if (spec.objects.empty()) throw corruption_error("scene spec: no objects");
  return spec;
}

std::string format_scene_spec(const SceneSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& o : spec.objects) {
    out << "[object]\nclass = " << o.class_id << "\ncenter = " << o.center[0] << ' ' << o.center[1] << ' ' << o.center[2]
        << "\nextent = " << o.extent[0] << ' ' << o.extent[1] << ' ' << o.extent[2] << "\ncount = " << o.count
        << "\ncolor = " << o.color[0] << ' ' << o.color[1] << ' ' << o.color[2] << "\n\n";
  }
  return out.str();
}

SyntheticScene make_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.objects.empty()) throw parameter_error("make_scene: no objects");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticScene scene;
  scene.bounds.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  scene.bounds.hi = -scene.bounds.lo;
  for (const auto& o : spec.objects) {
    scene.instance_count = std::max(scene.instance_count, o.class_id);
    // Splat size so that count splats tile the ellipsoid surface about twice over.
    const double mean_extent = o.extent.mean();
    const double base_sigma = mean_extent * std::sqrt(8.0 / o.count);
    for (int k = 0; k < o.count; ++k) {
      Vec3 p;
      do {
        p = Vec3(unit(rng), unit(rng), unit(rng));
      } while (p.squaredNorm() > 1.0);
      const std::size_t i = scene.cloud.size();
      scene.cloud.resize(i + 1);
      scene.cloud.centers[i] = o.center + p.cwiseProduct(o.extent);
      for (int a = 0; a < 3; ++a) scene.cloud.log_scales[i][a] = std::log(base_sigma * jitter(rng));
      Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
      scene.cloud.rotations[i] = q.normalized();
      scene.cloud.opacity_logits[i] = inverse_sigmoid(0.9);
      for (int c = 0; c < 3; ++c) scene.cloud.colors[3 * i + static_cast<std::size_t>(c)] =
          color_to_dc(std::clamp(o.color[c] * jitter(rng), 0.0, 1.0));
      scene.labels.push_back(o.class_id);
    }
    scene.bounds.lo = scene.bounds.lo.cwiseMin(o.center - o.extent);
    scene.bounds.hi = scene.bounds.hi.cwiseMax(o.center + o.extent);
  }
  const Vec3 pad = 0.1 * (scene.bounds.hi - scene.bounds.lo);
  scene.bounds.lo -= pad;
  scene.bounds.hi += pad;
  return scene;
}

Camera look_at(const Vec3& position, const Vec3& target, int width, int height, double fov_deg) {
  const Vec3 forward = (target - position).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3::UnitY();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera c;
  c.rotation.row(0) = right;
  c.rotation.row(1) = down;
  c.rotation.row(2) = forward;
  c.translation = -c.rotation * position;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  return c;
}

std::vector<Camera> camera_ring(const RingSpec& ring) {
  if (ring.count < 1 || !(ring.radius > 0) || ring.width < 1 || ring.height < 1 || !(ring.fov_deg > 0 && ring.fov_deg < 180))
    throw parameter_error("camera_ring: invalid ring");
  std::vector<Camera> cams;
  const double elev = ring.elevation_deg * std::numbers::pi / 180.0;
  for (int k = 0; k < ring.count; ++k) {
    const double az = 2.0 * std::numbers::pi * k / ring.count;
    const Vec3 pos = ring.target + ring.radius * Vec3(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az),
                                                      std::sin(elev));
    cams.push_back(look_at(pos, ring.target, ring.width, ring.height, ring.fov_deg));
  }
  return cams;
}

ViewBundle render_ground_truth(const SyntheticScene& scene, const Camera& camera, const RenderSettings& settings) {
  ViewBundle v;
  const RenderOutput main = render(scene.cloud, camera, settings, kChannelColor | kChannelSoftDepth | kChannelAlpha);
  v.image = main.color;
  v.prior_depth = main.soft_depth;
  v.id_mask = LabelImage(camera.width, camera.height, 1);

  // Class weights through the id channel, kIdDim classes per pass.
  const int classes = scene.instance_count;
  std::vector<double> best(v.id_mask.pixel_count(), -1.0);
  GaussianCloud onehot = scene.cloud;
  for (int first = 1; first <= classes; first += kIdDim) {
    for (std::size_t i = 0; i < onehot.size(); ++i) {
      onehot.identity_codes[i].setZero();
      const int slot = scene.labels[i] - first;
      if (slot >= 0 && slot < kIdDim) onehot.identity_codes[i][slot] = 1.0;
    }
    const RenderOutput r = render(onehot, camera, settings, kChannelId | kChannelAlpha);
    for (std::size_t p = 0; p < best.size(); ++p) {
      if (main.accum_alpha.data[p] < 0.5) continue;
      for (int d = 0; d < kIdDim && first + d <= classes; ++d) {
        const double w = r.id_feature.data[p * kIdDim + static_cast<std::size_t>(d)];
        if (w > best[p]) {
          best[p] = w;
          v.id_mask.data[p] = first + d;
        }
      }
    }
  }
  return v;
}

Dataset render_dataset(const SyntheticScene& scene, const SynthOptions& opt, const fs::path& out_dir) {
  const auto cameras = camera_ring(opt.ring);
  RenderSettings settings;
  settings.background_depth = default_background_depth(cameras);

  std::error_code ec;
  for (const char* sub : {"images", "masks", "depths"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw io_error("cannot create " + (out_dir / sub).string());
  }

  Dataset ds;
  ds.root = out_dir;
  ds.instance_count = scene.instance_count;
  ds.bounds = scene.bounds;
  ds.views.resize(cameras.size());
  Manifest manifest;
  manifest.instance_count = scene.instance_count;
  manifest.bounds = scene.bounds;
  manifest.views.resize(cameras.size());

  parallel_for(cameras.size(), [&](std::size_t k) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu", k);
    ViewBundle gt = render_ground_truth(scene, cameras[k], settings);
    if (opt.noisy_depth) {
      std::mt19937_64 rng(opt.seed * 0x9E3779B97F4A7C15ULL + k + 1);
      std::normal_distribution<double> noise(1.0, opt.depth_noise);
      for (double& d : gt.prior_depth.data) d = opt.depth_scale * d * std::max(0.5, noise(rng)) + opt.depth_shift;
    }
    for (double& d : gt.prior_depth.data) d = static_cast<double>(static_cast<float>(d));

    ManifestView& mv = manifest.views[k];
    mv.name = name;
    mv.image = std::string("images/") + name + ".png";
    mv.mask = std::string("masks/") + name + ".png";
    mv.depth = std::string("depths/") + name + ".pfm";
    mv.camera = cameras[k];
    mv.split = k % 2 == 0 ? Split::train : Split::holdout;

    const Png8 png = encode_srgb(gt.image);
    write_png(out_dir / mv.image, png);
    Png8 mask;
    mask.width = gt.id_mask.width;
    mask.height = gt.id_mask.height;
    mask.channels = 1;
    mask.data.resize(gt.id_mask.data.size());
    for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = static_cast<std::uint8_t>(gt.id_mask.data[p]);
    write_png(out_dir / mv.mask, mask);
    write_pfm(out_dir / mv.depth, gt.prior_depth);

    DatasetView& dv = ds.views[k];
    dv.name = name;
    dv.camera = cameras[k];
    dv.split = mv.split;
    dv.bundle.image = decode_srgb(png);
    dv.bundle.id_mask = gt.id_mask;
    dv.bundle.prior_depth = gt.prior_depth;
    dv.bundle.floating_mask = build_floating_mask(gt.id_mask, opt.dilation_px);
  });
  write_file_atomic(out_dir / kManifestName, format_manifest(manifest));
  return ds;
}

}  // namespace tsgs
