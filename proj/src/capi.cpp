#include "tsgs/tsgs.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <new>
#include <span>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include "tsgs/adaptive_control.hpp"
#include "tsgs/dataset_io.hpp"
#include "tsgs/error.hpp"
#include "tsgs/parallel.hpp"
#include "tsgs/photometric.hpp"
#include "tsgs/renderer.hpp"
#include "tsgs/semantics.hpp"
#include "tsgs/synthgen.hpp"
#include "tsgs/trainer.hpp"

namespace fs = std::filesystem;

struct tsgs_dataset {
  tsgs::Dataset data;
};

struct tsgs_model {
  tsgs::GaussianCloud cloud;
  tsgs::ClassHead head;
  std::uint64_t iteration = 0;
};

struct tsgs_train_config {
  std::vector<std::pair<std::string, std::string>> entries;
  tsgs::TrainConfig config;
};

namespace {

thread_local std::string g_last_error;

tsgs_status status_of(tsgs::ErrorKind kind) {
  switch (kind) {
    case tsgs::ErrorKind::parameter: return TSGS_ERR_PARAMETER;
    case tsgs::ErrorKind::contract: return TSGS_ERR_CONTRACT;
    case tsgs::ErrorKind::configuration: return TSGS_ERR_CONFIG;
    case tsgs::ErrorKind::load: return TSGS_ERR_LOAD;
    case tsgs::ErrorKind::corruption: return TSGS_ERR_CORRUPT;
    case tsgs::ErrorKind::numerical: return TSGS_ERR_NUMERICAL;
    case tsgs::ErrorKind::io: return TSGS_ERR_IO;
  }
  return TSGS_ERR_INTERNAL;
}

template <class F>
tsgs_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return TSGS_OK;
  } catch (const tsgs::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return TSGS_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TSGS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TSGS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return TSGS_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw tsgs::parameter_error(what);
}

tsgs::Camera to_camera(const tsgs_camera& c) {
  tsgs::Camera cam;
  cam.fx = c.fx;
  cam.fy = c.fy;
  cam.cx = c.cx;
  cam.cy = c.cy;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) cam.rotation(r, k) = c.rotation[3 * r + k];
  for (int k = 0; k < 3; ++k) cam.translation[k] = c.translation[k];
  cam.width = c.width;
  cam.height = c.height;
  const auto bad = tsgs::validate_camera(cam);
  if (!bad.empty()) throw tsgs::parameter_error("camera: " + bad.front().message);
  return cam;
}

tsgs_camera from_camera(const tsgs::Camera& cam) {
  tsgs_camera c{};
  c.fx = cam.fx;
  c.fy = cam.fy;
  c.cx = cam.cx;
  c.cy = cam.cy;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) c.rotation[3 * r + k] = cam.rotation(r, k);
  for (int k = 0; k < 3; ++k) c.translation[k] = cam.translation[k];
  c.width = cam.width;
  c.height = cam.height;
  return c;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

void rebuild(tsgs_train_config& cfg) {
  std::string text;
  for (const auto& [k, v] : cfg.entries) text += k + " = " + v + "\n";
  tsgs::TrainConfig fresh;
  tsgs::apply_config_text(fresh, text);
  cfg.config = fresh;
}

void set_entry(tsgs_train_config& cfg, const std::string& key, const std::string& value) {
  for (const auto& [k, v] : cfg.entries) {
    if (k != key) continue;
    if (v == value) return;
    throw tsgs::config_error("config: '" + key + "' set to both '" + v + "' and '" + value + "'");
  }
  cfg.entries.emplace_back(key, value);
  try {
    rebuild(cfg);
  } catch (...) {
    cfg.entries.pop_back();
    throw;
  }
}

// Forwards complete lines to a file and a callback.
class LineSink : public std::streambuf {
 public:
  LineSink(std::ostream* file, tsgs_metrics_callback cb, void* user) : file_(file), cb_(cb), user_(user) {}

 protected:
  int_type overflow(int_type ch) override {
    if (ch == traits_type::eof()) return traits_type::not_eof(ch);
    if (ch == '\n') {
      if (file_) *file_ << line_ << '\n' << std::flush;
      if (cb_) cb_(line_.c_str(), user_);
      line_.clear();
    } else {
      line_.push_back(static_cast<char>(ch));
    }
    return ch;
  }

 private:
  std::ostream* file_;
  tsgs_metrics_callback cb_;
  void* user_;
  std::string line_;
};

const char* channel_suffix(tsgs_channel ch) {
  switch (ch) {
    case TSGS_CHANNEL_COLOR: return "color";
    case TSGS_CHANNEL_ID: return "id";
    case TSGS_CHANNEL_DEPTH_SOFT: return "depth-soft";
    case TSGS_CHANNEL_DEPTH_HARD: return "depth-hard";
    case TSGS_CHANNEL_ALPHA: return "alpha";
  }
  return "unknown";
}

unsigned channel_mask(tsgs_channel ch) {
  switch (ch) {
    case TSGS_CHANNEL_COLOR: return tsgs::kChannelColor;
    case TSGS_CHANNEL_ID: return tsgs::kChannelId | tsgs::kChannelAlpha;
    case TSGS_CHANNEL_DEPTH_SOFT: return tsgs::kChannelSoftDepth | tsgs::kChannelAlpha;
    case TSGS_CHANNEL_DEPTH_HARD: return tsgs::kChannelHardDepth | tsgs::kChannelAlpha;
    case TSGS_CHANNEL_ALPHA: return tsgs::kChannelAlpha;
  }
  throw tsgs::parameter_error("unknown channel");
}

const tsgs::ImageD& channel_image(const tsgs::RenderOutput& out, tsgs_channel ch) {
  switch (ch) {
    case TSGS_CHANNEL_COLOR: return out.color;
    case TSGS_CHANNEL_ID: return out.id_feature;
    case TSGS_CHANNEL_DEPTH_SOFT: return out.soft_depth;
    case TSGS_CHANNEL_DEPTH_HARD: return out.hard_depth;
    case TSGS_CHANNEL_ALPHA: break;
  }
  return out.accum_alpha;
}

tsgs::Png8 gray_png(const tsgs::ImageD& img) {
  tsgs::Png8 png{img.width, img.height, 1, std::vector<std::uint8_t>(img.pixel_count())};
  for (std::size_t p = 0; p < img.pixel_count(); ++p)
    png.data[p] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[p], 0.0, 1.0) * 255.0));
  return png;
}

const std::uint8_t kPalette[8][3] = {{0, 0, 0},     {230, 25, 75},  {60, 180, 75},  {0, 130, 200},
                                     {255, 225, 25}, {145, 30, 180}, {70, 240, 240}, {245, 130, 48}};

tsgs::Png8 class_map_png(const tsgs::LabelImage& labels) {
  tsgs::Png8 png{labels.width, labels.height, 3, std::vector<std::uint8_t>(labels.pixel_count() * 3)};
  for (std::size_t p = 0; p < labels.pixel_count(); ++p) {
    const int c = labels.data[p];
    for (int k = 0; k < 3; ++k) {
      std::uint8_t v = kPalette[c % 8][k];
      if (c >= 8) v = static_cast<std::uint8_t>((v + 37 * (c / 8)) % 256);
      png.data[3 * p + k] = v;
    }
  }
  return png;
}

// Top three principal components of the per-pixel features, each rescaled to [0, 1].
tsgs::Png8 pca_png(const tsgs::ImageD& features) {
  const std::size_t n = features.pixel_count();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), tsgs::kIdDim);
  for (std::size_t p = 0; p < n; ++p)
    for (int k = 0; k < tsgs::kIdDim; ++k) x(static_cast<Eigen::Index>(p), k) = features.pixel(p)[k];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = x.transpose() * x / std::max<double>(1.0, static_cast<double>(n));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd basis(tsgs::kIdDim, 3);
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd v = eig.eigenvectors().col(tsgs::kIdDim - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    basis.col(j) = v;
  }
  const Eigen::MatrixXd proj = x * basis;
  tsgs::Png8 png{features.width, features.height, 3, std::vector<std::uint8_t>(n * 3)};
  for (int j = 0; j < 3; ++j) {
    const double lo = proj.col(j).minCoeff(), hi = proj.col(j).maxCoeff();
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double v = (proj(static_cast<Eigen::Index>(p), j) - lo) / span;
      png.data[3 * p + j] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  return png;
}

// Depth mapped to [0, 1] over covered pixels; uncovered pixels become 1.
tsgs::Png8 depth_png(const tsgs::ImageD& depth, const tsgs::ImageD& alpha, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (std::size_t p = 0; p < depth.pixel_count(); ++p) {
    if (alpha.data[p] <= tsgs::kAccumFloor) continue;
    lo = std::min(lo, depth.data[p]);
    hi = std::max(hi, depth.data[p]);
  }
  if (!(lo <= hi)) lo = hi = 0;
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  tsgs::ImageD norm(depth.width, depth.height, 1, 1.0);
  for (std::size_t p = 0; p < depth.pixel_count(); ++p)
    if (alpha.data[p] > tsgs::kAccumFloor) norm.data[p] = (depth.data[p] - lo) / span;
  return gray_png(norm);
}

void copy_string(const std::string& s, char* out, std::size_t cap) {
  if (!out || cap == 0) return;
  const std::size_t n = std::min(s.size(), cap - 1);
  std::memcpy(out, s.data(), n);
  out[n] = '\0';
}

}  // namespace

extern "C" {

TSGS_API const char* tsgs_last_error(void) { return g_last_error.c_str(); }

TSGS_API const char* tsgs_version(void) { return "1.0.0"; }

TSGS_API tsgs_status tsgs_set_threads(int threads) {
  return guarded([&] {
    require(threads >= 0, "thread count must be non-negative");
    tsgs::set_thread_count(threads);
  });
}

TSGS_API void tsgs_synth_options_default(tsgs_synth_options* o) {
  if (!o) return;
  const tsgs::RingSpec ring;
  o->views = ring.count;
  o->radius = ring.radius;
  o->elevation_deg = ring.elevation_deg;
  o->width = ring.width;
  o->height = ring.height;
  o->fov_deg = ring.fov_deg;
  o->seed = 0;
  o->noisy_depth = 0;
}

TSGS_API tsgs_status tsgs_synth(const char* spec_path, const char* out_dir, const tsgs_synth_options* options,
                                char* manifest_out, size_t manifest_capacity) {
  return guarded([&] {
    require(spec_path && out_dir, "spec path and output directory are required");
    tsgs_synth_options o;
    tsgs_synth_options_default(&o);
    if (options) o = *options;
    require(o.views > 0 && o.radius > 0 && o.width > 0 && o.height > 0 && o.fov_deg > 0 && o.fov_deg < 180,
            "invalid camera ring");
    const tsgs::SceneSpec spec = tsgs::parse_scene_spec(tsgs::read_file(spec_path));
    const tsgs::SyntheticScene scene = tsgs::make_scene(spec, o.seed);
    tsgs::SynthOptions so;
    so.ring.count = o.views;
    so.ring.radius = o.radius;
    so.ring.elevation_deg = o.elevation_deg;
    so.ring.width = o.width;
    so.ring.height = o.height;
    so.ring.fov_deg = o.fov_deg;
    so.noisy_depth = o.noisy_depth != 0;
    so.seed = o.seed;
    tsgs::render_dataset(scene, so, out_dir);
    copy_string((fs::path(out_dir) / tsgs::kManifestName).string(), manifest_out, manifest_capacity);
  });
}

TSGS_API tsgs_status tsgs_dataset_load(const char* path, tsgs_dataset** out) {
  return guarded([&] {
    require(path && out, "path and output handle are required");
    *out = nullptr;
    auto ds = std::make_unique<tsgs_dataset>();
    ds->data = tsgs::load_dataset(path);
    *out = ds.release();
  });
}

TSGS_API void tsgs_dataset_free(tsgs_dataset* dataset) { delete dataset; }

TSGS_API size_t tsgs_dataset_view_count(const tsgs_dataset* dataset) {
  return dataset ? dataset->data.views.size() : 0;
}

TSGS_API int tsgs_dataset_instance_count(const tsgs_dataset* dataset) {
  return dataset ? dataset->data.instance_count : 0;
}

TSGS_API tsgs_status tsgs_dataset_camera(const tsgs_dataset* dataset, size_t view, tsgs_camera* out) {
  return guarded([&] {
    require(dataset && out, "dataset and output are required");
    require(view < dataset->data.views.size(), "view index out of range");
    *out = from_camera(dataset->data.views[view].camera);
  });
}

TSGS_API tsgs_status tsgs_dataset_view_split(const tsgs_dataset* dataset, size_t view, tsgs_split* out) {
  return guarded([&] {
    require(dataset && out, "dataset and output are required");
    require(view < dataset->data.views.size(), "view index out of range");
    *out = dataset->data.views[view].split == tsgs::Split::train ? TSGS_SPLIT_TRAIN : TSGS_SPLIT_HOLDOUT;
  });
}

TSGS_API tsgs_status tsgs_train_config_create(tsgs_train_config** out) {
  return guarded([&] {
    require(out, "output handle is required");
    *out = new tsgs_train_config();
  });
}

TSGS_API void tsgs_train_config_free(tsgs_train_config* config) { delete config; }

TSGS_API tsgs_status tsgs_train_config_load_file(tsgs_train_config* config, const char* path) {
  return guarded([&] {
    require(config && path, "config and path are required");
    const std::string text = tsgs::read_file(path);
    tsgs::TrainConfig scratch;
    tsgs::apply_config_text(scratch, text);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      set_entry(*config, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
  });
}

TSGS_API tsgs_status tsgs_train_config_set(tsgs_train_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "config, key and value are required");
    set_entry(*config, strip(key), strip(value));
  });
}

TSGS_API tsgs_status tsgs_train(const tsgs_dataset* dataset, const tsgs_train_config* config, const char* out_dir,
                                tsgs_metrics_callback callback, void* user, tsgs_model** out) {
  return guarded([&] {
    require(dataset && out, "dataset and output handle are required");
    *out = nullptr;
    const tsgs::TrainConfig cfg = config ? config->config : tsgs::TrainConfig{};
    std::ofstream log;
    tsgs::TrainHooks hooks;
    if (out_dir) {
      fs::create_directories(out_dir);
      hooks.out_dir = fs::path(out_dir);
      log.open(fs::path(out_dir) / "metrics.ndjson", std::ios::binary | std::ios::trunc);
      if (!log) throw tsgs::io_error(std::string("cannot write metrics log in ") + out_dir);
    }
    LineSink sink(log.is_open() ? &log : nullptr, callback, user);
    std::ostream metrics(&sink);
    hooks.metrics = &metrics;
    tsgs::TrainResult res = tsgs::train(dataset->data, cfg, hooks);
    auto model = std::make_unique<tsgs_model>();
    model->cloud = std::move(res.cloud);
    model->head = std::move(res.head);
    model->iteration = static_cast<std::uint64_t>(res.iterations);
    *out = model.release();
  });
}

TSGS_API tsgs_status tsgs_model_load(const char* path, tsgs_model** out) {
  return guarded([&] {
    require(path && out, "path and output handle are required");
    *out = nullptr;
    tsgs::Checkpoint ck = tsgs::load_checkpoint(path);
    auto model = std::make_unique<tsgs_model>();
    model->cloud = std::move(ck.cloud);
    model->head = std::move(ck.head);
    model->iteration = ck.iteration;
    *out = model.release();
  });
}

TSGS_API tsgs_status tsgs_model_save(const tsgs_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "model and path are required");
    tsgs::save_checkpoint(path, model->cloud, model->head, model->iteration);
  });
}

TSGS_API void tsgs_model_free(tsgs_model* model) { delete model; }

TSGS_API size_t tsgs_model_size(const tsgs_model* model) { return model ? model->cloud.size() : 0; }

TSGS_API int tsgs_model_instance_count(const tsgs_model* model) {
  return model ? model->head.instance_count() : 0;
}

TSGS_API uint64_t tsgs_model_iteration(const tsgs_model* model) { return model ? model->iteration : 0; }

TSGS_API tsgs_status tsgs_model_out_of_roi(const tsgs_model* model, double prob_threshold, size_t* count) {
  return guarded([&] {
    require(model && count, "model and output are required");
    tsgs::ControlConfig cc;
    cc.roi_prob_threshold = prob_threshold;
    const auto roi = tsgs::roi_membership(model->cloud, model->head, cc);
    *count = static_cast<size_t>(std::count(roi.begin(), roi.end(), std::uint8_t{0}));
  });
}

TSGS_API tsgs_status tsgs_cameras_from_file(const char* path, tsgs_camera* out, size_t capacity, size_t* count) {
  return guarded([&] {
    require(path && count, "path and count are required");
    std::istringstream in(tsgs::read_file(path));
    std::string line;
    size_t n = 0;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos || strip(line.substr(0, eq)) != "camera") continue;
      std::istringstream vals(line.substr(eq + 1));
      double v[16];
      int wh[2];
      for (double& d : v) vals >> d;
      vals >> wh[0] >> wh[1];
      std::string rest;
      if (!vals || (vals >> rest))
        throw tsgs::corruption_error(std::string(path) + ":" + std::to_string(line_no) +
                                     ": camera record needs 16 numbers and two integers");
      tsgs_camera c{};
      c.fx = v[0];
      c.fy = v[1];
      c.cx = v[2];
      c.cy = v[3];
      std::copy(v + 4, v + 13, c.rotation);
      std::copy(v + 13, v + 16, c.translation);
      c.width = wh[0];
      c.height = wh[1];
      to_camera(c);
      if (out && n < capacity) out[n] = c;
      ++n;
    }
    if (n == 0) throw tsgs::corruption_error(std::string(path) + ": no camera records");
    *count = n;
  });
}

TSGS_API tsgs_status tsgs_camera_ring(int count, double radius, double elevation_deg, int width, int height,
                                      double fov_deg, tsgs_camera* out) {
  return guarded([&] {
    require(out && count > 0 && radius > 0 && width > 0 && height > 0 && fov_deg > 0 && fov_deg < 180,
            "invalid camera ring");
    tsgs::RingSpec ring;
    ring.count = count;
    ring.radius = radius;
    ring.elevation_deg = elevation_deg;
    ring.width = width;
    ring.height = height;
    ring.fov_deg = fov_deg;
    const auto cams = tsgs::camera_ring(ring);
    for (std::size_t i = 0; i < cams.size(); ++i) out[i] = from_camera(cams[i]);
  });
}

TSGS_API tsgs_status tsgs_render(const tsgs_model* model, const tsgs_camera* camera, tsgs_channel channel,
                                 double background_depth, double* out, size_t capacity) {
  return guarded([&] {
    require(model && camera && out, "model, camera and output are required");
    const tsgs::Camera cam = to_camera(*camera);
    tsgs::RenderSettings settings;
    settings.background_depth =
        background_depth > 0 ? background_depth : tsgs::default_background_depth(std::span(&cam, 1));
    const tsgs::RenderOutput r = tsgs::render(model->cloud, cam, settings, channel_mask(channel));
    const tsgs::ImageD& img = channel_image(r, channel);
    require(capacity >= img.data.size(), "output buffer too small");
    std::copy(img.data.begin(), img.data.end(), out);
  });
}

TSGS_API tsgs_status tsgs_render_to_png(const tsgs_model* model, const tsgs_camera* cameras, size_t camera_count,
                                        tsgs_channel channel, const char* out_dir) {
  return guarded([&] {
    require(model && cameras && camera_count > 0 && out_dir, "model, cameras and output directory are required");
    std::vector<tsgs::Camera> cams;
    for (size_t i = 0; i < camera_count; ++i) cams.push_back(to_camera(cameras[i]));
    tsgs::RenderSettings settings;
    settings.background_depth = tsgs::default_background_depth(cams);
    const unsigned mask = channel_mask(channel);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    for (size_t i = 0; i < cams.size(); ++i) {
      const tsgs::RenderOutput r = tsgs::render(model->cloud, cams[i], settings, mask);
      char stem[64];
      std::snprintf(stem, sizeof stem, "view_%03zu_%s", i, channel_suffix(channel));
      switch (channel) {
        case TSGS_CHANNEL_COLOR:
          tsgs::write_png(dir / (std::string(stem) + ".png"), tsgs::encode_srgb(r.color));
          break;
        case TSGS_CHANNEL_ALPHA:
          tsgs::write_png(dir / (std::string(stem) + ".png"), gray_png(r.accum_alpha));
          break;
        case TSGS_CHANNEL_ID:
          tsgs::write_png(dir / (std::string(stem) + "_class.png"),
                          class_map_png(tsgs::classify_labels(r.id_feature, model->head)));
          tsgs::write_png(dir / (std::string(stem) + "_pca.png"), pca_png(r.id_feature));
          break;
        case TSGS_CHANNEL_DEPTH_SOFT:
        case TSGS_CHANNEL_DEPTH_HARD: {
          double lo = 0, hi = 0;
          tsgs::write_png(dir / (std::string(stem) + ".png"), depth_png(channel_image(r, channel), r.accum_alpha, lo, hi));
          char side[128];
          std::snprintf(side, sizeof side, "min = %.17g\nmax = %.17g\n", lo, hi);
          tsgs::write_file_atomic(dir / (std::string(stem) + ".txt"), side);
          break;
        }
      }
    }
  });
}

TSGS_API tsgs_status tsgs_evaluate(const tsgs_model* model, const tsgs_dataset* dataset, tsgs_split split,
                                   tsgs_view_metrics* out, size_t capacity, size_t* count) {
  return guarded([&] {
    require(model && dataset && count, "model, dataset and count are required");
    const auto& ds = dataset->data;
    const auto idx = ds.indices(split == TSGS_SPLIT_TRAIN ? tsgs::Split::train : tsgs::Split::holdout);
    const tsgs::RenderSettings settings = tsgs::training_render_settings(ds, tsgs::TrainConfig{});
    std::vector<tsgs_view_metrics> rows(idx.size());
    tsgs::parallel_for(idx.size(), [&](std::size_t k) {
      const auto& v = ds.views[idx[k]];
      const tsgs::RenderOutput r = tsgs::render(model->cloud, v.camera, settings, tsgs::kChannelColor);
      tsgs_view_metrics m{};
      copy_string(v.name, m.name, sizeof m.name);
      m.psnr = tsgs::psnr(r.color, v.bundle.image);
      m.ssim = tsgs::ssim(r.color, v.bundle.image);
      rows[k] = m;
    });
    if (out) std::copy_n(rows.begin(), std::min(capacity, rows.size()), out);
    *count = rows.size();
  });
}

TSGS_API tsgs_status tsgs_import_colmap(const char* sparse_dir, int instance_count, const char* manifest_out) {
  return guarded([&] {
    require(sparse_dir && manifest_out, "input directory and manifest path are required");
    require(instance_count >= 0 && instance_count <= 255, "instance count must be in [0, 255]");
    const tsgs::Manifest m = tsgs::manifest_from_colmap(sparse_dir, instance_count);
    tsgs::write_file_atomic(manifest_out, tsgs::format_manifest(m));
  });
}

}  // extern "C"
