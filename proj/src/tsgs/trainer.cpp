#include "tsgs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tsgs/error.hpp"

namespace fs = std::filesystem;

namespace tsgs {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TrainConfig effective_config(const TrainConfig& in) {
  TrainConfig c = in;
  if (!c.semantic) {
    c.loss.lambda_id = 0;
    c.loss.use_floating_mask = false;
    c.control.semantic = false;
  }
  if (!c.depth_reg) c.loss.lambda_d = 0;
  c.control.densify_until = std::min(c.control.densify_until, c.optimizer.total_iterations);
  return c;
}

void validate(const TrainConfig& c) {
  validate(c.optimizer);
  validate(c.loss);
  if (c.optimizer.total_iterations > 0 && c.control.densify_from < c.control.densify_until)
    validate(c.control, c.optimizer.total_iterations);
  else if (c.control.densify_interval < 1)
    throw config_error("control: densify_interval must be positive");
  if (c.init_points < 1) throw config_error("init_points must be positive");
  if (c.sh_degree < 0 || c.sh_degree > kMaxShDegree) throw config_error("sh_degree must lie in [0, 3]");
  if (c.holdout_every < 1) throw config_error("holdout_every must be positive");
  if (c.checkpoint_every < 0) throw config_error("checkpoint_every must be non-negative");
}

std::string to_json_line(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["iter"] = r.iter;
  j["l_color"] = r.terms.l_color;
  j["l_2d"] = r.terms.l_2d;
  j["l_3d"] = r.terms.l_3d;
  j["l_hard"] = r.terms.l_hard;
  j["l_soft"] = r.terms.l_soft;
  j["l_gl"] = r.terms.l_gl;
  j["total"] = r.terms.total;
  j["n_gaussians"] = r.n_gaussians;
  if (r.psnr_holdout) j["psnr_holdout"] = *r.psnr_holdout;
  return j.dump();
}

double scene_extent(const std::vector<Camera>& cameras) {
  if (cameras.empty()) return 1.0;
  Vec3 centroid = Vec3::Zero();
  for (const auto& c : cameras) centroid += c.center();
  centroid /= static_cast<double>(cameras.size());
  double r = 0;
  for (const auto& c : cameras) r = std::max(r, (c.center() - centroid).norm());
  return r > 0 ? 1.1 * r : 1.0;
}

Box3 initial_bounds(const Dataset& ds) {
  if (ds.bounds) return *ds.bounds;
  const auto cams = ds.cameras();
  Vec3 centroid = Vec3::Zero();
  for (const auto& c : cams) centroid += c.center();
  centroid /= static_cast<double>(cams.size());
  const double half = 0.5 * scene_extent(cams);
  return {centroid - Vec3::Constant(half), centroid + Vec3::Constant(half)};
}

RenderSettings training_render_settings(const Dataset& ds, const TrainConfig& config) {
  RenderSettings s;
  s.background_depth = default_background_depth(ds.cameras());
  s.hard_opacity = config.loss.depth.hard_override_omega;
  return s;
}

double mean_holdout_psnr(const GaussianCloud& cloud, const Dataset& ds, const RenderSettings& settings) {
  const auto idx = ds.indices(Split::holdout);
  if (idx.empty()) return 0.0;
  double sum = 0;
  for (std::size_t i : idx) {
    const RenderOutput r = render(cloud, ds.views[i].camera, settings, kChannelColor);
    sum += psnr(r.color, ds.views[i].bundle.image);
  }
  return sum / static_cast<double>(idx.size());
}

namespace {

bool finite_gradients(const GradientSet& g, const HeadGradient& h) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!g.centers[i].allFinite() || !g.log_scales[i].allFinite() || !g.rotations[i].allFinite() ||
        !std::isfinite(g.opacity_logits[i]) || !g.identity_codes[i].allFinite())
      return false;
  for (double v : g.colors)
    if (!std::isfinite(v)) return false;
  return h.weight.allFinite() && h.bias.allFinite();
}

bool finite_terms(const LossTerms& t) {
  for (double v : {t.l_color, t.l_2d, t.l_3d, t.l_hard, t.l_soft, t.l_gl, t.total})
    if (!std::isfinite(v)) return false;
  return true;
}

// Screen-space gradients of a masked mean grow as the mask shrinks; rescale them to a full-frame mean.
void normalize_grad2d(GradientSet& g, const MaskImage& mask) {
  std::size_t kept = 0;
  for (std::uint8_t v : mask.data) kept += v != 0;
  const double coverage = static_cast<double>(kept) / static_cast<double>(std::max<std::size_t>(mask.data.size(), 1));
  for (double& v : g.grad2d) v *= coverage;
}

std::string checkpoint_name(int iteration) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_%06d.tsgs", iteration);
  return buf;
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& requested, const TrainHooks& hooks) {
  const TrainConfig cfg = effective_config(requested);
  validate(cfg);
  const auto train_idx = dataset.indices(Split::train);
  if (dataset.views.empty() || train_idx.empty()) throw config_error("train: dataset has no training views");
  for (std::size_t i : train_idx)
    if (dataset.views[i].bundle.image.empty()) throw config_error("train: view '" + dataset.views[i].name + "' has no image");

  const auto cams = dataset.cameras();
  const RenderSettings settings = training_render_settings(dataset, cfg);
  const double extent = scene_extent(cams);
  OptimizerConfig opt = cfg.optimizer;
  opt.spatial_lr_scale *= extent;

  TrainResult res;
  res.cloud = init_random_cloud(static_cast<std::size_t>(cfg.init_points), initial_bounds(dataset),
                                mix_seed(cfg.seed, 1), cfg.sh_degree);
  res.head = init_class_head(dataset.instance_count, mix_seed(cfg.seed, 2));
  snap_to_float(res.cloud);
  snap_to_float(res.head);

  AdamState adam = AdamState::zeros(res.cloud, res.head);
  DensityStats stats = DensityStats::zeros(res.cloud.size());
  std::mt19937_64 order_rng(mix_seed(cfg.seed, 3));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;

  auto write_checkpoint = [&](const std::string& name, int iteration) {
    if (!hooks.out_dir) return;
    save_checkpoint(*hooks.out_dir / name, res.cloud, res.head, static_cast<std::uint64_t>(iteration));
  };
  auto emit = [&](const MetricRecord& rec) {
    res.metrics.push_back(rec);
    if (hooks.metrics) *hooks.metrics << to_json_line(rec) << '\n';
  };
  auto all_roi = [&](std::size_t n) { return std::vector<std::uint8_t>(n, 1); };

  const int total = cfg.optimizer.total_iterations;
  for (int iter = 1; iter <= total; ++iter) {
    if (cursor == order.size()) {
      order = train_idx;
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const DatasetView& view = dataset.views[order[cursor++]];

    TotalLoss tl = total_loss(res.cloud, res.head, view.camera, view.bundle, cfg.loss, settings,
                              mix_seed(cfg.seed, 4, static_cast<std::uint64_t>(iter)));
    ++res.render_calls;
    if (!finite_terms(tl.terms) || !finite_gradients(tl.grads, tl.head_grad)) {
      write_checkpoint("diagnostic.tsgs", iter);
      throw Error(ErrorKind::numerical, "non-finite loss or gradient at iteration " + std::to_string(iter) +
                                            " (view '" + view.name + "')");
    }

    const auto roi = cfg.control.semantic ? roi_membership(res.cloud, res.head, cfg.control) : all_roi(res.cloud.size());
    if (cfg.loss.use_floating_mask) normalize_grad2d(tl.grads, view.bundle.floating_mask);
    track_radii(stats, tl.render.radii, view.camera);
    accumulate(stats, tl.grads, roi);
    adam_step(res.cloud, res.head, tl.grads, tl.head_grad, adam, opt, iter);

    const ControlConfig& cc = cfg.control;
    if (iter >= cc.densify_from && iter < cc.densify_until && iter % cc.densify_interval == 0) {
      const auto roi_now = cc.semantic ? roi_membership(res.cloud, res.head, cc) : all_roi(res.cloud.size());
      StructuralEdit grown = densify(res.cloud, stats, roi_now, cc, extent, mix_seed(cfg.seed, 5, static_cast<std::uint64_t>(iter)));
      adam.remap(grown.source, grown.cloud);
      stats = stats.remap(grown.source);
      res.cloud = std::move(grown.cloud);

      const auto roi_after = cc.semantic ? roi_membership(res.cloud, res.head, cc) : all_roi(res.cloud.size());
      const std::size_t densified_size = res.cloud.size();
      StructuralEdit kept = prune(res.cloud, roi_after, stats, cc, iter);
      adam.remap(kept.source, kept.cloud);
      res.cloud = std::move(kept.cloud);
      stats = DensityStats::zeros(res.cloud.size());
      if (hooks.on_prune) {
        PruneEvent ev;
        ev.iteration = iter;
        ev.survivors = &res.cloud;
        ev.head = &res.head;
        ev.control = &cc;
        ev.removed = kept.removed;
        ev.densified_size = densified_size;
        hooks.on_prune(ev);
      }
    }

    MetricRecord rec;
    rec.iter = iter;
    rec.terms = tl.terms;
    rec.n_gaussians = res.cloud.size();
    if (iter % cfg.holdout_every == 0 || iter == total) rec.psnr_holdout = mean_holdout_psnr(res.cloud, dataset, settings);
    emit(rec);
    if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 && iter != total)
      write_checkpoint(checkpoint_name(iter), iter);
  }
  res.iterations = total;
  write_checkpoint("final.tsgs", total);
  return res;
}

// ---------------------------------------------------------------- config text

namespace {

using Setter = std::function<void(TrainConfig&, const std::string&)>;

double as_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(d)) throw config_error("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

int as_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long d = 0;
  try {
    d = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || d < std::numeric_limits<int>::min() || d > std::numeric_limits<int>::max())
    throw config_error("config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(d);
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error("config: '" + key + "' expects true or false, got '" + v + "'");
}

const std::map<std::string, Setter>& setters() {
#define TSGS_D(name, field) {name, [](TrainConfig& c, const std::string& v) { c.field = as_double(name, v); }}
#define TSGS_I(name, field) {name, [](TrainConfig& c, const std::string& v) { c.field = as_int(name, v); }}
#define TSGS_B(name, field) {name, [](TrainConfig& c, const std::string& v) { c.field = as_bool(name, v); }}
  static const std::map<std::string, Setter> table = {
      TSGS_D("lr_centers", optimizer.lr_centers),
      TSGS_D("lr_centers_final_factor", optimizer.lr_centers_final_factor),
      TSGS_D("lr_log_scales", optimizer.lr_log_scales),
      TSGS_D("lr_rotations", optimizer.lr_rotations),
      TSGS_D("lr_opacity", optimizer.lr_opacity),
      TSGS_D("lr_colors", optimizer.lr_colors),
      TSGS_D("lr_identity", optimizer.lr_identity),
      TSGS_D("lr_head", optimizer.lr_head),
      TSGS_D("beta1", optimizer.beta1),
      TSGS_D("beta2", optimizer.beta2),
      TSGS_D("eps", optimizer.eps),
      TSGS_I("total_iterations", optimizer.total_iterations),
      TSGS_D("lambda_color", loss.lambda_color),
      TSGS_D("lambda_id", loss.lambda_id),
      TSGS_D("lambda_d", loss.lambda_d),
      TSGS_D("lambda_dssim", loss.photometric.lambda_dssim),
      TSGS_I("ssim_window", loss.photometric.ssim_window),
      TSGS_D("ssim_sigma", loss.photometric.ssim_sigma),
      TSGS_D("lambda_2d", loss.grouping.lambda_2d),
      TSGS_D("lambda_3d", loss.grouping.lambda_3d),
      TSGS_B("identity_reaches_geometry", loss.identity_reaches_geometry),
      TSGS_I("knn_k", loss.grouping.knn_k),
      TSGS_I("sample_m", loss.grouping.sample_m),
      TSGS_D("lambda_sh", loss.depth.lambda_sh),
      TSGS_D("lambda_gl", loss.depth.lambda_gl),
      TSGS_D("gamma", loss.depth.gamma),
      TSGS_I("patch_size", loss.depth.patch_size),
      TSGS_D("hard_override_omega", loss.depth.hard_override_omega),
      TSGS_B("align_prior", loss.depth.align_prior),
      TSGS_B("gl_on_hard_depth", loss.depth.gl_on_hard_depth),
      TSGS_I("densify_interval", control.densify_interval),
      TSGS_I("densify_from", control.densify_from),
      TSGS_I("densify_until", control.densify_until),
      TSGS_D("grad_threshold", control.grad_threshold),
      TSGS_D("split_scale_threshold", control.split_scale_threshold),
      TSGS_D("roi_prob_threshold", control.roi_prob_threshold),
      TSGS_I("semantic_prune_from", control.semantic_prune_from),
      TSGS_D("opacity_prune_eps", control.opacity_prune_eps),
      TSGS_I("mask_dilation_px", control.mask_dilation_px),
      TSGS_D("max_screen_fraction", control.max_screen_fraction),
      TSGS_I("init_points", init_points),
      TSGS_I("sh_degree", sh_degree),
      TSGS_B("semantic", semantic),
      TSGS_B("depth_reg", depth_reg),
      TSGS_I("holdout_every", holdout_every),
      TSGS_I("checkpoint_every", checkpoint_every),
      {"seed", [](TrainConfig& c, const std::string& v) {
         std::size_t used = 0;
         unsigned long long s = 0;
         try {
           s = std::stoull(v, &used);
         } catch (const std::exception&) {
           used = 0;
         }
         if (used != v.size()) throw config_error("config: 'seed' expects a non-negative integer");
         c.seed = s;
       }},
  };
#undef TSGS_D
#undef TSGS_I
#undef TSGS_B
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

std::vector<std::string> apply_config_text(TrainConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> keys;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string::npos) throw config_error(where + ": expected key = value");
    auto strip = [](std::string s) {
      const auto x = s.find_first_not_of(" \t\r");
      if (x == std::string::npos) return std::string();
      return s.substr(x, s.find_last_not_of(" \t\r") - x + 1);
    };
    const std::string key = strip(line.substr(0, eq)), value = strip(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw config_error(where + ": unknown key '" + key + "'");
    if (std::find(keys.begin(), keys.end(), key) != keys.end())
      throw config_error(where + ": key '" + key + "' given more than once");
    it->second(config, value);
    keys.push_back(key);
  }
  if (std::find(keys.begin(), keys.end(), "depth_reg") != keys.end() && !config.depth_reg &&
      std::find(keys.begin(), keys.end(), "lambda_d") != keys.end() && config.loss.lambda_d != 0)
    throw config_error("config: depth_reg = false conflicts with a nonzero lambda_d");
  if (std::find(keys.begin(), keys.end(), "semantic") != keys.end() && !config.semantic &&
      std::find(keys.begin(), keys.end(), "lambda_id") != keys.end() && config.loss.lambda_id != 0)
    throw config_error("config: semantic = false conflicts with a nonzero lambda_id");
  return keys;
}

}  // namespace tsgs
