#include <tsgs/tsgs.h>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum Exit { kOk = 0, kFailure = 1, kBadArgs = 2, kBadData = 3, kNumerical = 4 };

int exit_code(tsgs_status s) {
  switch (s) {
    case TSGS_OK: return kOk;
    case TSGS_ERR_PARAMETER:
    case TSGS_ERR_CONTRACT:
    case TSGS_ERR_CONFIG: return kBadArgs;
    case TSGS_ERR_LOAD:
    case TSGS_ERR_CORRUPT: return kBadData;
    case TSGS_ERR_NUMERICAL: return kNumerical;
    default: return kFailure;
  }
}

struct Failure {
  int code;
};

void check(tsgs_status s) {
  if (s == TSGS_OK) return;
  std::fprintf(stderr, "tsgs: %s\n", tsgs_last_error());
  throw Failure{exit_code(s)};
}

[[noreturn]] void bad_args(const std::string& msg) {
  std::fprintf(stderr, "tsgs: %s\n", msg.c_str());
  throw Failure{kBadArgs};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};

// ring:count=12,radius=4,elevation=25,width=64,height=64,fov=50
std::vector<tsgs_camera> ring_cameras(const std::string& spec) {
  std::map<std::string, double> v = {{"count", 12}, {"radius", 4},  {"elevation", 25},
                                     {"width", 64},  {"height", 64}, {"fov", 50}};
  std::stringstream in(spec.substr(5));
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) bad_args("ring spec entries must be key=value: " + item);
    const std::string key = item.substr(0, eq);
    if (!v.count(key)) bad_args("unknown ring spec key: " + key);
    char* end = nullptr;
    const double d = std::strtod(item.c_str() + eq + 1, &end);
    if (end == item.c_str() + eq + 1 || *end != '\0') bad_args("bad ring spec value: " + item);
    v[key] = d;
  }
  std::vector<tsgs_camera> cams(static_cast<std::size_t>(v["count"] > 0 ? v["count"] : 0));
  check(tsgs_camera_ring(static_cast<int>(v["count"]), v["radius"], v["elevation"], static_cast<int>(v["width"]),
                         static_cast<int>(v["height"]), v["fov"], cams.data()));
  return cams;
}

std::vector<tsgs_camera> load_cameras(const std::string& arg) {
  if (arg.rfind("ring:", 0) == 0) return ring_cameras(arg);
  std::size_t n = 0;
  check(tsgs_cameras_from_file(arg.c_str(), nullptr, 0, &n));
  std::vector<tsgs_camera> cams(n);
  check(tsgs_cameras_from_file(arg.c_str(), cams.data(), cams.size(), &n));
  return cams;
}

void print_metrics(const char* line, void*) {
  std::fprintf(stdout, "%s\n", line);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted semantic Gaussian splatting"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset from a scene file");
  std::string spec, synth_out;
  tsgs_synth_options so;
  tsgs_synth_options_default(&so);
  bool noisy = false;
  synth->add_option("--spec", spec, "scene file")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--views", so.views, "ring size")->check(CLI::PositiveNumber);
  synth->add_option("--radius", so.radius, "ring radius")->check(CLI::PositiveNumber);
  synth->add_option("--elevation", so.elevation_deg, "ring elevation in degrees");
  synth->add_option("--width", so.width)->check(CLI::PositiveNumber);
  synth->add_option("--height", so.height)->check(CLI::PositiveNumber);
  synth->add_option("--seed", so.seed);
  synth->add_flag("--noisy-depth", noisy, "corrupt the depth priors with noise and a scale/shift");

  auto* train = app.add_subcommand("train", "train a model");
  std::string data, train_out, config_file;
  int iters = -1;
  long long seed = -1;
  bool no_depth = false, no_sem = false;
  train->add_option("--data", data, "dataset directory or manifest")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--iters", iters, "iterations (default 10000)")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", seed)->check(CLI::NonNegativeNumber);
  train->add_option("--config", config_file, "key = value overrides");
  train->add_flag("--no-depth-reg", no_depth, "disable depth regularization");
  train->add_flag("--no-semantic", no_sem, "disable every semantic term");
  bool quiet = false;
  train->add_flag("--quiet", quiet, "do not echo metrics");

  auto* render = app.add_subcommand("render", "render a checkpoint");
  std::string ckpt, camera, render_out, channel = "color";
  render->add_option("--checkpoint", ckpt)->required();
  render->add_option("--camera", camera, "camera file or ring:count=..,radius=..,elevation=..,width=..,height=..,fov=..")
      ->required();
  render->add_option("--out", render_out)->required();
  render->add_option("--channel", channel)->check(CLI::IsMember({"color", "id", "depth-soft", "depth-hard", "alpha"}));

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data, split = "holdout";
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "holdout"}));

  auto* colmap = app.add_subcommand("import-colmap", "convert COLMAP text output into a manifest");
  std::string sparse, manifest_out;
  int instances = 1;
  colmap->add_option("--sparse", sparse, "directory with cameras.txt and images.txt")->required();
  colmap->add_option("--instances", instances, "instance count")->check(CLI::Range(0, 255));
  colmap->add_option("--out", manifest_out, "manifest path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadArgs;
  }

  try {
    check(tsgs_set_threads(threads));

    if (*synth) {
      so.noisy_depth = noisy ? 1 : 0;
      char manifest[4096];
      check(tsgs_synth(spec.c_str(), synth_out.c_str(), &so, manifest, sizeof manifest));
      std::printf("%s\n", manifest);
    } else if (*train) {
      Handle<tsgs_train_config, tsgs_train_config_free> cfg;
      check(tsgs_train_config_create(&cfg.p));
      if (!config_file.empty()) check(tsgs_train_config_load_file(cfg.p, config_file.c_str()));
      if (iters >= 0) check(tsgs_train_config_set(cfg.p, "total_iterations", std::to_string(iters).c_str()));
      if (seed >= 0) check(tsgs_train_config_set(cfg.p, "seed", std::to_string(seed).c_str()));
      if (no_depth) check(tsgs_train_config_set(cfg.p, "depth_reg", "false"));
      if (no_sem) check(tsgs_train_config_set(cfg.p, "semantic", "false"));
      Handle<tsgs_dataset, tsgs_dataset_free> ds;
      check(tsgs_dataset_load(data.c_str(), &ds.p));
      Handle<tsgs_model, tsgs_model_free> model;
      check(tsgs_train(ds.p, cfg.p, train_out.c_str(), quiet ? nullptr : print_metrics, nullptr, &model.p));
      std::size_t outside = 0;
      check(tsgs_model_out_of_roi(model.p, 0.6, &outside));
      std::printf("final %s gaussians %zu out_of_roi %zu\n",
                  (std::filesystem::path(train_out) / "final.tsgs").string().c_str(), tsgs_model_size(model.p),
                  outside);
    } else if (*render) {
      const std::map<std::string, tsgs_channel> channels = {{"color", TSGS_CHANNEL_COLOR},
                                                            {"id", TSGS_CHANNEL_ID},
                                                            {"depth-soft", TSGS_CHANNEL_DEPTH_SOFT},
                                                            {"depth-hard", TSGS_CHANNEL_DEPTH_HARD},
                                                            {"alpha", TSGS_CHANNEL_ALPHA}};
      Handle<tsgs_model, tsgs_model_free> model;
      check(tsgs_model_load(ckpt.c_str(), &model.p));
      const auto cams = load_cameras(camera);
      check(tsgs_render_to_png(model.p, cams.data(), cams.size(), channels.at(channel), render_out.c_str()));
      std::printf("rendered %zu views to %s\n", cams.size(), render_out.c_str());
    } else if (*eval) {
      Handle<tsgs_model, tsgs_model_free> model;
      check(tsgs_model_load(eval_ckpt.c_str(), &model.p));
      Handle<tsgs_dataset, tsgs_dataset_free> ds;
      check(tsgs_dataset_load(eval_data.c_str(), &ds.p));
      const tsgs_split sp = split == "train" ? TSGS_SPLIT_TRAIN : TSGS_SPLIT_HOLDOUT;
      std::size_t n = 0;
      check(tsgs_evaluate(model.p, ds.p, sp, nullptr, 0, &n));
      std::vector<tsgs_view_metrics> rows(n);
      check(tsgs_evaluate(model.p, ds.p, sp, rows.data(), rows.size(), &n));
      double psnr = 0, ssim = 0;
      for (const auto& r : rows) {
        std::printf("view %s psnr %.6f ssim %.6f lpips n/a\n", r.name, r.psnr, r.ssim);
        psnr += r.psnr;
        ssim += r.ssim;
      }
      const double k = n ? static_cast<double>(n) : 1.0;
      std::printf("mean psnr %.6f ssim %.6f lpips n/a views %zu\n", psnr / k, ssim / k, n);
    } else if (*colmap) {
      check(tsgs_import_colmap(sparse.c_str(), instances, manifest_out.c_str()));
      std::printf("%s\n", manifest_out.c_str());
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return kOk;
}
