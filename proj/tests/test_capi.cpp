#include <doctest.h>

#include <tsgs/tsgs.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tsgs_api_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kSmallScene =
    "[object]\nclass = 1\ncenter = -0.5 0 0\nextent = 0.3 0.3 0.3\ncount = 30\ncolor = 0.9 0.3 0.2\n\n"
    "[object]\nclass = 2\ncenter = 0.5 0 0\nextent = 0.3 0.3 0.3\ncount = 30\ncolor = 0.2 0.4 0.9\n";

tsgs_synth_options small_options() {
  tsgs_synth_options o;
  tsgs_synth_options_default(&o);
  o.views = 4;
  o.width = 24;
  o.height = 24;
  o.radius = 3.5;
  o.seed = 3;
  return o;
}

// Synthetic dataset shared by the C interface cases.
const fs::path& small_dataset() {
  static const fs::path dir = [] {
    const fs::path root = scratch("data");
    write_text(root / "scene.txt", kSmallScene);
    const tsgs_synth_options o = small_options();
    char manifest[1024];
    const tsgs_status s = tsgs_synth((root / "scene.txt").c_str(), (root / "ds").c_str(), &o, manifest, sizeof manifest);
    REQUIRE(s == TSGS_OK);
    return root / "ds";
  }();
  return dir;
}

tsgs_train_config* short_config(int iters) {
  tsgs_train_config* c = nullptr;
  REQUIRE(tsgs_train_config_create(&c) == TSGS_OK);
  REQUIRE(tsgs_train_config_set(c, "total_iterations", std::to_string(iters).c_str()) == TSGS_OK);
  REQUIRE(tsgs_train_config_set(c, "init_points", "120") == TSGS_OK);
  REQUIRE(tsgs_train_config_set(c, "densify_from", "10") == TSGS_OK);
  REQUIRE(tsgs_train_config_set(c, "densify_interval", "10") == TSGS_OK);
  REQUIRE(tsgs_train_config_set(c, "holdout_every", "10") == TSGS_OK);
  return c;
}

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "tsgs_api_cli_io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string("\"") + TSGS_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  const int code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return {code, slurp(out), slurp(err)};
}

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("version and thread control") {
  CHECK(std::strlen(tsgs_version()) > 0);
  CHECK(tsgs_set_threads(1) == TSGS_OK);
  CHECK(tsgs_set_threads(-1) != TSGS_OK);
  CHECK(std::strlen(tsgs_last_error()) > 0);
  CHECK(tsgs_set_threads(0) == TSGS_OK);
}

TEST_CASE("null arguments are parameter errors") {
  tsgs_dataset* ds = nullptr;
  CHECK(tsgs_dataset_load(nullptr, &ds) != TSGS_OK);
  CHECK(ds == nullptr);
  CHECK(tsgs_model_load("x.tsgs", nullptr) != TSGS_OK);
  size_t n = 0;
  CHECK(tsgs_model_out_of_roi(nullptr, 0.6, &n) != TSGS_OK);
  CHECK(tsgs_model_size(nullptr) == 0);
  tsgs_dataset_free(nullptr);
  tsgs_model_free(nullptr);
  tsgs_train_config_free(nullptr);
}

TEST_CASE("dataset loads through the handle") {
  tsgs_dataset* ds = nullptr;
  REQUIRE(tsgs_dataset_load(small_dataset().c_str(), &ds) == TSGS_OK);
  CHECK(tsgs_dataset_view_count(ds) == 4);
  CHECK(tsgs_dataset_instance_count(ds) == 2);
  tsgs_camera cam;
  REQUIRE(tsgs_dataset_camera(ds, 0, &cam) == TSGS_OK);
  CHECK(cam.width == 24);
  tsgs_split sp;
  REQUIRE(tsgs_dataset_view_split(ds, 1, &sp) == TSGS_OK);
  CHECK(sp == TSGS_SPLIT_HOLDOUT);
  CHECK(tsgs_dataset_camera(ds, 4, &cam) != TSGS_OK);
  tsgs_dataset_free(ds);
}

TEST_CASE("missing dataset is a load error") {
  tsgs_dataset* ds = nullptr;
  const fs::path root = scratch("missing");
  CHECK(tsgs_dataset_load((root / "nothing").c_str(), &ds) != TSGS_OK);
  CHECK(ds == nullptr);
}

TEST_CASE("config keys are checked") {
  tsgs_train_config* c = nullptr;
  REQUIRE(tsgs_train_config_create(&c) == TSGS_OK);
  CHECK(tsgs_train_config_set(c, "no_such_key", "1") == TSGS_ERR_CONFIG);
  CHECK(tsgs_train_config_set(c, "seed", "3") == TSGS_OK);
  CHECK(tsgs_train_config_set(c, "seed", "4") == TSGS_ERR_CONFIG);
  CHECK(tsgs_train_config_set(c, "lambda_d", "0.5") == TSGS_OK);
  CHECK(tsgs_train_config_set(c, "depth_reg", "false") == TSGS_ERR_CONFIG);
  const fs::path root = scratch("cfg");
  write_text(root / "a.cfg", "seed = 4\n");
  CHECK(tsgs_train_config_load_file(c, (root / "a.cfg").c_str()) == TSGS_ERR_CONFIG);
  tsgs_train_config_free(c);
}

TEST_CASE("train, save, load and render") {
  tsgs_set_threads(1);
  tsgs_dataset* ds = nullptr;
  REQUIRE(tsgs_dataset_load(small_dataset().c_str(), &ds) == TSGS_OK);
  tsgs_train_config* cfg = short_config(20);
  const fs::path out = scratch("train");
  std::vector<std::string> lines;
  tsgs_model* m = nullptr;
  REQUIRE(tsgs_train(ds, cfg, out.c_str(), collect, &lines, &m) == TSGS_OK);
  CHECK(lines.size() == 20);
  CHECK(tsgs_model_iteration(m) == 20);
  CHECK(tsgs_model_instance_count(m) == 2);
  CHECK(fs::exists(out / "final.tsgs"));
  CHECK(fs::exists(out / "metrics.ndjson"));
  std::string joined;
  for (const auto& l : lines) joined += l + "\n";
  CHECK(slurp(out / "metrics.ndjson") == joined);

  REQUIRE(tsgs_model_save(m, (out / "copy.tsgs").c_str()) == TSGS_OK);
  tsgs_model* back = nullptr;
  REQUIRE(tsgs_model_load((out / "copy.tsgs").c_str(), &back) == TSGS_OK);
  CHECK(tsgs_model_size(back) == tsgs_model_size(m));

  tsgs_camera cam;
  REQUIRE(tsgs_dataset_camera(ds, 1, &cam) == TSGS_OK);
  std::vector<double> a(24 * 24 * 3), b(24 * 24 * 3);
  REQUIRE(tsgs_render(m, &cam, TSGS_CHANNEL_COLOR, 0, a.data(), a.size()) == TSGS_OK);
  REQUIRE(tsgs_render(back, &cam, TSGS_CHANNEL_COLOR, 0, b.data(), b.size()) == TSGS_OK);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(tsgs_render(m, &cam, TSGS_CHANNEL_ID, 0, a.data(), a.size()) == TSGS_ERR_PARAMETER);
  std::vector<double> alpha(24 * 24);
  REQUIRE(tsgs_render(m, &cam, TSGS_CHANNEL_ALPHA, 0, alpha.data(), alpha.size()) == TSGS_OK);
  for (double v : alpha) CHECK((v >= 0 && v <= 1));

  size_t n = 0;
  REQUIRE(tsgs_evaluate(m, ds, TSGS_SPLIT_HOLDOUT, nullptr, 0, &n) == TSGS_OK);
  CHECK(n == 2);
  std::vector<tsgs_view_metrics> rows(n);
  REQUIRE(tsgs_evaluate(back, ds, TSGS_SPLIT_HOLDOUT, rows.data(), rows.size(), &n) == TSGS_OK);
  CHECK(std::isfinite(rows[0].psnr));
  CHECK(rows[0].ssim <= 1.0);

  size_t outside = 0;
  CHECK(tsgs_model_out_of_roi(m, 0.6, &outside) == TSGS_OK);
  CHECK(outside <= tsgs_model_size(m));

  const fs::path pngs = out / "png";
  REQUIRE(tsgs_render_to_png(m, &cam, 1, TSGS_CHANNEL_ID, pngs.c_str()) == TSGS_OK);
  CHECK(fs::exists(pngs / "view_000_id_class.png"));
  CHECK(fs::exists(pngs / "view_000_id_pca.png"));

  tsgs_model_free(back);
  tsgs_model_free(m);
  tsgs_train_config_free(cfg);
  tsgs_dataset_free(ds);
  tsgs_set_threads(0);
}

TEST_CASE("corrupt checkpoint") {
  const fs::path root = scratch("corrupt");
  write_text(root / "bad.tsgs", "TSGS not really");
  tsgs_model* m = nullptr;
  CHECK(tsgs_model_load((root / "bad.tsgs").c_str(), &m) == TSGS_ERR_CORRUPT);
  CHECK(m == nullptr);
}

TEST_CASE("cameras come from manifests and rings") {
  size_t n = 0;
  const fs::path manifest = small_dataset() / "manifest.txt";
  REQUIRE(fs::exists(manifest));
  REQUIRE(tsgs_cameras_from_file(manifest.c_str(), nullptr, 0, &n) == TSGS_OK);
  CHECK(n == 4);
  std::vector<tsgs_camera> cams(n);
  REQUIRE(tsgs_cameras_from_file(manifest.c_str(), cams.data(), cams.size(), &n) == TSGS_OK);
  tsgs_dataset* ds = nullptr;
  REQUIRE(tsgs_dataset_load(small_dataset().c_str(), &ds) == TSGS_OK);
  tsgs_camera c;
  REQUIRE(tsgs_dataset_camera(ds, 2, &c) == TSGS_OK);
  CHECK(std::memcmp(c.translation, cams[2].translation, sizeof c.translation) == 0);
  tsgs_dataset_free(ds);

  std::vector<tsgs_camera> ring(6);
  REQUIRE(tsgs_camera_ring(6, 4, 20, 32, 32, 50, ring.data()) == TSGS_OK);
  CHECK(ring[5].width == 32);
  CHECK(tsgs_camera_ring(0, 4, 20, 32, 32, 50, ring.data()) != TSGS_OK);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("bad arguments exit with 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("train --data x").code == 2);
  CHECK(cli("render --checkpoint a --camera b --out c --channel nope").code == 2);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("synth, train, render and eval") {
  const fs::path root = scratch("cli_flow");
  const Run s = cli("--threads 1 synth --spec \"" + std::string(TSGS_SCENE_PATH) + "\" --out \"" +
                    (root / "ds").string() + "\" --views 4 --width 20 --height 20 --seed 2");
  REQUIRE(s.code == 0);
  CHECK(s.out.find("manifest") != std::string::npos);

  write_text(root / "short.cfg", "init_points = 100\nholdout_every = 5\n");
  const std::string train_args = "--threads 1 train --data \"" + (root / "ds").string() + "\" --config \"" +
                                 (root / "short.cfg").string() + "\" --iters 5 --seed 7 --out ";
  const Run t1 = cli(train_args + "\"" + (root / "a").string() + "\"");
  REQUIRE(t1.code == 0);
  const Run t2 = cli(train_args + "\"" + (root / "b").string() + "\"");
  REQUIRE(t2.code == 0);
  CHECK(slurp(root / "a" / "metrics.ndjson") == slurp(root / "b" / "metrics.ndjson"));
  CHECK(t1.out.find("out_of_roi") != std::string::npos);

  const std::string ckpt = (root / "a" / "final.tsgs").string();
  const Run r = cli("render --checkpoint \"" + ckpt + "\" --camera ring:count=2,width=16,height=12 --out \"" +
                    (root / "r").string() + "\" --channel depth-soft");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(root / "r" / "view_001_depth-soft.png"));
  CHECK(slurp(root / "r" / "view_000_depth-soft.txt").find("max = ") != std::string::npos);
  CHECK(cli("render --checkpoint \"" + ckpt + "\" --camera ring:count=2,bogus=1 --out \"" + (root / "r").string() +
            "\"")
            .code == 2);

  const std::string eval_args = "eval --checkpoint \"" + ckpt + "\" --data \"" + (root / "ds").string() + "\"";
  const Run e1 = cli(eval_args);
  const Run e2 = cli(eval_args);
  REQUIRE(e1.code == 0);
  CHECK(e1.out == e2.out);
  CHECK(e1.out.find("mean psnr ") != std::string::npos);
  CHECK(e1.out.find("lpips n/a") != std::string::npos);
  std::istringstream lines(e1.out);
  std::string line;
  int views = 0;
  while (std::getline(lines, line)) views += line.rfind("view ", 0) == 0;
  CHECK(views == 2);
}

TEST_CASE("zero iterations write the initialization") {
  const fs::path root = scratch("cli_zero");
  REQUIRE(cli("synth --spec \"" + std::string(TSGS_SCENE_PATH) + "\" --out \"" + (root / "ds").string() +
              "\" --views 2 --width 16 --height 16")
              .code == 0);
  write_text(root / "c.cfg", "init_points = 64\n");
  const Run t = cli("train --quiet --data \"" + (root / "ds").string() + "\" --config \"" + (root / "c.cfg").string() +
                    "\" --iters 0 --out \"" + (root / "o").string() + "\"");
  REQUIRE(t.code == 0);
  tsgs_model* m = nullptr;
  REQUIRE(tsgs_model_load((root / "o" / "final.tsgs").c_str(), &m) == TSGS_OK);
  CHECK(tsgs_model_size(m) == 64);
  CHECK(tsgs_model_iteration(m) == 0);
  tsgs_model_free(m);
}

TEST_CASE("data and configuration failures map to stable codes") {
  const fs::path root = scratch("cli_fail");
  CHECK(cli("train --data \"" + (root / "none").string() + "\" --out \"" + (root / "o").string() + "\"").code == 3);
  write_text(root / "bad.tsgs", "garbage");
  CHECK(cli("eval --checkpoint \"" + (root / "bad.tsgs").string() + "\" --data \"" + (root / "none").string() + "\"")
            .code == 3);
  REQUIRE(cli("synth --spec \"" + std::string(TSGS_SCENE_PATH) + "\" --out \"" + (root / "ds").string() +
              "\" --views 2 --width 16 --height 16")
              .code == 0);
  write_text(root / "conflict.cfg", "lambda_d = 0.3\n");
  const Run c = cli("train --data \"" + (root / "ds").string() + "\" --config \"" + (root / "conflict.cfg").string() +
                    "\" --no-depth-reg --iters 1 --out \"" + (root / "o").string() + "\"");
  CHECK(c.code == 2);
  CHECK(!c.err.empty());
  write_text(root / "unknown.cfg", "warp_speed = 9\n");
  CHECK(cli("train --data \"" + (root / "ds").string() + "\" --config \"" + (root / "unknown.cfg").string() +
            "\" --out \"" + (root / "o").string() + "\"")
            .code == 2);
  write_text(root / "bad_spec.txt", "[object]\nclass = 1\n");
  CHECK(cli("synth --spec \"" + (root / "bad_spec.txt").string() + "\" --out \"" + (root / "x").string() + "\"").code ==
        3);
}

}  // TEST_SUITE
