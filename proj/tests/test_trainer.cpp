#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "tsgs/error.hpp"
#include "tsgs/parallel.hpp"
#include "tsgs/synthgen.hpp"
#include "tsgs/trainer.hpp"

using namespace tsgs;
namespace fs = std::filesystem;

namespace {

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    SceneSpec s;
    s.objects.push_back({1, Vec3(-0.5, 0, 0), Vec3::Constant(0.3), 40, Vec3(0.9, 0.3, 0.2)});
    s.objects.push_back({2, Vec3(0.5, 0, 0), Vec3::Constant(0.3), 40, Vec3(0.2, 0.4, 0.9)});
    SynthOptions o;
    o.ring.count = 4;
    o.ring.width = 24;
    o.ring.height = 24;
    o.ring.radius = 3.5;
    const fs::path out = fs::temp_directory_path() / "tsgs_trainer_tiny";
    fs::remove_all(out);
    return render_dataset(make_scene(s, 3), o, out);
  }();
  return ds;
}

TrainConfig short_config(int iters) {
  TrainConfig c;
  c.optimizer.total_iterations = iters;
  c.init_points = 150;
  c.holdout_every = 10;
  c.control.densify_from = 10;
  c.control.densify_interval = 10;
  c.control.semantic_prune_from = 20;
  c.loss.grouping.sample_m = 50;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero iterations return the initial cloud") {
  const Dataset& ds = tiny_dataset();
  TrainConfig cfg = short_config(0);
  const TrainResult r = train(ds, cfg);
  CHECK(r.metrics.empty());
  CHECK(r.render_calls == 0);
  REQUIRE(r.cloud.size() == 150);
  CHECK(validate_scene(r.cloud).empty());
  const TrainResult again = train(ds, cfg);
  CHECK(std::memcmp(r.cloud.centers.data(), again.cloud.centers.data(), 150 * sizeof(Vec3)) == 0);
  CHECK(r.cloud.opacity(0) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("one render per iteration and stable log at one thread") {
  const Dataset& ds = tiny_dataset();
  const TrainConfig cfg = short_config(30);
  const int before = thread_count();
  set_thread_count(1);
  std::ostringstream log_a, log_b;
  TrainHooks ha, hb;
  ha.metrics = &log_a;
  hb.metrics = &log_b;
  const TrainResult a = train(ds, cfg, ha);
  const TrainResult b = train(ds, cfg, hb);
  set_thread_count(before);
  CHECK(a.render_calls == 30);
  CHECK(a.metrics.size() == 30);
  CHECK(log_a.str() == log_b.str());
  CHECK(a.cloud.size() == b.cloud.size());
  CHECK(a.metrics.back().psnr_holdout.has_value());
  CHECK(!a.metrics[3].psnr_holdout.has_value());
}

TEST_CASE("metric lines carry the fixed keys") {
  MetricRecord r;
  r.iter = 7;
  r.terms.l_color = 0.5;
  r.n_gaussians = 12;
  auto j = nlohmann::json::parse(to_json_line(r));
  for (const char* k : {"iter", "l_color", "l_2d", "l_3d", "l_hard", "l_soft", "l_gl", "total", "n_gaussians"})
    CHECK(j.contains(k));
  CHECK(!j.contains("psnr_holdout"));
  r.psnr_holdout = 31.5;
  j = nlohmann::json::parse(to_json_line(r));
  CHECK(j["psnr_holdout"].get<double>() == 31.5);
  CHECK(j["iter"].get<int>() == 7);
  CHECK(to_json_line(r).find('\n') == std::string::npos);
}

TEST_CASE("checkpoints land in the output directory") {
  const fs::path out = fs::temp_directory_path() / "tsgs_trainer_ckpt";
  fs::remove_all(out);
  fs::create_directories(out);
  TrainConfig cfg = short_config(12);
  cfg.checkpoint_every = 5;
  TrainHooks h;
  h.out_dir = out;
  const TrainResult r = train(tiny_dataset(), cfg, h);
  CHECK(fs::exists(out / "final.tsgs"));
  const Checkpoint ck = load_checkpoint(out / "final.tsgs");
  CHECK(ck.iteration == 12);
  CHECK(ck.cloud.size() == r.cloud.size());
  int count = 0;
  for (const auto& e : fs::directory_iterator(out)) count += e.path().extension() == ".tsgs";
  CHECK(count == 3);
}

TEST_CASE("prune events honour the retention predicate") {
  TrainConfig cfg = short_config(40);
  TrainHooks h;
  int events = 0;
  h.on_prune = [&](const PruneEvent& ev) {
    ++events;
    const auto roi = roi_membership(*ev.survivors, *ev.head, *ev.control);
    for (std::size_t i = 0; i < ev.survivors->size(); ++i) {
      CHECK(ev.survivors->opacity(i) >= ev.control->opacity_prune_eps);
      if (ev.iteration >= ev.control->semantic_prune_from) CHECK(roi[i] == 1);
    }
  };
  train(tiny_dataset(), cfg, h);
  CHECK(events == 3);
}

TEST_CASE("ablation switches") {
  TrainConfig c;
  c.semantic = false;
  c.depth_reg = false;
  const TrainConfig e = effective_config(c);
  CHECK(e.loss.lambda_id == 0);
  CHECK(e.loss.lambda_d == 0);
  CHECK(!e.loss.use_floating_mask);
  CHECK(!e.control.semantic);
  c.optimizer.total_iterations = 3000;
  CHECK(effective_config(c).control.densify_until == 3000);
}

TEST_CASE("config text") {
  TrainConfig c;
  const auto keys = apply_config_text(c, "# comment\nlambda_d = 0.25\n  seed=9  # trailing\n\ninit_points = 500\n");
  CHECK(keys == std::vector<std::string>{"lambda_d", "seed", "init_points"});
  CHECK(c.loss.lambda_d == 0.25);
  CHECK(c.seed == 9);
  CHECK(c.init_points == 500);
  auto fails = [](const std::string& text) {
    TrainConfig t;
    try {
      apply_config_text(t, text);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::configuration;
    }
    return false;
  };
  CHECK(fails("unknown_key = 1"));
  CHECK(fails("lambda_d = abc"));
  CHECK(fails("lambda_d = 1\nlambda_d = 2"));
  CHECK(fails("depth_reg = false\nlambda_d = 0.5"));
  CHECK(fails("semantic = false\nlambda_id = 1"));
  CHECK(fails("semantic = maybe"));
  CHECK(fails("no equals sign"));
  CHECK(!fails("depth_reg = false\nlambda_d = 0"));
  CHECK(config_keys().size() > 30);
}

TEST_CASE("dataset without training views is a configuration error") {
  Dataset ds = tiny_dataset();
  for (auto& v : ds.views) v.split = Split::holdout;
  try {
    train(ds, short_config(5));
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::configuration);
  }
  Dataset empty;
  CHECK_THROWS_AS(train(empty, short_config(5)), Error);
}

TEST_CASE("invalid settings are rejected before training") {
  TrainConfig c = short_config(10);
  c.loss.photometric.lambda_dssim = 2;
  CHECK_THROWS_AS(train(tiny_dataset(), c), Error);
  c = short_config(10);
  c.init_points = 0;
  CHECK_THROWS_AS(train(tiny_dataset(), c), Error);
}

}  // TEST_SUITE
