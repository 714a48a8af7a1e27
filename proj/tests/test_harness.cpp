#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trajattn/config.hpp"
#include "trajattn/image_io.hpp"
#include "trajattn/pipeline.hpp"
#include "trajattn/rng.hpp"
#include "testing.hpp"

using namespace trajattn;

namespace {

std::string temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("trajattn_harness_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.world_extent = 48.0;
  cfg.model_horizon = 4;
  cfg.image_size = 16;
  cfg.conv_channels = {6, 12};
  cfg.hidden_size = 24;
  cfg.action_embed_size = 8;
  cfg.collect_samples = 80;
  cfg.collect_episode_steps = 40;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.plan_rollouts = 16;
  cfg.plan_elites = 4;
  cfg.eval_episodes = 1;
  cfg.eval_episode_steps = 5;
  cfg.export_samples = 2;
  cfg.seeds = {0};
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("config defaults round-trip through serialize and parse") {
  const ExperimentConfig defaults;
  defaults.validate();
  const std::string text = serialize_config(defaults);
  const ExperimentConfig parsed = parse_config(text);
  CHECK(serialize_config(parsed) == text);
  CHECK(config_hash(parsed) == config_hash(defaults));
}

TEST_CASE("config parsing applies values and tolerates comments") {
  const std::string text =
      "# experiment\n"
      "[world]\n"
      "extent = 96.5   \n"
      "classes = 3\n"
      "\n"
      "[model]\n"
      "variant = self\n"
      "conv_channels = 4, 8, 16\n"
      "[evaluation]\n"
      "seeds = 5,6\n";
  const ExperimentConfig cfg = parse_config(text);
  CHECK(cfg.world_extent == 96.5);
  CHECK(cfg.world_classes == 3);
  CHECK(cfg.model_variant == "self");
  CHECK(cfg.conv_channels == std::vector<int>{4, 8, 16});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{5, 6});
  CHECK(cfg.epochs == ExperimentConfig{}.epochs);
}

TEST_CASE("config errors list every offending key") {
  SUBCASE("unknown keys and unparseable values in one message") {
    try {
      parse_config("[world]\nbogus = 1\n[training]\nepochs = soon\nnonsense = 2\n");
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("world.bogus") != std::string::npos);
      CHECK(msg.find("training.nonsense") != std::string::npos);
      CHECK(msg.find("training.epochs") != std::string::npos);
    }
  }
  SUBCASE("invalid values are all named") {
    ExperimentConfig cfg;
    cfg.world_mode = "lunar";
    cfg.epochs = 0;
    cfg.val_fraction = 1.5;
    try {
      cfg.validate();
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("world.mode") != std::string::npos);
      CHECK(msg.find("training.epochs") != std::string::npos);
      CHECK(msg.find("training.val_fraction") != std::string::npos);
    }
  }
  SUBCASE("keys outside any section are rejected") {
    CHECK_THROWS_AS(parse_config("extent = 12\n"), std::invalid_argument);
  }
}

TEST_CASE("config hash tracks content") {
  ExperimentConfig a, b;
  CHECK(config_hash(a) == config_hash(b));
  b.learning_rate = 2e-3;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("config file save and load") {
  const std::string dir = temp_dir("config");
  ExperimentConfig cfg;
  cfg.seeds = {11, 12, 13};
  cfg.world_extent = 80.0;
  save_config(dir + "/exp.cfg", cfg);
  const ExperimentConfig loaded = load_config(dir + "/exp.cfg");
  CHECK(serialize_config(loaded) == serialize_config(cfg));
  CHECK_THROWS_WITH_AS(load_config(dir + "/missing.cfg"),
                       doctest::Contains("missing.cfg"), std::runtime_error);
}

TEST_CASE("ppm round trip preserves bytes") {
  const std::string dir = temp_dir("ppm");
  Rng rng(4);
  RgbImage img;
  img.width = 13;
  img.height = 7;
  img.pixels.resize(13 * 7 * 3);
  for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng.uniform_int(256));
  save_ppm(dir + "/frame.ppm", img);
  const RgbImage back = load_ppm(dir + "/frame.ppm");
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(load_ppm(dir + "/missing.ppm"), std::runtime_error);

  std::ofstream bad(dir + "/bad.ppm", std::ios::binary);
  bad << "P3\n1 1\n255\n0 0 0\n";
  bad.close();
  CHECK_THROWS_AS(load_ppm(dir + "/bad.ppm"), std::runtime_error);
}

TEST_CASE("channel-major conversion interleaves pixels") {
  // 2x2 image: channel planes R, G, B with distinct values.
  const std::vector<std::uint8_t> planes = {1, 2, 3, 4, 10, 20, 30, 40, 100, 200, 210, 220};
  const RgbImage img = image_from_channel_major(planes, 2, 2);
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 10, 100, 2, 20, 200, 3, 30, 210, 4, 40, 220});
  CHECK_THROWS_AS(image_from_channel_major(planes, 3, 2), std::invalid_argument);
}

TEST_CASE("mask overlay blends toward the highlight") {
  RgbImage img;
  img.width = 8;
  img.height = 8;
  img.pixels.assign(8 * 8 * 3, 100);

  SUBCASE("zero mask leaves the image untouched") {
    const Tensor mask({2, 2}, {0.0, 0.0, 0.0, 0.0});
    CHECK(overlay_mask(img, mask).pixels == img.pixels);
  }
  SUBCASE("peak cell reaches half-blend and scaling the mask changes nothing") {
    Tensor mask({2, 2}, {0.0, 0.0, 0.0, 2.0});
    const RgbImage out = overlay_mask(img, mask);
    // Pixel (6,6) sits at the center of the peak feature cell: alpha 0.5.
    const size_t at = (6 * 8 + 6) * 3;
    CHECK(static_cast<int>(out.pixels[at + 0]) == 178);  // 0.5*100 + 0.5*255, rounded
    CHECK(static_cast<int>(out.pixels[at + 1]) == 66);   // 0.5*100 + 0.5*32
    CHECK(static_cast<int>(out.pixels[at + 2]) == 66);
    // Far corner is outside the bilinear support of the peak.
    CHECK(static_cast<int>(out.pixels[0]) == 100);

    const Tensor scaled({2, 2}, {0.0, 0.0, 0.0, 20.0});
    CHECK(overlay_mask(img, scaled).pixels == out.pixels);
  }
  SUBCASE("malformed masks are rejected") {
    CHECK_THROWS_AS(overlay_mask(img, Tensor({4}, {1, 1, 1, 1})), std::invalid_argument);
    CHECK_THROWS_AS(overlay_mask(img, Tensor({2, 2}, {0.0, -1.0, 0.0, 1.0})),
                    std::invalid_argument);
  }
}

TEST_CASE("derived sub-configs agree with the experiment config") {
  const ExperimentConfig cfg = tiny_config();
  const DatasetHeader header = dataset_header_from(cfg);
  CHECK(header.horizon == 4);
  CHECK(header.image_w == 16);
  CHECK(header.heads.size() == 3);
  CHECK(header.heads[0].size == cfg.world_classes);

  const ModelConfig mc = model_config_from(cfg, header, Variant::self_attention);
  CHECK(mc.variant == Variant::self_attention);
  CHECK(mc.conv_layers.size() == 2);
  CHECK(mc.conv_layers[1].channels == 12);
  CHECK(mc.intrinsics.image_w == 16);
  CHECK(mc.intrinsics.cx == 8.0);
  CHECK(mc.camera_pitch == doctest::Approx(-10.0 * 3.14159265358979323846 / 180.0));
  mc.validate();

  const RenderConfig render = render_config_from(cfg);
  CHECK(render.intrinsics.fx == 16.0);
  const PlanConfig plan = plan_config_from(cfg);
  CHECK(plan.action_low == -0.5);
  CHECK(plan.horizon == 4);
  plan.validate();
}

TEST_CASE("pipeline commands produce provenance-stamped artifacts") {
  const ExperimentConfig cfg = tiny_config();
  const std::string dir = temp_dir("pipeline");
  const std::uint64_t hash = config_hash(cfg);

  cmd_gen_world(cfg, 7, dir);
  const WorldSpec world = load_world(world_file(dir));
  CHECK(world.config_hash == hash);
  CHECK(world.seed == 7);
  const WorldSpec swapped = load_world(swapped_world_file(dir));
  CHECK(swapped.swapped);
  CHECK(swapped.config_hash == hash);

  cmd_collect(cfg, world_file(dir), 7, dir);
  const Dataset data = load_dataset(dataset_file(dir));
  CHECK(data.header.config_hash == hash);
  CHECK(data.header.seed == 7);
  CHECK(static_cast<int>(data.samples.size()) == cfg.collect_samples);

  const TrainResult trained = cmd_train(cfg, dataset_file(dir), Variant::trajectory, 0, dir);
  CHECK(trained.checkpoint.config_hash == hash);
  CHECK(trained.checkpoint.seed == 0);
  CHECK(std::filesystem::exists(checkpoint_file(dir, Variant::trajectory, 0)));
  CHECK(std::filesystem::exists(metrics_file(dir, Variant::trajectory, 0)));

  const OfflineEvalResult offline = cmd_eval_offline(
      cfg, dataset_file(dir), checkpoint_file(dir, Variant::trajectory, 0), Variant::trajectory, dir);
  bool found_terrain = false;
  for (const auto& m : offline.metrics) {
    if (m.head == "terrain" && m.metric == "accuracy") {
      found_terrain = true;
      CHECK(m.value >= 0.0);
      CHECK(m.value <= 1.0);
    }
  }
  CHECK(found_terrain);
  CHECK(offline.fidelity >= 0.0);

  const OnPolicyEvalResult onpolicy = cmd_eval_onpolicy(
      cfg, world_file(dir), checkpoint_file(dir, Variant::trajectory, 0), Variant::trajectory, 3, dir);
  CHECK(onpolicy.planner_train > 0.0);
  CHECK(onpolicy.random_train > 0.0);
  CHECK(onpolicy.episode_rows.size() == 4u * 4u);  // 4 cells x 1 episode x 4 metrics

  cmd_export_attention(cfg, dataset_file(dir), checkpoint_file(dir, Variant::trajectory, 0),
                       Variant::trajectory, dir);
  CHECK(std::filesystem::exists(dir + "/attention_trajectory_sample000.ppm"));
  CHECK(std::filesystem::exists(dir + "/attention_trajectory_sample001.ppm"));
  const RgbImage overlay = load_ppm(dir + "/attention_trajectory_sample000.ppm");
  CHECK(overlay.width == 16);
  CHECK(overlay.height == 16);
}

TEST_CASE("repeated runs write byte-identical artifacts") {
  const ExperimentConfig cfg = tiny_config();
  const std::string dir_a = temp_dir("repeat_a");
  const std::string dir_b = temp_dir("repeat_b");

  for (const std::string& dir : {dir_a, dir_b}) {
    cmd_gen_world(cfg, 5, dir);
    cmd_collect(cfg, world_file(dir), 5, dir);
    cmd_train(cfg, dataset_file(dir), Variant::none, 1, dir);
  }
  CHECK(read_bytes(world_file(dir_a)) == read_bytes(world_file(dir_b)));
  CHECK(read_bytes(dataset_file(dir_a)) == read_bytes(dataset_file(dir_b)));
  CHECK(read_bytes(checkpoint_file(dir_a, Variant::none, 1)) ==
        read_bytes(checkpoint_file(dir_b, Variant::none, 1)));
  CHECK(read_bytes(metrics_file(dir_a, Variant::none, 1)) ==
        read_bytes(metrics_file(dir_b, Variant::none, 1)));
}

TEST_CASE("eval-offline rejects an empty dataset by name") {
  const ExperimentConfig cfg = tiny_config();
  const std::string dir = temp_dir("empty_eval");
  cmd_gen_world(cfg, 2, dir);
  cmd_collect(cfg, world_file(dir), 2, dir);
  cmd_train(cfg, dataset_file(dir), Variant::none, 0, dir);

  Dataset empty;
  empty.header = dataset_header_from(cfg);
  save_dataset(dir + "/empty.bin", empty);
  CHECK_THROWS_WITH_AS(
      cmd_eval_offline(cfg, dir + "/empty.bin", checkpoint_file(dir, Variant::none, 0),
                       Variant::none, dir),
      doctest::Contains("empty.bin"), std::runtime_error);
}

TEST_CASE("export-attention refuses the no-attention variant") {
  const ExperimentConfig cfg = tiny_config();
  CHECK_THROWS_AS(cmd_export_attention(cfg, "x.bin", "y.ckpt", Variant::none, temp_dir("mask")),
                  std::invalid_argument);
}

TEST_CASE("missing input artifacts are reported by file name") {
  const ExperimentConfig cfg = tiny_config();
  const std::string dir = temp_dir("missing");
  CHECK_THROWS_WITH_AS(cmd_collect(cfg, dir + "/nope_world.bin", 0, dir),
                       doctest::Contains("nope_world.bin"), std::runtime_error);
  CHECK_THROWS_WITH_AS(cmd_train(cfg, dir + "/nope_data.bin", Variant::none, 0, dir),
                       doctest::Contains("nope_data.bin"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      cmd_eval_onpolicy(cfg, dir + "/nope_world.bin", dir + "/nope.ckpt", Variant::none, 0, dir),
      doctest::Contains("nope_world.bin"), std::runtime_error);
}

TEST_CASE("random policy is reproducible and bounded") {
  const Policy a = make_random_policy(0.5, 42);
  const Policy b = make_random_policy(0.5, 42);
  const Tensor obs({1}, {0.0});
  VehicleState state;
  for (int i = 0; i < 50; ++i) {
    const double action = a(obs, state);
    CHECK(action == b(obs, state));
    CHECK(action >= -0.5);
    CHECK(action <= 0.5);
  }
}
