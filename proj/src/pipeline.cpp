#include "trajattn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "trajattn/image_io.hpp"
#include "trajattn/rng.hpp"

namespace trajattn {

namespace {

constexpr double kPi = 3.14159265358979323846;

void ensure_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw std::invalid_argument("output directory not set");
  std::filesystem::create_directories(out_dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string run_tag(Variant variant, std::uint64_t seed) {
  return to_string(variant) + "_seed" + std::to_string(seed);
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / xs.size();
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / (xs.size() - 1));
}

double head_metric_value(const std::vector<HeadMetric>& metrics, const std::string& head,
                         const std::string& metric) {
  for (const auto& m : metrics) {
    if (m.head == head && m.metric == metric) return m.value;
  }
  throw std::runtime_error("evaluation produced no '" + metric + "' for head '" + head + "'");
}

void write_plan_diagnostics_csv(const std::string& path,
                                const std::vector<PlanDiagnosticsRow>& rows, std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  out << "timestep,iteration,elite_mean_reward,best_reward,seed\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%llu\n", r.timestep, r.iteration,
                  r.elite_mean_reward, r.best_reward, static_cast<unsigned long long>(seed));
    out << buf;
  }
  if (!out) throw std::runtime_error("metrics write failed: " + path);
}

}  // namespace

WorldParams world_params_from(const ExperimentConfig& cfg) {
  WorldParams params = cfg.world_mode == "procedural" ? WorldParams::procedural_defaults()
                                                      : WorldParams::toy_defaults();
  params.extent = cfg.world_extent;
  params.cell_size = cfg.world_cell_size;
  params.num_classes = cfg.world_classes;
  params.obstacle_count = cfg.world_obstacles;
  params.confound = cfg.world_confound;
  return params;
}

RenderConfig render_config_from(const ExperimentConfig& cfg) {
  RenderConfig render;
  const int s = cfg.image_size;
  render.intrinsics = {static_cast<double>(s), static_cast<double>(s), s / 2.0, s / 2.0, s, s};
  render.camera_height = cfg.camera_height;
  render.camera_pitch = cfg.camera_pitch_deg * kPi / 180.0;
  return render;
}

CollectParams collect_params_from(const ExperimentConfig& cfg) {
  CollectParams params;
  params.num_samples = cfg.collect_samples;
  params.horizon = cfg.model_horizon;
  params.max_episode_steps = cfg.collect_episode_steps;
  params.render = render_config_from(cfg);
  return params;
}

TrainingConfig training_config_from(const ExperimentConfig& cfg) {
  TrainingConfig tcfg;
  tcfg.epochs = cfg.epochs;
  tcfg.batch_size = cfg.batch_size;
  tcfg.learning_rate = cfg.learning_rate;
  tcfg.weight_decay = cfg.weight_decay;
  tcfg.attention_loss_weight = cfg.attention_loss_weight;
  tcfg.val_fraction = cfg.val_fraction;
  tcfg.threads = cfg.threads;
  return tcfg;
}

PlanConfig plan_config_from(const ExperimentConfig& cfg) {
  PlanConfig plan;
  plan.num_rollouts = cfg.plan_rollouts;
  plan.num_elites = cfg.plan_elites;
  plan.iterations = cfg.plan_iterations;
  plan.horizon = cfg.model_horizon;
  const double limit = VehicleState{}.steering_limit;
  plan.action_low = -limit;
  plan.action_high = limit;
  plan.variance_floor = cfg.plan_variance_floor;
  plan.threads = cfg.threads;
  return plan;
}

RewardSpec reward_spec_from(const ExperimentConfig& cfg) {
  RewardSpec spec;
  if (cfg.reward == "turbulence_collision") {
    spec.kind = RewardSpec::Kind::turbulence_collision;
  } else if (cfg.reward == "goal_directed") {
    spec.kind = RewardSpec::Kind::goal_directed;
  } else {
    throw std::invalid_argument("unknown reward kind: " + cfg.reward);
  }
  spec.num_terrain_classes = cfg.world_classes;
  const double norm = std::hypot(cfg.goal_x, cfg.goal_y);
  if (norm <= 0.0) throw std::invalid_argument("goal direction must be non-zero");
  spec.goal = {cfg.goal_x / norm, cfg.goal_y / norm};
  return spec;
}

DatasetHeader dataset_header_from(const ExperimentConfig& cfg) {
  DatasetHeader header;
  header.horizon = cfg.model_horizon;
  header.image_channels = 3;
  header.image_h = cfg.image_size;
  header.image_w = cfg.image_size;
  header.action_dim = 1;
  header.heads = {{"terrain", EventHeadSpec::Kind::discrete, cfg.world_classes},
                  {"collision", EventHeadSpec::Kind::discrete, 2},
                  {"delta_pos", EventHeadSpec::Kind::continuous, 2}};
  return header;
}

ModelConfig model_config_from(const ExperimentConfig& cfg, const DatasetHeader& header,
                              Variant variant) {
  ModelConfig mc;
  mc.variant = variant;
  mc.horizon = header.horizon;
  mc.image_channels = header.image_channels;
  mc.image_w = header.image_w;
  mc.image_h = header.image_h;
  mc.conv_layers.clear();
  for (int channels : cfg.conv_channels) mc.conv_layers.push_back({3, channels, 2});
  mc.hidden_size = cfg.hidden_size;
  mc.action_embed_size = cfg.action_embed_size;
  mc.action_dim = header.action_dim;
  mc.heads = header.heads;
  mc.covariance = covariance_variant_from_string(cfg.covariance);
  mc.intrinsics = {static_cast<double>(header.image_w), static_cast<double>(header.image_w),
                   header.image_w / 2.0, header.image_h / 2.0, header.image_w, header.image_h};
  mc.camera_height = cfg.camera_height;
  mc.camera_pitch = cfg.camera_pitch_deg * kPi / 180.0;
  return mc;
}

std::string world_file(const std::string& out_dir) { return join(out_dir, "world.bin"); }
std::string swapped_world_file(const std::string& out_dir) {
  return join(out_dir, "world_swapped.bin");
}
std::string dataset_file(const std::string& out_dir) { return join(out_dir, "dataset.bin"); }
std::string checkpoint_file(const std::string& out_dir, Variant variant, std::uint64_t seed) {
  return join(out_dir, "model_" + run_tag(variant, seed) + ".ckpt");
}
std::string metrics_file(const std::string& out_dir, Variant variant, std::uint64_t seed) {
  return join(out_dir, "metrics_" + run_tag(variant, seed) + ".csv");
}

LoadedModel load_trained_model(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                               const DatasetHeader& header, Variant variant) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.config_hash != config_hash(cfg)) {
    std::fprintf(stderr, "note: checkpoint %s was produced under a different config\n",
                 checkpoint_path.c_str());
  }
  LoadedModel loaded;
  loaded.model = std::make_unique<Model>(model_config_from(cfg, header, variant), ckpt.params);
  loaded.stats = NormalizationStats::from_params(ckpt.params, header.heads);
  loaded.config_hash = ckpt.config_hash;
  loaded.seed = ckpt.seed;
  return loaded;
}

Policy make_planner_policy(const Model& model, const ExperimentConfig& cfg, std::uint64_t seed,
                           const NormalizationStats& stats,
                           std::vector<PlanDiagnosticsRow>* diagnostics) {
  struct State {
    ActionDistribution warm;
    bool has_warm = false;
    int timestep = 0;
  };
  auto state = std::make_shared<State>();
  const PlanConfig plan_cfg = plan_config_from(cfg);
  const RewardSpec reward = reward_spec_from(cfg);
  return [&model, plan_cfg, reward, stats, seed, diagnostics, state](
             const Tensor& observation, const VehicleState&) -> double {
    const CemResult result =
        cem_plan(model, observation, plan_cfg, reward, stats, derive_seed(seed, "plan", state->timestep),
                 state->has_warm ? &state->warm : nullptr, state->timestep);
    state->warm = warm_start(result.distribution, plan_cfg);
    state->has_warm = true;
    ++state->timestep;
    if (diagnostics) {
      diagnostics->insert(diagnostics->end(), result.diagnostics.begin(),
                          result.diagnostics.end());
    }
    return result.best_actions.front().front();
  };
}

Policy make_random_policy(double steering_limit, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(derive_seed(seed, "random_policy"));
  return [rng, steering_limit](const Tensor&, const VehicleState&) -> double {
    return rng->uniform(-steering_limit, steering_limit);
  };
}

void cmd_gen_world(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  ensure_dir(out_dir);
  WorldSpec world = generate_world(seed, world_params_from(cfg));
  world.config_hash = config_hash(cfg);
  const WorldSpec swapped = swap_terrain(world);
  save_world(world_file(out_dir), world);
  save_world(swapped_world_file(out_dir), swapped);
  std::printf("wrote %s (%dx%d cells, %d classes, %zu obstacles)\n", world_file(out_dir).c_str(),
              world.cells_x, world.cells_y, world.num_classes, world.obstacles.size());
  std::printf("wrote %s (terrain classes swapped, backdrop unchanged)\n",
              swapped_world_file(out_dir).c_str());
}

void cmd_collect(const ExperimentConfig& cfg, const std::string& world_path, std::uint64_t seed,
                 const std::string& out_dir) {
  ensure_dir(out_dir);
  const WorldSpec world = load_world(world_path);
  Dataset data = collect_offpolicy(world, collect_params_from(cfg), seed);
  data.header.config_hash = config_hash(cfg);
  data.header.seed = seed;
  save_dataset(dataset_file(out_dir), data);

  int collisions = 0;
  for (const auto& sample : data.samples) {
    const auto& flags = sample.labels[1].classes;
    if (std::find(flags.begin(), flags.end(), 1) != flags.end()) ++collisions;
  }
  std::printf("wrote %s (%zu samples, horizon %d, %.1f%% windows with a collision)\n",
              dataset_file(out_dir).c_str(), data.samples.size(), data.header.horizon,
              100.0 * collisions / std::max<size_t>(1, data.samples.size()));
}

TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
                      Variant variant, std::uint64_t seed, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Dataset data = load_dataset(dataset_path);
  Model model(model_config_from(cfg, data.header, variant), seed);
  TrainResult result = train_model(model, data, training_config_from(cfg), seed, config_hash(cfg));
  save_checkpoint(checkpoint_file(out_dir, variant, seed), result.checkpoint);
  write_metrics_csv(metrics_file(out_dir, variant, seed), result.log, seed);
  std::printf("wrote %s (best epoch %d, validation accuracy %.4f)\n",
              checkpoint_file(out_dir, variant, seed).c_str(), result.best_epoch,
              result.best_val_accuracy);
  std::printf("wrote %s\n", metrics_file(out_dir, variant, seed).c_str());
  return result;
}

OfflineEvalResult cmd_eval_offline(const ExperimentConfig& cfg, const std::string& dataset_path,
                                   const std::string& checkpoint_path, Variant variant,
                                   const std::string& out_dir) {
  ensure_dir(out_dir);
  const Dataset data = load_dataset(dataset_path);
  if (data.samples.empty())
    throw std::runtime_error("eval-offline: dataset has no samples: " + dataset_path);
  const LoadedModel loaded = load_trained_model(checkpoint_path, cfg, data.header, variant);

  std::vector<int> indices(data.samples.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);

  OfflineEvalResult result;
  result.metrics = evaluate_accuracy(*loaded.model, data, indices, loaded.stats, cfg.threads);
  result.fidelity = variant == Variant::none
                        ? std::numeric_limits<double>::quiet_NaN()
                        : attention_fidelity(*loaded.model, data, indices, cfg.threads);

  std::vector<MetricRow> rows;
  for (const auto& m : result.metrics) rows.push_back({0, "eval", m.head, m.metric, m.value});
  if (variant != Variant::none)
    rows.push_back({0, "eval", "attention", "fidelity", result.fidelity});
  const std::string csv = join(out_dir, "offline_" + run_tag(variant, loaded.seed) + ".csv");
  write_metrics_csv(csv, rows, loaded.seed);

  std::printf("%-12s %-10s %s\n", "head", "metric", "value");
  for (const auto& row : rows) std::printf("%-12s %-10s %.6f\n", row.head.c_str(), row.metric.c_str(), row.value);
  std::printf("wrote %s\n", csv.c_str());
  return result;
}

OnPolicyEvalResult cmd_eval_onpolicy(const ExperimentConfig& cfg, const std::string& world_path,
                                     const std::string& checkpoint_path, Variant variant,
                                     std::uint64_t seed, const std::string& out_dir) {
  ensure_dir(out_dir);
  const WorldSpec train_world = load_world(world_path);
  const WorldSpec test_world = swap_terrain(train_world);
  const DatasetHeader header = dataset_header_from(cfg);
  const LoadedModel loaded = load_trained_model(checkpoint_path, cfg, header, variant);
  const RenderConfig render = render_config_from(cfg);
  const double limit = VehicleState{}.steering_limit;

  OnPolicyEvalResult result;
  std::vector<PlanDiagnosticsRow> diagnostics;
  struct Cell {
    const char* world_name;
    const WorldSpec* world;
    const char* policy_name;
    double* mean_slot;
  };
  const Cell cells[] = {
      {"train_world", &train_world, "planner", &result.planner_train},
      {"train_world", &train_world, "random", &result.random_train},
      {"test_world", &test_world, "planner", &result.planner_test},
      {"test_world", &test_world, "random", &result.random_test},
  };

  for (const Cell& cell : cells) {
    double total = 0.0;
    for (int i = 0; i < cfg.eval_episodes; ++i) {
      const std::uint64_t episode_seed = derive_seed(seed, "eval_episode", i);
      const bool is_planner = std::string(cell.policy_name) == "planner";
      const Policy policy =
          is_planner ? make_planner_policy(*loaded.model, cfg, episode_seed, loaded.stats,
                                           &diagnostics)
                     : make_random_policy(limit, episode_seed);
      const EpisodeRecord record =
          run_episode(*cell.world, policy, cfg.eval_episode_steps, episode_seed, render);
      if (record.aborted)
        throw std::runtime_error("eval-onpolicy: policy failed during an episode");
      total += record.total_return;
      result.episode_rows.push_back({i, cell.world_name, cell.policy_name, "return",
                                     record.total_return});
      result.episode_rows.push_back({i, cell.world_name, cell.policy_name, "completion",
                                     record.completion});
      result.episode_rows.push_back({i, cell.world_name, cell.policy_name, "collided",
                                     record.collided ? 1.0 : 0.0});
      result.episode_rows.push_back({i, cell.world_name, cell.policy_name, "steps",
                                     static_cast<double>(record.steps)});
    }
    *cell.mean_slot = total / cfg.eval_episodes;
  }

  const std::string tag = run_tag(variant, seed);
  const std::string episodes_csv = join(out_dir, "episodes_" + tag + ".csv");
  write_metrics_csv(episodes_csv, result.episode_rows, seed);
  const std::string diag_csv = join(out_dir, "plan_diagnostics_" + tag + ".csv");
  write_plan_diagnostics_csv(diag_csv, diagnostics, seed);

  std::printf("%-8s %-12s %s\n", "policy", "world", "mean_return");
  std::printf("%-8s %-12s %.3f\n", "planner", "train_world", result.planner_train);
  std::printf("%-8s %-12s %.3f\n", "planner", "test_world", result.planner_test);
  std::printf("%-8s %-12s %.3f\n", "random", "train_world", result.random_train);
  std::printf("%-8s %-12s %.3f\n", "random", "test_world", result.random_test);
  std::printf("planner/random return ratio in the training world: %.3f\n",
              result.planner_train / std::max(1e-12, result.random_train));
  std::printf("train->test return drop: planner %.3f, random %.3f\n",
              result.planner_train - result.planner_test,
              result.random_train - result.random_test);
  std::printf("wrote %s\nwrote %s\n", episodes_csv.c_str(), diag_csv.c_str());
  return result;
}

void cmd_export_attention(const ExperimentConfig& cfg, const std::string& dataset_path,
                          const std::string& checkpoint_path, Variant variant,
                          const std::string& out_dir) {
  if (variant == Variant::none)
    throw std::invalid_argument("export-attention requires an attention variant");
  ensure_dir(out_dir);
  const Dataset data = load_dataset(dataset_path);
  if (data.samples.empty())
    throw std::runtime_error("export-attention: dataset has no samples: " + dataset_path);
  const LoadedModel loaded = load_trained_model(checkpoint_path, cfg, data.header, variant);

  const int count = std::min<int>(cfg.export_samples, static_cast<int>(data.samples.size()));
  for (int i = 0; i < count; ++i) {
    const TrajectorySample& sample = data.samples[i];
    const Tensor obs = observation_tensor(data.header, sample);
    const ForwardOutput out =
        loaded.model->forward_full(obs, action_tensors(data.header, sample));
    if (out.masks.empty()) throw std::runtime_error("export-attention: model produced no masks");

    // Masks superimposed across the horizon: per-cell max keeps each step's
    // peak visible in a single overlay.
    Tensor combined = out.masks.front();
    std::vector<double> acc = combined.values();
    for (size_t t = 1; t < out.masks.size(); ++t) {
      const auto& step = out.masks[t].values();
      for (size_t j = 0; j < acc.size(); ++j) acc[j] = std::max(acc[j], step[j]);
    }
    const Tensor merged(combined.shape(), acc);

    const RgbImage frame =
        image_from_channel_major(sample.image, data.header.image_h, data.header.image_w);
    char name[64];
    std::snprintf(name, sizeof(name), "attention_%s_sample%03d.ppm", to_string(variant).c_str(),
                  i);
    save_ppm(join(out_dir, name), overlay_mask(frame, merged));
  }
  std::printf("wrote %d attention overlays to %s\n", count, out_dir.c_str());
}

std::vector<ToySummaryRow> cmd_reproduce_toy(const ExperimentConfig& cfg,
                                             const std::string& out_dir) {
  ensure_dir(out_dir);
  if (cfg.seeds.empty()) throw std::invalid_argument("reproduce-toy needs a seed list");
  const std::uint64_t world_seed = cfg.seeds.front();

  cmd_gen_world(cfg, world_seed, out_dir);
  const WorldSpec train_world = load_world(world_file(out_dir));
  const WorldSpec test_world = load_world(swapped_world_file(out_dir));

  const CollectParams collect = collect_params_from(cfg);
  Dataset train_data = collect_offpolicy(train_world, collect, derive_seed(world_seed, "collect", 0));
  Dataset test_data = collect_offpolicy(test_world, collect, derive_seed(world_seed, "collect", 1));
  train_data.header.config_hash = config_hash(cfg);
  train_data.header.seed = world_seed;
  test_data.header.config_hash = config_hash(cfg);
  test_data.header.seed = world_seed;
  save_dataset(dataset_file(out_dir), train_data);
  save_dataset(join(out_dir, "dataset_swapped.bin"), test_data);
  std::printf("collected %zu training-environment and %zu swapped-environment samples\n",
              train_data.samples.size(), test_data.samples.size());

  std::vector<int> test_indices(test_data.samples.size());
  for (size_t i = 0; i < test_indices.size(); ++i) test_indices[i] = static_cast<int>(i);

  const Variant variants[] = {Variant::trajectory, Variant::self_attention, Variant::none};
  std::vector<ToySummaryRow> summary;
  for (Variant variant : variants) {
    std::vector<double> train_accs, test_accs;
    for (std::uint64_t seed : cfg.seeds) {
      Model model(model_config_from(cfg, train_data.header, variant), seed);
      TrainResult trained =
          train_model(model, train_data, training_config_from(cfg), seed, config_hash(cfg));
      save_checkpoint(checkpoint_file(out_dir, variant, seed), trained.checkpoint);
      write_metrics_csv(metrics_file(out_dir, variant, seed), trained.log, seed);

      const NormalizationStats stats =
          NormalizationStats::from_params(trained.checkpoint.params, train_data.header.heads);
      const auto test_metrics =
          evaluate_accuracy(model, test_data, test_indices, stats, cfg.threads);
      const double test_acc = head_metric_value(test_metrics, "terrain", "accuracy");
      train_accs.push_back(trained.best_val_accuracy);
      test_accs.push_back(test_acc);
      std::printf("variant=%s seed=%llu: validation accuracy %.4f, swapped-environment %.4f\n",
                  to_string(variant).c_str(), static_cast<unsigned long long>(seed),
                  trained.best_val_accuracy, test_acc);
      std::fflush(stdout);
    }
    summary.push_back({variant, mean_of(train_accs), sample_std(train_accs), mean_of(test_accs),
                       sample_std(test_accs)});
  }

  std::string seed_list;
  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) seed_list += ";";
    seed_list += std::to_string(cfg.seeds[i]);
  }
  const std::string csv = join(out_dir, "toy_summary.csv");
  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + csv);
  out << "variant,train_acc_mean,train_acc_std,test_acc_mean,test_acc_std,seeds\n";
  char buf[256];
  for (const auto& row : summary) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%s\n",
                  to_string(row.variant).c_str(), row.train_acc_mean, row.train_acc_std,
                  row.test_acc_mean, row.test_acc_std, seed_list.c_str());
    out << buf;
  }
  if (!out) throw std::runtime_error("metrics write failed: " + csv);

  std::printf("\n%-16s %-22s %s\n", "variant", "train_acc (mean/std)", "test_acc (mean/std)");
  for (const auto& row : summary) {
    std::printf("%-16s %.4f +- %.4f       %.4f +- %.4f\n", to_string(row.variant).c_str(),
                row.train_acc_mean, row.train_acc_std, row.test_acc_mean, row.test_acc_std);
  }
  std::printf("wrote %s\n", csv.c_str());
  return summary;
}

}  // namespace trajattn
