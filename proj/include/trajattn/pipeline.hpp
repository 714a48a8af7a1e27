#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "trajattn/checkpoint.hpp"
#include "trajattn/config.hpp"
#include "trajattn/dataset.hpp"
#include "trajattn/model.hpp"
#include "trajattn/planner.hpp"
#include "trajattn/simulator.hpp"
#include "trajattn/training.hpp"

namespace trajattn {

// Derived sub-configs; the experiment config is the single source of truth.
WorldParams world_params_from(const ExperimentConfig& cfg);
RenderConfig render_config_from(const ExperimentConfig& cfg);
CollectParams collect_params_from(const ExperimentConfig& cfg);
TrainingConfig training_config_from(const ExperimentConfig& cfg);
PlanConfig plan_config_from(const ExperimentConfig& cfg);
RewardSpec reward_spec_from(const ExperimentConfig& cfg);
// Header a collection run under this config would produce; lets commands that
// take no dataset (on-policy evaluation) reconstruct the model architecture.
DatasetHeader dataset_header_from(const ExperimentConfig& cfg);
ModelConfig model_config_from(const ExperimentConfig& cfg, const DatasetHeader& header,
                              Variant variant);

// Canonical artifact names inside an output directory.
std::string world_file(const std::string& out_dir);
std::string swapped_world_file(const std::string& out_dir);
std::string dataset_file(const std::string& out_dir);
std::string checkpoint_file(const std::string& out_dir, Variant variant, std::uint64_t seed);
std::string metrics_file(const std::string& out_dir, Variant variant, std::uint64_t seed);

struct LoadedModel {
  std::unique_ptr<Model> model;
  NormalizationStats stats;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};
// Rebuilds a trained model from a checkpoint; warns on stderr when the
// checkpoint's config hash differs from the active config's.
LoadedModel load_trained_model(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                               const DatasetHeader& header, Variant variant);

// Steering policy wrapping one CEM planning step per control tick, warm-started
// from the previous tick. Create one per episode.
Policy make_planner_policy(const Model& model, const ExperimentConfig& cfg, std::uint64_t seed,
                           const NormalizationStats& stats,
                           std::vector<PlanDiagnosticsRow>* diagnostics = nullptr);
Policy make_random_policy(double steering_limit, std::uint64_t seed);

// Command implementations behind the command-line interface. All throw on
// error; outputs land in `out_dir` under the canonical names above.
void cmd_gen_world(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir);
void cmd_collect(const ExperimentConfig& cfg, const std::string& world_path, std::uint64_t seed,
                 const std::string& out_dir);
TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
                      Variant variant, std::uint64_t seed, const std::string& out_dir);

struct OfflineEvalResult {
  std::vector<HeadMetric> metrics;
  // Mean feature-map distance between attention and the true path; NaN for
  // the no-attention variant.
  double fidelity = 0.0;
};
OfflineEvalResult cmd_eval_offline(const ExperimentConfig& cfg, const std::string& dataset_path,
                                   const std::string& checkpoint_path, Variant variant,
                                   const std::string& out_dir);

struct OnPolicyEvalResult {
  // Mean episodic return per (world, policy) cell.
  double planner_train = 0.0, planner_test = 0.0;
  double random_train = 0.0, random_test = 0.0;
  std::vector<MetricRow> episode_rows;
};
OnPolicyEvalResult cmd_eval_onpolicy(const ExperimentConfig& cfg, const std::string& world_path,
                                     const std::string& checkpoint_path, Variant variant,
                                     std::uint64_t seed, const std::string& out_dir);

void cmd_export_attention(const ExperimentConfig& cfg, const std::string& dataset_path,
                          const std::string& checkpoint_path, Variant variant,
                          const std::string& out_dir);

struct ToySummaryRow {
  Variant variant = Variant::trajectory;
  double train_acc_mean = 0.0, train_acc_std = 0.0;
  double test_acc_mean = 0.0, test_acc_std = 0.0;
};
// Full confounded-environment study: generate the paired worlds, collect both
// datasets, train every variant over the config's seed list, evaluate on the
// held-out and swapped-terrain data, and emit the summary table.
std::vector<ToySummaryRow> cmd_reproduce_toy(const ExperimentConfig& cfg,
                                             const std::string& out_dir);

}  // namespace trajattn
