#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trajattn {

// Experiment settings grouped into [world], [model], [training], [planner]
// and [evaluation] sections of a key = value text file. Unknown keys fail the
// parse; serialization is canonical so files round-trip byte-stably.
struct ExperimentConfig {
  // [world]
  std::string world_mode = "toy";  // toy | procedural
  double world_extent = 64.0;
  double world_cell_size = 1.0;
  int world_classes = 2;
  int world_obstacles = 0;
  bool world_confound = true;

  // [model]
  std::string model_variant = "trajectory";  // trajectory | self_attention | none
  int model_horizon = 12;
  int image_size = 32;
  std::vector<int> conv_channels = {8, 16};  // 3x3 stride-2 layers
  int hidden_size = 64;
  int action_embed_size = 16;
  std::string covariance = "isotropic";  // isotropic | diagonal | full
  double camera_height = 0.5;
  double camera_pitch_deg = -10.0;

  // [training]
  int collect_samples = 6000;
  int collect_episode_steps = 120;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = -1.0;  // negative selects the per-variant default
  double attention_loss_weight = 1.0;
  double val_fraction = 0.2;

  // [planner]
  int plan_rollouts = 2048;
  int plan_elites = 64;
  int plan_iterations = 2;
  double plan_variance_floor = 1e-3;
  std::string reward = "turbulence_collision";  // turbulence_collision | goal_directed
  double goal_x = 1.0;
  double goal_y = 0.0;

  // [evaluation]
  int eval_episodes = 30;
  int eval_episode_steps = 180;
  int export_samples = 8;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int threads = 0;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);
void save_config(const std::string& path, const ExperimentConfig& cfg);
// FNV-1a over the canonical serialization; embedded in produced artifacts.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace trajattn
