#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "trajattn/dataset.hpp"
#include "trajattn/geometry.hpp"
#include "trajattn/model.hpp"
#include "trajattn/rng.hpp"

namespace trajattn {

struct PlanConfig {
  int num_rollouts = 2048;
  int num_elites = 64;
  int iterations = 2;
  int horizon = 12;  // must not exceed the model horizon
  double action_low = -0.5;
  double action_high = 0.5;
  double variance_floor = 1e-3;
  int threads = 0;
  void validate() const;
};

// Per-timestep diagonal Gaussian over the action space.
struct ActionDistribution {
  std::vector<std::vector<double>> mean;      // horizon x action_dim
  std::vector<std::vector<double>> variance;  // horizon x action_dim
};

ActionDistribution initial_distribution(const PlanConfig& cfg, int action_dim);
// Mean shifted forward one step (last step at the initial mean), variance
// reset; feeds the next planning timestep.
ActionDistribution warm_start(const ActionDistribution& previous, const PlanConfig& cfg);

// Rejection sampling against the bounds, clamping after 16 misses.
double truncated_normal(Rng& rng, double mean, double stddev, double low, double high);

struct RewardSpec {
  enum class Kind { turbulence_collision, goal_directed };
  Kind kind = Kind::turbulence_collision;
  int num_terrain_classes = 3;
  Vec2 goal{1.0, 0.0};  // unit vector, goal_directed only
  void validate() const;
};

// Scalar summary of one head's output at one timestep: discrete heads yield
// the ordinal expectation (probability of the positive class when binary),
// continuous heads the de-standardized point prediction.
std::vector<double> expected_event_value(const Tensor& head_output, const EventHeadSpec& head,
                                         const NormalizationStats& stats, int head_index);

double reward_turbulence_collision(const ForwardOutput& prediction, int terrain_head,
                                   int collision_head, int num_terrain_classes);
double reward_goal_directed(const ForwardOutput& prediction, int delta_head, int collision_head,
                            const Vec2& goal, const NormalizationStats& stats, int delta_index);

struct PlanDiagnosticsRow {
  int timestep = 0;
  int iteration = 0;
  double elite_mean_reward = 0.0;
  double best_reward = 0.0;
};

struct CemResult {
  std::vector<std::vector<double>> best_actions;  // horizon x action_dim
  double best_reward = 0.0;
  ActionDistribution distribution;  // after the final refit
  std::vector<PlanDiagnosticsRow> diagnostics;
};

using RolloutScorer = std::function<double(const std::vector<std::vector<double>>& actions)>;

// Generic CEM loop over bounded action sequences. The scorer must be pure;
// evaluations run in parallel and reduce by sample index, so thread count
// never changes the result. Elite ties break toward the lower sample index.
CemResult cem_optimize(const RolloutScorer& scorer, const PlanConfig& cfg, int action_dim,
                       std::uint64_t seed, const ActionDistribution* warm = nullptr,
                       int timestep = 0);

// Full planning step: one encode_image for the observation, N rollouts per
// iteration through the event predictor, reward from the spec.
CemResult cem_plan(const Model& model, const Tensor& observation, const PlanConfig& cfg,
                   const RewardSpec& reward, const NormalizationStats& stats, std::uint64_t seed,
                   const ActionDistribution* warm = nullptr, int timestep = 0);

}  // namespace trajattn
