#include "trajattn/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trajattn/parallel.hpp"

namespace trajattn {

void PlanConfig::validate() const {
  if (num_rollouts < 1) throw std::invalid_argument("plan: needs at least one rollout");
  if (num_elites < 1 || num_elites > num_rollouts) {
    throw std::invalid_argument("plan: elite count must lie in [1, num_rollouts]");
  }
  if (iterations < 1) throw std::invalid_argument("plan: needs at least one iteration");
  if (horizon < 1) throw std::invalid_argument("plan: horizon must be positive");
  if (!(action_low < action_high)) {
    throw std::invalid_argument("plan: action bounds must be ordered");
  }
  if (variance_floor <= 0.0) throw std::invalid_argument("plan: variance floor must be positive");
}

void RewardSpec::validate() const {
  if (kind == Kind::turbulence_collision) {
    if (num_terrain_classes < 2) {
      throw std::invalid_argument("reward: needs at least two terrain classes");
    }
  } else {
    const double n = std::sqrt(goal[0] * goal[0] + goal[1] * goal[1]);
    if (std::abs(n - 1.0) > 1e-9) {
      throw std::invalid_argument("reward: goal must be a unit vector");
    }
  }
}

ActionDistribution initial_distribution(const PlanConfig& cfg, int action_dim) {
  const double half = (cfg.action_high - cfg.action_low) / 2.0;
  ActionDistribution d;
  d.mean.assign(static_cast<size_t>(cfg.horizon), std::vector<double>(action_dim, 0.0));
  d.variance.assign(static_cast<size_t>(cfg.horizon),
                    std::vector<double>(action_dim, half * half));
  return d;
}

ActionDistribution warm_start(const ActionDistribution& previous, const PlanConfig& cfg) {
  if (previous.mean.size() != static_cast<size_t>(cfg.horizon) || previous.mean.empty()) {
    throw std::invalid_argument("warm_start: distribution horizon mismatch");
  }
  ActionDistribution d = initial_distribution(cfg, static_cast<int>(previous.mean[0].size()));
  for (size_t t = 0; t + 1 < previous.mean.size(); ++t) d.mean[t] = previous.mean[t + 1];
  return d;
}

double truncated_normal(Rng& rng, double mean, double stddev, double low, double high) {
  double x = mean;
  for (int attempt = 0; attempt < 16; ++attempt) {
    x = rng.normal(mean, stddev);
    if (x >= low && x <= high) return x;
  }
  return std::clamp(x, low, high);
}

std::vector<double> expected_event_value(const Tensor& head_output, const EventHeadSpec& head,
                                         const NormalizationStats& stats, int head_index) {
  if (head.kind == EventHeadSpec::Kind::discrete) {
    if (head_output.numel() != head.size) {
      throw std::invalid_argument("expected value: class count mismatch");
    }
    double e = 0.0;
    for (int c = 0; c < head.size; ++c) e += c * head_output.values()[static_cast<size_t>(c)];
    return {e};
  }
  return stats.destandardize(head_index, head_output.values());
}

namespace {

double collision_probability(const Tensor& out) {
  if (out.numel() != 2) throw std::invalid_argument("reward: collision head must be binary");
  return out.values()[1];
}

}  // namespace

double reward_turbulence_collision(const ForwardOutput& prediction, int terrain_head,
                                   int collision_head, int num_terrain_classes) {
  double r = 0.0;
  for (const auto& step : prediction.events) {
    const Tensor& terr = step[static_cast<size_t>(terrain_head)];
    double e_terr = 0.0;
    for (int c = 0; c < terr.numel(); ++c) e_terr += c * terr.values()[static_cast<size_t>(c)];
    const double p_coll = collision_probability(step[static_cast<size_t>(collision_head)]);
    r -= (1.0 - p_coll) * e_terr + p_coll * num_terrain_classes;
  }
  return r;
}

double reward_goal_directed(const ForwardOutput& prediction, int delta_head, int collision_head,
                            const Vec2& goal, const NormalizationStats& stats, int delta_index) {
  double r = 0.0;
  for (const auto& step : prediction.events) {
    const std::vector<double> delta =
        stats.destandardize(delta_index, step[static_cast<size_t>(delta_head)].values());
    if (delta.size() != 2) throw std::invalid_argument("reward: delta head must be planar");
    const double p_coll = collision_probability(step[static_cast<size_t>(collision_head)]);
    r += (1.0 - p_coll) * (delta[0] * goal[0] + delta[1] * goal[1]) - p_coll;
  }
  return r;
}

CemResult cem_optimize(const RolloutScorer& scorer, const PlanConfig& cfg, int action_dim,
                       std::uint64_t seed, const ActionDistribution* warm, int timestep) {
  cfg.validate();
  if (action_dim < 1) throw std::invalid_argument("plan: action dim must be positive");

  ActionDistribution dist =
      warm ? warm_start(*warm, cfg) : initial_distribution(cfg, action_dim);
  const int threads = resolve_thread_count(cfg.threads);

  CemResult result;
  result.best_reward = -std::numeric_limits<double>::infinity();

  std::vector<std::vector<std::vector<double>>> samples(static_cast<size_t>(cfg.num_rollouts));
  std::vector<double> rewards(static_cast<size_t>(cfg.num_rollouts));

  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(derive_seed(seed, "cem", static_cast<std::uint64_t>(it)));
    for (auto& rollout : samples) {
      rollout.assign(static_cast<size_t>(cfg.horizon), std::vector<double>(action_dim));
      for (int t = 0; t < cfg.horizon; ++t) {
        for (int d = 0; d < action_dim; ++d) {
          rollout[static_cast<size_t>(t)][static_cast<size_t>(d)] = truncated_normal(
              rng, dist.mean[static_cast<size_t>(t)][static_cast<size_t>(d)],
              std::sqrt(dist.variance[static_cast<size_t>(t)][static_cast<size_t>(d)]),
              cfg.action_low, cfg.action_high);
        }
      }
    }

    parallel_for(cfg.num_rollouts, threads,
                 [&](int n) { rewards[static_cast<size_t>(n)] = scorer(samples[static_cast<size_t>(n)]); });

    std::vector<int> order(static_cast<size_t>(cfg.num_rollouts));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return rewards[static_cast<size_t>(a)] > rewards[static_cast<size_t>(b)];
    });

    double elite_sum = 0.0;
    for (int k = 0; k < cfg.num_elites; ++k) elite_sum += rewards[static_cast<size_t>(order[static_cast<size_t>(k)])];
    const int top = order[0];
    if (rewards[static_cast<size_t>(top)] > result.best_reward) {
      result.best_reward = rewards[static_cast<size_t>(top)];
      result.best_actions = samples[static_cast<size_t>(top)];
    }

    for (int t = 0; t < cfg.horizon; ++t) {
      for (int d = 0; d < action_dim; ++d) {
        double m = 0.0;
        for (int k = 0; k < cfg.num_elites; ++k) {
          m += samples[static_cast<size_t>(order[static_cast<size_t>(k)])][static_cast<size_t>(t)][static_cast<size_t>(d)];
        }
        m /= cfg.num_elites;
        double v = 0.0;
        for (int k = 0; k < cfg.num_elites; ++k) {
          const double x =
              samples[static_cast<size_t>(order[static_cast<size_t>(k)])][static_cast<size_t>(t)][static_cast<size_t>(d)] - m;
          v += x * x;
        }
        v /= cfg.num_elites;
        dist.mean[static_cast<size_t>(t)][static_cast<size_t>(d)] = m;
        dist.variance[static_cast<size_t>(t)][static_cast<size_t>(d)] =
            std::max(v, cfg.variance_floor);
      }
    }

    result.diagnostics.push_back(
        {timestep, it, elite_sum / cfg.num_elites, result.best_reward});
  }

  result.distribution = dist;
  return result;
}

CemResult cem_plan(const Model& model, const Tensor& observation, const PlanConfig& cfg,
                   const RewardSpec& reward, const NormalizationStats& stats, std::uint64_t seed,
                   const ActionDistribution* warm, int timestep) {
  cfg.validate();
  reward.validate();
  const ModelConfig& mc = model.config();
  if (cfg.horizon > mc.horizon) {
    throw std::invalid_argument("plan: horizon exceeds the model horizon");
  }

  auto head_index = [&](const std::string& name) {
    for (size_t k = 0; k < mc.heads.size(); ++k) {
      if (mc.heads[k].name == name) return static_cast<int>(k);
    }
    throw std::invalid_argument("plan: model is missing the '" + name + "' head");
  };

  int terrain = -1, collision = -1, delta = -1;
  if (reward.kind == RewardSpec::Kind::turbulence_collision) {
    terrain = head_index("terrain");
    collision = head_index("collision");
  } else {
    delta = head_index("delta_pos");
    collision = head_index("collision");
  }

  const Model::Encoding encoding = model.encode_image(observation);
  auto to_tensors = [](const std::vector<std::vector<double>>& actions) {
    std::vector<Tensor> out;
    out.reserve(actions.size());
    for (const auto& a : actions) out.push_back(Tensor({static_cast<int>(a.size())}, a));
    return out;
  };

  RolloutScorer scorer = [&](const std::vector<std::vector<double>>& actions) {
    const ForwardOutput prediction = model.forward_from_encoding(encoding, to_tensors(actions));
    if (reward.kind == RewardSpec::Kind::turbulence_collision) {
      return reward_turbulence_collision(prediction, terrain, collision,
                                         reward.num_terrain_classes);
    }
    return reward_goal_directed(prediction, delta, collision, reward.goal, stats, delta);
  };
  return cem_optimize(scorer, cfg, mc.action_dim, seed, warm, timestep);
}

}  // namespace trajattn
