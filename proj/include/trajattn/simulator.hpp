#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trajattn/dataset.hpp"
#include "trajattn/geometry.hpp"
#include "trajattn/rng.hpp"
#include "trajattn/tensor.hpp"

namespace trajattn {

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

struct Obstacle {
  double x = 0.0, y = 0.0, radius = 0.0;
};

// Planar terrain world. Terrain classes are ordered by roughness, 0 smoothest.
// The backdrop grid is frozen at generation time: swapping terrain classes
// never touches it, which is what creates the background confound.
struct WorldSpec {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;  // provenance of the producing run
  double extent_x = 0.0, extent_y = 0.0;  // meters
  double cell_size = 1.0;                 // meters per grid cell
  int cells_x = 0, cells_y = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> terrain;   // cells_y * cells_x, row-major, class id
  std::vector<std::uint8_t> backdrop;  // cells_y * cells_x, palette index
  std::vector<Rgb> backdrop_palette;
  std::vector<Rgb> terrain_palette;  // base color per class
  std::vector<double> texture_amp;   // brightness noise amplitude per class
  std::vector<Obstacle> obstacles;
  bool confound = true;
  bool swapped = false;

  int terrain_class_at(double x, double y) const;
  Rgb backdrop_color_at(double x, double y) const;
  bool inside(double x, double y) const;
  void validate() const;
};

struct WorldParams {
  enum class Mode { toy, procedural };
  Mode mode = Mode::toy;
  double extent = 64.0;
  double cell_size = 1.0;
  int num_classes = 2;
  int obstacle_count = 0;
  double obstacle_radius_min = 0.6;
  double obstacle_radius_max = 1.2;
  double obstacle_min_separation = 6.0;
  bool confound = true;
  bool swap = false;

  static WorldParams toy_defaults();
  static WorldParams procedural_defaults();
};

WorldSpec generate_world(std::uint64_t seed, const WorldParams& params);
// Exchanges the smoothest and roughest class everywhere in the terrain grid;
// backdrop and obstacles are untouched. Involution.
WorldSpec swap_terrain(const WorldSpec& world);

void save_world(const std::string& path, const WorldSpec& world);
WorldSpec load_world(const std::string& path);

struct VehicleState {
  double x = 0.0, y = 0.0;
  double heading = 0.0;  // wrapped to (-pi, pi]
  double speed = 6.9;    // m/s, constant
  double steering_limit = 0.5;
  double wheelbase = 1.0;
  bool collided = false;
};

double wrap_angle(double a);
// Kinematic bicycle step; hitting an obstacle disk or the world boundary
// freezes the vehicle in place with collided set.
VehicleState step_dynamics(const WorldSpec& world, const VehicleState& state, double steering,
                           double dt);

struct EventLabels {
  int terrain_class = 0;
  bool collision = false;
  Vec2 delta_position_r{0.0, 0.0};  // per-step displacement, window-start frame
};

EventLabels label_transition(const WorldSpec& world, const VehicleState& window_start,
                             const VehicleState& prev, const VehicleState& next);

struct RenderConfig {
  CameraIntrinsics intrinsics{32.0, 32.0, 16.0, 16.0, 32, 32};
  double camera_height = 0.5;
  double camera_pitch = -0.17453292519943295;  // -10 degrees
  double backdrop_distance = 20.0;
  double max_view_distance = 80.0;
  double texel_size = 0.25;
  double obstacle_height = 1.2;
};

// RGB image, channel-major u8 (3 * image_h * image_w).
std::vector<std::uint8_t> render_observation(const WorldSpec& world, const VehicleState& state,
                                             const RenderConfig& cfg);
// World-frame ground-plane hit of the ray through continuous pixel (u, v);
// throws when the ray never reaches the ground.
Vec3 pixel_ground_point(const VehicleState& state, const RenderConfig& cfg, double u, double v);
Tensor image_tensor(const std::vector<std::uint8_t>& image, int channels, int height, int width);

struct CollectParams {
  int num_samples = 1000;
  int horizon = 12;
  double dt = 1.0 / 6.0;
  int max_episode_steps = 120;
  double ou_theta = 0.5;
  double ou_sigma_fraction = 0.4;  // of the full steering range
  RenderConfig render;
};

VehicleState sample_start(const WorldSpec& world, Rng& rng);
// Off-policy exploration with OU-smoothed steering. Every timestep with a full
// horizon of successors becomes one sample; episodes that end in a collision
// are padded with frozen states so collision windows carry positive labels.
Dataset collect_offpolicy(const WorldSpec& world, const CollectParams& params,
                          std::uint64_t seed);

// Per-step terrain score: num_classes for the smoothest class down to 1.
double terrain_score(const WorldSpec& world, double x, double y);

struct EpisodeRecord {
  double total_return = 0.0;
  double completion = 0.0;  // fraction of max_steps before termination
  bool collided = false;
  bool aborted = false;  // the policy threw; episode recorded as-is
  int steps = 0;
  std::vector<Vec2> path;  // positions, length steps + 1
  std::vector<double> actions;
  std::vector<int> terrain_classes;
};

using Policy = std::function<double(const Tensor& observation, const VehicleState& state)>;

// Closed-loop rollout; the start pose depends only on (world, seed) so
// competing policies can share it.
EpisodeRecord run_episode(const WorldSpec& world, const Policy& policy, int max_steps,
                          std::uint64_t seed, const RenderConfig& render, double dt = 1.0 / 6.0);

}  // namespace trajattn
