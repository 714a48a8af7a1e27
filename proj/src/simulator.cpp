#include "trajattn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "trajattn/binary_io.hpp"

namespace trajattn {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr char kWorldMagic[8] = {'T', 'R', 'A', 'J', 'W', 'D', '\0', '\0'};
constexpr Rgb kObstacleColor{0.25, 0.22, 0.20};
constexpr double kStartClearance = 1.0;  // meters beyond the obstacle radius
constexpr double kBoundaryMargin = 2.0;
constexpr double kToyStripeWidth = 16.0;  // meters per corridor terrain band

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Anchors from smoothest to roughest; backdrop runs foliage -> dust -> sky so
// the confound pairs distinct scenery with each terrain class.
Rgb terrain_base(int cls, int num_classes) {
  const double t = num_classes > 1 ? static_cast<double>(cls) / (num_classes - 1) : 0.0;
  return lerp({0.42, 0.36, 0.26}, {0.35, 0.31, 0.24}, t);
}

double terrain_amp(int cls, int num_classes) {
  const double t = num_classes > 1 ? static_cast<double>(cls) / (num_classes - 1) : 0.0;
  return 0.04 + (0.30 - 0.04) * t;
}

Rgb backdrop_anchor(int cls, int num_classes) {
  const Rgb foliage{0.08, 0.32, 0.10};
  const Rgb dust{0.72, 0.62, 0.40};
  const Rgb sky{0.60, 0.78, 0.92};
  const double t = num_classes > 1 ? static_cast<double>(cls) / (num_classes - 1) : 0.0;
  return t < 0.5 ? lerp(foliage, dust, 2.0 * t) : lerp(dust, sky, 2.0 * (t - 0.5));
}

double bilinear_noise(std::uint64_t seed, double gx, double gy) {
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const std::int64_t i = static_cast<std::int64_t>(fx);
  const std::int64_t j = static_cast<std::int64_t>(fy);
  const double tx = gx - fx;
  const double ty = gy - fy;
  const double v00 = hash_noise(seed, i, j);
  const double v10 = hash_noise(seed, i + 1, j);
  const double v01 = hash_noise(seed, i, j + 1);
  const double v11 = hash_noise(seed, i + 1, j + 1);
  const double top = v00 + (v10 - v00) * tx;
  const double bottom = v01 + (v11 - v01) * tx;
  return top + (bottom - top) * ty;
}

void apply_swap(WorldSpec& world) {
  const std::uint8_t lo = 0;
  const std::uint8_t hi = static_cast<std::uint8_t>(world.num_classes - 1);
  for (auto& c : world.terrain) {
    if (c == lo) {
      c = hi;
    } else if (c == hi) {
      c = lo;
    }
  }
  world.swapped = !world.swapped;
}

bool start_is_free(const WorldSpec& world, double x, double y) {
  if (x < kBoundaryMargin || y < kBoundaryMargin || x > world.extent_x - kBoundaryMargin ||
      y > world.extent_y - kBoundaryMargin) {
    return false;
  }
  for (const auto& o : world.obstacles) {
    const double dx = x - o.x;
    const double dy = y - o.y;
    if (std::sqrt(dx * dx + dy * dy) <= o.radius + kStartClearance) return false;
  }
  return true;
}

std::uint8_t quantize(double c) {
  const double v = std::clamp(c, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

struct Ray {
  Vec3 origin;
  Vec3 direction;  // not normalized
};

Rgb shade_ray(const WorldSpec& world, const Ray& ray, const RenderConfig& cfg) {
  const Vec3& o = ray.origin;
  const Vec3& d = ray.direction;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  double t_ground = kInf;
  if (d[2] < -1e-12) {
    const double t = -o[2] / d[2];
    const double px = o[0] + t * d[0];
    const double py = o[1] + t * d[1];
    const double horiz = std::sqrt((px - o[0]) * (px - o[0]) + (py - o[1]) * (py - o[1]));
    if (world.inside(px, py) && horiz <= cfg.max_view_distance) t_ground = t;
  }

  double t_obstacle = kInf;
  for (const auto& ob : world.obstacles) {
    const double a = d[0] * d[0] + d[1] * d[1];
    if (a < 1e-18) continue;
    const double rx = o[0] - ob.x;
    const double ry = o[1] - ob.y;
    const double b = 2.0 * (rx * d[0] + ry * d[1]);
    const double c = rx * rx + ry * ry - ob.radius * ob.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
      if (t <= 1e-9 || t >= t_obstacle) continue;
      const double z = o[2] + t * d[2];
      if (z >= 0.0 && z <= cfg.obstacle_height) t_obstacle = t;
    }
  }

  if (t_obstacle < t_ground) {
    const double z = o[2] + t_obstacle * d[2];
    const double shade = 0.70 + 0.25 * z / cfg.obstacle_height;
    return {kObstacleColor.r * shade, kObstacleColor.g * shade, kObstacleColor.b * shade};
  }
  if (t_ground < kInf) {
    const double px = o[0] + t_ground * d[0];
    const double py = o[1] + t_ground * d[1];
    const int cls = world.terrain_class_at(px, py);
    const Rgb base = world.terrain_palette[static_cast<size_t>(cls)];
    const double n = hash_noise(world.seed,
                                static_cast<std::int64_t>(std::floor(px / cfg.texel_size)),
                                static_cast<std::int64_t>(std::floor(py / cfg.texel_size)));
    const double delta = world.texture_amp[static_cast<size_t>(cls)] * (n - 0.5);
    return {base.r + delta, base.g + delta, base.b + delta};
  }

  const double hl = std::sqrt(d[0] * d[0] + d[1] * d[1]);
  double qx = o[0], qy = o[1];
  if (hl > 1e-12) {
    qx += cfg.backdrop_distance * d[0] / hl;
    qy += cfg.backdrop_distance * d[1] / hl;
  }
  return world.backdrop_color_at(qx, qy);
}

}  // namespace

int WorldSpec::terrain_class_at(double x, double y) const {
  const int ix = std::clamp(static_cast<int>(std::floor(x / cell_size)), 0, cells_x - 1);
  const int iy = std::clamp(static_cast<int>(std::floor(y / cell_size)), 0, cells_y - 1);
  return terrain[static_cast<size_t>(iy) * cells_x + ix];
}

Rgb WorldSpec::backdrop_color_at(double x, double y) const {
  const int ix = std::clamp(static_cast<int>(std::floor(x / cell_size)), 0, cells_x - 1);
  const int iy = std::clamp(static_cast<int>(std::floor(y / cell_size)), 0, cells_y - 1);
  return backdrop_palette[backdrop[static_cast<size_t>(iy) * cells_x + ix]];
}

bool WorldSpec::inside(double x, double y) const {
  return x >= 0.0 && y >= 0.0 && x <= extent_x && y <= extent_y;
}

void WorldSpec::validate() const {
  if (extent_x <= 0.0 || extent_y <= 0.0 || cell_size <= 0.0) {
    throw std::invalid_argument("world: extents and cell size must be positive");
  }
  if (cells_x < 1 || cells_y < 1) throw std::invalid_argument("world: empty grid");
  if (num_classes < 2) throw std::invalid_argument("world: needs at least two terrain classes");
  const size_t cells = static_cast<size_t>(cells_x) * cells_y;
  if (terrain.size() != cells || backdrop.size() != cells) {
    throw std::invalid_argument("world: grid buffers do not match the cell counts");
  }
  if (terrain_palette.size() != static_cast<size_t>(num_classes) ||
      texture_amp.size() != static_cast<size_t>(num_classes)) {
    throw std::invalid_argument("world: terrain palette size must equal the class count");
  }
  if (backdrop_palette.empty()) throw std::invalid_argument("world: empty backdrop palette");
  for (std::uint8_t c : terrain) {
    if (c >= num_classes) throw std::invalid_argument("world: terrain class out of range");
  }
  for (std::uint8_t b : backdrop) {
    if (b >= backdrop_palette.size()) {
      throw std::invalid_argument("world: backdrop index out of range");
    }
  }
  for (const auto& o : obstacles) {
    if (o.radius <= 0.0 || !inside(o.x, o.y)) {
      throw std::invalid_argument("world: obstacle outside the world or with bad radius");
    }
  }
}

WorldParams WorldParams::toy_defaults() {
  WorldParams p;
  p.mode = Mode::toy;
  p.extent = 64.0;
  p.num_classes = 2;
  p.obstacle_count = 0;
  return p;
}

WorldParams WorldParams::procedural_defaults() {
  WorldParams p;
  p.mode = Mode::procedural;
  p.extent = 128.0;
  p.num_classes = 3;
  p.obstacle_count = 40;
  return p;
}

WorldSpec generate_world(std::uint64_t seed, const WorldParams& params) {
  if (params.extent <= 0.0 || params.cell_size <= 0.0) {
    throw std::invalid_argument("generate_world: extent and cell size must be positive");
  }
  if (params.num_classes < 2) {
    throw std::invalid_argument("generate_world: needs at least two terrain classes");
  }
  if (params.mode == WorldParams::Mode::toy && params.num_classes != 2) {
    throw std::invalid_argument("generate_world: toy mode is a two-terrain world");
  }
  if (params.obstacle_count < 0 || params.obstacle_radius_min <= 0.0 ||
      params.obstacle_radius_max < params.obstacle_radius_min) {
    throw std::invalid_argument("generate_world: bad obstacle parameters");
  }

  WorldSpec w;
  w.seed = seed;
  w.extent_x = w.extent_y = params.extent;
  w.cell_size = params.cell_size;
  w.cells_x = w.cells_y = static_cast<int>(std::lround(params.extent / params.cell_size));
  w.num_classes = params.num_classes;
  w.confound = params.confound;

  const size_t cells = static_cast<size_t>(w.cells_x) * w.cells_y;
  w.terrain.resize(cells);
  if (params.mode == WorldParams::Mode::toy) {
    for (int iy = 0; iy < w.cells_y; ++iy) {
      for (int ix = 0; ix < w.cells_x; ++ix) {
        const double cx = (ix + 0.5) * w.cell_size;
        w.terrain[static_cast<size_t>(iy) * w.cells_x + ix] =
            cx < w.extent_x * 0.5 ? 0 : 1;
      }
    }
  } else {
    const std::uint64_t coarse = derive_seed(seed, "terrain_coarse");
    const std::uint64_t fine = derive_seed(seed, "terrain_fine");
    std::vector<double> field(cells);
    for (int iy = 0; iy < w.cells_y; ++iy) {
      for (int ix = 0; ix < w.cells_x; ++ix) {
        field[static_cast<size_t>(iy) * w.cells_x + ix] =
            0.65 * bilinear_noise(coarse, ix / 8.0, iy / 8.0) +
            0.35 * bilinear_noise(fine, ix / 4.0, iy / 4.0);
      }
    }
    // Quantile thresholds give every class roughly equal area.
    std::vector<double> sorted = field;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> thresholds;
    for (int c = 1; c < params.num_classes; ++c) {
      thresholds.push_back(sorted[cells * c / params.num_classes]);
    }
    for (size_t i = 0; i < cells; ++i) {
      int cls = 0;
      for (double th : thresholds) {
        if (field[i] >= th) ++cls;
      }
      w.terrain[i] = static_cast<std::uint8_t>(cls);
    }
  }

  w.terrain_palette.resize(static_cast<size_t>(w.num_classes));
  w.texture_amp.resize(static_cast<size_t>(w.num_classes));
  for (int c = 0; c < w.num_classes; ++c) {
    w.terrain_palette[static_cast<size_t>(c)] = terrain_base(c, w.num_classes);
    w.texture_amp[static_cast<size_t>(c)] = terrain_amp(c, w.num_classes);
  }
  if (params.confound) {
    w.backdrop = w.terrain;  // frozen now; terrain swaps never touch it
    w.backdrop_palette.resize(static_cast<size_t>(w.num_classes));
    for (int c = 0; c < w.num_classes; ++c) {
      w.backdrop_palette[static_cast<size_t>(c)] = backdrop_anchor(c, w.num_classes);
    }
  } else {
    w.backdrop.assign(cells, 0);
    w.backdrop_palette = {{0.55, 0.58, 0.62}};
  }

  if (params.obstacle_count > 0) {
    Rng rng(derive_seed(seed, "obstacles"));
    const int max_attempts = params.obstacle_count * 30;
    int attempts = 0;
    while (static_cast<int>(w.obstacles.size()) < params.obstacle_count &&
           attempts < max_attempts) {
      ++attempts;
      Obstacle o;
      o.x = rng.uniform(kBoundaryMargin, w.extent_x - kBoundaryMargin);
      o.y = rng.uniform(kBoundaryMargin, w.extent_y - kBoundaryMargin);
      o.radius = rng.uniform(params.obstacle_radius_min, params.obstacle_radius_max);
      bool ok = true;
      for (const auto& other : w.obstacles) {
        const double dx = o.x - other.x;
        const double dy = o.y - other.y;
        if (std::sqrt(dx * dx + dy * dy) < params.obstacle_min_separation) {
          ok = false;
          break;
        }
      }
      if (ok) w.obstacles.push_back(o);
    }
  }

  if (params.swap) apply_swap(w);

  bool any_free = false;
  for (int iy = 0; iy < w.cells_y && !any_free; ++iy) {
    for (int ix = 0; ix < w.cells_x; ++ix) {
      if (start_is_free(w, (ix + 0.5) * w.cell_size, (iy + 0.5) * w.cell_size)) {
        any_free = true;
        break;
      }
    }
  }
  if (!any_free) {
    throw std::runtime_error("generate_world: obstacles leave no free start cell");
  }

  w.validate();
  return w;
}

WorldSpec swap_terrain(const WorldSpec& world) {
  WorldSpec out = world;
  apply_swap(out);
  return out;
}

void save_world(const std::string& path, const WorldSpec& world) {
  world.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open world file for writing: " + path);
  write_magic(out, kWorldMagic);
  write_u32(out, 1);
  write_u64(out, world.seed);
  write_u64(out, world.config_hash);
  write_f64(out, world.extent_x);
  write_f64(out, world.extent_y);
  write_f64(out, world.cell_size);
  write_u32(out, static_cast<std::uint32_t>(world.cells_x));
  write_u32(out, static_cast<std::uint32_t>(world.cells_y));
  write_u32(out, static_cast<std::uint32_t>(world.num_classes));
  write_u8_array(out, world.terrain);
  write_u8_array(out, world.backdrop);
  write_u32(out, static_cast<std::uint32_t>(world.backdrop_palette.size()));
  for (const auto& c : world.backdrop_palette) {
    write_f64(out, c.r);
    write_f64(out, c.g);
    write_f64(out, c.b);
  }
  for (const auto& c : world.terrain_palette) {
    write_f64(out, c.r);
    write_f64(out, c.g);
    write_f64(out, c.b);
  }
  write_f64_array(out, world.texture_amp);
  write_u32(out, static_cast<std::uint32_t>(world.obstacles.size()));
  for (const auto& o : world.obstacles) {
    write_f64(out, o.x);
    write_f64(out, o.y);
    write_f64(out, o.radius);
  }
  write_u8(out, world.confound ? 1 : 0);
  write_u8(out, world.swapped ? 1 : 0);
  if (!out) throw std::runtime_error("world write failed: " + path);
}

WorldSpec load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open world file: " + path);
  expect_magic(in, kWorldMagic, path);
  const std::uint32_t version = read_u32(in);
  if (version != 1) {
    throw std::runtime_error("unsupported world file version in " + path);
  }
  WorldSpec w;
  w.seed = read_u64(in);
  w.config_hash = read_u64(in);
  w.extent_x = read_f64(in);
  w.extent_y = read_f64(in);
  w.cell_size = read_f64(in);
  w.cells_x = static_cast<int>(read_u32(in));
  w.cells_y = static_cast<int>(read_u32(in));
  w.num_classes = static_cast<int>(read_u32(in));
  if (w.cells_x < 1 || w.cells_y < 1 || w.cells_x > 1 << 16 || w.cells_y > 1 << 16) {
    throw std::runtime_error("corrupt world grid dims in " + path);
  }
  const size_t cells = static_cast<size_t>(w.cells_x) * w.cells_y;
  read_u8_array(in, w.terrain, cells);
  read_u8_array(in, w.backdrop, cells);
  const std::uint32_t palette = read_u32(in);
  if (palette > 256) throw std::runtime_error("corrupt backdrop palette in " + path);
  w.backdrop_palette.resize(palette);
  for (auto& c : w.backdrop_palette) {
    c.r = read_f64(in);
    c.g = read_f64(in);
    c.b = read_f64(in);
  }
  w.terrain_palette.resize(static_cast<size_t>(w.num_classes));
  for (auto& c : w.terrain_palette) {
    c.r = read_f64(in);
    c.g = read_f64(in);
    c.b = read_f64(in);
  }
  read_f64_array(in, w.texture_amp, static_cast<size_t>(w.num_classes));
  const std::uint32_t obstacles = read_u32(in);
  if (obstacles > 1u << 20) throw std::runtime_error("corrupt obstacle count in " + path);
  w.obstacles.resize(obstacles);
  for (auto& o : w.obstacles) {
    o.x = read_f64(in);
    o.y = read_f64(in);
    o.radius = read_f64(in);
  }
  w.confound = read_u8(in) != 0;
  w.swapped = read_u8(in) != 0;
  if (!in) throw std::runtime_error("truncated world file: " + path);
  w.validate();
  return w;
}

double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

VehicleState step_dynamics(const WorldSpec& world, const VehicleState& state, double steering,
                           double dt) {
  if (std::abs(steering) > state.steering_limit + 1e-12) {
    throw std::invalid_argument("step_dynamics: steering beyond the limit");
  }
  if (state.collided) return state;

  VehicleState next = state;
  next.heading =
      wrap_angle(state.heading + state.speed / state.wheelbase * std::tan(steering) * dt);
  next.x = state.x + state.speed * dt * std::cos(next.heading);
  next.y = state.y + state.speed * dt * std::sin(next.heading);

  bool hit = !world.inside(next.x, next.y);
  for (const auto& o : world.obstacles) {
    if (hit) break;
    const double dx = next.x - o.x;
    const double dy = next.y - o.y;
    hit = std::sqrt(dx * dx + dy * dy) <= o.radius;
  }
  if (hit) {
    VehicleState frozen = state;
    frozen.collided = true;
    return frozen;
  }
  return next;
}

EventLabels label_transition(const WorldSpec& world, const VehicleState& window_start,
                             const VehicleState& prev, const VehicleState& next) {
  EventLabels labels;
  labels.terrain_class = world.terrain_class_at(next.x, next.y);
  labels.collision = next.collided;
  const double c = std::cos(window_start.heading);
  const double s = std::sin(window_start.heading);
  const double dx = next.x - prev.x;
  const double dy = next.y - prev.y;
  labels.delta_position_r = {c * dx + s * dy, -s * dx + c * dy};
  return labels;
}

std::vector<std::uint8_t> render_observation(const WorldSpec& world, const VehicleState& state,
                                             const RenderConfig& cfg) {
  cfg.intrinsics.validate();
  const PoseSE3 robot = yaw_pose(state.heading, {state.x, state.y, 0.0});
  const PoseSE3 camera = robot.compose(make_camera_pose(cfg.camera_height, cfg.camera_pitch));
  const int w = cfg.intrinsics.image_w;
  const int h = cfg.intrinsics.image_h;
  std::vector<std::uint8_t> image(static_cast<size_t>(3) * h * w);

  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      const Vec3 dir_cam{(ix + 0.5 - cfg.intrinsics.cx) / cfg.intrinsics.fx,
                         (iy + 0.5 - cfg.intrinsics.cy) / cfg.intrinsics.fy, 1.0};
      Vec3 dir_world{0.0, 0.0, 0.0};
      for (int r = 0; r < 3; ++r) {
        for (int a = 0; a < 3; ++a) dir_world[r] += camera.rotation[r][a] * dir_cam[a];
      }
      const Rgb c = shade_ray(world, {camera.translation, dir_world}, cfg);
      const size_t px = static_cast<size_t>(iy) * w + ix;
      image[px] = quantize(c.r);
      image[static_cast<size_t>(h) * w + px] = quantize(c.g);
      image[2 * static_cast<size_t>(h) * w + px] = quantize(c.b);
    }
  }
  return image;
}

Vec3 pixel_ground_point(const VehicleState& state, const RenderConfig& cfg, double u, double v) {
  const PoseSE3 robot = yaw_pose(state.heading, {state.x, state.y, 0.0});
  const PoseSE3 camera = robot.compose(make_camera_pose(cfg.camera_height, cfg.camera_pitch));
  const Vec3 dir_cam{(u - cfg.intrinsics.cx) / cfg.intrinsics.fx,
                     (v - cfg.intrinsics.cy) / cfg.intrinsics.fy, 1.0};
  Vec3 d{0.0, 0.0, 0.0};
  for (int r = 0; r < 3; ++r) {
    for (int a = 0; a < 3; ++a) d[r] += camera.rotation[r][a] * dir_cam[a];
  }
  if (d[2] >= -1e-12) {
    throw std::invalid_argument("pixel_ground_point: ray does not reach the ground");
  }
  const double t = -camera.translation[2] / d[2];
  return {camera.translation[0] + t * d[0], camera.translation[1] + t * d[1], 0.0};
}

Tensor image_tensor(const std::vector<std::uint8_t>& image, int channels, int height, int width) {
  if (image.size() != static_cast<size_t>(channels) * height * width) {
    throw std::invalid_argument("image_tensor: buffer does not match the dims");
  }
  std::vector<double> values(image.size());
  for (size_t i = 0; i < image.size(); ++i) values[i] = image[i] / 255.0;
  return Tensor({channels, height, width}, std::move(values));
}

VehicleState sample_start(const WorldSpec& world, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = rng.uniform(kBoundaryMargin, world.extent_x - kBoundaryMargin);
    const double y = rng.uniform(kBoundaryMargin, world.extent_y - kBoundaryMargin);
    if (!start_is_free(world, x, y)) continue;
    VehicleState state;
    state.x = x;
    state.y = y;
    state.heading = wrap_angle(rng.uniform(-kPi, kPi));
    return state;
  }
  throw std::runtime_error("sample_start: world has no traversable start");
}

Dataset collect_offpolicy(const WorldSpec& world, const CollectParams& params,
                          std::uint64_t seed) {
  world.validate();
  if (params.num_samples < 1 || params.horizon < 1 || params.dt <= 0.0) {
    throw std::invalid_argument("collect: sample count, horizon and dt must be positive");
  }
  if (params.max_episode_steps <= params.horizon) {
    throw std::invalid_argument("collect: episodes must be longer than the horizon");
  }

  Dataset data;
  data.header.horizon = params.horizon;
  data.header.image_channels = 3;
  data.header.image_h = params.render.intrinsics.image_h;
  data.header.image_w = params.render.intrinsics.image_w;
  data.header.action_dim = 1;
  data.header.heads = {{"terrain", EventHeadSpec::Kind::discrete, world.num_classes},
                       {"collision", EventHeadSpec::Kind::discrete, 2},
                       {"delta_pos", EventHeadSpec::Kind::continuous, 2}};

  const int H = params.horizon;
  int episode = 0;
  const int max_episodes = params.num_samples * 4 + 100;
  while (static_cast<int>(data.samples.size()) < params.num_samples) {
    if (episode >= max_episodes) {
      throw std::runtime_error("collect: exploration keeps stalling before the horizon");
    }
    Rng rng(derive_seed(seed, "episode", static_cast<std::uint64_t>(episode)));
    std::vector<VehicleState> states{sample_start(world, rng)};
    std::vector<double> actions;
    const double sigma =
        params.ou_sigma_fraction * 2.0 * states[0].steering_limit * std::sqrt(params.dt);
    double steer = 0.0;
    for (int step = 0; step < params.max_episode_steps; ++step) {
      steer += params.ou_theta * (0.0 - steer) * params.dt + sigma * rng.normal();
      steer = std::clamp(steer, -states[0].steering_limit, states[0].steering_limit);
      VehicleState next = step_dynamics(world, states.back(), steer, params.dt);
      actions.push_back(steer);
      states.push_back(next);
      if (next.collided) {
        // Frozen padding keeps collision steps inside full windows.
        for (int j = 0; j < H; ++j) {
          actions.push_back(0.0);
          states.push_back(step_dynamics(world, states.back(), 0.0, params.dt));
        }
        break;
      }
    }

    for (size_t t = 0; t + static_cast<size_t>(H) < states.size(); ++t) {
      if (static_cast<int>(data.samples.size()) >= params.num_samples) break;
      if (states[t].collided) break;
      TrajectorySample sample;
      sample.episode = episode;
      sample.timestep = static_cast<int>(t);
      sample.image = render_observation(world, states[t], params.render);
      sample.labels.resize(3);
      sample.labels[0].classes.resize(static_cast<size_t>(H));
      sample.labels[1].classes.resize(static_cast<size_t>(H));
      sample.labels[2].values.resize(static_cast<size_t>(H));
      const double c = std::cos(states[t].heading);
      const double s = std::sin(states[t].heading);
      for (int j = 0; j < H; ++j) {
        sample.actions.push_back({actions[t + static_cast<size_t>(j)]});
        const EventLabels labels = label_transition(world, states[t],
                                                    states[t + static_cast<size_t>(j)],
                                                    states[t + static_cast<size_t>(j) + 1]);
        sample.labels[0].classes[static_cast<size_t>(j)] = labels.terrain_class;
        sample.labels[1].classes[static_cast<size_t>(j)] = labels.collision ? 1 : 0;
        sample.labels[2].values[static_cast<size_t>(j)] = {labels.delta_position_r[0],
                                                           labels.delta_position_r[1]};
        const VehicleState& fut = states[t + static_cast<size_t>(j) + 1];
        const double dx = fut.x - states[t].x;
        const double dy = fut.y - states[t].y;
        sample.positions_r.push_back({c * dx + s * dy, -s * dx + c * dy});
      }
      data.samples.push_back(std::move(sample));
    }
    ++episode;
  }

  data.validate();
  return data;
}

double terrain_score(const WorldSpec& world, double x, double y) {
  return static_cast<double>(world.num_classes - world.terrain_class_at(x, y));
}

EpisodeRecord run_episode(const WorldSpec& world, const Policy& policy, int max_steps,
                          std::uint64_t seed, const RenderConfig& render, double dt) {
  if (max_steps < 1) throw std::invalid_argument("run_episode: needs at least one step");
  Rng rng(derive_seed(seed, "episode_start"));
  VehicleState state = sample_start(world, rng);

  EpisodeRecord record;
  record.path.push_back({state.x, state.y});
  for (int step = 0; step < max_steps; ++step) {
    const Tensor obs = image_tensor(render_observation(world, state, render), 3,
                                    render.intrinsics.image_h, render.intrinsics.image_w);
    double action = 0.0;
    try {
      action = policy(obs, state);
    } catch (const std::exception&) {
      record.aborted = true;
      break;
    }
    action = std::clamp(action, -state.steering_limit, state.steering_limit);
    const VehicleState next = step_dynamics(world, state, action, dt);
    record.actions.push_back(action);
    if (next.collided) {
      record.collided = true;
      break;
    }
    state = next;
    record.path.push_back({state.x, state.y});
    const int cls = world.terrain_class_at(state.x, state.y);
    record.terrain_classes.push_back(cls);
    record.total_return += static_cast<double>(world.num_classes - cls);
    ++record.steps;
  }
  record.completion = static_cast<double>(record.steps) / max_steps;
  return record;
}

}  // namespace trajattn
