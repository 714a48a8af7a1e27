#include "trajattn/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "trajattn/model.hpp"
#include "trajattn/rng.hpp"

namespace trajattn {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_int(const std::string& s, long long& out) {
  try {
    size_t used = 0;
    out = std::stoll(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_double(const std::string& s, double& out) {
  try {
    size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  if (!items.empty() && items.back().empty()) items.pop_back();
  return items;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  // Returns false when the value does not parse.
  std::function<bool(ExperimentConfig&, const std::string&)> set;
};

std::vector<Field> field_table() {
  std::vector<Field> fields;
  auto add_int = [&](const std::string& section, const std::string& key, int ExperimentConfig::* member) {
    fields.push_back({section, key,
                      [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
                      [member](ExperimentConfig& c, const std::string& v) {
                        long long x = 0;
                        if (!parse_int(v, x)) return false;
                        c.*member = static_cast<int>(x);
                        return true;
                      }});
  };
  auto add_double = [&](const std::string& section, const std::string& key,
                        double ExperimentConfig::* member) {
    fields.push_back({section, key,
                      [member](const ExperimentConfig& c) { return format_double(c.*member); },
                      [member](ExperimentConfig& c, const std::string& v) {
                        double x = 0;
                        if (!parse_double(v, x)) return false;
                        c.*member = x;
                        return true;
                      }});
  };
  auto add_bool = [&](const std::string& section, const std::string& key,
                      bool ExperimentConfig::* member) {
    fields.push_back({section, key,
                      [member](const ExperimentConfig& c) {
                        return std::string(c.*member ? "true" : "false");
                      },
                      [member](ExperimentConfig& c, const std::string& v) {
                        if (v == "true" || v == "1") {
                          c.*member = true;
                        } else if (v == "false" || v == "0") {
                          c.*member = false;
                        } else {
                          return false;
                        }
                        return true;
                      }});
  };
  auto add_string = [&](const std::string& section, const std::string& key,
                        std::string ExperimentConfig::* member) {
    fields.push_back({section, key,
                      [member](const ExperimentConfig& c) { return c.*member; },
                      [member](ExperimentConfig& c, const std::string& v) {
                        c.*member = v;
                        return true;
                      }});
  };

  add_string("world", "mode", &ExperimentConfig::world_mode);
  add_double("world", "extent", &ExperimentConfig::world_extent);
  add_double("world", "cell_size", &ExperimentConfig::world_cell_size);
  add_int("world", "classes", &ExperimentConfig::world_classes);
  add_int("world", "obstacles", &ExperimentConfig::world_obstacles);
  add_bool("world", "confound", &ExperimentConfig::world_confound);

  add_string("model", "variant", &ExperimentConfig::model_variant);
  add_int("model", "horizon", &ExperimentConfig::model_horizon);
  add_int("model", "image_size", &ExperimentConfig::image_size);
  fields.push_back({"model", "conv_channels",
                    [](const ExperimentConfig& c) {
                      std::string out;
                      for (size_t i = 0; i < c.conv_channels.size(); ++i) {
                        if (i) out += ",";
                        out += std::to_string(c.conv_channels[i]);
                      }
                      return out;
                    },
                    [](ExperimentConfig& c, const std::string& v) {
                      std::vector<int> items;
                      for (const auto& part : split_list(v)) {
                        long long x = 0;
                        if (!parse_int(part, x)) return false;
                        items.push_back(static_cast<int>(x));
                      }
                      if (items.empty()) return false;
                      c.conv_channels = items;
                      return true;
                    }});
  add_int("model", "hidden_size", &ExperimentConfig::hidden_size);
  add_int("model", "action_embed_size", &ExperimentConfig::action_embed_size);
  add_string("model", "covariance", &ExperimentConfig::covariance);
  add_double("model", "camera_height", &ExperimentConfig::camera_height);
  add_double("model", "camera_pitch_deg", &ExperimentConfig::camera_pitch_deg);

  add_int("training", "collect_samples", &ExperimentConfig::collect_samples);
  add_int("training", "collect_episode_steps", &ExperimentConfig::collect_episode_steps);
  add_int("training", "epochs", &ExperimentConfig::epochs);
  add_int("training", "batch_size", &ExperimentConfig::batch_size);
  add_double("training", "learning_rate", &ExperimentConfig::learning_rate);
  add_double("training", "weight_decay", &ExperimentConfig::weight_decay);
  add_double("training", "attention_loss_weight", &ExperimentConfig::attention_loss_weight);
  add_double("training", "val_fraction", &ExperimentConfig::val_fraction);

  add_int("planner", "rollouts", &ExperimentConfig::plan_rollouts);
  add_int("planner", "elites", &ExperimentConfig::plan_elites);
  add_int("planner", "iterations", &ExperimentConfig::plan_iterations);
  add_double("planner", "variance_floor", &ExperimentConfig::plan_variance_floor);
  add_string("planner", "reward", &ExperimentConfig::reward);
  add_double("planner", "goal_x", &ExperimentConfig::goal_x);
  add_double("planner", "goal_y", &ExperimentConfig::goal_y);

  add_int("evaluation", "episodes", &ExperimentConfig::eval_episodes);
  add_int("evaluation", "episode_steps", &ExperimentConfig::eval_episode_steps);
  add_int("evaluation", "export_samples", &ExperimentConfig::export_samples);
  fields.push_back({"evaluation", "seeds",
                    [](const ExperimentConfig& c) {
                      std::string out;
                      for (size_t i = 0; i < c.seeds.size(); ++i) {
                        if (i) out += ",";
                        out += std::to_string(c.seeds[i]);
                      }
                      return out;
                    },
                    [](ExperimentConfig& c, const std::string& v) {
                      std::vector<std::uint64_t> items;
                      for (const auto& part : split_list(v)) {
                        long long x = 0;
                        if (!parse_int(part, x) || x < 0) return false;
                        items.push_back(static_cast<std::uint64_t>(x));
                      }
                      if (items.empty()) return false;
                      c.seeds = items;
                      return true;
                    }});
  add_int("evaluation", "threads", &ExperimentConfig::threads);
  return fields;
}

}  // namespace

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  auto require = [&](bool ok, const std::string& key) {
    if (!ok) problems.push_back(key);
  };
  require(world_mode == "toy" || world_mode == "procedural", "world.mode");
  require(world_extent > 0.0, "world.extent");
  require(world_cell_size > 0.0, "world.cell_size");
  require(world_classes >= 2, "world.classes");
  require(world_obstacles >= 0, "world.obstacles");
  try {
    variant_from_string(model_variant);
  } catch (const std::exception&) {
    problems.push_back("model.variant");
  }
  require(model_horizon >= 1, "model.horizon");
  require(covariance == "isotropic" || covariance == "diagonal" || covariance == "full",
          "model.covariance");
  int stride = 1;
  bool conv_ok = !conv_channels.empty();
  for (int c : conv_channels) {
    conv_ok = conv_ok && c > 0;
    stride *= 2;
  }
  require(conv_ok, "model.conv_channels");
  require(image_size >= stride && image_size % stride == 0, "model.image_size");
  require(hidden_size > 0, "model.hidden_size");
  require(action_embed_size > 0, "model.action_embed_size");
  require(camera_height > 0.0, "model.camera_height");
  require(collect_samples > 0, "training.collect_samples");
  require(collect_episode_steps > model_horizon, "training.collect_episode_steps");
  require(epochs > 0, "training.epochs");
  require(batch_size > 0, "training.batch_size");
  require(learning_rate > 0.0, "training.learning_rate");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "training.val_fraction");
  require(attention_loss_weight >= 0.0, "training.attention_loss_weight");
  require(plan_rollouts >= 1, "planner.rollouts");
  require(plan_elites >= 1 && plan_elites <= plan_rollouts, "planner.elites");
  require(plan_iterations >= 1, "planner.iterations");
  require(plan_variance_floor > 0.0, "planner.variance_floor");
  require(reward == "turbulence_collision" || reward == "goal_directed", "planner.reward");
  require(eval_episodes >= 1, "evaluation.episodes");
  require(eval_episode_steps >= 1, "evaluation.episode_steps");
  require(export_samples >= 1, "evaluation.export_samples");
  require(!seeds.empty(), "evaluation.seeds");
  require(threads >= 0, "evaluation.threads");
  if (!problems.empty()) {
    std::string msg = "config: invalid values for keys:";
    for (const auto& p : problems) msg += " " + p;
    throw std::invalid_argument(msg);
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  const std::vector<Field> fields = field_table();
  std::vector<std::string> unknown;
  std::vector<std::string> bad_values;

  std::string section;
  std::stringstream ss(text);
  std::string raw;
  while (std::getline(ss, raw)) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      unknown.push_back(section.empty() ? line : section + "." + line);
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;

    const Field* match = nullptr;
    for (const auto& f : fields) {
      if (f.section == section && f.key == key) {
        match = &f;
        break;
      }
    }
    if (!match) {
      unknown.push_back(full);
    } else if (!match->set(cfg, value)) {
      bad_values.push_back(full);
    }
  }

  if (!unknown.empty() || !bad_values.empty()) {
    std::string msg = "config:";
    if (!unknown.empty()) {
      msg += " unknown keys:";
      for (const auto& k : unknown) msg += " " + k;
    }
    if (!bad_values.empty()) {
      msg += " unparseable values for:";
      for (const auto& k : bad_values) msg += " " + k;
    }
    throw std::invalid_argument(msg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  const std::vector<Field> fields = field_table();
  std::string out;
  std::string section;
  for (const auto& f : fields) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open config file for writing: " + path);
  out << serialize_config(cfg);
  if (!out) throw std::runtime_error("config write failed: " + path);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(serialize_config(cfg));
}

}  // namespace trajattn
