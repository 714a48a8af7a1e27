#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "trajattn/config.hpp"
#include "trajattn/pipeline.hpp"

namespace {

using trajattn::ExperimentConfig;
using trajattn::Variant;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string world_path;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string variant_name = "trajectory";
};

ExperimentConfig resolve_config(const CommonFlags& flags) {
  return flags.config_path.empty() ? ExperimentConfig{} : trajattn::load_config(flags.config_path);
}

std::uint64_t resolve_seed(const CommonFlags& flags, const ExperimentConfig& cfg) {
  if (flags.seed) return *flags.seed;
  if (cfg.seeds.empty()) return 0;
  return cfg.seeds.front();
}

Variant resolve_variant(const CommonFlags& flags) {
  return trajattn::variant_from_string(flags.variant_name);
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool world, bool dataset,
                      bool checkpoint, bool variant) {
  cmd->add_option("--config", flags.config_path, "experiment config file (defaults apply if omitted)");
  cmd->add_option("--seed", flags.seed, "run seed (defaults to the config's first seed)");
  cmd->add_option("--out", flags.out_dir, "output directory");
  if (world) cmd->add_option("--world", flags.world_path, "world file")->required();
  if (dataset) cmd->add_option("--dataset", flags.dataset_path, "dataset file")->required();
  if (checkpoint)
    cmd->add_option("--checkpoint", flags.checkpoint_path, "model checkpoint file")->required();
  if (variant)
    cmd->add_option("--variant", flags.variant_name,
                    "model variant: trajectory | self | none");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-attention event prediction and planning"};
  app.require_subcommand(1);

  CommonFlags flags;
  CLI::App* gen_world = app.add_subcommand("gen-world", "generate a terrain world and its swapped twin");
  add_common_flags(gen_world, flags, false, false, false, false);

  CLI::App* collect = app.add_subcommand("collect", "collect an off-policy dataset in a world");
  add_common_flags(collect, flags, true, false, false, false);

  CLI::App* train = app.add_subcommand("train", "train an event predictor on a dataset");
  add_common_flags(train, flags, false, true, false, true);

  CLI::App* eval_offline =
      app.add_subcommand("eval-offline", "per-head accuracy of a checkpoint on a dataset");
  add_common_flags(eval_offline, flags, false, true, true, true);

  CLI::App* eval_onpolicy = app.add_subcommand(
      "eval-onpolicy", "closed-loop planner episodes against a random baseline");
  add_common_flags(eval_onpolicy, flags, true, false, true, true);

  CLI::App* export_attention =
      app.add_subcommand("export-attention", "write attention-mask overlays for dataset frames");
  add_common_flags(export_attention, flags, false, true, true, true);

  CLI::App* reproduce_toy = app.add_subcommand(
      "reproduce-toy", "full confounded-environment study over all variants and seeds");
  add_common_flags(reproduce_toy, flags, false, false, false, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve_config(flags);
    const std::uint64_t seed = resolve_seed(flags, cfg);
    if (gen_world->parsed()) {
      trajattn::cmd_gen_world(cfg, seed, flags.out_dir);
    } else if (collect->parsed()) {
      trajattn::cmd_collect(cfg, flags.world_path, seed, flags.out_dir);
    } else if (train->parsed()) {
      trajattn::cmd_train(cfg, flags.dataset_path, resolve_variant(flags), seed, flags.out_dir);
    } else if (eval_offline->parsed()) {
      trajattn::cmd_eval_offline(cfg, flags.dataset_path, flags.checkpoint_path,
                                 resolve_variant(flags), flags.out_dir);
    } else if (eval_onpolicy->parsed()) {
      trajattn::cmd_eval_onpolicy(cfg, flags.world_path, flags.checkpoint_path,
                                  resolve_variant(flags), seed, flags.out_dir);
    } else if (export_attention->parsed()) {
      trajattn::cmd_export_attention(cfg, flags.dataset_path, flags.checkpoint_path,
                                     resolve_variant(flags), flags.out_dir);
    } else if (reproduce_toy->parsed()) {
      trajattn::cmd_reproduce_toy(cfg, flags.out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
