#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cmath>

#include "trajattn/config.hpp"
#include "trajattn/dataset.hpp"
#include "trajattn/model.hpp"
#include "trajattn/ops.hpp"
#include "trajattn/pipeline.hpp"
#include "trajattn/planner.hpp"
#include "trajattn/rng.hpp"
#include "trajattn/simulator.hpp"
#include "trajattn/tensor.hpp"
#include "trajattn/training.hpp"

namespace py = pybind11;
using namespace trajattn;

namespace {

std::vector<long> tensor_shape(const Tensor& t) {
  return std::vector<long>(t.shape().begin(), t.shape().end());
}

py::dict head_metrics_dict(const std::vector<HeadMetric>& metrics) {
  py::dict out;
  for (const auto& m : metrics) out[py::str(m.head + "." + m.metric)] = m.value;
  return out;
}

}  // namespace

PYBIND11_MODULE(_trajattn, m) {
  m.doc() = "trajectory-constrained visual attention for event prediction and planning";

  py::class_<Tensor>(m, "Tensor")
      .def(py::init([](const std::vector<long>& shape, const std::vector<double>& values) {
             return Tensor(std::vector<int>(shape.begin(), shape.end()), values);
           }),
           py::arg("shape"), py::arg("values"))
      .def_property_readonly("shape", &tensor_shape)
      .def_property_readonly("values", [](const Tensor& t) { return t.values(); })
      .def("__repr__", [](const Tensor& t) {
        std::string s = "Tensor(shape=[";
        for (size_t i = 0; i < t.shape().size(); ++i)
          s += (i ? "," : "") + std::to_string(t.shape()[i]);
        return s + "])";
      });

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("world_mode", &ExperimentConfig::world_mode)
      .def_readwrite("world_extent", &ExperimentConfig::world_extent)
      .def_readwrite("world_cell_size", &ExperimentConfig::world_cell_size)
      .def_readwrite("world_classes", &ExperimentConfig::world_classes)
      .def_readwrite("world_obstacles", &ExperimentConfig::world_obstacles)
      .def_readwrite("world_confound", &ExperimentConfig::world_confound)
      .def_readwrite("model_variant", &ExperimentConfig::model_variant)
      .def_readwrite("model_horizon", &ExperimentConfig::model_horizon)
      .def_readwrite("image_size", &ExperimentConfig::image_size)
      .def_readwrite("conv_channels", &ExperimentConfig::conv_channels)
      .def_readwrite("hidden_size", &ExperimentConfig::hidden_size)
      .def_readwrite("action_embed_size", &ExperimentConfig::action_embed_size)
      .def_readwrite("covariance", &ExperimentConfig::covariance)
      .def_readwrite("camera_height", &ExperimentConfig::camera_height)
      .def_readwrite("camera_pitch_deg", &ExperimentConfig::camera_pitch_deg)
      .def_readwrite("collect_samples", &ExperimentConfig::collect_samples)
      .def_readwrite("collect_episode_steps", &ExperimentConfig::collect_episode_steps)
      .def_readwrite("epochs", &ExperimentConfig::epochs)
      .def_readwrite("batch_size", &ExperimentConfig::batch_size)
      .def_readwrite("learning_rate", &ExperimentConfig::learning_rate)
      .def_readwrite("weight_decay", &ExperimentConfig::weight_decay)
      .def_readwrite("attention_loss_weight", &ExperimentConfig::attention_loss_weight)
      .def_readwrite("val_fraction", &ExperimentConfig::val_fraction)
      .def_readwrite("plan_rollouts", &ExperimentConfig::plan_rollouts)
      .def_readwrite("plan_elites", &ExperimentConfig::plan_elites)
      .def_readwrite("plan_iterations", &ExperimentConfig::plan_iterations)
      .def_readwrite("plan_variance_floor", &ExperimentConfig::plan_variance_floor)
      .def_readwrite("reward", &ExperimentConfig::reward)
      .def_readwrite("goal_x", &ExperimentConfig::goal_x)
      .def_readwrite("goal_y", &ExperimentConfig::goal_y)
      .def_readwrite("eval_episodes", &ExperimentConfig::eval_episodes)
      .def_readwrite("eval_episode_steps", &ExperimentConfig::eval_episode_steps)
      .def_readwrite("export_samples", &ExperimentConfig::export_samples)
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("threads", &ExperimentConfig::threads)
      .def("validate", &ExperimentConfig::validate);

  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("serialize_config", &serialize_config, py::arg("config"));
  m.def("save_config", &save_config, py::arg("path"), py::arg("config"));
  m.def("config_hash", &config_hash, py::arg("config"));

  py::class_<WorldSpec>(m, "WorldSpec")
      .def_readonly("seed", &WorldSpec::seed)
      .def_readonly("config_hash", &WorldSpec::config_hash)
      .def_readonly("cells_x", &WorldSpec::cells_x)
      .def_readonly("cells_y", &WorldSpec::cells_y)
      .def_readonly("num_classes", &WorldSpec::num_classes)
      .def_readonly("swapped", &WorldSpec::swapped)
      .def("terrain_class_at", &WorldSpec::terrain_class_at, py::arg("x"), py::arg("y"));

  m.def("load_world", &load_world, py::arg("path"));
  m.def("swap_terrain", &swap_terrain, py::arg("world"));

  m.def(
      "dataset_info",
      [](const std::string& path) {
        const Dataset data = load_dataset(path);
        py::dict info;
        info["num_samples"] = data.samples.size();
        info["horizon"] = data.header.horizon;
        info["image_shape"] = py::make_tuple(data.header.image_channels, data.header.image_h,
                                             data.header.image_w);
        info["action_dim"] = data.header.action_dim;
        info["config_hash"] = data.header.config_hash;
        info["seed"] = data.header.seed;
        py::list heads;
        for (const auto& h : data.header.heads) heads.append(h.name);
        info["heads"] = heads;
        return info;
      },
      py::arg("path"), "Header summary of a dataset file.");

  m.def("gen_world", &cmd_gen_world, py::arg("config"), py::arg("seed"), py::arg("out_dir"));
  m.def("collect", &cmd_collect, py::arg("config"), py::arg("world_path"), py::arg("seed"),
        py::arg("out_dir"));
  m.def(
      "train",
      [](const ExperimentConfig& cfg, const std::string& dataset_path,
         const std::string& variant, std::uint64_t seed, const std::string& out_dir) {
        const TrainResult result =
            cmd_train(cfg, dataset_path, variant_from_string(variant), seed, out_dir);
        py::dict out;
        out["best_epoch"] = result.best_epoch;
        out["best_val_accuracy"] = result.best_val_accuracy;
        out["checkpoint"] = checkpoint_file(out_dir, variant_from_string(variant), seed);
        out["metrics"] = metrics_file(out_dir, variant_from_string(variant), seed);
        return out;
      },
      py::arg("config"), py::arg("dataset_path"), py::arg("variant"), py::arg("seed"),
      py::arg("out_dir"));
  m.def(
      "eval_offline",
      [](const ExperimentConfig& cfg, const std::string& dataset_path,
         const std::string& checkpoint_path, const std::string& variant,
         const std::string& out_dir) {
        const OfflineEvalResult result = cmd_eval_offline(
            cfg, dataset_path, checkpoint_path, variant_from_string(variant), out_dir);
        py::dict out = head_metrics_dict(result.metrics);
        out["attention.fidelity"] = result.fidelity;
        return out;
      },
      py::arg("config"), py::arg("dataset_path"), py::arg("checkpoint_path"), py::arg("variant"),
      py::arg("out_dir"));
  m.def(
      "eval_onpolicy",
      [](const ExperimentConfig& cfg, const std::string& world_path,
         const std::string& checkpoint_path, const std::string& variant, std::uint64_t seed,
         const std::string& out_dir) {
        const OnPolicyEvalResult result = cmd_eval_onpolicy(
            cfg, world_path, checkpoint_path, variant_from_string(variant), seed, out_dir);
        py::dict out;
        out["planner_train"] = result.planner_train;
        out["planner_test"] = result.planner_test;
        out["random_train"] = result.random_train;
        out["random_test"] = result.random_test;
        return out;
      },
      py::arg("config"), py::arg("world_path"), py::arg("checkpoint_path"), py::arg("variant"),
      py::arg("seed"), py::arg("out_dir"));
  m.def(
      "export_attention",
      [](const ExperimentConfig& cfg, const std::string& dataset_path,
         const std::string& checkpoint_path, const std::string& variant,
         const std::string& out_dir) {
        cmd_export_attention(cfg, dataset_path, checkpoint_path, variant_from_string(variant),
                             out_dir);
      },
      py::arg("config"), py::arg("dataset_path"), py::arg("checkpoint_path"), py::arg("variant"),
      py::arg("out_dir"));
  m.def(
      "reproduce_toy",
      [](const ExperimentConfig& cfg, const std::string& out_dir) {
        py::list rows;
        for (const auto& row : cmd_reproduce_toy(cfg, out_dir)) {
          py::dict d;
          d["variant"] = to_string(row.variant);
          d["train_acc_mean"] = row.train_acc_mean;
          d["train_acc_std"] = row.train_acc_std;
          d["test_acc_mean"] = row.test_acc_mean;
          d["test_acc_std"] = row.test_acc_std;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config"), py::arg("out_dir"));

  m.def(
      "gradient_check",
      [](std::uint64_t seed) {
        // Tiny end-to-end autodiff probe: central finite differences against
        // the analytic gradient of sum((tanh(W x + b))^2).
        Rng rng(seed);
        Tensor w({3, 4});
        Tensor x({4});
        Tensor b({3});
        for (auto* t : {&w, &x, &b})
          for (size_t i = 0; i < t->values().size(); ++i) t->data()[i] = rng.normal() * 0.5;
        w.set_requires_grad(true);
        auto loss_value = [&]() {
          const Tensor y = tanh(add(matmul(w, x), b));
          return sum(mul(y, y)).values()[0];
        };
        Tape tape;
        double max_rel = 0.0;
        {
          TapeScope scope(tape);
          const Tensor y = tanh(add(matmul(w, x), b));
          tape.backward(sum(mul(y, y)));
        }
        for (size_t i = 0; i < w.values().size(); ++i) {
          const double eps = 1e-6;
          const double saved = w.values()[i];
          w.data()[i] = saved + eps;
          const double hi = loss_value();
          w.data()[i] = saved - eps;
          const double lo = loss_value();
          w.data()[i] = saved;
          const double fd = (hi - lo) / (2 * eps);
          const double ad = w.grad_values()[i];
          const double denom = std::max({std::abs(fd), std::abs(ad), 1e-8});
          max_rel = std::max(max_rel, std::abs(fd - ad) / denom);
        }
        return max_rel;
      },
      py::arg("seed") = 0,
      "Max relative error between analytic and finite-difference gradients of a small dense "
      "layer; near zero when the autodiff engine is healthy.");
}
