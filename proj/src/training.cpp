#include "trajattn/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "trajattn/adam.hpp"
#include "trajattn/ops.hpp"
#include "trajattn/parallel.hpp"
#include "trajattn/rng.hpp"

namespace trajattn {

namespace {

void check_compatible(const ModelConfig& cfg, const DatasetHeader& header) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("training: model/dataset mismatch: " + what);
  };
  if (cfg.horizon != header.horizon) fail("horizon");
  if (cfg.image_channels != header.image_channels || cfg.image_h != header.image_h ||
      cfg.image_w != header.image_w) {
    fail("image dims");
  }
  if (cfg.action_dim != header.action_dim) fail("action dim");
  if (cfg.heads.size() != header.heads.size()) fail("head count");
  for (size_t k = 0; k < cfg.heads.size(); ++k) {
    if (cfg.heads[k].name != header.heads[k].name || cfg.heads[k].kind != header.heads[k].kind ||
        cfg.heads[k].size != header.heads[k].size) {
      fail("head '" + header.heads[k].name + "'");
    }
  }
}

Tensor label_tensor(const std::vector<double>& values) {
  Tensor t({static_cast<int>(values.size())});
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

Tensor squared_error(const Tensor& prediction, const Tensor& target) {
  Tensor d = sub(prediction, target);
  return sum(mul(d, d));
}

ParameterList snapshot_params(const ParameterList& params) {
  ParameterList copy;
  copy.reserve(params.size());
  for (const auto& p : params) {
    copy.push_back({p.name, Tensor(p.tensor.shape(), std::vector<double>(p.tensor.values()))});
  }
  return copy;
}

int primary_head_index(const ModelConfig& cfg, const std::string& requested) {
  for (size_t k = 0; k < cfg.heads.size(); ++k) {
    if (requested.empty()) {
      if (cfg.heads[k].kind == EventHeadSpec::Kind::discrete) return static_cast<int>(k);
    } else if (cfg.heads[k].name == requested) {
      if (cfg.heads[k].kind != EventHeadSpec::Kind::discrete) {
        throw std::invalid_argument("training: primary head '" + requested +
                                    "' must be discrete");
      }
      return static_cast<int>(k);
    }
  }
  throw std::invalid_argument(requested.empty()
                                  ? std::string("training: no discrete head to stop on")
                                  : "training: unknown primary head '" + requested + "'");
}

}  // namespace

double resolve_weight_decay(const TrainingConfig& cfg, Variant variant) {
  if (cfg.weight_decay >= 0.0) return cfg.weight_decay;
  return variant == Variant::none ? 5e-4 : 1e-4;
}

Tensor sample_loss(const Model& model, const DatasetHeader& header,
                   const TrajectorySample& sample, const NormalizationStats& stats,
                   double attention_weight, LossBreakdown* breakdown) {
  const ModelConfig& cfg = model.config();
  ForwardOutput out = model.forward_full(observation_tensor(header, sample),
                                         action_tensors(header, sample));

  Tensor discrete = Tensor::scalar(0.0);
  Tensor continuous = Tensor::scalar(0.0);
  for (size_t k = 0; k < cfg.heads.size(); ++k) {
    const EventHeadSpec& head = cfg.heads[k];
    for (size_t t = 0; t < out.events.size(); ++t) {
      if (head.kind == EventHeadSpec::Kind::discrete) {
        const int label = sample.labels[k].classes[t];
        discrete = add(discrete, scale(log(slice(out.events[t][k], 0, label, 1)), -1.0));
      } else {
        Tensor target =
            label_tensor(stats.standardize(static_cast<int>(k), sample.labels[k].values[t]));
        continuous = add(continuous, squared_error(out.events[t][k], target));
      }
    }
  }

  Tensor total = add(discrete, continuous);
  Tensor attention;
  if (cfg.variant == Variant::trajectory) {
    attention = Tensor::scalar(0.0);
    for (size_t t = 0; t < out.attention_positions_r.size(); ++t) {
      Tensor target = label_tensor({sample.positions_r[t][0], sample.positions_r[t][1]});
      attention = add(attention, squared_error(out.attention_positions_r[t], target));
    }
    total = add(total, scale(attention, attention_weight));
  }

  if (breakdown) {
    breakdown->discrete = discrete.value();
    breakdown->continuous = continuous.value();
    breakdown->attention = attention.defined() ? attention.value() : 0.0;
    breakdown->total = total.value();
  }
  return total;
}

std::vector<HeadMetric> evaluate_accuracy(const Model& model, const Dataset& data,
                                          const std::vector<int>& indices,
                                          const NormalizationStats& stats, int threads) {
  if (indices.empty()) throw std::invalid_argument("evaluate: no samples");
  const ModelConfig& cfg = model.config();
  check_compatible(cfg, data.header);
  const size_t num_heads = cfg.heads.size();
  const int n = static_cast<int>(indices.size());

  // Per-sample partials, reduced in index order afterwards.
  std::vector<std::vector<double>> correct(static_cast<size_t>(n),
                                           std::vector<double>(num_heads, 0.0));
  std::vector<std::vector<double>> sqerr(static_cast<size_t>(n),
                                         std::vector<double>(num_heads, 0.0));
  parallel_for(n, resolve_thread_count(threads), [&](int i) {
    const TrajectorySample& sample = data.samples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
    ForwardOutput out = model.forward_full(observation_tensor(data.header, sample),
                                           action_tensors(data.header, sample));
    for (size_t k = 0; k < num_heads; ++k) {
      for (size_t t = 0; t < out.events.size(); ++t) {
        const Tensor& pred = out.events[t][k];
        if (cfg.heads[k].kind == EventHeadSpec::Kind::discrete) {
          int best = 0;
          for (int c = 1; c < pred.numel(); ++c) {
            if (pred.values()[static_cast<size_t>(c)] > pred.values()[static_cast<size_t>(best)]) {
              best = c;  // strict: ties stay at the lowest class index
            }
          }
          if (best == sample.labels[k].classes[t]) correct[static_cast<size_t>(i)][k] += 1.0;
        } else {
          const std::vector<double> raw =
              stats.destandardize(static_cast<int>(k), pred.values());
          const auto& target = sample.labels[k].values[t];
          for (size_t d = 0; d < raw.size(); ++d) {
            const double e = raw[d] - target[d];
            sqerr[static_cast<size_t>(i)][k] += e * e;
          }
        }
      }
    }
  });

  const double steps = static_cast<double>(data.header.horizon) * n;
  std::vector<HeadMetric> metrics;
  for (size_t k = 0; k < num_heads; ++k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      total += cfg.heads[k].kind == EventHeadSpec::Kind::discrete ? correct[static_cast<size_t>(i)][k]
                                                                  : sqerr[static_cast<size_t>(i)][k];
    }
    if (cfg.heads[k].kind == EventHeadSpec::Kind::discrete) {
      metrics.push_back({cfg.heads[k].name, "accuracy", total / steps});
    } else {
      metrics.push_back({cfg.heads[k].name, "mse", total / (steps * cfg.heads[k].size)});
    }
  }
  return metrics;
}

double attention_fidelity(const Model& model, const Dataset& data,
                          const std::vector<int>& indices, int threads) {
  if (indices.empty()) throw std::invalid_argument("attention fidelity: no samples");
  const ModelConfig& cfg = model.config();
  if (cfg.variant == Variant::none) {
    throw std::invalid_argument("attention fidelity: variant emits no masks");
  }
  check_compatible(cfg, data.header);
  const FeatureMapGeometry g = cfg.feature_geometry();
  const PoseSE3 camera = make_camera_pose(cfg.camera_height, cfg.camera_pitch);
  const int n = static_cast<int>(indices.size());

  std::vector<double> per_sample(static_cast<size_t>(n), 0.0);
  parallel_for(n, resolve_thread_count(threads), [&](int i) {
    const TrajectorySample& sample = data.samples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
    ForwardOutput out = model.forward_full(observation_tensor(data.header, sample),
                                           action_tensors(data.header, sample));
    double total = 0.0;
    for (size_t t = 0; t < out.masks.size(); ++t) {
      // Mask centroid in feature-map units, comparable across variants.
      const auto& m = out.masks[t].values();
      double mass = 0.0, mx = 0.0, my = 0.0;
      for (int row = 0; row < g.feature_h(); ++row) {
        for (int col = 0; col < g.feature_w(); ++col) {
          const double w = m[static_cast<size_t>(row) * g.feature_w() + col];
          mass += w;
          mx += w * col;
          my += w * row;
        }
      }
      mx /= mass;
      my /= mass;
      const PixelProjection pix = robot_to_pixel(
          {sample.positions_r[t][0], sample.positions_r[t][1], 0.0}, camera, cfg.intrinsics);
      const Vec2 target = pixel_to_featuremap(pix.u, pix.v, g);
      total += std::sqrt((mx - target[0]) * (mx - target[0]) +
                         (my - target[1]) * (my - target[1]));
    }
    per_sample[static_cast<size_t>(i)] = total / static_cast<double>(out.masks.size());
  });

  double mean = 0.0;
  for (double v : per_sample) mean += v;
  return mean / static_cast<double>(n);
}

TrainResult train_model(Model& model, const Dataset& data, const TrainingConfig& cfg,
                        std::uint64_t seed, std::uint64_t config_hash) {
  check_compatible(model.config(), data.header);
  data.validate();
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("training: epochs and batch size must be positive");
  }

  SplitIndices split = split_dataset(static_cast<int>(data.samples.size()), seed,
                                     cfg.val_fraction);
  if (split.train.empty()) throw std::invalid_argument("training: empty train split");
  const NormalizationStats stats = NormalizationStats::compute(data, split.train);
  const int primary = primary_head_index(model.config(), cfg.primary_head);
  const int threads = resolve_thread_count(cfg.threads);

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  adam_cfg.weight_decay = resolve_weight_decay(cfg, model.config().variant);
  Adam optimizer(adam_cfg, model.parameters());

  TrainResult result;
  ParameterList best = snapshot_params(model.parameters());
  double best_acc = -1.0;
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = split.train;
    Rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch))).shuffle(order);

    LossBreakdown epoch_sum;
    int epoch_samples = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const int batch = static_cast<int>(
          std::min(order.size() - start, static_cast<size_t>(cfg.batch_size)));
      std::vector<std::unique_ptr<Tape>> tapes(static_cast<size_t>(batch));
      std::vector<LossBreakdown> breakdowns(static_cast<size_t>(batch));
      for (auto& t : tapes) t = std::make_unique<Tape>();

      parallel_for(batch, threads, [&](int i) {
        TapeScope scope(*tapes[static_cast<size_t>(i)]);
        const TrajectorySample& sample =
            data.samples[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
        Tensor loss = sample_loss(model, data.header, sample, stats,
                                  cfg.attention_loss_weight,
                                  &breakdowns[static_cast<size_t>(i)]);
        tapes[static_cast<size_t>(i)]->backward_local(loss);
      });

      for (int i = 0; i < batch; ++i) {
        const LossBreakdown& bd = breakdowns[static_cast<size_t>(i)];
        if (!std::isfinite(bd.total)) {
          throw std::runtime_error(
              "training diverged at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(start / static_cast<size_t>(cfg.batch_size)) +
              ": loss total=" + std::to_string(bd.total) + " discrete=" +
              std::to_string(bd.discrete) + " continuous=" + std::to_string(bd.continuous) +
              " attention=" + std::to_string(bd.attention));
        }
        epoch_sum.total += bd.total;
        epoch_sum.discrete += bd.discrete;
        epoch_sum.continuous += bd.continuous;
        epoch_sum.attention += bd.attention;
        ++epoch_samples;
      }

      // Batch-mean gradient, merged strictly in sample order.
      const double inv = 1.0 / static_cast<double>(batch);
      for (int i = 0; i < batch; ++i) {
        for (const auto& p : model.parameters()) {
          const std::vector<double>* g = tapes[static_cast<size_t>(i)]->find_grad(p.tensor.impl().get());
          if (!g) continue;
          double* acc = const_cast<Tensor&>(p.tensor).grad();
          for (size_t j = 0; j < g->size(); ++j) acc[j] += (*g)[j] * inv;
        }
      }
      optimizer.step();
    }

    const double denom = static_cast<double>(epoch_samples);
    result.log.push_back({epoch, "train", "", "loss_total", epoch_sum.total / denom});
    result.log.push_back({epoch, "train", "", "loss_discrete", epoch_sum.discrete / denom});
    result.log.push_back({epoch, "train", "", "loss_continuous", epoch_sum.continuous / denom});
    if (model.config().variant == Variant::trajectory) {
      result.log.push_back({epoch, "train", "", "loss_attention", epoch_sum.attention / denom});
    }

    if (!split.val.empty()) {
      const auto metrics = evaluate_accuracy(model, data, split.val, stats, threads);
      for (const auto& m : metrics) {
        result.log.push_back({epoch, "val", m.head, m.metric, m.value});
      }
      const double acc = metrics[static_cast<size_t>(primary)].value;
      if (acc > best_acc) {
        best_acc = acc;
        best_epoch = epoch;
        best = snapshot_params(model.parameters());
      }
    } else {
      best_acc = 0.0;
      best_epoch = epoch;
      best = snapshot_params(model.parameters());
    }
  }

  // Leave the model on its best-validation weights.
  for (auto& p : model.parameters()) {
    const Parameter& src = find_param(best, p.name);
    std::copy(src.tensor.values().begin(), src.tensor.values().end(),
              const_cast<Tensor&>(p.tensor).data());
  }

  result.best_epoch = best_epoch;
  result.best_val_accuracy = best_acc;
  result.checkpoint.version = 1;
  result.checkpoint.config_hash = config_hash;
  result.checkpoint.seed = seed;
  result.checkpoint.params = std::move(best);
  stats.append_to(result.checkpoint.params, model.config().heads);
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows,
                       std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  out << "epoch,split,head,metric,value,seed\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.value);
    out << row.epoch << ',' << row.split << ',' << row.head << ',' << row.metric << ',' << buf
        << ',' << seed << '\n';
  }
  if (!out) throw std::runtime_error("metrics write failed: " + path);
}

}  // namespace trajattn
