#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajattn/checkpoint.hpp"
#include "trajattn/dataset.hpp"
#include "trajattn/model.hpp"

namespace trajattn {

struct TrainingConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  // Negative means variant-dependent: 1e-4 for the attention variants,
  // 5e-4 for the no-attention baseline.
  double weight_decay = -1.0;
  double attention_loss_weight = 1.0;
  double val_fraction = 0.2;
  int threads = 0;  // 0 defers to TRAJATTN_THREADS, then 1
  // Early-stopping head; empty picks the first discrete head.
  std::string primary_head;
};

double resolve_weight_decay(const TrainingConfig& cfg, Variant variant);

struct LossBreakdown {
  double total = 0, discrete = 0, continuous = 0, attention = 0;
};

// Loss graph of a single sample, recorded on the active tape. Continuous
// labels are standardized with `stats`; attention supervision compares raw
// robot-frame positions and only applies to the trajectory variant.
Tensor sample_loss(const Model& model, const DatasetHeader& header,
                   const TrajectorySample& sample, const NormalizationStats& stats,
                   double attention_weight, LossBreakdown* breakdown = nullptr);

struct MetricRow {
  int epoch = 0;
  std::string split, head, metric;
  double value = 0;
};

struct HeadMetric {
  std::string head, metric;
  double value = 0;
};

// Accuracy for discrete heads (argmax vs label, ties to the lowest class),
// raw-scale MSE for continuous heads, averaged over samples and timesteps.
// Read-only on the model; evaluation parallelizes over samples.
std::vector<HeadMetric> evaluate_accuracy(const Model& model, const Dataset& data,
                                          const std::vector<int>& indices,
                                          const NormalizationStats& stats, int threads = 0);

// Mean feature-map distance between predicted attention peaks and the
// projected ground-truth trajectory positions (mask centroid for variants
// without explicit positions).
double attention_fidelity(const Model& model, const Dataset& data,
                          const std::vector<int>& indices, int threads = 0);

struct TrainResult {
  Checkpoint checkpoint;       // best-validation weights + normalization stats
  std::vector<MetricRow> log;  // per-epoch train losses and validation metrics
  int best_epoch = -1;
  double best_val_accuracy = 0;
};

// Minibatch training with per-sample gradient tapes merged in sample order,
// so results are bit-identical for every thread count. The model is left
// holding the best-validation weights. Throws with epoch/batch diagnostics
// if the loss goes non-finite.
TrainResult train_model(Model& model, const Dataset& data, const TrainingConfig& cfg,
                        std::uint64_t seed, std::uint64_t config_hash = 0);

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows,
                       std::uint64_t seed);

}  // namespace trajattn
