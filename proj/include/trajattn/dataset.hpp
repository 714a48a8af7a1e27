#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajattn/geometry.hpp"
#include "trajattn/model.hpp"
#include "trajattn/params.hpp"
#include "trajattn/tensor.hpp"

namespace trajattn {

// Labels of one event head over the horizon: class indices for discrete
// heads, per-step vectors for continuous ones (exactly one of the two used).
struct HeadLabels {
  std::vector<int> classes;
  std::vector<std::vector<double>> values;
};

// One training record: an observation, the H actions taken afterwards, the
// resulting per-head event labels and the robot-frame positions actually
// visited (the attention supervision targets).
struct TrajectorySample {
  std::vector<std::uint8_t> image;          // channels*h*w, row-major
  std::vector<std::vector<double>> actions;  // H x action_dim
  std::vector<HeadLabels> labels;            // aligned with the header's heads
  std::vector<Vec2> positions_r;             // H planar robot-frame positions, meters
  std::uint32_t episode = 0;
  std::uint32_t timestep = 0;
};

struct DatasetHeader {
  int horizon = 0;
  int image_channels = 0, image_h = 0, image_w = 0;
  int action_dim = 0;
  std::vector<EventHeadSpec> heads;
  // Provenance of the producing run; not part of model compatibility.
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<TrajectorySample> samples;

  // Checks every per-sample invariant (lengths, label ranges, finiteness).
  void validate() const;
};

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

Tensor observation_tensor(const DatasetHeader& header, const TrajectorySample& sample);
std::vector<Tensor> action_tensors(const DatasetHeader& header, const TrajectorySample& sample);

// Deterministic shuffle-split; validation gets round(fraction*n), capped so
// training keeps at least one sample.
struct SplitIndices {
  std::vector<int> train, val;
};
SplitIndices split_dataset(int num_samples, std::uint64_t seed, double val_fraction = 0.2);

// Per-head standardization statistics for continuous labels, computed on the
// training split and carried inside checkpoints as reserved-name entries.
struct NormalizationStats {
  std::vector<std::vector<double>> mean;    // aligned with heads; empty for discrete
  std::vector<std::vector<double>> stddev;  // floored at 1e-8

  static NormalizationStats compute(const Dataset& data, const std::vector<int>& train_indices);
  static NormalizationStats from_params(const ParameterList& params,
                                        const std::vector<EventHeadSpec>& heads);
  void append_to(ParameterList& params, const std::vector<EventHeadSpec>& heads) const;

  std::vector<double> standardize(int head_index, const std::vector<double>& raw) const;
  std::vector<double> destandardize(int head_index, const std::vector<double>& scaled) const;
};

}  // namespace trajattn
