#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "trajattn/geometry.hpp"
#include "trajattn/lstm.hpp"
#include "trajattn/params.hpp"
#include "trajattn/tensor.hpp"

namespace trajattn {

enum class Variant { trajectory, self_attention, none };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant variant);

struct ConvLayerSpec {
  int kernel = 3;
  int channels = 8;
  int stride = 2;
};

struct EventHeadSpec {
  enum class Kind { discrete, continuous };
  std::string name;
  Kind kind = Kind::discrete;
  // Class count for discrete heads (>= 2), vector dim for continuous (>= 1).
  int size = 2;
};

struct ModelConfig {
  Variant variant = Variant::trajectory;
  int horizon = 12;
  int image_channels = 3;
  int image_w = 32, image_h = 32;
  std::vector<ConvLayerSpec> conv_layers = {{3, 8, 2}, {3, 16, 2}};
  int hidden_size = 64;
  int action_embed_size = 16;
  int action_dim = 1;
  std::vector<EventHeadSpec> heads;
  CovarianceVariant covariance = CovarianceVariant::isotropic;
  CameraIntrinsics intrinsics{32, 32, 16, 16, 32, 32};
  double camera_height = 0.5;
  double camera_pitch = -0.17453292519943295;  // 10 degrees down

  void validate() const;
  FeatureMapGeometry feature_geometry() const;
  int feature_channels() const { return conv_layers.back().channels; }
};

struct ForwardOutput {
  // events[t][k]: prediction of head k one step after action t; probability
  // vector for discrete heads, point estimate for continuous ones.
  std::vector<std::vector<Tensor>> events;
  // Robot-frame planar attention positions; only the trajectory variant
  // fills these (and the per-step covariance parameters).
  std::vector<Tensor> attention_positions_r;
  std::vector<Tensor> covariance_params;
  // Empty for the no-attention variant.
  std::vector<Tensor> masks;
  std::vector<bool> clamped_depth;
};

// The attention-augmented event predictor. Weights are immutable during
// inference; all forward entry points are const and safe to call from many
// threads at once (each thread records on its own tape, or none).
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);
  Model(ModelConfig config, const ParameterList& saved);

  const ModelConfig& config() const { return config_; }
  const ParameterList& parameters() const { return params_; }

  struct Encoding {
    Tensor features;  // (C, fh, fw), post-activation
    Tensor h0;        // (hidden), shared initial hidden state of both recurrences
  };

  Encoding encode_image(const Tensor& image) const;

  struct AttentionStep {
    Tensor position_r;  // (2): planar robot-frame x (forward), y (left)
    Tensor cov_params;
  };
  std::vector<AttentionStep> predict_attention_sequence(
      const Tensor& h0, const std::vector<Tensor>& actions) const;

  struct MaskResult {
    Tensor mask;  // (fh, fw)
    bool clamped_depth = false;
  };
  MaskResult coord_to_mask(const Tensor& position_r, const Tensor& cov_params) const;

  std::vector<Tensor> self_attention_masks(const Tensor& h0,
                                           const std::vector<Tensor>& actions) const;

  // Masked event recurrence. masks must be empty exactly for the
  // no-attention variant; otherwise one mask per action.
  std::vector<std::vector<Tensor>> predict_events(const Encoding& enc,
                                                  const std::vector<Tensor>& masks,
                                                  const std::vector<Tensor>& actions) const;

  ForwardOutput forward_full(const Tensor& image, const std::vector<Tensor>& actions) const;
  // Same as forward_full with the encoder stage already done; lets planner
  // rollouts share one image embedding.
  ForwardOutput forward_from_encoding(const Encoding& enc,
                                      const std::vector<Tensor>& actions) const;

  // Number of encoder invocations since construction (planner instrumentation).
  long encode_count() const { return encode_count_.load(); }

 private:
  Tensor param(const std::string& name) const;
  Tensor dense(const std::string& prefix, const Tensor& x) const;
  Tensor action_embedding(const Tensor& action) const;
  LstmWeights lstm_weights(const std::string& prefix) const;
  void register_parameters(std::uint64_t init_seed);

  ModelConfig config_;
  ParameterList params_;
  mutable std::atomic<long> encode_count_{0};
};

}  // namespace trajattn
