#include "trajattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "trajattn/ops.hpp"
#include "trajattn/rng.hpp"

namespace trajattn {

Variant variant_from_string(const std::string& name) {
  if (name == "trajectory") return Variant::trajectory;
  if (name == "self_attention" || name == "self") return Variant::self_attention;
  if (name == "none") return Variant::none;
  throw std::invalid_argument("unknown model variant: " + name);
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::trajectory: return "trajectory";
    case Variant::self_attention: return "self_attention";
    case Variant::none: return "none";
  }
  throw std::invalid_argument("unknown model variant");
}

void ModelConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("model: horizon must be >= 1");
  if (hidden_size < 1 || action_embed_size < 1 || action_dim < 1) {
    throw std::invalid_argument("model: layer sizes must be positive");
  }
  if (conv_layers.empty()) throw std::invalid_argument("model: encoder needs conv layers");
  for (const auto& layer : conv_layers) {
    if (layer.kernel < 1 || layer.kernel % 2 == 0) {
      throw std::invalid_argument("model: conv kernels must be odd");
    }
    if (layer.channels < 1 || layer.stride < 1) {
      throw std::invalid_argument("model: conv channels and stride must be positive");
    }
  }
  if (heads.empty()) throw std::invalid_argument("model: at least one event head required");
  std::unordered_set<std::string> names;
  for (const auto& head : heads) {
    if (head.name.empty()) throw std::invalid_argument("model: event head needs a name");
    if (!names.insert(head.name).second) {
      throw std::invalid_argument("model: duplicate event head name: " + head.name);
    }
    if (head.kind == EventHeadSpec::Kind::discrete && head.size < 2) {
      throw std::invalid_argument("model: discrete head '" + head.name + "' needs >= 2 classes");
    }
    if (head.kind == EventHeadSpec::Kind::continuous && head.size < 1) {
      throw std::invalid_argument("model: continuous head '" + head.name + "' needs dim >= 1");
    }
  }
  feature_geometry().validate();
  if (variant == Variant::trajectory) intrinsics.validate();
}

FeatureMapGeometry ModelConfig::feature_geometry() const {
  FeatureMapGeometry g;
  g.image_w = image_w;
  g.image_h = image_h;
  for (const auto& layer : conv_layers) {
    g.layers.push_back({layer.kernel, layer.stride, (layer.kernel - 1) / 2});
  }
  return g;
}

namespace {

Tensor glorot(const Shape& shape, int fan_in, int fan_out, Rng& rng) {
  Tensor t(shape);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-a, a);
  return t;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  register_parameters(init_seed);
}

Model::Model(ModelConfig config, const ParameterList& saved) : config_(std::move(config)) {
  config_.validate();
  register_parameters(0);
  for (auto& p : params_) {
    const Parameter& loaded = find_param(saved, p.name);
    if (loaded.tensor.shape() != p.tensor.shape()) {
      throw std::runtime_error("model: loaded parameter '" + p.name + "' has shape " +
                               shape_to_string(loaded.tensor.shape()) + ", expected " +
                               shape_to_string(p.tensor.shape()));
    }
    std::copy(loaded.tensor.values().begin(), loaded.tensor.values().end(), p.tensor.data());
  }
}

void Model::register_parameters(std::uint64_t init_seed) {
  Rng rng(derive_seed(init_seed, "model_init"));
  const int hidden = config_.hidden_size;
  auto push = [&](const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, std::move(t)});
  };
  auto push_dense = [&](const std::string& prefix, int out, int in) {
    push(prefix + ".weight", glorot({out, in}, in, out, rng));
    push(prefix + ".bias", Tensor({out}, 0.0));
  };
  auto push_lstm = [&](const std::string& prefix, int in) {
    push(prefix + ".w_input", glorot({4 * hidden, in}, in, 4 * hidden, rng));
    push(prefix + ".w_hidden", glorot({4 * hidden, hidden}, hidden, 4 * hidden, rng));
    push(prefix + ".bias", Tensor({4 * hidden}, 0.0));
  };

  int in_ch = config_.image_channels;
  for (size_t l = 0; l < config_.conv_layers.size(); ++l) {
    const auto& layer = config_.conv_layers[l];
    const int fan_in = in_ch * layer.kernel * layer.kernel;
    const int fan_out = layer.channels * layer.kernel * layer.kernel;
    const std::string prefix = "conv" + std::to_string(l);
    push(prefix + ".kernel",
         glorot({layer.channels, in_ch, layer.kernel, layer.kernel}, fan_in, fan_out, rng));
    push(prefix + ".bias", Tensor({layer.channels}, 0.0));
    in_ch = layer.channels;
  }

  push_dense("enc_hidden", hidden, config_.feature_channels());
  push_dense("action_embed", config_.action_embed_size, config_.action_dim);

  if (config_.variant != Variant::none) {
    push_lstm("attn_lstm", config_.action_embed_size);
    const FeatureMapGeometry g = config_.feature_geometry();
    if (config_.variant == Variant::trajectory) {
      const int ncov = covariance_param_count(config_.covariance);
      push_dense("attn_out", 2 + ncov, hidden);
      // Start masks at sigma = 1.5 cells so they neither spike nor blanket.
      Tensor bias = find_param(params_, "attn_out.bias").tensor;
      switch (config_.covariance) {
        case CovarianceVariant::isotropic: bias.data()[2] = 2.0 * std::log(1.5); break;
        case CovarianceVariant::diagonal:
          bias.data()[2] = 2.0 * std::log(1.5);
          bias.data()[3] = 2.0 * std::log(1.5);
          break;
        case CovarianceVariant::full:
          bias.data()[2] = 1.5;
          bias.data()[5] = 1.5;
          break;
      }
    } else {
      push_dense("attn_out", g.feature_w() * g.feature_h(), hidden);
    }
  }

  push_lstm("event_lstm", config_.feature_channels() + config_.action_embed_size);
  for (const auto& head : config_.heads) {
    push_dense("head." + head.name, head.size, hidden);
  }
}

Tensor Model::param(const std::string& name) const { return find_param(params_, name).tensor; }

Tensor Model::dense(const std::string& prefix, const Tensor& x) const {
  return add(matmul(param(prefix + ".weight"), x), param(prefix + ".bias"));
}

Tensor Model::action_embedding(const Tensor& action) const {
  if (action.rank() != 1 || action.dim(0) != config_.action_dim) {
    throw std::invalid_argument("model: action must have dim " +
                                std::to_string(config_.action_dim) + ", got " +
                                shape_to_string(action.shape()));
  }
  return relu(dense("action_embed", action));
}

LstmWeights Model::lstm_weights(const std::string& prefix) const {
  return {param(prefix + ".w_input"), param(prefix + ".w_hidden"), param(prefix + ".bias")};
}

Model::Encoding Model::encode_image(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != config_.image_channels ||
      image.dim(1) != config_.image_h || image.dim(2) != config_.image_w) {
    throw std::invalid_argument("model: image shape " + shape_to_string(image.shape()) +
                                " does not match configured input");
  }
  ++encode_count_;
  Tensor x = image;
  for (size_t l = 0; l < config_.conv_layers.size(); ++l) {
    const auto& layer = config_.conv_layers[l];
    const std::string prefix = "conv" + std::to_string(l);
    x = relu(conv2d(x, param(prefix + ".kernel"), param(prefix + ".bias"), layer.stride,
                    (layer.kernel - 1) / 2));
  }
  Tensor h0 = relu(dense("enc_hidden", global_avg_pool(x)));
  return {x, h0};
}

std::vector<Model::AttentionStep> Model::predict_attention_sequence(
    const Tensor& h0, const std::vector<Tensor>& actions) const {
  if (config_.variant != Variant::trajectory) {
    throw std::logic_error("model: attention sequence requires the trajectory variant");
  }
  if (actions.empty()) throw std::invalid_argument("model: need at least one action");
  const int ncov = covariance_param_count(config_.covariance);
  const LstmWeights lstm = lstm_weights("attn_lstm");
  Tensor h = h0;
  Tensor c = Tensor::zeros({config_.hidden_size});
  std::vector<AttentionStep> steps;
  steps.reserve(actions.size());
  for (const Tensor& action : actions) {
    LstmState next = lstm_cell(action_embedding(action), h, c, lstm);
    h = next.h;
    c = next.c;
    Tensor out = dense("attn_out", h);
    steps.push_back({slice(out, 0, 0, 2), slice(out, 0, 2, ncov)});
  }
  return steps;
}

Model::MaskResult Model::coord_to_mask(const Tensor& position_r, const Tensor& cov_params) const {
  const FeatureMapGeometry g = config_.feature_geometry();
  // Attention points live on the ground plane: z = 0 in robot frame.
  Tensor xyz = concat(position_r, Tensor::zeros({1}));
  ProjectionResult proj = robot_point_to_featuremap(
      xyz, make_camera_pose(config_.camera_height, config_.camera_pitch), config_.intrinsics, g);
  Tensor mask =
      gaussian_mask_op(proj.coords, cov_params, config_.covariance, g.feature_w(), g.feature_h());
  return {mask, proj.clamped_depth};
}

std::vector<Tensor> Model::self_attention_masks(const Tensor& h0,
                                                const std::vector<Tensor>& actions) const {
  if (config_.variant != Variant::self_attention) {
    throw std::logic_error("model: direct mask output requires the self_attention variant");
  }
  if (actions.empty()) throw std::invalid_argument("model: need at least one action");
  const FeatureMapGeometry g = config_.feature_geometry();
  const LstmWeights lstm = lstm_weights("attn_lstm");
  Tensor h = h0;
  Tensor c = Tensor::zeros({config_.hidden_size});
  std::vector<Tensor> masks;
  masks.reserve(actions.size());
  for (const Tensor& action : actions) {
    LstmState next = lstm_cell(action_embedding(action), h, c, lstm);
    h = next.h;
    c = next.c;
    Tensor logits = dense("attn_out", h);
    masks.push_back(reshape(softmax(logits, 0), {g.feature_h(), g.feature_w()}));
  }
  return masks;
}

std::vector<std::vector<Tensor>> Model::predict_events(const Encoding& enc,
                                                       const std::vector<Tensor>& masks,
                                                       const std::vector<Tensor>& actions) const {
  if (actions.empty()) throw std::invalid_argument("model: need at least one action");
  if (config_.variant == Variant::none) {
    if (!masks.empty()) {
      throw std::invalid_argument("model: the no-attention variant takes no masks");
    }
  } else if (masks.size() != actions.size()) {
    throw std::invalid_argument("model: need one mask per action");
  }

  const LstmWeights lstm = lstm_weights("event_lstm");
  Tensor pooled_plain;
  if (config_.variant == Variant::none) pooled_plain = global_avg_pool(enc.features);

  Tensor h = enc.h0;
  Tensor c = Tensor::zeros({config_.hidden_size});
  std::vector<std::vector<Tensor>> events;
  events.reserve(actions.size());
  for (size_t t = 0; t < actions.size(); ++t) {
    Tensor pooled = config_.variant == Variant::none
                        ? pooled_plain
                        : global_avg_pool(broadcast_multiply(masks[t], enc.features));
    Tensor step_in = concat(pooled, action_embedding(actions[t]));
    LstmState next = lstm_cell(step_in, h, c, lstm);
    h = next.h;
    c = next.c;
    std::vector<Tensor> step_events;
    step_events.reserve(config_.heads.size());
    for (const auto& head : config_.heads) {
      Tensor out = dense("head." + head.name, h);
      if (head.kind == EventHeadSpec::Kind::discrete) out = softmax(out, 0);
      step_events.push_back(out);
    }
    events.push_back(std::move(step_events));
  }
  return events;
}

ForwardOutput Model::forward_from_encoding(const Encoding& enc,
                                           const std::vector<Tensor>& actions) const {
  ForwardOutput out;
  if (config_.variant == Variant::trajectory) {
    auto steps = predict_attention_sequence(enc.h0, actions);
    out.attention_positions_r.reserve(steps.size());
    out.masks.reserve(steps.size());
    for (const auto& step : steps) {
      MaskResult mask = coord_to_mask(step.position_r, step.cov_params);
      out.attention_positions_r.push_back(step.position_r);
      out.covariance_params.push_back(step.cov_params);
      out.masks.push_back(mask.mask);
      out.clamped_depth.push_back(mask.clamped_depth);
    }
  } else if (config_.variant == Variant::self_attention) {
    out.masks = self_attention_masks(enc.h0, actions);
  }
  out.events = predict_events(enc, out.masks, actions);
  return out;
}

ForwardOutput Model::forward_full(const Tensor& image, const std::vector<Tensor>& actions) const {
  return forward_from_encoding(encode_image(image), actions);
}

}  // namespace trajattn
