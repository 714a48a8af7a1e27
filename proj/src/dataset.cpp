#include "trajattn/dataset.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "trajattn/binary_io.hpp"
#include "trajattn/rng.hpp"

namespace trajattn {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'A', 'J', 'D', 'S', 0, 0};

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("dataset: " + what);
}

}  // namespace

void Dataset::validate() const {
  const int h = header.horizon;
  check(h >= 1, "horizon must be >= 1");
  check(header.image_channels >= 1 && header.image_h >= 1 && header.image_w >= 1,
        "image dims must be positive");
  check(header.action_dim >= 1, "action dim must be positive");
  check(!header.heads.empty(), "needs at least one event head");
  const size_t pixels = static_cast<size_t>(header.image_channels) * header.image_h *
                        header.image_w;
  for (size_t si = 0; si < samples.size(); ++si) {
    const TrajectorySample& s = samples[si];
    const std::string at = "sample " + std::to_string(si);
    check(s.image.size() == pixels, at + ": image size mismatch");
    check(s.actions.size() == static_cast<size_t>(h), at + ": action count != horizon");
    for (const auto& a : s.actions) {
      check(a.size() == static_cast<size_t>(header.action_dim), at + ": action dim mismatch");
      for (double v : a) check(std::isfinite(v), at + ": non-finite action");
    }
    check(s.labels.size() == header.heads.size(), at + ": label/head count mismatch");
    for (size_t k = 0; k < header.heads.size(); ++k) {
      const EventHeadSpec& head = header.heads[k];
      const HeadLabels& lab = s.labels[k];
      if (head.kind == EventHeadSpec::Kind::discrete) {
        check(lab.classes.size() == static_cast<size_t>(h) && lab.values.empty(),
              at + ": head '" + head.name + "' wants class labels over the horizon");
        for (int c : lab.classes) {
          check(c >= 0 && c < head.size, at + ": class label out of range for '" + head.name + "'");
        }
      } else {
        check(lab.values.size() == static_cast<size_t>(h) && lab.classes.empty(),
              at + ": head '" + head.name + "' wants value labels over the horizon");
        for (const auto& v : lab.values) {
          check(v.size() == static_cast<size_t>(head.size), at + ": value label dim mismatch");
          for (double x : v) check(std::isfinite(x), at + ": non-finite label");
        }
      }
    }
    check(s.positions_r.size() == static_cast<size_t>(h), at + ": position count != horizon");
    for (const auto& p : s.positions_r) {
      check(std::isfinite(p[0]) && std::isfinite(p[1]), at + ": non-finite position");
    }
  }
}

void save_dataset(const std::string& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open dataset for writing: " + path);
  write_magic(out, kMagic);
  write_u32(out, 1);  // version
  write_u64(out, data.header.config_hash);
  write_u64(out, data.header.seed);
  write_u32(out, static_cast<std::uint32_t>(data.header.horizon));
  write_u32(out, static_cast<std::uint32_t>(data.header.image_channels));
  write_u32(out, static_cast<std::uint32_t>(data.header.image_h));
  write_u32(out, static_cast<std::uint32_t>(data.header.image_w));
  write_u32(out, static_cast<std::uint32_t>(data.header.action_dim));
  write_u32(out, static_cast<std::uint32_t>(data.header.heads.size()));
  for (const auto& head : data.header.heads) {
    write_string(out, head.name);
    write_u8(out, head.kind == EventHeadSpec::Kind::discrete ? 0 : 1);
    write_u32(out, static_cast<std::uint32_t>(head.size));
  }
  write_u32(out, static_cast<std::uint32_t>(data.samples.size()));
  const int h = data.header.horizon;
  for (const auto& s : data.samples) {
    // Record length lets a reader skip samples without decoding them.
    size_t record = 8 + s.image.size() + 8ull * h * data.header.action_dim + 16ull * h;
    for (size_t k = 0; k < data.header.heads.size(); ++k) {
      record += data.header.heads[k].kind == EventHeadSpec::Kind::discrete
                    ? 4ull * h
                    : 8ull * h * data.header.heads[k].size;
    }
    write_u32(out, static_cast<std::uint32_t>(record));
    write_u32(out, s.episode);
    write_u32(out, s.timestep);
    write_u8_array(out, s.image);
    for (const auto& a : s.actions) write_f64_array(out, a);
    for (size_t k = 0; k < data.header.heads.size(); ++k) {
      if (data.header.heads[k].kind == EventHeadSpec::Kind::discrete) {
        for (int c : s.labels[k].classes) write_u32(out, static_cast<std::uint32_t>(c));
      } else {
        for (const auto& v : s.labels[k].values) write_f64_array(out, v);
      }
    }
    for (const auto& p : s.positions_r) {
      write_f64(out, p[0]);
      write_f64(out, p[1]);
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("dataset write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  expect_magic(in, kMagic, "dataset " + path);
  const std::uint32_t version = read_u32(in);
  if (version != 1) {
    throw std::runtime_error("dataset " + path + ": unsupported version " +
                             std::to_string(version));
  }
  Dataset data;
  data.header.config_hash = read_u64(in);
  data.header.seed = read_u64(in);
  data.header.horizon = static_cast<int>(read_u32(in));
  data.header.image_channels = static_cast<int>(read_u32(in));
  data.header.image_h = static_cast<int>(read_u32(in));
  data.header.image_w = static_cast<int>(read_u32(in));
  data.header.action_dim = static_cast<int>(read_u32(in));
  const std::uint32_t head_count = read_u32(in);
  if (head_count > 64) throw std::runtime_error("dataset " + path + ": head count out of range");
  for (std::uint32_t k = 0; k < head_count; ++k) {
    EventHeadSpec head;
    head.name = read_string(in);
    head.kind = read_u8(in) == 0 ? EventHeadSpec::Kind::discrete : EventHeadSpec::Kind::continuous;
    head.size = static_cast<int>(read_u32(in));
    data.header.heads.push_back(std::move(head));
  }
  const std::uint32_t count = read_u32(in);
  const int h = data.header.horizon;
  const size_t pixels = static_cast<size_t>(data.header.image_channels) * data.header.image_h *
                        data.header.image_w;
  data.samples.reserve(count);
  for (std::uint32_t si = 0; si < count; ++si) {
    read_u32(in);  // record length, unused on a straight read
    TrajectorySample s;
    s.episode = read_u32(in);
    s.timestep = read_u32(in);
    read_u8_array(in, s.image, pixels);
    s.actions.resize(static_cast<size_t>(h));
    for (auto& a : s.actions) read_f64_array(in, a, static_cast<size_t>(data.header.action_dim));
    s.labels.resize(data.header.heads.size());
    for (size_t k = 0; k < data.header.heads.size(); ++k) {
      if (data.header.heads[k].kind == EventHeadSpec::Kind::discrete) {
        s.labels[k].classes.resize(static_cast<size_t>(h));
        for (int& c : s.labels[k].classes) c = static_cast<int>(read_u32(in));
      } else {
        s.labels[k].values.resize(static_cast<size_t>(h));
        for (auto& v : s.labels[k].values) {
          read_f64_array(in, v, static_cast<size_t>(data.header.heads[k].size));
        }
      }
    }
    s.positions_r.resize(static_cast<size_t>(h));
    for (auto& p : s.positions_r) {
      p[0] = read_f64(in);
      p[1] = read_f64(in);
    }
    data.samples.push_back(std::move(s));
  }
  data.validate();
  return data;
}

Tensor observation_tensor(const DatasetHeader& header, const TrajectorySample& sample) {
  Tensor t({header.image_channels, header.image_h, header.image_w});
  for (int i = 0; i < t.numel(); ++i) {
    t.data()[i] = static_cast<double>(sample.image[static_cast<size_t>(i)]) / 255.0;
  }
  return t;
}

std::vector<Tensor> action_tensors(const DatasetHeader& header, const TrajectorySample& sample) {
  std::vector<Tensor> actions;
  actions.reserve(sample.actions.size());
  for (const auto& a : sample.actions) {
    Tensor t({header.action_dim});
    std::copy(a.begin(), a.end(), t.data());
    actions.push_back(std::move(t));
  }
  return actions;
}

SplitIndices split_dataset(int num_samples, std::uint64_t seed, double val_fraction) {
  if (num_samples < 1) throw std::invalid_argument("split: dataset is empty");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw std::invalid_argument("split: validation fraction must lie in [0, 1)");
  }
  std::vector<int> order(static_cast<size_t>(num_samples));
  for (int i = 0; i < num_samples; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);
  int n_val = static_cast<int>(std::lround(val_fraction * num_samples));
  if (n_val >= num_samples) n_val = num_samples - 1;
  SplitIndices split;
  split.val.assign(order.begin(), order.begin() + n_val);
  split.train.assign(order.begin() + n_val, order.end());
  return split;
}

NormalizationStats NormalizationStats::compute(const Dataset& data,
                                               const std::vector<int>& train_indices) {
  if (train_indices.empty()) throw std::invalid_argument("stats: empty training split");
  const auto& heads = data.header.heads;
  NormalizationStats stats;
  stats.mean.resize(heads.size());
  stats.stddev.resize(heads.size());
  for (size_t k = 0; k < heads.size(); ++k) {
    if (heads[k].kind != EventHeadSpec::Kind::continuous) continue;
    const size_t dim = static_cast<size_t>(heads[k].size);
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    size_t n = 0;
    for (int idx : train_indices) {
      for (const auto& v : data.samples[static_cast<size_t>(idx)].labels[k].values) {
        for (size_t d = 0; d < dim; ++d) {
          sum[d] += v[d];
          sumsq[d] += v[d] * v[d];
        }
        ++n;
      }
    }
    stats.mean[k].resize(dim);
    stats.stddev[k].resize(dim);
    for (size_t d = 0; d < dim; ++d) {
      const double m = sum[d] / static_cast<double>(n);
      const double var = std::max(0.0, sumsq[d] / static_cast<double>(n) - m * m);
      stats.mean[k][d] = m;
      stats.stddev[k][d] = std::max(std::sqrt(var), 1e-8);
    }
  }
  return stats;
}

NormalizationStats NormalizationStats::from_params(const ParameterList& params,
                                                   const std::vector<EventHeadSpec>& heads) {
  NormalizationStats stats;
  stats.mean.resize(heads.size());
  stats.stddev.resize(heads.size());
  for (size_t k = 0; k < heads.size(); ++k) {
    if (heads[k].kind != EventHeadSpec::Kind::continuous) continue;
    stats.mean[k] = find_param(params, "stats." + heads[k].name + ".mean").tensor.values();
    stats.stddev[k] = find_param(params, "stats." + heads[k].name + ".stddev").tensor.values();
    if (stats.mean[k].size() != static_cast<size_t>(heads[k].size) ||
        stats.stddev[k].size() != static_cast<size_t>(heads[k].size)) {
      throw std::runtime_error("stats: stored statistics do not match head '" + heads[k].name +
                               "'");
    }
  }
  return stats;
}

void NormalizationStats::append_to(ParameterList& params,
                                   const std::vector<EventHeadSpec>& heads) const {
  for (size_t k = 0; k < heads.size(); ++k) {
    if (heads[k].kind != EventHeadSpec::Kind::continuous) continue;
    params.push_back({"stats." + heads[k].name + ".mean",
                      Tensor({heads[k].size}, std::vector<double>(mean[k]))});
    params.push_back({"stats." + heads[k].name + ".stddev",
                      Tensor({heads[k].size}, std::vector<double>(stddev[k]))});
  }
}

std::vector<double> NormalizationStats::standardize(int head_index,
                                                    const std::vector<double>& raw) const {
  const auto& m = mean[static_cast<size_t>(head_index)];
  const auto& s = stddev[static_cast<size_t>(head_index)];
  std::vector<double> out(raw.size());
  for (size_t d = 0; d < raw.size(); ++d) out[d] = (raw[d] - m[d]) / s[d];
  return out;
}

std::vector<double> NormalizationStats::destandardize(int head_index,
                                                      const std::vector<double>& scaled) const {
  const auto& m = mean[static_cast<size_t>(head_index)];
  const auto& s = stddev[static_cast<size_t>(head_index)];
  std::vector<double> out(scaled.size());
  for (size_t d = 0; d < scaled.size(); ++d) out[d] = scaled[d] * s[d] + m[d];
  return out;
}

}  // namespace trajattn
