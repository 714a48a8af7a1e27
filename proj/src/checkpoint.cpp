#include "trajattn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "trajattn/binary_io.hpp"

namespace trajattn {

namespace {
constexpr char kMagic[8] = {'T', 'R', 'A', 'J', 'A', 'T', 'T', 'N'};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  write_magic(out, kMagic);
  write_u32(out, ckpt.version);
  write_u64(out, ckpt.config_hash);
  write_u64(out, ckpt.seed);
  write_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    write_string(out, p.name);
    write_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (int a = 0; a < p.tensor.rank(); ++a) {
      write_u32(out, static_cast<std::uint32_t>(p.tensor.dim(a)));
    }
    write_f64_array(out, p.tensor.values());
  }
  out.flush();
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  expect_magic(in, kMagic, "checkpoint " + path);
  Checkpoint ckpt;
  ckpt.version = read_u32(in);
  if (ckpt.version != 1) {
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(ckpt.version));
  }
  ckpt.config_hash = read_u64(in);
  ckpt.seed = read_u64(in);
  const std::uint32_t count = read_u32(in);
  ckpt.params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(in);
    const std::uint32_t rank = read_u32(in);
    if (rank > 8) throw std::runtime_error("checkpoint " + path + ": tensor rank out of range");
    Shape shape(rank);
    size_t numel = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      shape[a] = static_cast<int>(read_u32(in));
      if (shape[a] <= 0) throw std::runtime_error("checkpoint " + path + ": bad tensor dim");
      numel *= static_cast<size_t>(shape[a]);
    }
    std::vector<double> values;
    read_f64_array(in, values, numel);
    ckpt.params.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return ckpt;
}

}  // namespace trajattn
