#pragma once

#include <cstdint>
#include <string>

#include "trajattn/params.hpp"

namespace trajattn {

// Snapshot of a named tensor set plus the identifiers needed to refuse a
// mismatched reload. Normalization statistics ride along as reserved-name
// entries in the same list.
struct Checkpoint {
  std::uint32_t version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  ParameterList params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Throws on malformed files. Callers verify config_hash themselves so the
// error can name the config file involved.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace trajattn
