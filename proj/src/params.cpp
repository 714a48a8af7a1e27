#include "trajattn/params.hpp"

#include <stdexcept>

namespace trajattn {

const Parameter& find_param(const ParameterList& params, const std::string& name) {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown parameter: " + name);
}

int total_param_count(const ParameterList& params) {
  int n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace trajattn
