#pragma once

#include <string>
#include <vector>

#include "trajattn/tensor.hpp"

namespace trajattn {

// Named trainable tensor. Registration order is fixed and defines both the
// optimizer state layout and the checkpoint record order.
struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

// Throws if the name is absent.
const Parameter& find_param(const ParameterList& params, const std::string& name);

int total_param_count(const ParameterList& params);

}  // namespace trajattn
