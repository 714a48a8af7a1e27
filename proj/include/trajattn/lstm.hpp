#pragma once

#include <utility>

#include "trajattn/tensor.hpp"

namespace trajattn {

// Gate blocks are stacked along the first axis in (input, forget, cell,
// output) order, so w_input is (4*hidden, in), w_hidden (4*hidden, hidden)
// and bias (4*hidden).
struct LstmWeights {
  Tensor w_input;
  Tensor w_hidden;
  Tensor bias;

  int hidden_size() const { return w_hidden.defined() ? w_hidden.dim(1) : 0; }
  int input_size() const { return w_input.defined() ? w_input.dim(1) : 0; }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

// Standard LSTM cell composed from the forward op set, differentiable
// through the active tape.
LstmState lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                    const LstmWeights& weights);

}  // namespace trajattn
