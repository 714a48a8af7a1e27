#include "trajattn/lstm.hpp"

#include <stdexcept>
#include <string>

#include "trajattn/ops.hpp"

namespace trajattn {

LstmState lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                    const LstmWeights& weights) {
  const int hidden = weights.hidden_size();
  if (h.rank() != 1 || h.dim(0) != hidden || c.rank() != 1 || c.dim(0) != hidden) {
    throw std::invalid_argument("lstm_cell: hidden state " + shape_to_string(h.shape()) +
                                " / cell state " + shape_to_string(c.shape()) +
                                " do not match hidden size " + std::to_string(hidden));
  }
  if (x.rank() != 1 || x.dim(0) != weights.input_size()) {
    throw std::invalid_argument("lstm_cell: input " + shape_to_string(x.shape()) +
                                " does not match weight input size " +
                                std::to_string(weights.input_size()));
  }
  if (weights.w_input.dim(0) != 4 * hidden || weights.bias.dim(0) != 4 * hidden) {
    throw std::invalid_argument("lstm_cell: weight blocks do not stack to 4*hidden");
  }

  Tensor gates = add(add(matmul(weights.w_input, x), matmul(weights.w_hidden, h)), weights.bias);
  Tensor in_gate = sigmoid(slice(gates, 0, 0, hidden));
  Tensor forget_gate = sigmoid(slice(gates, 0, hidden, hidden));
  Tensor cell_cand = tanh(slice(gates, 0, 2 * hidden, hidden));
  Tensor out_gate = sigmoid(slice(gates, 0, 3 * hidden, hidden));

  Tensor c_next = add(mul(forget_gate, c), mul(in_gate, cell_cand));
  Tensor h_next = mul(out_gate, tanh(c_next));
  return {h_next, c_next};
}

}  // namespace trajattn
