#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "trajattn/rng.hpp"
#include "trajattn/tensor.hpp"

namespace trajattn::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

// Compares reverse-mode gradients of a scalar-valued function against central
// differences. The function must rebuild its graph from the given inputs on
// every call; inputs are perturbed in place between calls.
inline GradCheckResult check_gradients(const std::function<Tensor()>& scalar_fn,
                                       std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = scalar_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t.grad_values());

  GradCheckResult result;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    for (int i = 0; i < t.numel(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double f_plus = scalar_fn().value();
      t.data()[i] = orig - h;
      const double f_minus = scalar_fn().value();
      t.data()[i] = orig;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double an = analytic[ti][static_cast<size_t>(i)];
      result.max_abs_err = std::max(result.max_abs_err, std::fabs(fd - an));
      result.max_rel_err = std::max(result.max_rel_err, rel_err(fd, an));
    }
  }
  return result;
}

// Plain quadruple-loop convolution, written independently of the op it checks.
inline std::vector<double> conv2d_reference(const std::vector<double>& input, int cin, int h,
                                            int w, const std::vector<double>& kernel, int cout,
                                            int ksize, const std::vector<double>* bias, int stride,
                                            int padding, int& out_h, int& out_w) {
  out_h = (h + 2 * padding - ksize) / stride + 1;
  out_w = (w + 2 * padding - ksize) / stride + 1;
  std::vector<double> out(static_cast<size_t>(cout) * out_h * out_w, 0.0);
  for (int oc = 0; oc < cout; ++oc) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        double acc = bias ? (*bias)[static_cast<size_t>(oc)] : 0.0;
        for (int ic = 0; ic < cin; ++ic) {
          for (int ky = 0; ky < ksize; ++ky) {
            for (int kx = 0; kx < ksize; ++kx) {
              const int iy = oy * stride - padding + ky;
              const int ix = ox * stride - padding + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += input[(static_cast<size_t>(ic) * h + iy) * w + ix] *
                     kernel[((static_cast<size_t>(oc) * cin + ic) * ksize + ky) * ksize + kx];
            }
          }
        }
        out[(static_cast<size_t>(oc) * out_h + oy) * out_w + ox] = acc;
      }
    }
  }
  return out;
}

}  // namespace trajattn::testing
