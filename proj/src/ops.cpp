#include "trajattn/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajattn {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail + ", got " +
                              shape_to_string(a.shape()));
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

// Marks the output differentiable and records the rule when a tape is active.
template <typename Rule>
void record(std::initializer_list<Tensor> inputs, Tensor& out, Rule&& rule) {
  Tape* tape = active_tape();
  if (!tape) return;
  bool any = false;
  for (const Tensor& t : inputs) any = any || wants_grad(t);
  if (!any) return;
  out.impl()->requires_grad = true;
  tape->record(inputs, out, std::forward<Rule>(rule));
}

// outer/axis/inner decomposition for axis-wise loops.
struct AxisSplit {
  int outer = 1;
  int n = 1;
  int inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (i < axis) s.outer *= shape[static_cast<size_t>(i)];
    else if (i == axis) s.n = shape[static_cast<size_t>(i)];
    else s.inner *= shape[static_cast<size_t>(i)];
  }
  return s;
}

using Impl = std::shared_ptr<TensorImpl>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) shape_error("matmul", a, "left operand must be rank 2");
  const bool vec = b.rank() == 1;
  if (!vec && b.rank() != 2) shape_error("matmul", b, "right operand must be rank 1 or 2");
  const int m = a.dim(0), k = a.dim(1);
  const int n = vec ? 1 : b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", a, b);

  Tensor out(vec ? Shape{m} : Shape{m, n});
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = av + static_cast<size_t>(i) * k;
    double* orow = ov + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = bv + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }

  record({a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    const double* g = og->data();
    if (ai->requires_grad) {
      std::vector<double>& ga = tp.grad_of(ai);
      const double* bv = bi->values.data();
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          const double* grow = g + static_cast<size_t>(i) * n;
          const double* brow = bv + static_cast<size_t>(kk) * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[static_cast<size_t>(i) * k + kk] += acc;
        }
    }
    if (bi->requires_grad) {
      std::vector<double>& gb = tp.grad_of(bi);
      const double* av = ai->values.data();
      for (int kk = 0; kk < k; ++kk)
        for (int i = 0; i < m; ++i) {
          const double aik = av[static_cast<size_t>(i) * k + kk];
          const double* grow = g + static_cast<size_t>(i) * n;
          double* brow = gb.data() + static_cast<size_t>(kk) * n;
          for (int j = 0; j < n; ++j) brow[j] += aik * grow[j];
        }
    }
  });
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  if (input.rank() != 3) shape_error("conv2d", input, "input must be (C,H,W)");
  if (kernel.rank() != 4) shape_error("conv2d", kernel, "kernel must be (Cout,Cin,k,k)");
  if (kernel.dim(2) != kernel.dim(3)) shape_error("conv2d", kernel, "kernel must be square");
  if (kernel.dim(1) != input.dim(0)) shape_error("conv2d", input, kernel);
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1 and padding >= 0");
  }
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = kernel.dim(0), k = kernel.dim(2);
  if (h + 2 * padding < k || w + 2 * padding < k) {
    shape_error("conv2d", input, "kernel larger than padded input");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_error("conv2d", bias, kernel);
  }
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (w + 2 * padding - k) / stride + 1;

  Tensor out({cout, ho, wo});
  const double* x = input.data();
  const double* kv = kernel.data();
  double* ov = out.data();
  for (int co = 0; co < cout; ++co) {
    const double b = bias.defined() ? bias.data()[co] : 0.0;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b;
        const int iy0 = oy * stride - padding;
        const int ix0 = ox * stride - padding;
        for (int ci = 0; ci < cin; ++ci) {
          const double* xc = x + (static_cast<size_t>(ci) * h) * w;
          const double* kc = kv + ((static_cast<size_t>(co) * cin + ci) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            const double* xrow = xc + static_cast<size_t>(iy) * w;
            const double* krow = kc + static_cast<size_t>(ky) * k;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              acc += xrow[ix] * krow[kx];
            }
          }
        }
        ov[(static_cast<size_t>(co) * ho + oy) * wo + ox] = acc;
      }
    }
  }

  record({input, kernel, bias}, out,
         [xi = input.impl(), ki = kernel.impl(), bi = bias.defined() ? bias.impl() : Impl{},
          oi = out.impl(), stride, padding, cin, h, w, cout, k, ho, wo](Tape& tp) {
           const std::vector<double>* og = tp.find_grad(oi.get());
           if (!og) return;
           const double* g = og->data();
           std::vector<double>* gx = xi->requires_grad ? &tp.grad_of(xi) : nullptr;
           std::vector<double>* gk = ki->requires_grad ? &tp.grad_of(ki) : nullptr;
           std::vector<double>* gb = (bi && bi->requires_grad) ? &tp.grad_of(bi) : nullptr;
           const double* x = xi->values.data();
           const double* kv = ki->values.data();
           for (int co = 0; co < cout; ++co) {
             for (int oy = 0; oy < ho; ++oy) {
               for (int ox = 0; ox < wo; ++ox) {
                 const double go = g[(static_cast<size_t>(co) * ho + oy) * wo + ox];
                 if (go == 0.0) continue;
                 if (gb) (*gb)[static_cast<size_t>(co)] += go;
                 const int iy0 = oy * stride - padding;
                 const int ix0 = ox * stride - padding;
                 for (int ci = 0; ci < cin; ++ci) {
                   const size_t xoff = (static_cast<size_t>(ci) * h) * w;
                   const size_t koff = ((static_cast<size_t>(co) * cin + ci) * k) * k;
                   for (int ky = 0; ky < k; ++ky) {
                     const int iy = iy0 + ky;
                     if (iy < 0 || iy >= h) continue;
                     for (int kx = 0; kx < k; ++kx) {
                       const int ix = ix0 + kx;
                       if (ix < 0 || ix >= w) continue;
                       const size_t xidx = xoff + static_cast<size_t>(iy) * w + ix;
                       const size_t kidx = koff + static_cast<size_t>(ky) * k + kx;
                       if (gx) (*gx)[xidx] += go * kv[kidx];
                       if (gk) (*gk)[kidx] += go * x[xidx];
                     }
                   }
                 }
               }
             }
           }
         });
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  return conv2d(input, kernel, Tensor(), stride, padding);
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape()) shape_error(name, a, b);
  Tensor out(a.shape());
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  const int n = a.numel();
  for (int i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
  record({a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), bwd, n](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>* ga = ai->requires_grad ? &tp.grad_of(ai) : nullptr;
    std::vector<double>* gb = bi->requires_grad ? &tp.grad_of(bi) : nullptr;
    for (int i = 0; i < n; ++i) {
      bwd((*og)[static_cast<size_t>(i)], ai->values[static_cast<size_t>(i)],
          bi->values[static_cast<size_t>(i)], ga ? &(*ga)[static_cast<size_t>(i)] : nullptr,
          gb ? &(*gb)[static_cast<size_t>(i)] : nullptr);
    }
  });
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  record({x}, out, [xi = x.impl(), oi = out.impl(), bwd, n](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>& gx = tp.grad_of(xi);
    for (int i = 0; i < n; ++i) {
      gx[static_cast<size_t>(i)] +=
          (*og)[static_cast<size_t>(i)] *
          bwd(xi->values[static_cast<size_t>(i)], oi->values[static_cast<size_t>(i)]);
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double* ga, double* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary_elementwise(
      x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = parts[0];
  if (axis < 0 || axis >= first.rank()) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for " +
                                shape_to_string(first.shape()));
  }
  Shape out_shape = first.shape();
  int total = first.dim(axis);
  for (size_t p = 1; p < parts.size(); ++p) {
    const Tensor& t = parts[p];
    if (t.rank() != first.rank()) shape_error("concat", first, t);
    for (int i = 0; i < first.rank(); ++i) {
      if (i != axis && t.dim(i) != first.dim(i)) shape_error("concat", first, t);
    }
    total += t.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  Tensor out(out_shape);
  const AxisSplit s = split_axis(out_shape, axis);
  double* ov = out.data();
  std::vector<Impl> impls;
  std::vector<int> sizes;
  impls.reserve(parts.size());
  int offset = 0;
  for (const Tensor& t : parts) {
    const int len = t.dim(axis);
    const double* tv = t.data();
    for (int o = 0; o < s.outer; ++o) {
      const size_t dst = (static_cast<size_t>(o) * total + offset) * s.inner;
      const size_t src = static_cast<size_t>(o) * len * s.inner;
      for (int i = 0; i < len * s.inner; ++i) ov[dst + i] = tv[src + i];
    }
    offset += len;
    impls.push_back(t.impl());
    sizes.push_back(len);
  }

  bool any = false;
  for (const Tensor& t : parts) any = any || wants_grad(t);
  if (Tape* tape = active_tape(); tape && any) {
    out.impl()->requires_grad = true;
    tape->record(parts, out, [impls, sizes, oi = out.impl(), s, total](Tape& tp) {
      const std::vector<double>* og = tp.find_grad(oi.get());
      if (!og) return;
      int offset = 0;
      for (size_t p = 0; p < impls.size(); ++p) {
        const int len = sizes[p];
        if (impls[p]->requires_grad) {
          std::vector<double>& gt = tp.grad_of(impls[p]);
          for (int o = 0; o < s.outer; ++o) {
            const size_t src = (static_cast<size_t>(o) * total + offset) * s.inner;
            const size_t dst = static_cast<size_t>(o) * len * s.inner;
            for (int i = 0; i < len * s.inner; ++i) gt[dst + i] += (*og)[src + i];
          }
        }
        offset += len;
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts, 2), axis);
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                shape_to_string(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.n == 0) throw std::invalid_argument("softmax: axis of size 0");

  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (int o = 0; o < s.outer; ++o) {
    for (int in = 0; in < s.inner; ++in) {
      const size_t base = static_cast<size_t>(o) * s.n * s.inner + in;
      double mx = xv[base];
      for (int i = 1; i < s.n; ++i) mx = std::max(mx, xv[base + static_cast<size_t>(i) * s.inner]);
      double total = 0.0;
      for (int i = 0; i < s.n; ++i) {
        const double e = std::exp(xv[base + static_cast<size_t>(i) * s.inner] - mx);
        ov[base + static_cast<size_t>(i) * s.inner] = e;
        total += e;
      }
      for (int i = 0; i < s.n; ++i) ov[base + static_cast<size_t>(i) * s.inner] /= total;
    }
  }

  record({x}, out, [xi = x.impl(), oi = out.impl(), s](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>& gx = tp.grad_of(xi);
    const double* y = oi->values.data();
    for (int o = 0; o < s.outer; ++o) {
      for (int in = 0; in < s.inner; ++in) {
        const size_t base = static_cast<size_t>(o) * s.n * s.inner + in;
        double dot = 0.0;
        for (int i = 0; i < s.n; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * s.inner;
          dot += (*og)[idx] * y[idx];
        }
        for (int i = 0; i < s.n; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * s.inner;
          gx[idx] += y[idx] * ((*og)[idx] - dot);
        }
      }
    }
  });
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 3) shape_error("global_avg_pool", x, "input must be (C,H,W)");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int hw = h * w;
  Tensor out({c});
  const double* xv = x.data();
  double* ov = out.data();
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    const double* plane = xv + static_cast<size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) acc += plane[i];
    ov[ch] = acc / hw;
  }
  record({x}, out, [xi = x.impl(), oi = out.impl(), c, hw](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>& gx = tp.grad_of(xi);
    for (int ch = 0; ch < c; ++ch) {
      const double g = (*og)[static_cast<size_t>(ch)] / hw;
      double* plane = gx.data() + static_cast<size_t>(ch) * hw;
      for (int i = 0; i < hw; ++i) plane[i] += g;
    }
  });
  return out;
}

Tensor broadcast_multiply(const Tensor& mask, const Tensor& fmap) {
  if (mask.rank() != 2) shape_error("broadcast_multiply", mask, "mask must be (H,W)");
  if (fmap.rank() != 3) shape_error("broadcast_multiply", fmap, "feature map must be (C,H,W)");
  if (mask.dim(0) != fmap.dim(1) || mask.dim(1) != fmap.dim(2)) {
    shape_error("broadcast_multiply", mask, fmap);
  }
  const int c = fmap.dim(0), hw = mask.numel();
  Tensor out(fmap.shape());
  const double* mv = mask.data();
  const double* fv = fmap.data();
  double* ov = out.data();
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = fv + static_cast<size_t>(ch) * hw;
    double* oplane = ov + static_cast<size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) oplane[i] = mv[i] * plane[i];
  }
  record({mask, fmap}, out, [mi = mask.impl(), fi = fmap.impl(), oi = out.impl(), c, hw](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>* gm = mi->requires_grad ? &tp.grad_of(mi) : nullptr;
    std::vector<double>* gf = fi->requires_grad ? &tp.grad_of(fi) : nullptr;
    const double* mv = mi->values.data();
    const double* fv = fi->values.data();
    for (int ch = 0; ch < c; ++ch) {
      const size_t off = static_cast<size_t>(ch) * hw;
      for (int i = 0; i < hw; ++i) {
        const double g = (*og)[off + i];
        if (gm) (*gm)[static_cast<size_t>(i)] += g * fv[off + i];
        if (gf) (*gf)[off + i] += g * mv[i];
      }
    }
  });
  return out;
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  if (axis < 0 || axis >= x.rank()) {
    throw std::invalid_argument("slice: axis " + std::to_string(axis) + " out of range for " +
                                shape_to_string(x.shape()));
  }
  if (start < 0 || length <= 0 || start + length > x.dim(axis)) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") invalid for axis " +
                                std::to_string(axis) + " of " + shape_to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = length;
  const AxisSplit s = split_axis(x.shape(), axis);

  Tensor out(out_shape);
  const double* xv = x.data();
  double* ov = out.data();
  for (int o = 0; o < s.outer; ++o) {
    const size_t src = (static_cast<size_t>(o) * s.n + start) * s.inner;
    const size_t dst = static_cast<size_t>(o) * length * s.inner;
    for (int i = 0; i < length * s.inner; ++i) ov[dst + i] = xv[src + i];
  }
  record({x}, out, [xi = x.impl(), oi = out.impl(), s, start, length](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>& gx = tp.grad_of(xi);
    for (int o = 0; o < s.outer; ++o) {
      const size_t dst = (static_cast<size_t>(o) * s.n + start) * s.inner;
      const size_t src = static_cast<size_t>(o) * length * s.inner;
      for (int i = 0; i < length * s.inner; ++i) gx[dst + i] += (*og)[src + i];
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                                shape_to_string(new_shape));
  }
  Tensor out(std::move(new_shape), std::vector<double>(x.values()));
  record({x}, out, [xi = x.impl(), oi = out.impl()](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    std::vector<double>& gx = tp.grad_of(xi);
    for (size_t i = 0; i < og->size(); ++i) gx[i] += (*og)[i];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const double* xv = x.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) acc += xv[i];
  Tensor out = Tensor::scalar(acc);
  record({x}, out, [xi = x.impl(), oi = out.impl(), n](Tape& tp) {
    const std::vector<double>* og = tp.find_grad(oi.get());
    if (!og) return;
    const double g = (*og)[0];
    std::vector<double>& gx = tp.grad_of(xi);
    for (int i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += g;
  });
  return out;
}

}  // namespace trajattn
