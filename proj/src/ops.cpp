#include <cmath>
#include <stdexcept>

#include "lazyrec/autodiff.hpp"
#include "lazyrec/kernels.hpp"

namespace lazyrec::ad {

namespace {

Var make_result(Array value, const char* op, const std::vector<Var>& inputs,
                std::function<void(Node&)> bw) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string("op '") + op + "' produced non-finite values");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  bool track = false;
  if (grad_enabled()) {
    for (const Var& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var& in : inputs) node->parents.push_back(in.shared());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

bool wants_grad(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size());
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = s;
    s *= shape[i];
  }
  return strides;
}

// Visits every element of `shape` in row-major order, tracking an offset into
// up to two operands described by per-axis strides.
template <class F>
void strided_loop(const Shape& shape, const std::vector<std::size_t>& sa,
                  const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = shape_size(shape);
  const std::size_t rank = shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < shape[d]) break;
      ia -= sa[d] * shape[d];
      ib -= sb[d] * shape[d];
      idx[d] = 0;
    }
  }
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool same = false;
};

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  p.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] == pb[d] || pb[d] == 1) {
      p.out[d] = pa[d];
    } else if (pa[d] == 1) {
      p.out[d] = pb[d];
    } else {
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_to_string(a) +
                                  " and " + shape_to_string(b) + " do not broadcast");
    }
  }
  auto ca = contiguous_strides(pa), cb = contiguous_strides(pb);
  p.sa.resize(rank);
  p.sb.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    p.sa[d] = pa[d] == 1 ? 0 : ca[d];
    p.sb[d] = pb[d] == 1 ? 0 : cb[d];
  }
  return p;
}

template <class F>
void broadcast_loop(const BroadcastPlan& p, F&& f) {
  if (p.same) {
    const std::size_t n = shape_size(p.out);
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
  } else {
    strided_loop(p.out, p.sa, p.sb, f);
  }
}

// Shared implementation of the four broadcasting binary ops. `fwd` maps
// (a, b) to the output; `da`/`db` give the local partials.
template <class Fwd, class Da, class Db>
Var binary_op(const Var& a, const Var& b, const char* op, Fwd fwd, Da da, Db db) {
  BroadcastPlan plan = broadcast_plan(a.shape(), b.shape(), op);
  Array out(plan.out);
  const Array& av = a.value();
  const Array& bv = b.value();
  broadcast_loop(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(av[ia], bv[ib]);
  });
  return make_result(std::move(out), op, {a, b}, [plan, da, db](Node& self) {
    const Array& g = self.grad;
    const Array& av = self.parents[0]->value;
    const Array& bv = self.parents[1]->value;
    const bool ga_on = wants_grad(self, 0), gb_on = wants_grad(self, 1);
    Array* ga = ga_on ? &self.parents[0]->grad_buffer() : nullptr;
    Array* gb = gb_on ? &self.parents[1]->grad_buffer() : nullptr;
    broadcast_loop(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) (*ga)[ia] += g[i] * da(av[ia], bv[ib]);
      if (gb) (*gb)[ib] += g[i] * db(av[ia], bv[ib]);
    });
  });
}

std::size_t last_dim(const Array& x) { return x.rank() == 0 ? 1 : x.shape().back(); }

void require_rank_at_least(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() < rank) {
    throw std::invalid_argument(std::string(op) + ": needs rank >= " + std::to_string(rank) +
                                ", got " + shape_to_string(x.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool trans_b) {
  require_rank_at_least(a, 2, "matmul");
  require_rank_at_least(b, 2, "matmul");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t bk = trans_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = trans_b ? bs[bs.size() - 2] : bs.back();
  if (bk != k) {
    throw std::invalid_argument("matmul: inner extents differ for " + shape_to_string(as) +
                                " x " + shape_to_string(bs) + (trans_b ? "^T" : ""));
  }
  const bool broadcast_b = bs.size() == 2;
  if (!broadcast_b && (bs.size() != as.size() ||
                       !std::equal(as.begin(), as.end() - 2, bs.begin()))) {
    throw std::invalid_argument("matmul: batch extents differ for " + shape_to_string(as) +
                                " x " + shape_to_string(bs));
  }
  const std::size_t batch = a.size() / (m * k);
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  Array out(out_shape);
  const std::size_t stride_b = broadcast_b ? 0 : k * n;
  kernels::gemm(false, trans_b, batch, m, n, k, a.value().ptr(), m * k, b.value().ptr(),
                stride_b, out.ptr(), m * n, false);

  return make_result(std::move(out), "matmul", {a, b},
                     [=](Node& self) {
                       const double* g = self.grad.ptr();
                       const double* av = self.parents[0]->value.ptr();
                       const double* bv = self.parents[1]->value.ptr();
                       if (wants_grad(self, 0)) {
                         double* ga = self.parents[0]->grad_buffer().ptr();
                         // dA = dC * op(B)^T
                         kernels::gemm(false, !trans_b, batch, m, k, n, g, m * n, bv,
                                       stride_b, ga, m * k, true);
                       }
                       if (wants_grad(self, 1)) {
                         double* gb = self.parents[1]->grad_buffer().ptr();
                         const std::size_t bb = broadcast_b ? 1 : batch;
                         const std::size_t rows = broadcast_b ? batch * m : m;
                         if (!trans_b) {
                           // dB = A^T * dC
                           kernels::gemm(true, false, bb, k, n, rows, av, rows * k, g,
                                         rows * n, gb, k * n, true);
                         } else {
                           // dB = dC^T * A
                           kernels::gemm(true, false, bb, n, k, rows, g, rows * n, av,
                                         rows * k, gb, k * n, true);
                         }
                       }
                     });
}

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var scale(const Var& x, double c) {
  Array out = x.value();
  for (double& v : out.mutable_data()) v *= c;
  return make_result(std::move(out), "scale", {x}, [c](Node& self) {
    Array& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

Var add_scalar(const Var& x, double c) {
  Array out = x.value();
  for (double& v : out.mutable_data()) v += c;
  return make_result(std::move(out), "add_scalar", {x}, [](Node& self) {
    Array& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var softmax(const Var& x, const std::vector<std::uint8_t>* mask, std::size_t mask_rows) {
  const std::size_t cols = last_dim(x.value());
  const std::size_t rows = x.size() / cols;
  if (mask && (mask_rows == 0 || mask->size() != mask_rows * cols || rows % mask_rows != 0)) {
    throw std::invalid_argument("softmax: mask of " + std::to_string(mask ? mask->size() : 0) +
                                " entries does not tile " + shape_to_string(x.shape()));
  }
  Array out(x.shape());
  kernels::softmax_rows(x.value().ptr(), out.ptr(), rows, cols, mask ? mask->data() : nullptr,
                        mask_rows);
  return make_result(std::move(out), "softmax", {x}, [rows, cols](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const Array& y = self.value;
    const Array& g = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        gx[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
      }
    }
  });
}

Var log_softmax(const Var& x) {
  const std::size_t cols = last_dim(x.value());
  const std::size_t rows = x.size() / cols;
  Array out(x.shape());
  kernels::log_softmax_rows(x.value().ptr(), out.ptr(), rows, cols);
  return make_result(std::move(out), "log_softmax", {x}, [rows, cols](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const Array& y = self.value;
    const Array& g = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        gx[r * cols + j] += g[r * cols + j] - std::exp(y[r * cols + j]) * gsum;
      }
    }
  });
}

Var rmsnorm(const Var& x, const Var& gain, double eps) {
  const std::size_t cols = last_dim(x.value());
  const std::size_t rows = x.size() / cols;
  if (gain.value().rank() != 1 || gain.size() != cols) {
    throw std::invalid_argument("rmsnorm: gain shape " + shape_to_string(gain.shape()) +
                                " does not match input " + shape_to_string(x.shape()));
  }
  Array out(x.shape());
  auto inv_rms = std::make_shared<std::vector<double>>(rows);
  kernels::rmsnorm_forward(x.value().ptr(), gain.value().ptr(), out.ptr(), inv_rms->data(),
                           rows, cols, eps);
  return make_result(std::move(out), "rmsnorm", {x, gain}, [rows, cols, inv_rms](Node& self) {
    const Array& xv = self.parents[0]->value;
    const Array& gv = self.parents[1]->value;
    // Both buffers are needed by the fused kernel; discard the unwanted one.
    Array scratch_x, scratch_g;
    double* dx = wants_grad(self, 0) ? self.parents[0]->grad_buffer().ptr()
                                     : (scratch_x = Array(xv.shape())).ptr();
    double* dg = wants_grad(self, 1) ? self.parents[1]->grad_buffer().ptr()
                                     : (scratch_g = Array(gv.shape())).ptr();
    kernels::rmsnorm_backward(xv.ptr(), gv.ptr(), inv_rms->data(), self.grad.ptr(), dx, dg,
                              rows, cols);
  });
}

Var silu(const Var& x) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  return make_result(std::move(out), "silu", {x}, [](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const Array& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Var log(const Var& x) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i]);
  return make_result(std::move(out), "log", {x}, [](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const Array& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] / xv[i];
  });
}

Var exp(const Var& x) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  return make_result(std::move(out), "exp", {x}, [](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * self.value[i];
  });
}

Var max_with_constant(const Var& x, double c) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(xv[i], c);
  return make_result(std::move(out), "max_with_constant", {x}, [c](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const Array& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] >= c) gx[i] += self.grad[i];
    }
  });
}

Var clamp(const Var& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
  return make_result(std::move(out), "clamp", {x}, [lo, hi](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const Array& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] >= lo && xv[i] <= hi) gx[i] += self.grad[i];
    }
  });
}

Var minimum(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("minimum: shapes " + shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()) + " differ");
  }
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.value()[i], b.value()[i]);
  return make_result(std::move(out), "minimum", {a, b}, [](Node& self) {
    const Array& av = self.parents[0]->value;
    const Array& bv = self.parents[1]->value;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const std::size_t which = av[i] <= bv[i] ? 0 : 1;
      if (wants_grad(self, which)) self.parents[which]->grad_buffer()[i] += self.grad[i];
    }
  });
}

Var embedding_lookup(const Var& table, const std::vector<std::size_t>& ids,
                     const Shape& ids_shape) {
  if (table.value().rank() != 2) {
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " +
                                shape_to_string(table.shape()));
  }
  if (shape_size(ids_shape) != ids.size()) {
    throw std::invalid_argument("embedding_lookup: ids do not match shape " +
                                shape_to_string(ids_shape));
  }
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  Array out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(rows) + " rows");
    }
    std::copy_n(table.value().ptr() + ids[i] * d, d, out.ptr() + i * d);
  }
  return make_result(std::move(out), "embedding_lookup", {table}, [ids, d](Node& self) {
    Array& gt = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += self.grad[i * d + j];
    }
  });
}

namespace {

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw std::invalid_argument("concat: shape " + shape_to_string(s) +
                                  " incompatible with " + shape_to_string(first));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit os = split_at(out_shape, axis);
  Array out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& x : xs) {
    offsets.push_back(offset);
    const AxisSplit xsplit = split_at(x.shape(), axis);
    const std::size_t block = xsplit.extent * xsplit.inner;
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(x.value().ptr() + o * block, block,
                  out.ptr() + o * os.extent * os.inner + offset * os.inner);
    }
    offset += xsplit.extent;
  }
  return make_result(std::move(out), "concat", xs, [os, offsets, axis](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (!wants_grad(self, p)) continue;
      Array& gx = self.parents[p]->grad_buffer();
      const std::size_t block = gx.shape()[axis] * os.inner;
      for (std::size_t o = 0; o < os.outer; ++o) {
        const double* src = self.grad.ptr() + o * os.extent * os.inner + offsets[p] * os.inner;
        double* dst = gx.ptr() + o * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw std::invalid_argument("slice: [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") on axis " + std::to_string(axis) +
                                " invalid for " + shape_to_string(s));
  }
  const AxisSplit is = split_at(s, axis);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Array out(out_shape);
  const std::size_t block = (end - begin) * is.inner;
  for (std::size_t o = 0; o < is.outer; ++o) {
    std::copy_n(x.value().ptr() + o * is.extent * is.inner + begin * is.inner, block,
                out.ptr() + o * block);
  }
  return make_result(std::move(out), "slice", {x}, [is, begin, block](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < is.outer; ++o) {
      double* dst = gx.ptr() + o * is.extent * is.inner + begin * is.inner;
      const double* src = self.grad.ptr() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

Var reduce_sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(Array::scalar(s), "reduce_sum", {x}, [](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var reduce_sum(const Var& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw std::invalid_argument("reduce_sum: axis out of range");
  const AxisSplit sp = split_at(s, axis);
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Array out(out_shape);
  const Array& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double acc = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) acc += xv[(o * sp.extent + e) * sp.inner + i];
      out[o * sp.inner + i] = acc;
    }
  }
  return make_result(std::move(out), "reduce_sum_axis", {x}, [sp](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t e = 0; e < sp.extent; ++e) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          gx[(o * sp.extent + e) * sp.inner + i] += self.grad[o * sp.inner + i];
        }
      }
    }
  });
}

Var reduce_mean(const Var& x) {
  return scale(reduce_sum(x), 1.0 / static_cast<double>(x.size()));
}

Var reduce_mean(const Var& x, std::size_t axis) {
  if (axis >= x.shape().size()) throw std::invalid_argument("reduce_mean: axis out of range");
  return scale(reduce_sum(x, axis), 1.0 / static_cast<double>(x.shape()[axis]));
}

Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets) {
  if (logits.value().rank() != 2 || logits.shape()[0] != targets.size()) {
    throw std::invalid_argument("cross_entropy: logits " + shape_to_string(logits.shape()) +
                                " vs " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  auto logp = std::make_shared<Array>(logits.shape());
  kernels::log_softmax_rows(logits.value().ptr(), logp->ptr(), rows, cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw std::out_of_range("cross_entropy: target out of range");
    loss -= (*logp)[r * cols + targets[r]];
  }
  loss /= static_cast<double>(rows);
  return make_result(Array::scalar(loss), "cross_entropy", {logits},
                     [logp, targets, rows, cols](Node& self) {
                       Array& gx = self.parents[0]->grad_buffer();
                       const double g = self.grad[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < cols; ++j) {
                           const double p = std::exp((*logp)[r * cols + j]);
                           gx[r * cols + j] += g * (p - (j == targets[r] ? 1.0 : 0.0));
                         }
                       }
                     });
}

Var reshape(const Var& x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), "reshape", {x}, [](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Var permute(const Var& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size()) throw std::invalid_argument("permute: axes rank mismatch");
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  const auto in_strides = contiguous_strides(s);
  std::vector<std::size_t> strides(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || seen[axes[i]]) {
      throw std::invalid_argument("permute: axes are not a permutation");
    }
    seen[axes[i]] = true;
    out_shape[i] = s[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  Array out(out_shape);
  const Array& xv = x.value();
  const std::vector<std::size_t> none(s.size(), 0);
  strided_loop(out_shape, strides, none,
               [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = xv[ia]; });
  return make_result(std::move(out), "permute", {x}, [out_shape, strides, none](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    strided_loop(out_shape, strides, none,
                 [&](std::size_t i, std::size_t ia, std::size_t) { gx[ia] += self.grad[i]; });
  });
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& rows) {
  require_rank_at_least(x, 1, "gather_rows");
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty row list");
  const std::size_t n = x.shape()[0];
  const std::size_t inner = x.size() / n;
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Array out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw std::out_of_range("gather_rows: row out of range");
    std::copy_n(x.value().ptr() + rows[i] * inner, inner, out.ptr() + i * inner);
  }
  return make_result(std::move(out), "gather_rows", {x}, [rows, inner](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < inner; ++j) gx[rows[i] * inner + j] += self.grad[i * inner + j];
    }
  });
}

Var scatter_rows(const Var& x, const std::vector<std::size_t>& rows, std::size_t n_rows) {
  require_rank_at_least(x, 1, "scatter_rows");
  if (x.shape()[0] != rows.size()) throw std::invalid_argument("scatter_rows: row count mismatch");
  const std::size_t inner = x.size() / rows.size();
  Shape out_shape = x.shape();
  out_shape[0] = n_rows;
  Array out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_rows) throw std::out_of_range("scatter_rows: row out of range");
    for (std::size_t j = 0; j < inner; ++j) out[rows[i] * inner + j] += x.value()[i * inner + j];
  }
  return make_result(std::move(out), "scatter_rows", {x}, [rows, inner](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < inner; ++j) gx[i * inner + j] += self.grad[rows[i] * inner + j];
    }
  });
}

Var pick(const Var& x, const std::vector<std::size_t>& index) {
  if (x.value().rank() != 2 || x.shape()[0] != index.size()) {
    throw std::invalid_argument("pick: input " + shape_to_string(x.shape()) + " vs " +
                                std::to_string(index.size()) + " indices");
  }
  const std::size_t cols = x.shape()[1];
  Array out(Shape{index.size()});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= cols) throw std::out_of_range("pick: index out of range");
    out[r] = x.value()[r * cols + index[r]];
  }
  return make_result(std::move(out), "pick", {x}, [index, cols](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < index.size(); ++r) gx[r * cols + index[r]] += self.grad[r];
  });
}

Var stop_gradient(const Var& x) {
  // No parents are recorded, so backward never reaches x through this node.
  auto node = std::make_shared<Node>();
  node->value = x.value();
  node->op = "stop_gradient";
  node->is_leaf = false;
  return Var(std::move(node));
}

}  // namespace lazyrec::ad
