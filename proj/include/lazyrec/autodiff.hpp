#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lazyrec/array.hpp"

// Minimal reverse-mode automatic differentiation over dense arrays.
//
// Graphs are rebuilt on every forward pass. A Var is a shared handle to a
// Node; op outputs are immutable once created, leaves created with
// `parameter()` may be updated in place by optimizers between steps.
// Gradients of leaves accumulate across backward() calls until zeroed.
namespace lazyrec::ad {

struct Node {
  Array value;
  Array grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool is_leaf = true;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Zero-initialized on first use.
  Array& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Array& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& op() const { return node_->op; }

  // Gradient accumulated so far; zeros if none has flowed in.
  Array grad() const;

  // In-place access for optimizers and perturbation checks. Leaves only.
  Array& mutable_value();
  void zero_grad();

  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var parameter(Array value);
Var constant(Array value);
Var constant_scalar(double value);

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Propagates d(output)/d(node) into every reachable node requiring grad.
// `output` must hold exactly one element.
void backward(const Var& output);

void zero_grad(std::span<Var> params);

// --- ops -------------------------------------------------------------------

// a: [..., m, k]; b: [k, n] (broadcast over a's leading dims) or
// [..., k, n] with leading dims equal to a's. With trans_b, b stores the
// transpose ([n, k] / [..., n, k]).
Var matmul(const Var& a, const Var& b, bool trans_b = false);

// Elementwise with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);

// Softmax over the last axis. `mask` (optional, 0 = excluded) covers the
// trailing [mask_rows, last-dim] block and repeats over leading rows.
Var softmax(const Var& x, const std::vector<std::uint8_t>* mask = nullptr,
            std::size_t mask_rows = 1);
Var log_softmax(const Var& x);

// x / sqrt(mean(x^2, last axis) + eps) * gain; gain has the last-axis extent.
Var rmsnorm(const Var& x, const Var& gain, double eps);

Var silu(const Var& x);
Var log(const Var& x);
Var exp(const Var& x);

// max(x, c) elementwise; gradient passes where x >= c.
Var max_with_constant(const Var& x, double c);
// clamp(x, lo, hi); gradient passes where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);
// Elementwise minimum of equal-shaped inputs; ties route gradient to `a`.
Var minimum(const Var& a, const Var& b);

// table: [rows, d]; returns ids_shape + [d].
Var embedding_lookup(const Var& table, const std::vector<std::size_t>& ids,
                     const Shape& ids_shape);

Var concat(const std::vector<Var>& xs, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);

Var reduce_sum(const Var& x);
Var reduce_sum(const Var& x, std::size_t axis);
Var reduce_mean(const Var& x);
Var reduce_mean(const Var& x, std::size_t axis);

// Mean over rows of -log softmax(logits)[row, target]; logits: [rows, V].
Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& axes);

// Treats x as [R, ...]: out[i] = x[rows[i]].
Var gather_rows(const Var& x, const std::vector<std::size_t>& rows);
// Inverse of gather_rows: out has n_rows rows, out[rows[i]] += x[i].
Var scatter_rows(const Var& x, const std::vector<std::size_t>& rows, std::size_t n_rows);

// x: [R, V] -> [R], out[r] = x[r, index[r]].
Var pick(const Var& x, const std::vector<std::size_t>& index);

// Same value; no gradient reaches x.
Var stop_gradient(const Var& x);

// --- verification ----------------------------------------------------------

// max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12)
// for a scalar function f of a single array argument.
double finite_difference_check(const std::function<Var(const Var&)>& f, const Array& theta,
                               double h);

// Same check for a loss closure over existing parameters, perturbing their
// values in place (restored afterwards). When max_coords_per_param > 0, a
// seeded subset of at most that many coordinates is checked per parameter.
double finite_difference_check(const std::function<Var()>& loss, std::span<Var> params,
                               double h, std::size_t max_coords_per_param = 0,
                               std::uint64_t seed = 0);

}  // namespace lazyrec::ad
