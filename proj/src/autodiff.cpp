#include "lazyrec/autodiff.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace lazyrec::ad {

namespace {
thread_local bool t_grad_enabled = true;
}

Array& Node::grad_buffer() {
  if (!has_grad) {
    grad = Array(value.shape(), 0.0);
    has_grad = true;
  }
  return grad;
}

Array Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Array(node_->value.shape(), 0.0);
}

Array& Var::mutable_value() {
  if (!node_->is_leaf) {
    throw std::logic_error("mutable_value() is only available on leaf nodes (op '" +
                           node_->op + "')");
  }
  return node_->value;
}

void Var::zero_grad() { node_->has_grad = false; }

Var parameter(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  return Var(std::move(node));
}

Var constant(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var constant_scalar(double value) { return constant(Array::scalar(value)); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& output) {
  if (output.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar output, got shape " +
                                shape_to_string(output.shape()));
  }
  Node* root = const_cast<Node*>(output.node());
  if (!root->requires_grad) return;

  // Iterative post-order DFS; order holds children before parents reversed.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->is_leaf) node->has_grad = false;
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->has_grad) node->backward(*node);
  }
}

void zero_grad(std::span<Var> params) {
  for (Var& p : params) p.zero_grad();
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

double checked_eval(const std::function<double()>& f) {
  const double v = f();
  if (!std::isfinite(v)) {
    throw std::domain_error("finite_difference_check: non-finite function value");
  }
  return v;
}

}  // namespace

double finite_difference_check(const std::function<Var(const Var&)>& f, const Array& theta,
                               double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h must be > 0");
  Var p = parameter(theta);
  Var y = f(p);
  backward(y);
  const Array analytic = p.grad();

  double worst = 0.0;
  Array probe = theta;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = checked_eval([&] { return f(constant(probe)).item(); });
    probe[i] = theta[i] - h;
    const double fm = checked_eval([&] { return f(constant(probe)).item(); });
    probe[i] = theta[i];
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

double finite_difference_check(const std::function<Var()>& loss, std::span<Var> params,
                               double h, std::size_t max_coords_per_param,
                               std::uint64_t seed) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h must be > 0");
  zero_grad(params);
  backward(loss());
  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.grad());

  std::mt19937_64 rng(seed);
  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Array& value = params[pi].mutable_value();
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param > 0 && coords.size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double saved = value[i];
      value[i] = saved + h;
      const double fp = checked_eval([&] { return loss().item(); });
      value[i] = saved - h;
      const double fm = checked_eval([&] { return loss().item(); });
      value[i] = saved;
      worst = std::max(worst, relative_error(analytic[pi][i], (fp - fm) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace lazyrec::ad
