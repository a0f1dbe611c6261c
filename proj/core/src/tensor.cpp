#include "effloc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "effloc/errors.hpp"

namespace effloc {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(shape_numel(shape), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return full(Shape{}, v, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("from_data: shape " + shape_str(shape) +
                         " does not match data length " +
                         std::to_string(data.size()));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::truncated_normal(Shape shape, double sigma, Rng& rng,
                                bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.truncated_normal(sigma);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->numel();
}

std::vector<double>& Tensor::values() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item(): tensor has " + std::to_string(numel()) +
                        " elements, expected 1");
  }
  return values()[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw DimensionError("at(): rank mismatch");
  std::size_t off = 0;
  std::size_t i = 0;
  for (std::size_t v : idx) {
    if (v >= s[i]) throw DimensionError("at(): index out of range");
    off = off * s[i] + v;
    ++i;
  }
  return values()[off];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  if (!node_) throw ContractError("use of undefined tensor");
  node_->requires_grad = v;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

std::vector<double>& Tensor::grad() {
  if (!node_) throw ContractError("use of undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad(): no gradient present");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::clone() const {
  return from_data(shape(), values(), requires_grad());
}

Tensor Tensor::detach() const { return from_data(shape(), values(), false); }

bool Tensor::all_finite() const {
  for (double v : values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tape Tape::build(const Tensor& root) {
  Tape tape;
  tape.root_ = root.node();
  if (!tape.root_) throw ContractError("Tape: undefined root");

  // Iterative post-order DFS; parents are emitted before their consumers, so
  // `order_` is a topological order of the recorded operations.
  std::unordered_set<const detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (tape.root_->requires_grad) {
    stack.push_back({tape.root_.get(), 0});
    visited.insert(tape.root_.get());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      tape.order_.push_back(f.node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (!root_) throw ContractError("Tape: undefined root");
  if (root_->numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(root_->shape));
  }
  root_->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

void backward(const Tensor& loss) { Tape::build(loss).backward(); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace effloc
