#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "effloc/rng.hpp"

namespace effloc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One value in the computation graph. Produced tensors own their inputs
/// (parents), so a graph stays alive exactly as long as some result handle
/// does; trainable leaves survive independently in whoever owns them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with optional participation in
/// reverse-mode differentiation. Copying a Tensor copies the handle, not the
/// storage; `clone` makes an independent value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  /// Elements drawn from Normal(0, sigma) truncated at two sigma.
  static Tensor truncated_normal(Shape shape, double sigma, Rng& rng,
                                 bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t i) const { return shape().at(i); }

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;  // scalar tensors only
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  bool has_grad() const;
  std::vector<double>& grad();  // allocates zeros on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Deep copy of the value; no graph history, keeps requires_grad.
  Tensor clone() const;
  /// Value copy detached from the graph, requires_grad = false.
  Tensor detach() const;

  bool all_finite() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Recorded program slice that reaches `root`: the operations in topological
/// order (every node's inputs precede it). `backward` seeds d root/d root = 1
/// and replays the list once, in reverse. Repeated calls accumulate grads.
class Tape {
 public:
  static Tape build(const Tensor& root);
  void backward();
  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> order_;
};

/// Populates grads of every requires_grad tensor reachable from `loss`.
/// `loss` must be scalar.
void backward(const Tensor& loss);

/// While alive, new operations are not recorded on the tape (forward values
/// are still computed). Used for evaluation and finite-difference probes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

}  // namespace effloc
