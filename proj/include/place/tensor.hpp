#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace place {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 array that optionally records the operations
// producing it. Copies share the underlying node; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // 2-D convenience for tests and fixtures.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, no graph history.
  Tensor detach() const;
  Tensor clone() const;

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
  // call zero_grad() on parameters between optimizer steps.
  void backward() const;

  // Internal access for op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- elementwise ---------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

// [m x n] + [n], bias broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);

// ---- reductions ----------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Weighted sum of a list of scalars; the backbone of multi-term objectives.
Tensor linear_combination(std::span<const Tensor> terms, std::span<const double> weights);

// x / sum(x); the sum must be positive.
Tensor normalize_sum(const Tensor& a);

// Mean over the rows of [n x d] (optionally only the listed rows) -> [d].
Tensor mean_pool(const Tensor& x, std::optional<std::span<const std::size_t>> rows = std::nullopt);
Tensor mean_pool_range(const Tensor& x, std::size_t begin, std::size_t end);

// ---- linear algebra ------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Diagonal of a square matrix -> [n].
Tensor diag(const Tensor& a);

// ---- normalization -------------------------------------------------------
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
// Per-row (x - mean) / sqrt(var + eps) * gamma + beta, over the last axis of [n x d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Rows divided by max(||row||, floor). Works on [d] too.
Tensor l2_normalize_rows(const Tensor& x, double floor = 1e-12);

// ---- shape manipulation --------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor row(const Tensor& a, std::size_t index);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
// Stack [d] (or [1 x d]) tensors into [n x d].
Tensor stack_rows(std::span<const Tensor> rows);
// table[ids[i], :] for each i -> [len(ids) x d].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

}  // namespace place
