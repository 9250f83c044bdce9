#include "place/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "place/errors.hpp"

namespace place {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;

NodePtr make_node(Shape shape, std::vector<double> value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor: zero extent in " + shape_str(shape));
  }
  if (numel_of(shape) != value.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(value.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

// Result of an op. Parents and the backward closure are only kept when some
// input needs a gradient and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  auto node = make_node(std::move(shape), std::move(value), needs);
  if (needs) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(node);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Unary elementwise op with derivative expressed through input and output values.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& in = a.node()->value;
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {a.node()}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

// C[m x n] += A[m x k] * B[k x n], all row-major.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += G[m x n] * B[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * G[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                         shape_str(shape));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel_of(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_node({1}, {value}, requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::vector<double> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return from({rows.size(), cols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return from({values.size()}, std::vector<double>(values), requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("dim: axis out of range for " + shape_str(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<double> Tensor::data() { return node_->value; }
std::span<const double> Tensor::data() const { return node_->value; }

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw DimensionError("at: tensor is not 2-D");
  return node_->value[r * node_->shape[1] + c];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor is not a scalar " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) {
  require_defined(*this, "set_requires_grad");
  node_->requires_grad = flag;
}
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }
void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(make_node(node_->shape, node_->value, false));
}

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  auto n = make_node(node_->shape, node_->value, node_->requires_grad);
  n->grad = node_->grad;
  return Tensor(n);
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  return unary(
      a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  require_defined(a, "add_scalar");
  return unary(
      a, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  require_defined(a, "square");
  return unary(
      a, [](double v) { return v * v; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  return unary(
      a, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  require_defined(a, "gelu");
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor add_row(const Tensor& a, const Tensor& r) {
  require_rank(a, 2, "add_row");
  require_rank(r, 1, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (r.dim(0) != n) {
    throw DimensionError("add_row: row length " + std::to_string(r.dim(0)) + " vs " +
                         std::to_string(n) + " columns");
  }
  std::vector<double> out(a.node()->value);
  const auto& rv = r.node()->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  return make_result(a.shape(), std::move(out), {a.node(), r.node()}, [m, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pr = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pr.requires_grad) {
      auto& g = pr.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

// ---- reductions --------------------------------------------------------------

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  const auto& x = a.node()->value;
  const double s = std::accumulate(x.begin(), x.end(), 0.0);
  return make_result({1}, {s}, {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor linear_combination(std::span<const Tensor> terms, std::span<const double> weights) {
  if (terms.size() != weights.size() || terms.empty()) {
    throw DimensionError("linear_combination: need matching, nonempty term and weight lists");
  }
  double s = 0.0;
  std::vector<NodePtr> parents;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].numel() != 1) throw DimensionError("linear_combination: terms must be scalars");
    s += weights[i] * terms[i].item();
    parents.push_back(terms[i].node());
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result({1}, {s}, std::move(parents), [w](Node& self) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      auto& p = self.parents[i];
      if (p->requires_grad) p->ensure_grad()[0] += w[i] * self.grad[0];
    }
  });
}

Tensor normalize_sum(const Tensor& a) {
  require_defined(a, "normalize_sum");
  const auto& x = a.node()->value;
  const double s = std::accumulate(x.begin(), x.end(), 0.0);
  if (!(s > 0.0)) throw DomainError("normalize_sum: entries must have a positive sum");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / s;
  return make_result(a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.grad[i] * self.value[i];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - dot) / s;
  });
}

Tensor mean_pool(const Tensor& x, std::optional<std::span<const std::size_t>> rows) {
  require_rank(x, 2, "mean_pool");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx;
  if (rows) {
    idx.assign(rows->begin(), rows->end());
  } else {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
  }
  if (idx.empty()) throw DomainError("mean_pool: empty row selection");
  for (auto r : idx) {
    if (r >= n) throw DimensionError("mean_pool: row index " + std::to_string(r) + " out of range");
  }
  const auto& v = x.node()->value;
  const double inv = 1.0 / static_cast<double>(idx.size());
  std::vector<double> out(d, 0.0);
  for (auto r : idx)
    for (std::size_t j = 0; j < d; ++j) out[j] += v[r * d + j];
  for (auto& o : out) o *= inv;
  return make_result({d}, std::move(out), {x.node()}, [idx, d, inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (auto r : idx)
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[j] * inv;
  });
}

Tensor mean_pool_range(const Tensor& x, std::size_t begin, std::size_t end) {
  if (end <= begin) throw DomainError("mean_pool: empty row range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return mean_pool(x, std::span<const std::size_t>(idx));
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.node()->value.data(), b.node()->value.data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) gemm_nt(self.grad.data(), pb.value.data(), pa.ensure_grad().data(), m, n, k);
    if (pb.requires_grad) gemm_tn(pa.value.data(), self.grad.data(), pb.ensure_grad().data(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto& v = a.node()->value;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return make_result({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor diag(const Tensor& a) {
  require_rank(a, 2, "diag");
  const std::size_t n = a.dim(0);
  if (a.dim(1) != n) throw DimensionError("diag: matrix is not square " + shape_str(a.shape()));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.node()->value[i * n + i];
  return make_result({n}, std::move(out), {a.node()}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] += self.grad[i];
  });
}

// ---- normalization -------------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const auto l = axis_layout(x.shape(), axis, "softmax");
  const auto& v = x.node()->value;
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.extent * l.inner + in;
      double mx = v[base];
      for (std::size_t e = 1; e < l.extent; ++e) mx = std::max(mx, v[base + e * l.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) {
        const double ex = std::exp(v[base + e * l.inner] - mx);
        out[base + e * l.inner] = ex;
        z += ex;
      }
      for (std::size_t e = 0; e < l.extent; ++e) out[base + e * l.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {x.node()}, [l](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const auto& y = self.value;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.extent * l.inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t i = base + e * l.inner;
          dot += self.grad[i] * y[i];
        }
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t i = base + e * l.inner;
          g[i] += y[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "log_softmax");
  const auto l = axis_layout(x.shape(), axis, "log_softmax");
  const auto& v = x.node()->value;
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.extent * l.inner + in;
      double mx = v[base];
      for (std::size_t e = 1; e < l.extent; ++e) mx = std::max(mx, v[base + e * l.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) z += std::exp(v[base + e * l.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t e = 0; e < l.extent; ++e) out[base + e * l.inner] = v[base + e * l.inner] - lse;
    }
  }
  return make_result(x.shape(), std::move(out), {x.node()}, [l](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const auto& y = self.value;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.extent * l.inner + in;
        double gsum = 0.0;
        for (std::size_t e = 0; e < l.extent; ++e) gsum += self.grad[base + e * l.inner];
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t i = base + e * l.inner;
          g[i] += self.grad[i] - std::exp(y[i]) * gsum;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gamma.dim(0) != d || beta.dim(0) != d) throw DimensionError("layer_norm: affine width mismatch");
  const auto& v = x.node()->value;
  const auto& gm = gamma.node()->value;
  const auto& bt = beta.node()->value;
  std::vector<double> out(v.size());
  std::vector<double> xhat(v.size());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = v.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += r[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (r[j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gm[j] + bt[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& gm = pg.value;
        if (pg.requires_grad) {
          auto& g = pg.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j] * xhat[i * d + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
        }
        if (px.requires_grad) {
          auto& g = px.ensure_grad();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < n; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dy = self.grad[i * d + j] * gm[j];
              s1 += dy;
              s2 += dy * xhat[i * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dy = self.grad[i * d + j] * gm[j];
              g[i * d + j] += inv_std[i] * (dy - inv_d * s1 - xhat[i * d + j] * inv_d * s2);
            }
          }
        }
      });
}

Tensor l2_normalize_rows(const Tensor& x, double floor) {
  require_defined(x, "l2_normalize_rows");
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("l2_normalize_rows: rank must be 1 or 2");
  const std::size_t n = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t d = x.rank() == 2 ? x.dim(1) : x.dim(0);
  const auto& v = x.node()->value;
  std::vector<double> out(v.size());
  std::vector<double> denom(n);
  std::vector<bool> floored(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += v[i * d + j] * v[i * d + j];
    const double norm = std::sqrt(ss);
    floored[i] = norm < floor;
    denom[i] = floored[i] ? floor : norm;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] / denom[i];
  }
  return make_result(x.shape(), std::move(out), {x.node()},
                     [n, d, denom = std::move(denom), floored = std::move(floored)](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       const auto& y = self.value;
                       for (std::size_t i = 0; i < n; ++i) {
                         double dot = 0.0;
                         if (!floored[i]) {
                           for (std::size_t j = 0; j < d; ++j) dot += y[i * d + j] * self.grad[i * d + j];
                         }
                         for (std::size_t j = 0; j < d; ++j) {
                           g[i * d + j] += (self.grad[i * d + j] - y[i * d + j] * dot) / denom[i];
                         }
                       }
                     });
}

// ---- shape manipulation --------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (numel_of(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), a.node()->value, {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor row(const Tensor& a, std::size_t index) {
  require_rank(a, 2, "row");
  if (index >= a.dim(0)) throw DimensionError("row: index out of range");
  return reshape(slice_rows(a, index, 1), {a.dim(1)});
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  const std::size_t d = a.dim(1);
  if (count == 0 || begin + count > a.dim(0)) throw DimensionError("slice_rows: range out of bounds");
  const auto& v = a.node()->value;
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * d),
                          v.begin() + static_cast<std::ptrdiff_t>((begin + count) * d));
  return make_result({count, d}, std::move(out), {a.node()}, [begin, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (count == 0 || begin + count > n) throw DimensionError("slice_cols: range out of bounds");
  const auto& v = a.node()->value;
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * n + begin + j];
  return make_result({m, count}, std::move(out), {a.node()}, [m, n, begin, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::vector<NodePtr> parents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
    parents.push_back(p.node());
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].node()->value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = v[i * widths[k] + j];
    off += widths[k];
  }
  return make_result({m, total}, std::move(out), std::move(parents), [m, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t d = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  std::vector<NodePtr> parents;
  for (const auto& r : rows) {
    require_defined(r, "stack_rows");
    if (r.numel() != d || r.rank() > 2 || (r.rank() == 2 && r.dim(0) != 1)) {
      throw DimensionError("stack_rows: rows must all be [" + std::to_string(d) + "]");
    }
    out.insert(out.end(), r.node()->value.begin(), r.node()->value.end());
    parents.push_back(r.node());
  }
  return make_result({rows.size(), d}, std::move(out), std::move(parents), [d](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[k * d + j];
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const std::size_t n = table.dim(0), d = table.dim(1);
  const auto& v = table.node()->value;
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " >= " + std::to_string(n));
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table.node()}, [idx, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
  });
}

}  // namespace place
