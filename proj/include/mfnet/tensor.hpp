#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mfnet/common.hpp"

namespace mfnet {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

// Reverse-mode tape node. `backward` reads this node's grad and accumulates
// into its parents' grads; closures reach inputs through `parents` so the
// graph owns no reference cycles.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  int64_t numel() const { return static_cast<int64_t>(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

// Whether new ops record backward closures. Disabled under NoGradGuard so
// inference frees intermediates as soon as they go out of scope.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
class TensorT {
 public:
  using Node = detail::TensorNode<T>;

  TensorT() = default;

  static TensorT zeros(const Shape& shape, bool requires_grad = false) {
    return filled(shape, T(0), requires_grad);
  }

  static TensorT filled(const Shape& shape, T value, bool requires_grad = false) {
    check_shape(shape);
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->values.assign(static_cast<size_t>(shape_numel(shape)), value);
    node->requires_grad = requires_grad;
    return TensorT(std::move(node));
  }

  static TensorT from_values(const Shape& shape, std::vector<T> values,
                             bool requires_grad = false) {
    check_shape(shape);
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values for shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return TensorT(std::move(node));
  }

  static TensorT scalar(T value) { return from_values({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t dim(int64_t i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }

  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->values.size(); }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) {
      throw ShapeError("item: tensor has shape " + shape_str(shape()) + ", expected one element");
    }
    return node_->values[0];
  }

  // Reverse pass from a scalar root. Walks the tape in reverse topological
  // order; each visited node's grad is complete before its backward runs.
  void backward() {
    if (numel() != 1) {
      throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                  shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    visited.insert(node_.get());
    stack.emplace_back(node_.get(), 0);
    while (!stack.empty()) {
      auto& top = stack.back();
      if (top.second < top.first->parents.size()) {
        Node* parent = top.first->parents[top.second++].get();
        if (parent->requires_grad && visited.insert(parent).second) {
          stack.emplace_back(parent, 0);
        }
      } else {
        order.push_back(top.first);
        stack.pop_back();
      }
    }

    node_->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward) n->backward(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }
  static TensorT wrap(std::shared_ptr<Node> node) { return TensorT(std::move(node)); }

 private:
  explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: rank-0 shapes are not supported");
    for (int64_t d : shape) {
      if (d <= 0) throw ShapeError("tensor: nonpositive dimension in " + shape_str(shape));
    }
  }

  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <typename T>
void check_finite_values(const char* op, const std::vector<T>& values) {
  if (!debug_check_finite_enabled()) return;
  for (T v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

// Builds an op result node. The backward closure is only attached when grad
// mode is on and some input requires grad.
template <typename T>
TensorT<T> make_op(const char* op, Shape shape, std::vector<T> values,
                   std::initializer_list<TensorT<T>> inputs,
                   std::function<void(TensorNode<T>&)> backward) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  check_finite_values(op, node->values);
  bool needs = false;
  if (grad_mode()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return TensorT<T>::wrap(std::move(node));
}

template <typename T>
void require_same_shape(const char* op, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_op<T>("add", a.shape(), std::move(out), {a, b},
                            [](detail::TensorNode<T>& self) {
                              for (auto& p : self.parents) {
                                if (!p->requires_grad) continue;
                                p->ensure_grad();
                                detail::accumulate(p->grad, self.grad);
                              }
                            });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::make_op<T>("sub", a.shape(), std::move(out), {a, b},
                            [](detail::TensorNode<T>& self) {
                              auto& pa = self.parents[0];
                              auto& pb = self.parents[1];
                              if (pa->requires_grad) {
                                pa->ensure_grad();
                                detail::accumulate(pa->grad, self.grad);
                              }
                              if (pb->requires_grad) {
                                pb->ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i) {
                                  pb->grad[i] -= self.grad[i];
                                }
                              }
                            });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return detail::make_op<T>("mul", a.shape(), std::move(out), {a, b},
                            [](detail::TensorNode<T>& self) {
                              auto& pa = self.parents[0];
                              auto& pb = self.parents[1];
                              if (pa->requires_grad) {
                                pa->ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i) {
                                  pa->grad[i] += self.grad[i] * pb->values[i];
                                }
                              }
                              if (pb->requires_grad) {
                                pb->ensure_grad();
                                for (size_t i = 0; i < self.grad.size(); ++i) {
                                  pb->grad[i] += self.grad[i] * pa->values[i];
                                }
                              }
                            });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, double s) {
  std::vector<T> out(a.values());
  const T ts = static_cast<T>(s);
  for (auto& v : out) v *= ts;
  return detail::make_op<T>("scale", a.shape(), std::move(out), {a},
                            [ts](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                p->grad[i] += ts * self.grad[i];
                              }
                            });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  std::vector<T> out(a.values().size());
  const auto& av = a.values();
  for (size_t i = 0; i < out.size(); ++i) {
    const double x = static_cast<double>(av[i]);
    // Evaluate through exp(-|x|) so neither branch overflows.
    const double e = std::exp(-std::abs(x));
    out[i] = static_cast<T>(x >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e));
  }
  return detail::make_op<T>("sigmoid", a.shape(), std::move(out), {a},
                            [](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                const T y = self.values[i];
                                p->grad[i] += self.grad[i] * y * (T(1) - y);
                              }
                            });
}

// Elementwise |x| with subgradient 0 at x = 0.
template <typename T>
TensorT<T> abs(const TensorT<T>& a) {
  std::vector<T> out(a.values());
  for (auto& v : out) v = v < T(0) ? -v : v;
  return detail::make_op<T>("abs", a.shape(), std::move(out), {a},
                            [](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                const T x = p->values[i];
                                const T s = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
                                p->grad[i] += self.grad[i] * s;
                              }
                            });
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<size_t>(m * n), T(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const T aik = av[static_cast<size_t>(i * k + kk)];
      for (int64_t j = 0; j < n; ++j) {
        out[static_cast<size_t>(i * n + j)] += aik * bv[static_cast<size_t>(kk * n + j)];
      }
    }
  }
  return detail::make_op<T>(
      "matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::TensorNode<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          // dA = dY * B^T
          for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < n; ++j) {
              const T g = self.grad[static_cast<size_t>(i * n + j)];
              for (int64_t kk = 0; kk < k; ++kk) {
                pa->grad[static_cast<size_t>(i * k + kk)] +=
                    g * pb->values[static_cast<size_t>(kk * n + j)];
              }
            }
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          // dB = A^T * dY
          for (int64_t i = 0; i < m; ++i) {
            for (int64_t kk = 0; kk < k; ++kk) {
              const T aik = pa->values[static_cast<size_t>(i * k + kk)];
              for (int64_t j = 0; j < n; ++j) {
                pb->grad[static_cast<size_t>(kk * n + j)] +=
                    aik * self.grad[static_cast<size_t>(i * n + j)];
              }
            }
          }
        }
      });
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  return detail::make_op<T>("sum", {1}, {static_cast<T>(acc)}, {a},
                            [](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              const T g = self.grad[0];
                              for (auto& gv : p->grad) gv += g;
                            });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  const int64_t n = a.numel();
  return detail::make_op<T>("mean", {1}, {static_cast<T>(acc / static_cast<double>(n))}, {a},
                            [n](detail::TensorNode<T>& self) {
                              auto& p = self.parents[0];
                              p->ensure_grad();
                              const T g = self.grad[0] / static_cast<T>(n);
                              for (auto& gv : p->grad) gv += g;
                            });
}

// Max over coordinates of |analytic - numeric| / max(1, |analytic|), where the
// numeric gradient is a central difference of `f` around `x0`. `f` must be a
// pure scalar-valued function of its argument.
template <typename F>
double grad_check(F&& f, const TensorT<double>& x0, double eps = 1e-5) {
  TensorT<double> x = TensorT<double>::from_values(x0.shape(), x0.values(), true);
  TensorT<double> y = f(x);
  if (y.numel() != 1) {
    throw std::invalid_argument("grad_check: f must return a scalar, got shape " +
                                shape_str(y.shape()));
  }
  y.backward();
  const std::vector<double> analytic =
      x.has_grad() ? x.grad() : std::vector<double>(x.values().size(), 0.0);

  NoGradGuard no_grad;
  x.set_requires_grad(false);
  double max_err = 0.0;
  for (size_t i = 0; i < x.values().size(); ++i) {
    const double orig = x.values()[i];
    x.values()[i] = orig + eps;
    const double fp = f(x).item();
    x.values()[i] = orig - eps;
    const double fm = f(x).item();
    x.values()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace mfnet
