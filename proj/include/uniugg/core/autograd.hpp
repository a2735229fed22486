#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "uniugg/core/tensor.hpp"

// Reverse-mode autodiff over dense tensors. Graphs are built per forward
// pass; parameters are persistent leaf nodes. Everything is single-threaded
// and evaluation order is fixed, so repeated runs are bit-identical.

namespace uniugg::core {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
struct Node {
    Tensor<T> value;
    std::vector<T> grad;  // allocated lazily, same numel as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // reads this->grad, accumulates into parents

    int64_t numel() const { return value.numel(); }
    void ensure_grad() {
        if (grad.size() != value.v.size()) grad.assign(value.v.size(), T(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Handle with shared-node semantics; copying a Var aliases the same node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(NodePtr<T> n) : n_(std::move(n)) {}

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Var(n);
    }
    static Var scalar(T x, bool requires_grad = false) {
        return leaf(Tensor<T>({1}, std::vector<T>{x}), requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    const std::vector<int64_t>& shape() const { return n_->value.shape; }
    int64_t numel() const { return n_->numel(); }
    const Tensor<T>& val() const { return n_->value; }
    Tensor<T>& val() { return n_->value; }
    std::vector<T>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }
    T item() const {
        if (numel() != 1) throw ValidationError("item() on non-scalar");
        return n_->value.v[0];
    }

    NodePtr<T> node() const { return n_; }

private:
    NodePtr<T> n_;
};

namespace detail {

template <typename T>
Var<T> make_op(std::vector<int64_t> shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = Tensor<T>(std::move(shape), std::move(value));
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return Var<T>(n);
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward driver

template <typename T>
void backward(const Var<T>& loss) {
    if (loss.numel() != 1) throw ValidationError("backward() expects a scalar loss");
    if (!loss.requires_grad()) return;

    // Iterative postorder over the DAG.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
        Node<T>* n;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            Node<T>* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise binary ops

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.val().v);
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.val().v[i];
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        for (int pi = 0; pi < 2; ++pi) {
            auto& p = self.parents[pi];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.val().v);
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.val().v[i];
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.val().v);
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.val().v[i];
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * pb->value.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] += self.grad[i] * pa->value.v[i];
        }
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<T> out(a.val().v);
    for (size_t i = 0; i < out.size(); ++i) out[i] /= b.val().v[i];
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] / pb->value.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                T bv = pb->value.v[i];
                pb->grad[i] -= self.grad[i] * pa->value.v[i] / (bv * bv);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// scalar-constant and scalar-variable ops

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    std::vector<T> out(a.val().v);
    for (auto& x : out) x += s;
    return detail::make_op<T>(a.shape(), std::move(out), {a.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
    std::vector<T> out(a.val().v);
    for (auto& x : out) x *= s;
    return detail::make_op<T>(a.shape(), std::move(out), {a.node()}, [s](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * s;
    });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    return mul_scalar(a, T(-1));
}

// a / s where s is a length-1 Var (e.g. a data-dependent normalizer).
template <typename T>
Var<T> div_scalarvar(const Var<T>& a, const Var<T>& s) {
    if (s.numel() != 1) throw ValidationError("div_scalarvar: divisor must be a scalar Var");
    T sv = s.val().v[0];
    std::vector<T> out(a.val().v);
    for (auto& x : out) x /= sv;
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), s.node()},
                              [sv](Node<T>& self) {
                                  auto& pa = self.parents[0];
                                  auto& ps = self.parents[1];
                                  if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          pa->grad[i] += self.grad[i] / sv;
                                  }
                                  if (ps->requires_grad) {
                                      ps->ensure_grad();
                                      T acc = T(0);
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          acc -= self.grad[i] * pa->value.v[i] / (sv * sv);
                                      ps->grad[0] += acc;
                                  }
                              });
}

template <typename T>
Var<T> mul_scalarvar(const Var<T>& a, const Var<T>& s) {
    if (s.numel() != 1) throw ValidationError("mul_scalarvar: factor must be a scalar Var");
    T sv = s.val().v[0];
    std::vector<T> out(a.val().v);
    for (auto& x : out) x *= sv;
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), s.node()},
                              [sv](Node<T>& self) {
                                  auto& pa = self.parents[0];
                                  auto& ps = self.parents[1];
                                  if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          pa->grad[i] += self.grad[i] * sv;
                                  }
                                  if (ps->requires_grad) {
                                      ps->ensure_grad();
                                      T acc = T(0);
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          acc += self.grad[i] * pa->value.v[i];
                                      ps->grad[0] += acc;
                                  }
                              });
}

// [N,D] + row vector ([D] or [1,D]), broadcast over rows.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& b) {
    if (a.shape().size() != 2) throw ValidationError("add_row: lhs must be 2D");
    int64_t n = a.shape()[0], d = a.shape()[1];
    if (b.numel() != d) throw ValidationError("add_row: row vector length mismatch");
    std::vector<T> out(a.val().v);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < d; ++c) out[static_cast<size_t>(r * d + c)] += b.val().v[static_cast<size_t>(c)];
    return detail::make_op<T>(a.shape(), std::move(out), {a.node(), b.node()},
                              [n, d](Node<T>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          pa->grad[i] += self.grad[i];
                                  }
                                  if (pb->requires_grad) {
                                      pb->ensure_grad();
                                      for (int64_t r = 0; r < n; ++r)
                                          for (int64_t c = 0; c < d; ++c)
                                              pb->grad[static_cast<size_t>(c)] +=
                                                  self.grad[static_cast<size_t>(r * d + c)];
                                  }
                              });
}

// ---------------------------------------------------------------------------
// unary elementwise

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Var<T> unary_op(const Var<T>& a, FwdFn fwd, BwdFn dfdx_from_in_out) {
    std::vector<T> out(a.val().v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.val().v[i]);
    return detail::make_op<T>(a.shape(), std::move(out), {a.node()},
                              [dfdx_from_in_out](Node<T>& self) {
                                  auto& p = self.parents[0];
                                  p->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      p->grad[i] += self.grad[i] *
                                                    dfdx_from_in_out(p->value.v[i], self.value.v[i]);
                              });
}

}  // namespace detail

template <typename T>
Var<T> exp_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sqrt_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return std::sqrt(x); },
                            [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Var<T> square_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> abs_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return std::abs(x); },
                            [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> tanh_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return std::tanh(x); },
                            [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                            [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu_(const Var<T>& a) {
    return detail::unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                            [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu_(const Var<T>& a) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    return detail::unary_op(
        a,
        [](T x) {
            return static_cast<T>(0.5 * static_cast<double>(x) *
                                  (1.0 + std::erf(static_cast<double>(x) * kInvSqrt2)));
        },
        [](T x, T) {
            double xd = static_cast<double>(x);
            double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
            return static_cast<T>(cdf + xd * pdf);
        });
}

// Gradient is passed through inside [lo, hi] and zero outside.
template <typename T>
Var<T> clamp_(const Var<T>& a, T lo, T hi) {
    return detail::unary_op(
        a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// matrix ops

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw ValidationError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                              shape_str(b.shape()));
    int64_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    std::vector<T> out(static_cast<size_t>(n * m));
    {
        ECMap<T> ma(a.val().v.data(), n, k);
        ECMap<T> mb(b.val().v.data(), k, m);
        EMap<T> mo(out.data(), n, m);
        mo.noalias() = ma * mb;
    }
    return detail::make_op<T>({n, m}, std::move(out), {a.node(), b.node()},
                              [n, k, m](Node<T>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  ECMap<T> g(self.grad.data(), n, m);
                                  if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      ECMap<T> mb(pb->value.v.data(), k, m);
                                      EMap<T> ga(pa->grad.data(), n, k);
                                      ga.noalias() += g * mb.transpose();
                                  }
                                  if (pb->requires_grad) {
                                      pb->ensure_grad();
                                      ECMap<T> ma(pa->value.v.data(), n, k);
                                      EMap<T> gb(pb->grad.data(), k, m);
                                      gb.noalias() += ma.transpose() * g;
                                  }
                              });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
    if (a.shape().size() != 2) throw ValidationError("transpose: 2D only");
    int64_t n = a.shape()[0], m = a.shape()[1];
    std::vector<T> out(static_cast<size_t>(n * m));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j)
            out[static_cast<size_t>(j * n + i)] = a.val().v[static_cast<size_t>(i * m + j)];
    return detail::make_op<T>({m, n}, std::move(out), {a.node()}, [n, m](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j)
                p->grad[static_cast<size_t>(i * m + j)] += self.grad[static_cast<size_t>(j * n + i)];
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
    if (shape_numel(shape) != a.numel())
        throw ValidationError("reshape: numel mismatch " + shape_str(a.shape()) + " -> " +
                              shape_str(shape));
    std::vector<T> out(a.val().v);
    return detail::make_op<T>(std::move(shape), std::move(out), {a.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// slicing / gathering / concatenation

template <typename T>
Var<T> slice_rows(const Var<T>& a, int64_t r0, int64_t r1) {
    if (a.shape().size() != 2 || r0 < 0 || r1 > a.shape()[0] || r0 >= r1)
        throw ValidationError("slice_rows: bad range");
    int64_t d = a.shape()[1];
    std::vector<T> out(a.val().v.begin() + r0 * d, a.val().v.begin() + r1 * d);
    return detail::make_op<T>({r1 - r0, d}, std::move(out), {a.node()}, [r0, d](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p->grad[static_cast<size_t>(r0 * d) + i] += self.grad[i];
    });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, int64_t c0, int64_t c1) {
    if (a.shape().size() != 2 || c0 < 0 || c1 > a.shape()[1] || c0 >= c1)
        throw ValidationError("slice_cols: bad range");
    int64_t n = a.shape()[0], d = a.shape()[1], w = c1 - c0;
    std::vector<T> out(static_cast<size_t>(n * w));
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < w; ++c)
            out[static_cast<size_t>(r * w + c)] = a.val().v[static_cast<size_t>(r * d + c0 + c)];
    return detail::make_op<T>({n, w}, std::move(out), {a.node()}, [n, d, c0, w](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int64_t r = 0; r < n; ++r)
            for (int64_t c = 0; c < w; ++c)
                p->grad[static_cast<size_t>(r * d + c0 + c)] +=
                    self.grad[static_cast<size_t>(r * w + c)];
    });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ValidationError("concat_rows: empty list");
    int64_t d = parts[0].shape()[1], n = 0;
    std::vector<NodePtr<T>> parents;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[1] != d)
            throw ValidationError("concat_rows: column mismatch");
        n += p.shape()[0];
        parents.push_back(p.node());
    }
    std::vector<T> out;
    out.reserve(static_cast<size_t>(n * d));
    for (const auto& p : parts) out.insert(out.end(), p.val().v.begin(), p.val().v.end());
    return detail::make_op<T>({n, d}, std::move(out), std::move(parents), [](Node<T>& self) {
        size_t off = 0;
        for (auto& p : self.parents) {
            size_t len = p->value.v.size();
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < len; ++i) p->grad[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ValidationError("concat_cols: empty list");
    int64_t n = parts[0].shape()[0], d = 0;
    std::vector<NodePtr<T>> parents;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[0] != n)
            throw ValidationError("concat_cols: row mismatch");
        widths.push_back(p.shape()[1]);
        d += p.shape()[1];
        parents.push_back(p.node());
    }
    std::vector<T> out(static_cast<size_t>(n * d));
    int64_t c0 = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        int64_t w = widths[k];
        for (int64_t r = 0; r < n; ++r)
            for (int64_t c = 0; c < w; ++c)
                out[static_cast<size_t>(r * d + c0 + c)] =
                    parts[k].val().v[static_cast<size_t>(r * w + c)];
        c0 += w;
    }
    return detail::make_op<T>({n, d}, std::move(out), std::move(parents),
                              [n, d, widths](Node<T>& self) {
                                  int64_t c0 = 0;
                                  for (size_t k = 0; k < self.parents.size(); ++k) {
                                      auto& p = self.parents[k];
                                      int64_t w = widths[k];
                                      if (p->requires_grad) {
                                          p->ensure_grad();
                                          for (int64_t r = 0; r < n; ++r)
                                              for (int64_t c = 0; c < w; ++c)
                                                  p->grad[static_cast<size_t>(r * w + c)] +=
                                                      self.grad[static_cast<size_t>(r * d + c0 + c)];
                                      }
                                      c0 += w;
                                  }
                              });
}

// Element-level gather into an arbitrary shape: out.v[i] = a.v[idx[i]].
// With a bijective idx this is a pure permutation (used for patch/pixel
// rearrangements); duplicates accumulate on backward.
template <typename T>
Var<T> gather_flat(const Var<T>& a, std::shared_ptr<const std::vector<int64_t>> idx,
                   std::vector<int64_t> shape) {
    if (static_cast<int64_t>(idx->size()) != shape_numel(shape))
        throw ValidationError("gather_flat: index count does not match shape");
    int64_t n_in = a.numel();
    std::vector<T> out(idx->size());
    for (size_t i = 0; i < idx->size(); ++i) {
        int64_t j = (*idx)[i];
        if (j < 0 || j >= n_in) throw ValidationError("gather_flat: index out of range");
        out[i] = a.val().v[static_cast<size_t>(j)];
    }
    return detail::make_op<T>(std::move(shape), std::move(out), {a.node()},
                              [idx](Node<T>& self) {
                                  auto& p = self.parents[0];
                                  p->ensure_grad();
                                  for (size_t i = 0; i < idx->size(); ++i)
                                      p->grad[static_cast<size_t>((*idx)[i])] += self.grad[i];
                              });
}

// Row gather; duplicate indices accumulate on backward.
template <typename T>
Var<T> gather_rows(const Var<T>& a, std::vector<int64_t> idx) {
    if (a.shape().size() != 2) throw ValidationError("gather_rows: 2D only");
    int64_t n = a.shape()[0], d = a.shape()[1];
    for (int64_t i : idx)
        if (i < 0 || i >= n) throw ValidationError("gather_rows: index out of range");
    std::vector<T> out(idx.size() * static_cast<size_t>(d));
    for (size_t r = 0; r < idx.size(); ++r)
        for (int64_t c = 0; c < d; ++c)
            out[r * static_cast<size_t>(d) + static_cast<size_t>(c)] =
                a.val().v[static_cast<size_t>(idx[r] * d + c)];
    return detail::make_op<T>({static_cast<int64_t>(idx.size()), d}, std::move(out), {a.node()},
                              [idx, d](Node<T>& self) {
                                  auto& p = self.parents[0];
                                  p->ensure_grad();
                                  for (size_t r = 0; r < idx.size(); ++r)
                                      for (int64_t c = 0; c < d; ++c)
                                          p->grad[static_cast<size_t>(idx[r] * d + c)] +=
                                              self.grad[r * static_cast<size_t>(d) +
                                                        static_cast<size_t>(c)];
                              });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T acc = T(0);
    for (const T& x : a.val().v) acc += x;
    return detail::make_op<T>({1}, {acc}, {a.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        T g = self.grad[0];
        for (auto& x : p->grad) x += g;
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Var<T> row_sum(const Var<T>& a) {
    if (a.shape().size() != 2) throw ValidationError("row_sum: 2D only");
    int64_t n = a.shape()[0], d = a.shape()[1];
    std::vector<T> out(static_cast<size_t>(n), T(0));
    for (int64_t r = 0; r < n; ++r) {
        T acc = T(0);
        for (int64_t c = 0; c < d; ++c) acc += a.val().v[static_cast<size_t>(r * d + c)];
        out[static_cast<size_t>(r)] = acc;
    }
    return detail::make_op<T>({n, 1}, std::move(out), {a.node()}, [n, d](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int64_t r = 0; r < n; ++r) {
            T g = self.grad[static_cast<size_t>(r)];
            for (int64_t c = 0; c < d; ++c) p->grad[static_cast<size_t>(r * d + c)] += g;
        }
    });
}

// Per-row L2 norm sqrt(sum x^2 + eps) -> [N,1]. Subgradient 0 at an exact zero row.
template <typename T>
Var<T> rows_l2norm(const Var<T>& a, T eps = T(0)) {
    if (a.shape().size() != 2) throw ValidationError("rows_l2norm: 2D only");
    int64_t n = a.shape()[0], d = a.shape()[1];
    std::vector<T> out(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        T acc = eps;
        for (int64_t c = 0; c < d; ++c) {
            T x = a.val().v[static_cast<size_t>(r * d + c)];
            acc += x * x;
        }
        out[static_cast<size_t>(r)] = std::sqrt(acc);
    }
    return detail::make_op<T>({n, 1}, std::move(out), {a.node()}, [n, d](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int64_t r = 0; r < n; ++r) {
            T y = self.value.v[static_cast<size_t>(r)];
            if (y <= T(0)) continue;
            T g = self.grad[static_cast<size_t>(r)] / y;
            for (int64_t c = 0; c < d; ++c)
                p->grad[static_cast<size_t>(r * d + c)] +=
                    g * p->value.v[static_cast<size_t>(r * d + c)];
        }
    });
}

// y = x / sqrt(sum x^2 + eps) per row.
template <typename T>
Var<T> normalize_rows(const Var<T>& a, T eps) {
    if (a.shape().size() != 2) throw ValidationError("normalize_rows: 2D only");
    int64_t n = a.shape()[0], d = a.shape()[1];
    std::vector<T> out(a.val().v);
    std::vector<T> norms(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        T acc = eps;
        for (int64_t c = 0; c < d; ++c) {
            T x = a.val().v[static_cast<size_t>(r * d + c)];
            acc += x * x;
        }
        T nv = std::sqrt(acc);
        norms[static_cast<size_t>(r)] = nv;
        for (int64_t c = 0; c < d; ++c) out[static_cast<size_t>(r * d + c)] /= nv;
    }
    return detail::make_op<T>(a.shape(), std::move(out), {a.node()},
                              [n, d, norms](Node<T>& self) {
                                  auto& p = self.parents[0];
                                  p->ensure_grad();
                                  for (int64_t r = 0; r < n; ++r) {
                                      T nv = norms[static_cast<size_t>(r)];
                                      T dot = T(0);
                                      for (int64_t c = 0; c < d; ++c)
                                          dot += self.grad[static_cast<size_t>(r * d + c)] *
                                                 p->value.v[static_cast<size_t>(r * d + c)];
                                      for (int64_t c = 0; c < d; ++c) {
                                          size_t i = static_cast<size_t>(r * d + c);
                                          p->grad[i] += self.grad[i] / nv -
                                                        p->value.v[i] * dot / (nv * nv * nv);
                                      }
                                  }
                              });
}

// ---------------------------------------------------------------------------
// softmax / cross-entropy / layer norm

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
    if (a.shape().size() != 2) throw ValidationError("softmax_rows: 2D only");
    int64_t n = a.shape()[0], d = a.shape()[1];
    std::vector<T> out(a.val().v);
    for (int64_t r = 0; r < n; ++r) {
        T* row = out.data() + r * d;
        T mx = row[0];
        for (int64_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
        T acc = T(0);
        for (int64_t c = 0; c < d; ++c) {
            row[c] = std::exp(row[c] - mx);
            acc += row[c];
        }
        for (int64_t c = 0; c < d; ++c) row[c] /= acc;
    }
    return detail::make_op<T>(a.shape(), std::move(out), {a.node()}, [n, d](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int64_t r = 0; r < n; ++r) {
            const T* y = self.value.v.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T dot = T(0);
            for (int64_t c = 0; c < d; ++c) dot += g[c] * y[c];
            T* px = p->grad.data() + r * d;
            for (int64_t c = 0; c < d; ++c) px[c] += y[c] * (g[c] - dot);
        }
    });
}

// Mean negative log-likelihood over rows of logits. Stable log-sum-exp.
template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<int64_t>& targets) {
    if (logits.shape().size() != 2) throw ValidationError("cross_entropy_rows: 2D only");
    int64_t n = logits.shape()[0], d = logits.shape()[1];
    if (static_cast<int64_t>(targets.size()) != n)
        throw ValidationError("cross_entropy_rows: target count mismatch");
    for (int64_t t : targets)
        if (t < 0 || t >= d) throw ValidationError("cross_entropy_rows: target out of range");
    T loss = T(0);
    for (int64_t r = 0; r < n; ++r) {
        const T* row = logits.val().v.data() + r * d;
        T mx = row[0];
        for (int64_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
        T acc = T(0);
        for (int64_t c = 0; c < d; ++c) acc += std::exp(row[c] - mx);
        loss += (mx + std::log(acc)) - row[targets[static_cast<size_t>(r)]];
    }
    loss /= static_cast<T>(n);
    return detail::make_op<T>({1}, {loss}, {logits.node()}, [n, d, targets](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        T g = self.grad[0] / static_cast<T>(n);
        for (int64_t r = 0; r < n; ++r) {
            const T* row = p->value.v.data() + r * d;
            T mx = row[0];
            for (int64_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
            T acc = T(0);
            for (int64_t c = 0; c < d; ++c) acc += std::exp(row[c] - mx);
            T* px = p->grad.data() + r * d;
            for (int64_t c = 0; c < d; ++c) {
                T sm = std::exp(row[c] - mx) / acc;
                px[c] += g * (sm - (c == targets[static_cast<size_t>(r)] ? T(1) : T(0)));
            }
        }
    });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    if (x.shape().size() != 2) throw ValidationError("layer_norm: 2D only");
    int64_t n = x.shape()[0], d = x.shape()[1];
    if (gamma.numel() != d || beta.numel() != d)
        throw ValidationError("layer_norm: affine size mismatch");
    std::vector<T> out(static_cast<size_t>(n * d));
    std::vector<T> inv_std(static_cast<size_t>(n)), means(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        const T* row = x.val().v.data() + r * d;
        T mu = T(0);
        for (int64_t c = 0; c < d; ++c) mu += row[c];
        mu /= static_cast<T>(d);
        T var = T(0);
        for (int64_t c = 0; c < d; ++c) {
            T dv = row[c] - mu;
            var += dv * dv;
        }
        var /= static_cast<T>(d);
        T is = T(1) / std::sqrt(var + eps);
        means[static_cast<size_t>(r)] = mu;
        inv_std[static_cast<size_t>(r)] = is;
        for (int64_t c = 0; c < d; ++c)
            out[static_cast<size_t>(r * d + c)] =
                (row[c] - mu) * is * gamma.val().v[static_cast<size_t>(c)] +
                beta.val().v[static_cast<size_t>(c)];
    }
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [n, d, means, inv_std](Node<T>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            for (int64_t r = 0; r < n; ++r) {
                const T* xrow = px->value.v.data() + r * d;
                const T* grow = self.grad.data() + r * d;
                T mu = means[static_cast<size_t>(r)], is = inv_std[static_cast<size_t>(r)];
                // dxhat, and the two row means needed for dx
                T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
                for (int64_t c = 0; c < d; ++c) {
                    T xhat = (xrow[c] - mu) * is;
                    T dxhat = grow[c] * pg->value.v[static_cast<size_t>(c)];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                }
                mean_dxhat /= static_cast<T>(d);
                mean_dxhat_xhat /= static_cast<T>(d);
                if (px->requires_grad) {
                    px->ensure_grad();
                    for (int64_t c = 0; c < d; ++c) {
                        T xhat = (xrow[c] - mu) * is;
                        T dxhat = grow[c] * pg->value.v[static_cast<size_t>(c)];
                        px->grad[static_cast<size_t>(r * d + c)] +=
                            is * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
                if (pg->requires_grad) {
                    pg->ensure_grad();
                    for (int64_t c = 0; c < d; ++c) {
                        T xhat = (xrow[c] - mu) * is;
                        pg->grad[static_cast<size_t>(c)] += grow[c] * xhat;
                    }
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    for (int64_t c = 0; c < d; ++c) pb->grad[static_cast<size_t>(c)] += grow[c];
                }
            }
        });
}

// ---------------------------------------------------------------------------
// operator sugar

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
    return add(a, b);
}
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
    return sub(a, b);
}
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
    return mul(a, b);
}

template <typename T>
bool all_finite(const Var<T>& a) {
    return a.val().all_finite();
}

}  // namespace uniugg::core
