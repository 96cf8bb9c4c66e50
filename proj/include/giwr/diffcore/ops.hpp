#pragma once

// Differentiable primitives. Every op records one node on the graph of its inputs.
//
// Elementwise binary ops accept equal shapes, or a right operand whose shape equals the
// left operand's shape minus its leading (batch) extent; the latter is broadcast over rows.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "giwr/diffcore/graph.hpp"

namespace giwr::diff {

namespace detail {

enum class Broadcast { none, rhs_over_rows, lhs_over_rows };

inline Broadcast broadcast_mode(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return Broadcast::none;
    if (!a.empty() && Shape(a.begin() + 1, a.end()) == b) return Broadcast::rhs_over_rows;
    if (!b.empty() && Shape(b.begin() + 1, b.end()) == a) return Broadcast::lhs_over_rows;
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

inline Graph& graph_of(Var a, Var b) {
    if (a.graph != b.graph) throw ContractError("op: operands live on different graphs");
    return *a.graph;
}

// Adds `src` into `dst`, summing over rows when dst is the broadcast (row-less) operand.
inline void accumulate(Tensor& dst, const Tensor& src) {
    if (dst.size() == src.size()) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
        return;
    }
    const std::size_t n = dst.size();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i % n] += src[i];
}

// out[i] = f(a[i], b[i]) with broadcasting; dfa/dfb give the partials at (a, b).
template <class F, class Da, class Db>
Var binary(Var a, Var b, const char* op, F f, Da dfa, Db dfb) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast mode = broadcast_mode(av.shape(), bv.shape(), op);
    const bool a_big = mode != Broadcast::lhs_over_rows;
    const Tensor& big = a_big ? av : bv;
    Tensor out(big.shape());
    const std::size_t na = av.size(), nb = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i % na], bv[i % nb]);
    return g.push(std::move(out), {a.id, b.id},
                  [dfa, dfb](Graph& g, std::size_t self) {
                      const std::size_t ia = g.parents(self)[0], ib = g.parents(self)[1];
                      const Tensor& up = g.grad(self);
                      const Tensor& x = g.value(ia);
                      const Tensor& y = g.value(ib);
                      const std::size_t nx = x.size(), ny = y.size();
                      Tensor ga(up.shape()), gb(up.shape());
                      for (std::size_t i = 0; i < up.size(); ++i) {
                          ga[i] = up[i] * dfa(x[i % nx], y[i % ny]);
                          gb[i] = up[i] * dfb(x[i % nx], y[i % ny]);
                      }
                      accumulate(g.grad_slot(ia), ga);
                      accumulate(g.grad_slot(ib), gb);
                  },
                  op);
}

// out[i] = f(x[i]); df receives (x, y) so ops like exp/tanh can reuse the output.
template <class F, class D>
Var unary(Var x, const char* op, F f, D df) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return x.graph->push(std::move(out), {x.id},
                         [df](Graph& g, std::size_t self) {
                             const std::size_t ix = g.parents(self)[0];
                             const Tensor& up = g.grad(self);
                             const Tensor& xv = g.value(ix);
                             const Tensor& yv = g.value(self);
                             Tensor& gx = g.grad_slot(ix);
                             for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] * df(xv[i], yv[i]);
                         },
                         op);
}

inline double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace detail

// [n,k] x [k,m] -> [n,m]
inline Var matmul(Var a, Var b) {
    Graph& g = detail::graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
        throw ShapeError("matmul: shape mismatch " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
    }
    Tensor out(Shape{av.shape()[0], bv.shape()[1]});
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
    return g.push(std::move(out), {a.id, b.id},
                  [](Graph& g, std::size_t self) {
                      const std::size_t ia = g.parents(self)[0], ib = g.parents(self)[1];
                      const auto up = as_matrix(g.grad(self));
                      as_matrix(g.grad_slot(ia)).noalias() += up * as_matrix(g.value(ib)).transpose();
                      as_matrix(g.grad_slot(ib)).noalias() += as_matrix(g.value(ia)).transpose() * up;
                  },
                  "matmul");
}

inline Var add(Var a, Var b) {
    return detail::binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
    return detail::binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
    return detail::binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

// Elementwise minimum; ties route the gradient to the left operand.
inline Var minimum(Var a, Var b) {
    return detail::binary(
        a, b, "minimum", [](double x, double y) { return std::min(x, y); },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

inline Var neg(Var x) {
    return detail::unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

inline Var scale(Var x, double c) {
    return detail::unary(x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var shift(Var x, double c) {
    return detail::unary(x, "shift", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Var exp(Var x) {
    return detail::unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(Var x) {
    for (double v : x.value().values()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
    }
    return detail::unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var square(Var x) {
    return detail::unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var tanh(Var x) {
    Tensor out = x.value();
    tanh_in_place(out.values());
    return x.graph->push(std::move(out), {x.id},
                         [](Graph& g, std::size_t self) {
                             const Tensor& up = g.grad(self);
                             const Tensor& y = g.value(self);
                             Tensor& gx = g.grad_slot(g.parents(self)[0]);
                             for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] * (1.0 - y[i] * y[i]);
                         },
                         "tanh");
}

inline Var relu(Var x) {
    return detail::unary(
        x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Var softplus(Var x) {
    return detail::unary(x, "softplus", detail::softplus_value,
                         [](double v, double) { return detail::sigmoid(v); });
}

// min(x, cap); the clamped branch carries zero gradient.
inline Var clamp_above(Var x, double cap) {
    return detail::unary(
        x, "clamp_above", [cap](double v) { return std::min(v, cap); },
        [cap](double v, double) { return v < cap ? 1.0 : 0.0; });
}

inline Var clamp_below(Var x, double floor) {
    return detail::unary(
        x, "clamp_below", [floor](double v) { return std::max(v, floor); },
        [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

inline Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return x.graph->push(Tensor::scalar(s), {x.id},
                         [](Graph& g, std::size_t self) {
                             const std::size_t ix = g.parents(self)[0];
                             const double up = g.grad(self)[0];
                             for (double& v : g.grad_slot(ix).values()) v += up;
                         },
                         "sum");
}

inline Var mean(Var x) {
    const double n = static_cast<double>(x.value().size());
    if (n == 0) throw ContractError("mean: empty tensor");
    return scale(sum(x), 1.0 / n);
}

// [n, k] -> [n, 1], summing each row.
inline Var row_sum(Var x) {
    const Tensor& xv = x.value();
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor out(Shape{rows, 1});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += xv[r * cols + c];
        out[r] = s;
    }
    return x.graph->push(std::move(out), {x.id},
                         [](Graph& g, std::size_t self) {
                             const std::size_t ix = g.parents(self)[0];
                             const Tensor& up = g.grad(self);
                             Tensor& gx = g.grad_slot(ix);
                             const std::size_t cols = gx.cols();
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += up[i / cols];
                         },
                         "row_sum");
}

// Selects rows of a rank>=1 tensor: out[i] = x[indices[i]].
inline Var gather_rows(Var x, std::vector<std::size_t> indices) {
    const Tensor& xv = x.value();
    if (xv.rank() == 0) throw ShapeError("gather_rows: scalar input");
    Shape shape = xv.shape();
    shape[0] = indices.size();
    const std::size_t width = xv.cols();
    Tensor out(shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= xv.rows()) {
            throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                             to_string(xv.shape()));
        }
        std::copy_n(xv.data() + indices[i] * width, width, out.data() + i * width);
    }
    return x.graph->push(std::move(out), {x.id},
                         [indices = std::move(indices), width](Graph& g, std::size_t self) {
                             const std::size_t ix = g.parents(self)[0];
                             const Tensor& up = g.grad(self);
                             Tensor& gx = g.grad_slot(ix);
                             for (std::size_t i = 0; i < indices.size(); ++i) {
                                 for (std::size_t c = 0; c < width; ++c) gx[indices[i] * width + c] += up[i * width + c];
                             }
                         },
                         "gather_rows");
}

// [n, p] ++ [n, q] -> [n, p+q]
inline Var concat_cols(Var a, Var b) {
    Graph& g = detail::graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
        throw ShapeError("concat_cols: shape mismatch " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
    }
    const std::size_t n = av.rows(), p = av.cols(), q = bv.cols();
    Tensor out(Shape{n, p + q});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(av.data() + r * p, p, out.data() + r * (p + q));
        std::copy_n(bv.data() + r * q, q, out.data() + r * (p + q) + p);
    }
    return g.push(std::move(out), {a.id, b.id},
                  [n, p, q](Graph& g, std::size_t self) {
                      const std::size_t ia = g.parents(self)[0], ib = g.parents(self)[1];
                      const Tensor& up = g.grad(self);
                      Tensor& ga = g.grad_slot(ia);
                      Tensor& gb = g.grad_slot(ib);
                      for (std::size_t r = 0; r < n; ++r) {
                          for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += up[r * (p + q) + c];
                          for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += up[r * (p + q) + p + c];
                      }
                  },
                  "concat_cols");
}

// Columns [begin, end) of a rank-2 tensor.
inline Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || begin > end || end > xv.cols()) {
        throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         to_string(xv.shape()));
    }
    const std::size_t n = xv.rows(), w = xv.cols(), k = end - begin;
    Tensor out(Shape{n, k});
    for (std::size_t r = 0; r < n; ++r) std::copy_n(xv.data() + r * w + begin, k, out.data() + r * k);
    return x.graph->push(std::move(out), {x.id},
                         [n, w, k, begin](Graph& g, std::size_t self) {
                             const std::size_t ix = g.parents(self)[0];
                             const Tensor& up = g.grad(self);
                             Tensor& gx = g.grad_slot(ix);
                             for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t c = 0; c < k; ++c) gx[r * w + begin + c] += up[r * k + c];
                             }
                         },
                         "slice_cols");
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace giwr::diff
