#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "prism/errors.hpp"

namespace prism {

// ---------------------------------------------------------------------------
// Grad mode
// ---------------------------------------------------------------------------

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

// Scoped guard disabling graph recording (inference / sampling paths).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---------------------------------------------------------------------------
// Graph node
// ---------------------------------------------------------------------------

template <typename T>
class GradientTable;

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    bool requires_grad = false;
    uint64_t id = 0;  // creation order; parents always have smaller ids
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    // Receives this node's accumulated upstream gradient and pushes
    // contributions into the table entries of its parents.
    std::function<void(const std::vector<T>&, GradientTable<T>&)> backward;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    bool is_leaf() const { return parents.empty(); }
};

inline uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }

    static Tensor filled(Shape shape, T fill) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->value.assign(static_cast<size_t>(shape_numel(t.node_->shape)), fill);
        t.node_->id = next_node_id();
        return t;
    }

    static Tensor from_vector(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
            throw ShapeError(strformat("tensor: %zu values do not fill shape %s", values.size(),
                                       shape_str(shape).c_str()));
        }
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        t.node_->id = next_node_id();
        return t;
    }

    template <typename U>
    static Tensor from_span(Shape shape, std::span<const U> values) {
        std::vector<T> cast(values.size());
        for (size_t i = 0; i < values.size(); ++i) {
            cast[i] = static_cast<T>(values[i]);
        }
        return from_vector(std::move(shape), std::move(cast));
    }

    static Tensor scalar(T v) { return from_vector({1}, {v}); }

    // Leaf that participates in differentiation (a parameter).
    static Tensor parameter(Shape shape, std::vector<T> values) {
        Tensor t = from_vector(std::move(shape), std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<T>& values() const { return node_->value; }
    // Direct mutation is reserved for optimizers and finite differencing;
    // never call it on a tensor that is part of a live graph.
    std::vector<T>& mutable_values() { return node_->value; }

    T item() const {
        if (numel() != 1) {
            throw ShapeError(strformat("item: tensor %s is not scalar", shape_str(shape()).c_str()));
        }
        return node_->value[0];
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    void set_requires_grad(bool v) {
        if (v && !node_->is_leaf()) {
            throw Error("set_requires_grad: only leaf tensors can become parameters");
        }
        node_->requires_grad = v;
    }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

// ---------------------------------------------------------------------------
// Gradient table
// ---------------------------------------------------------------------------

// Gradients are kept outside the nodes so that concurrent backward passes over
// shared parameters never race; each pass owns its table.
template <typename T>
class GradientTable {
public:
    std::vector<T>& accumulator(const TensorNode<T>* node) {
        auto it = grads_.find(node);
        if (it == grads_.end()) {
            it = grads_.emplace(node, std::vector<T>(node->value.size(), T(0))).first;
        }
        return it->second;
    }

    bool contains(const Tensor<T>& t) const { return grads_.count(t.node().get()) != 0; }

    // dLoss/dTensor; exact zeros for leaves that did not participate.
    std::vector<T> grad(const Tensor<T>& t) const {
        auto it = grads_.find(t.node().get());
        if (it == grads_.end()) {
            return std::vector<T>(t.values().size(), T(0));
        }
        return it->second;
    }

    void erase(const TensorNode<T>* node) { grads_.erase(node); }
    size_t size() const { return grads_.size(); }

private:
    std::unordered_map<const TensorNode<T>*, std::vector<T>> grads_;
};

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Reachable nodes are processed in
// descending creation order, which is a valid topological order because every
// op node is created after its parents. Intermediate gradients are dropped as
// soon as they have been consumed unless the node is a parameter leaf or
// listed in `retain`.
template <typename T>
GradientTable<T> backward(const Tensor<T>& loss, std::span<const Tensor<T>> retain = {}) {
    if (loss.numel() != 1) {
        throw ShapeError(strformat("backward: loss must be scalar, got %s",
                                   shape_str(loss.shape()).c_str()));
    }
    std::unordered_set<const TensorNode<T>*> retain_set;
    for (const auto& t : retain) {
        retain_set.insert(t.node().get());
    }

    // Collect the reachable subgraph.
    std::vector<std::shared_ptr<TensorNode<T>>> order;
    std::unordered_set<const TensorNode<T>*> seen;
    std::vector<std::shared_ptr<TensorNode<T>>> stack{loss.node()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto node = std::move(stack.back());
        stack.pop_back();
        for (const auto& p : node->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) {
                stack.push_back(p);
            }
        }
        order.push_back(std::move(node));
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });

    GradientTable<T> table;
    table.accumulator(loss.node().get())[0] = T(1);
    for (const auto& node : order) {
        if (!node->backward) {
            continue;
        }
        auto& g = table.accumulator(node.get());
        node->backward(g, table);
        if (!retain_set.count(node.get()) && !(node->is_leaf() && node->requires_grad)) {
            table.erase(node.get());
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Op helpers
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value, const char* op,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(const std::vector<T>&, GradientTable<T>&)> backward_fn) {
    Tensor<T> out = Tensor<T>::from_vector(std::move(shape), std::move(value));
    bool track = grad_enabled();
    if (track) {
        bool any = false;
        for (const auto& in : inputs) {
            any = any || in.requires_grad();
        }
        track = any;
    }
    if (track) {
        auto node = out.node();
        node->requires_grad = true;
        node->op = op;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) {
            node->parents.push_back(in.node());
        }
        node->backward = std::move(backward_fn);
    }
    return out;
}

// Broadcast layout: `small` must equal a suffix of `big`; the leading block
// count is returned in `repeats`.
template <typename T>
void check_suffix_broadcast(const Tensor<T>& big, const Tensor<T>& small, const char* op,
                            int64_t* repeats) {
    const Shape& bs = big.shape();
    const Shape& ss = small.shape();
    if (ss.size() > bs.size()) {
        throw ShapeError(strformat("%s: shape mismatch %s vs %s", op, shape_str(bs).c_str(),
                                   shape_str(ss).c_str()));
    }
    size_t offset = bs.size() - ss.size();
    for (size_t i = 0; i < ss.size(); ++i) {
        if (bs[offset + i] != ss[i]) {
            throw ShapeError(strformat("%s: shape mismatch %s vs %s", op, shape_str(bs).c_str(),
                                       shape_str(ss).c_str()));
        }
    }
    *repeats = small.numel() == 0 ? 0 : big.numel() / small.numel();
}

using EigenIndex = Eigen::Index;

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (with suffix broadcasting for the smaller operand)
// ---------------------------------------------------------------------------

namespace detail {

enum class EwKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, EwKind kind, const char* op) {
    const bool b_small = b.numel() <= a.numel();
    const Tensor<T>& big = b_small ? a : b;
    const Tensor<T>& small = b_small ? b : a;
    if (!b_small && kind == EwKind::kSub) {
        // a - b with a smaller than b has no suffix-broadcast reading.
        int64_t dummy;
        check_suffix_broadcast(small, big, op, &dummy);  // always throws
    }
    int64_t repeats = 0;
    check_suffix_broadcast(big, small, op, &repeats);
    const int64_t stride = small.numel();

    const auto& bv = big.values();
    const auto& sv = small.values();
    std::vector<T> out(bv.size());
    for (int64_t r = 0; r < repeats; ++r) {
        const T* bp = bv.data() + r * stride;
        T* op_ = out.data() + r * stride;
        switch (kind) {
            case EwKind::kAdd:
                for (int64_t i = 0; i < stride; ++i) op_[i] = bp[i] + sv[i];
                break;
            case EwKind::kSub:
                for (int64_t i = 0; i < stride; ++i) op_[i] = bp[i] - sv[i];
                break;
            case EwKind::kMul:
                for (int64_t i = 0; i < stride; ++i) op_[i] = bp[i] * sv[i];
                break;
        }
    }

    Tensor<T> a_in = a, b_in = b;
    return make_op_result<T>(
        big.shape(), std::move(out), op, {a, b},
        [a_in, b_in, kind, b_small, repeats, stride](const std::vector<T>& g, GradientTable<T>& table) {
            const Tensor<T>& big = b_small ? a_in : b_in;
            const Tensor<T>& small = b_small ? b_in : a_in;
            const T big_sign = T(1);
            const T small_sign = kind == EwKind::kSub ? T(-1) : T(1);
            if (big.requires_grad()) {
                auto& gb = table.accumulator(big.node().get());
                if (kind == EwKind::kMul) {
                    const auto& sv = small.values();
                    for (int64_t r = 0; r < repeats; ++r) {
                        for (int64_t i = 0; i < stride; ++i) {
                            gb[r * stride + i] += g[r * stride + i] * sv[i];
                        }
                    }
                } else {
                    for (size_t i = 0; i < g.size(); ++i) {
                        gb[i] += big_sign * g[i];
                    }
                }
            }
            if (small.requires_grad()) {
                auto& gs = table.accumulator(small.node().get());
                if (kind == EwKind::kMul) {
                    const auto& bv = big.values();
                    for (int64_t r = 0; r < repeats; ++r) {
                        for (int64_t i = 0; i < stride; ++i) {
                            gs[i] += g[r * stride + i] * bv[r * stride + i];
                        }
                    }
                } else {
                    for (int64_t r = 0; r < repeats; ++r) {
                        for (int64_t i = 0; i < stride; ++i) {
                            gs[i] += small_sign * g[r * stride + i];
                        }
                    }
                }
            }
        });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::elementwise(a, b, detail::EwKind::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::elementwise(a, b, detail::EwKind::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::elementwise(a, b, detail::EwKind::kMul, "mul");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    Tensor<T> a_in = a;
    return detail::make_op_result<T>(a.shape(), std::move(out), "add_scalar", {a},
                                     [a_in](const std::vector<T>& g, GradientTable<T>& table) {
                                         if (!a_in.requires_grad()) return;
                                         auto& ga = table.accumulator(a_in.node().get());
                                         for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                                     });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    Tensor<T> a_in = a;
    return detail::make_op_result<T>(a.shape(), std::move(out), "mul_scalar", {a},
                                     [a_in, c](const std::vector<T>& g, GradientTable<T>& table) {
                                         if (!a_in.requires_grad()) return;
                                         auto& ga = table.accumulator(a_in.node().get());
                                         for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                                     });
}

// ---------------------------------------------------------------------------
// matmul: [m,k]x[k,n], [B,m,k]x[B,k,n], or [B,m,k]x[k,n]
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const bool a_batched = as.size() == 3;
    const bool b_batched = bs.size() == 3;
    if ((as.size() != 2 && as.size() != 3) || (bs.size() != 2 && bs.size() != 3) ||
        (b_batched && !a_batched)) {
        throw ShapeError(strformat("matmul: unsupported ranks %s x %s", shape_str(as).c_str(),
                                   shape_str(bs).c_str()));
    }
    const int batch = a_batched ? as[0] : 1;
    const int m = a_batched ? as[1] : as[0];
    const int k = a_batched ? as[2] : as[1];
    const int bk = b_batched ? bs[1] : bs[0];
    const int n = b_batched ? bs[2] : bs[1];
    if (k != bk || (b_batched && bs[0] != batch)) {
        throw ShapeError(strformat("matmul: shape mismatch %s x %s", shape_str(as).c_str(),
                                   shape_str(bs).c_str()));
    }

    Shape out_shape = a_batched ? Shape{batch, m, n} : Shape{m, n};
    std::vector<T> out(static_cast<size_t>(batch) * m * n);
    for (int bidx = 0; bidx < batch; ++bidx) {
        detail::ConstMatMap<T> A(a.values().data() + static_cast<size_t>(bidx) * m * k, m, k);
        detail::ConstMatMap<T> B(
            b.values().data() + (b_batched ? static_cast<size_t>(bidx) * k * n : 0), k, n);
        detail::MatMap<T> C(out.data() + static_cast<size_t>(bidx) * m * n, m, n);
        C.noalias() = A * B;
    }

    Tensor<T> a_in = a, b_in = b;
    return detail::make_op_result<T>(
        std::move(out_shape), std::move(out), "matmul", {a, b},
        [a_in, b_in, batch, m, k, n, b_batched](const std::vector<T>& g, GradientTable<T>& table) {
            if (a_in.requires_grad()) {
                auto& ga = table.accumulator(a_in.node().get());
                for (int bidx = 0; bidx < batch; ++bidx) {
                    detail::ConstMatMap<T> G(g.data() + static_cast<size_t>(bidx) * m * n, m, n);
                    detail::ConstMatMap<T> B(
                        b_in.values().data() + (b_batched ? static_cast<size_t>(bidx) * k * n : 0),
                        k, n);
                    detail::MatMap<T> GA(ga.data() + static_cast<size_t>(bidx) * m * k, m, k);
                    GA.noalias() += G * B.transpose();
                }
            }
            if (b_in.requires_grad()) {
                auto& gb = table.accumulator(b_in.node().get());
                for (int bidx = 0; bidx < batch; ++bidx) {
                    detail::ConstMatMap<T> G(g.data() + static_cast<size_t>(bidx) * m * n, m, n);
                    detail::ConstMatMap<T> A(a_in.values().data() + static_cast<size_t>(bidx) * m * k,
                                             m, k);
                    detail::MatMap<T> GB(
                        gb.data() + (b_batched ? static_cast<size_t>(bidx) * k * n : 0), k, n);
                    GB.noalias() += A.transpose() * G;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// permute / reshape / slice / concat
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& shape) {
    std::vector<int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    return strides;
}

// dst[i] = src[perm-mapped i]; generic strided gather.
template <typename T>
void permute_copy(const std::vector<T>& src, const Shape& src_shape, const std::vector<int>& axes,
                  std::vector<T>& dst) {
    const size_t rank = src_shape.size();
    Shape dst_shape(rank);
    for (size_t i = 0; i < rank; ++i) dst_shape[i] = src_shape[axes[i]];
    auto src_strides = row_major_strides(src_shape);
    std::vector<int64_t> gather_strides(rank);
    for (size_t i = 0; i < rank; ++i) gather_strides[i] = src_strides[axes[i]];

    std::vector<int64_t> idx(rank, 0);
    const int64_t total = static_cast<int64_t>(src.size());
    int64_t src_off = 0;
    for (int64_t flat = 0; flat < total; ++flat) {
        dst[flat] = src[src_off];
        for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
            src_off += gather_strides[d];
            if (++idx[d] < dst_shape[d]) {
                break;
            }
            src_off -= gather_strides[d] * dst_shape[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
    const Shape& as = a.shape();
    if (axes.size() != as.size()) {
        throw ShapeError(strformat("permute: %zu axes for rank-%zu tensor", axes.size(), as.size()));
    }
    std::vector<bool> used(as.size(), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= static_cast<int>(as.size()) || used[ax]) {
            throw ShapeError("permute: axes must be a permutation");
        }
        used[ax] = true;
    }
    Shape out_shape(as.size());
    for (size_t i = 0; i < as.size(); ++i) out_shape[i] = as[axes[i]];
    std::vector<T> out(a.values().size());
    detail::permute_copy(a.values(), as, axes, out);

    std::vector<int> inverse(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = static_cast<int>(i);
    Tensor<T> a_in = a;
    Shape fwd_shape = out_shape;
    return detail::make_op_result<T>(
        std::move(out_shape), std::move(out), "permute", {a},
        [a_in, inverse, fwd_shape](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            auto& ga = table.accumulator(a_in.node().get());
            std::vector<T> gp(g.size());
            detail::permute_copy(g, fwd_shape, inverse, gp);
            for (size_t i = 0; i < gp.size(); ++i) ga[i] += gp[i];
        });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    return permute(a, {1, 0});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw ShapeError(strformat("reshape: cannot view %s as %s", shape_str(a.shape()).c_str(),
                                   shape_str(new_shape).c_str()));
    }
    Tensor<T> a_in = a;
    return detail::make_op_result<T>(std::move(new_shape), std::vector<T>(a.values()), "reshape",
                                     {a},
                                     [a_in](const std::vector<T>& g, GradientTable<T>& table) {
                                         if (!a_in.requires_grad()) return;
                                         auto& ga = table.accumulator(a_in.node().get());
                                         for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                                     });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, int start, int len) {
    const Shape& as = a.shape();
    if (axis < 0 || axis >= static_cast<int>(as.size()) || start < 0 || len <= 0 ||
        start + len > as[axis]) {
        throw ShapeError(strformat("slice: [%d, %d) on axis %d of %s", start, start + len, axis,
                                   shape_str(as).c_str()));
    }
    int64_t inner = 1;
    for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= as[i];

    Shape out_shape = as;
    out_shape[axis] = len;
    std::vector<T> out(static_cast<size_t>(outer) * len * inner);
    const auto& av = a.values();
    for (int64_t o = 0; o < outer; ++o) {
        const T* src = av.data() + (o * as[axis] + start) * inner;
        std::copy(src, src + static_cast<size_t>(len) * inner,
                  out.data() + o * len * inner);
    }

    Tensor<T> a_in = a;
    const int axis_dim = as[axis];
    return detail::make_op_result<T>(
        std::move(out_shape), std::move(out), "slice", {a},
        [a_in, outer, inner, len, start, axis_dim](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            auto& ga = table.accumulator(a_in.node().get());
            for (int64_t o = 0; o < outer; ++o) {
                T* dst = ga.data() + (o * axis_dim + start) * inner;
                const T* src = g.data() + o * len * inner;
                for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) {
        throw ShapeError("concat: no inputs");
    }
    const Shape& base = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int>(base.size())) {
        throw ShapeError(strformat("concat: axis %d out of range for %s", axis,
                                   shape_str(base).c_str()));
    }
    int axis_total = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        if (ps.size() != base.size()) {
            throw ShapeError("concat: rank mismatch");
        }
        for (size_t i = 0; i < ps.size(); ++i) {
            if (static_cast<int>(i) != axis && ps[i] != base[i]) {
                throw ShapeError(strformat("concat: shape mismatch %s vs %s",
                                           shape_str(base).c_str(), shape_str(ps).c_str()));
            }
        }
        axis_total += ps[axis];
    }

    int64_t inner = 1;
    for (size_t i = axis + 1; i < base.size(); ++i) inner *= base[i];
    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= base[i];

    Shape out_shape = base;
    out_shape[axis] = axis_total;
    std::vector<T> out(static_cast<size_t>(outer) * axis_total * inner);
    int offset = 0;
    for (const auto& p : parts) {
        const int len = p.shape()[axis];
        const auto& pv = p.values();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(pv.data() + o * len * inner, pv.data() + (o + 1) * len * inner,
                      out.data() + (o * axis_total + offset) * inner);
        }
        offset += len;
    }

    std::vector<Tensor<T>> inputs = parts;
    return detail::make_op_result<T>(
        std::move(out_shape), std::move(out), "concat", parts,
        [inputs, outer, inner, axis, axis_total](const std::vector<T>& g, GradientTable<T>& table) {
            int offset = 0;
            for (const auto& p : inputs) {
                const int len = p.shape()[axis];
                if (p.requires_grad()) {
                    auto& gp = table.accumulator(p.node().get());
                    for (int64_t o = 0; o < outer; ++o) {
                        const T* src = g.data() + (o * axis_total + offset) * inner;
                        T* dst = gp.data() + o * len * inner;
                        for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                    }
                }
                offset += len;
            }
        });
}

// ---------------------------------------------------------------------------
// softmax / layer norm over the last axis
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
    if (a.rank() < 1) {
        throw ShapeError("softmax: rank-0 input");
    }
    const int64_t cols = a.dim(a.rank() - 1);
    const int64_t rows = a.numel() / cols;
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = av.data() + r * cols;
        T* y = out.data() + r * cols;
        T mx = x[0];
        for (int64_t i = 1; i < cols; ++i) mx = std::max(mx, x[i]);
        T sum = T(0);
        for (int64_t i = 0; i < cols; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        const T inv = T(1) / sum;
        for (int64_t i = 0; i < cols; ++i) y[i] *= inv;
    }

    Tensor<T> a_in = a;
    std::vector<T> saved = out;
    return detail::make_op_result<T>(
        a.shape(), std::move(out), "softmax", {a},
        [a_in, saved, rows, cols](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            auto& ga = table.accumulator(a_in.node().get());
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = saved.data() + r * cols;
                const T* gr = g.data() + r * cols;
                T dot = T(0);
                for (int64_t i = 0; i < cols; ++i) dot += gr[i] * y[i];
                T* dst = ga.data() + r * cols;
                for (int64_t i = 0; i < cols; ++i) dst[i] += y[i] * (gr[i] - dot);
            }
        });
}

template <typename T>
Tensor<T> layer_norm_lastdim(const Tensor<T>& a, T eps) {
    if (a.rank() < 1) {
        throw ShapeError("layer_norm: rank-0 input");
    }
    const int64_t cols = a.dim(a.rank() - 1);
    const int64_t rows = a.numel() / cols;
    const auto& av = a.values();
    std::vector<T> out(av.size());
    std::vector<T> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = av.data() + r * cols;
        T mean = T(0);
        for (int64_t i = 0; i < cols; ++i) mean += x[i];
        mean /= static_cast<T>(cols);
        T var = T(0);
        for (int64_t i = 0; i < cols; ++i) {
            const T d = x[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        T* y = out.data() + r * cols;
        for (int64_t i = 0; i < cols; ++i) y[i] = (x[i] - mean) * inv;
    }

    Tensor<T> a_in = a;
    std::vector<T> saved = out;
    return detail::make_op_result<T>(
        a.shape(), std::move(out), "layer_norm", {a},
        [a_in, saved, inv_std, rows, cols](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            auto& ga = table.accumulator(a_in.node().get());
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = saved.data() + r * cols;
                const T* gr = g.data() + r * cols;
                T g_mean = T(0), gy_mean = T(0);
                for (int64_t i = 0; i < cols; ++i) {
                    g_mean += gr[i];
                    gy_mean += gr[i] * y[i];
                }
                g_mean /= static_cast<T>(cols);
                gy_mean /= static_cast<T>(cols);
                const T inv = inv_std[static_cast<size_t>(r)];
                T* dst = ga.data() + r * cols;
                for (int64_t i = 0; i < cols; ++i) {
                    dst[i] += inv * (gr[i] - g_mean - y[i] * gy_mean);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// GELU (exact, erf-based)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    const auto& av = a.values();
    std::vector<T> out(av.size());
    constexpr T kInvSqrt2 = T(0.7071067811865475244);
    for (size_t i = 0; i < av.size(); ++i) {
        out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * kInvSqrt2));
    }
    Tensor<T> a_in = a;
    return detail::make_op_result<T>(
        a.shape(), std::move(out), "gelu", {a},
        [a_in](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            constexpr T kInvSqrt2 = T(0.7071067811865475244);
            constexpr T kInvSqrt2Pi = T(0.3989422804014326779);
            auto& ga = table.accumulator(a_in.node().get());
            const auto& x = a_in.values();
            for (size_t i = 0; i < g.size(); ++i) {
                const T cdf = T(0.5) * (T(1) + std::erf(x[i] * kInvSqrt2));
                const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x[i] * x[i]);
                ga[i] += g[i] * (cdf + x[i] * pdf);
            }
        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    // Fixed left-to-right accumulation: data independent and reproducible.
    const auto& av = a.values();
    T total = T(0);
    for (const T v : av) total += v;
    Tensor<T> a_in = a;
    return detail::make_op_result<T>(
        Shape{1}, std::vector<T>{total}, "sum", {a},
        [a_in](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            auto& ga = table.accumulator(a_in.node().get());
            for (auto& v : ga) v += g[0];
        });
}

template <typename T>
Tensor<T> mean_square(const Tensor<T>& a) {
    const auto& av = a.values();
    T total = T(0);
    for (const T v : av) total += v * v;
    const T n = static_cast<T>(av.size());
    Tensor<T> a_in = a;
    return detail::make_op_result<T>(
        Shape{1}, std::vector<T>{total / n}, "mean_square", {a},
        [a_in, n](const std::vector<T>& g, GradientTable<T>& table) {
            if (!a_in.requires_grad()) return;
            auto& ga = table.accumulator(a_in.node().get());
            const auto& x = a_in.values();
            const T scale = T(2) * g[0] / n;
            for (size_t i = 0; i < x.size(); ++i) ga[i] += scale * x[i];
        });
}

// ---------------------------------------------------------------------------
// gather / scatter by token index
// ---------------------------------------------------------------------------

// Rows of a [R, C] table selected by index; the backward pass scatter-adds
// into the table in index order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table_in, const std::vector<int>& indices) {
    if (table_in.rank() != 2) {
        throw ShapeError(strformat("gather_rows: table must be rank 2, got %s",
                                   shape_str(table_in.shape()).c_str()));
    }
    const int rows = table_in.dim(0);
    const int cols = table_in.dim(1);
    for (int idx : indices) {
        if (idx < 0 || idx >= rows) {
            throw ShapeError(strformat("gather_rows: index %d out of range [0, %d)", idx, rows));
        }
    }
    std::vector<T> out(indices.size() * static_cast<size_t>(cols));
    const auto& tv = table_in.values();
    for (size_t i = 0; i < indices.size(); ++i) {
        std::copy(tv.data() + static_cast<size_t>(indices[i]) * cols,
                  tv.data() + static_cast<size_t>(indices[i] + 1) * cols,
                  out.data() + i * cols);
    }
    Tensor<T> t_in = table_in;
    std::vector<int> idx = indices;
    return detail::make_op_result<T>(
        Shape{static_cast<int>(indices.size()), cols}, std::move(out), "gather_rows", {table_in},
        [t_in, idx, cols](const std::vector<T>& g, GradientTable<T>& table) {
            if (!t_in.requires_grad()) return;
            auto& gt = table.accumulator(t_in.node().get());
            for (size_t i = 0; i < idx.size(); ++i) {
                T* dst = gt.data() + static_cast<size_t>(idx[i]) * cols;
                const T* src = g.data() + i * cols;
                for (int c = 0; c < cols; ++c) dst[c] += src[c];
            }
        });
}

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

// x @ w + b with b broadcast over rows.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add(matmul(x, w), b);
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (const T v : t.values()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace prism
