#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// The op set is exactly what the BoTNet pipeline needs; no fusion, no GPU.
// Use T = double for gradient checks and oracles, float is supported for
// training-mode storage.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace botkit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    relu,
    matmul,
    transpose2d,
    reshape,
    softmax,
    sum_all,
    mean_all,
    concat_cols,
    gather_cols,
    scatter_cols,
    add_rowvec,
    batch_item,
    stack_batch,
    conv2d,
    max_pool2d,
    avg_pool2d,
    global_avg_pool,
    batch_norm2d,
    cross_entropy,
};

template <class T>
struct TensorImpl;

// One recorded operation. Creation order doubles as a topological order;
// backward() walks reachable nodes in reverse sequence. Values the backward
// rule needs (im2col buffers, argmax indices, softmax outputs) are captured
// inside the closure.
template <class T>
struct GraphNode {
    OpKind kind;
    std::uint64_t seq;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::function<void(TensorImpl<T>&)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // empty until first accumulation
    std::shared_ptr<GraphNode<T>> node;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

inline std::uint64_t next_node_seq() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

inline bool& autograd_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

// Disables graph recording in scope; eval-mode forwards and the numeric side
// of grad_check run under this.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(autograd_enabled()) { autograd_enabled() = false; }
    ~NoGradGuard() { autograd_enabled() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class T>
class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl<T>>()) {}

    explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<TensorImpl<T>>()) {
        impl_->shape = std::move(shape);
        impl_->data.assign(shape_numel(impl_->shape), fill);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }

    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }

    static Tensor from_data(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != data.size())
            throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(data);
        return t;
    }

    static Tensor randn(Shape shape, std::mt19937_64& rng, T stddev = T(1)) {
        Tensor t(std::move(shape));
        std::normal_distribution<T> dist(T(0), stddev);
        for (auto& v : t.impl_->data) v = dist(rng);
        return t;
    }

    bool defined() const { return !impl_->shape.empty() || !impl_->data.empty(); }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::vector<T>& data() { return impl_->data; }
    const std::vector<T>& data() const { return impl_->data; }

    T item() const {
        if (numel() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
        return impl_->data[0];
    }

    T& at(std::initializer_list<std::size_t> idx) {
        return impl_->data[flat_index(idx)];
    }
    T at(std::initializer_list<std::size_t> idx) const {
        return impl_->data[flat_index(idx)];
    }

    bool requires_grad() const { return impl_->requires_grad; }

    Tensor& set_requires_grad(bool flag) {
        if (flag && impl_->node)
            throw std::invalid_argument("set_requires_grad: only leaf tensors can be marked trainable");
        impl_->requires_grad = flag;
        return *this;
    }

    bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }

    const std::vector<T>& grad() const {
        if (!has_grad()) throw std::runtime_error("grad: no gradient populated; call backward first");
        return impl_->grad;
    }

    void zero_grad() const { impl_->grad.assign(impl_->data.size(), T(0)); }

    // Deep copy of the value buffer; drops graph linkage and grad.
    Tensor clone() const {
        Tensor t;
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        return t;
    }

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

private:
    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != impl_->shape.size())
            throw std::invalid_argument("at: index rank mismatch");
        std::size_t flat = 0, axis = 0;
        for (std::size_t i : idx) {
            if (i >= impl_->shape[axis]) throw std::out_of_range("at: index out of range");
            flat = flat * impl_->shape[axis] + i;
            ++axis;
        }
        return flat;
    }

    std::shared_ptr<TensorImpl<T>> impl_;
};

namespace detail {

template <class T>
Tensor<T> make_result(OpKind kind, Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorImpl<T>&)> backward) {
    Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(data));
    bool needs_grad = false;
    if (autograd_enabled()) {
        for (const auto& in : inputs)
            if (in.requires_grad()) needs_grad = true;
    }
    if (needs_grad) {
        auto node = std::make_shared<GraphNode<T>>();
        node->kind = kind;
        node->seq = next_node_seq();
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.impl());
        node->backward = std::move(backward);
        out.impl()->node = std::move(node);
        out.impl()->requires_grad = true;
    }
    return out;
}

template <class T>
void accumulate(TensorImpl<T>& dst, const std::vector<T>& contribution) {
    dst.ensure_grad();
    for (std::size_t i = 0; i < contribution.size(); ++i) dst.grad[i] += contribution[i];
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// C[m,n] += A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(OpKind::add, a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& o) {
        if (ai->requires_grad) detail::accumulate(*ai, o.grad);
        if (bi->requires_grad) detail::accumulate(*bi, o.grad);
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(OpKind::sub, a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& o) {
        if (ai->requires_grad) detail::accumulate(*ai, o.grad);
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= o.grad[i];
        }
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(OpKind::mul, a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& o) {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] += o.grad[i] * ai->data[i];
        }
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::scale, a.shape(), std::move(out), {a}, [ai, c](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += c * o.grad[i];
    });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::add_scalar, a.shape(), std::move(out), {a}, [ai](TensorImpl<T>& o) {
        if (ai->requires_grad) detail::accumulate(*ai, o.grad);
    });
}

// Subgradient at exactly 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::relu, a.shape(), std::move(out), {a}, [ai](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (ai->data[i] > T(0)) ai->grad[i] += o.grad[i];
    });
}

// ---------------------------------------------------------------------------
// linear algebra / shape ops

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    if (a.size(1) != b.size(0))
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    std::vector<T> out(m * n, T(0));
    detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(OpKind::matmul, {m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](TensorImpl<T>& o) {
        if (ai->requires_grad) {
            ai->ensure_grad();
            detail::gemm_nt(o.grad.data(), bi->data.data(), ai->grad.data(), m, n, k);
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            detail::gemm_tn(ai->data.data(), o.grad.data(), bi->grad.data(), k, m, n);
        }
    });
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose2d: expects rank-2 tensor, got " + shape_str(a.shape()));
    std::size_t r = a.size(0), c = a.size(1);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::transpose2d, {c, r}, std::move(out), {a}, [ai, r, c](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ai->grad[i * c + j] += o.grad[j * r + i];
    });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::reshape, std::move(new_shape), a.data(), {a}, [ai](TensorImpl<T>& o) {
        if (ai->requires_grad) detail::accumulate(*ai, o.grad);
    });
}

// Row-broadcast bias add: out[i,j] = x[i,j] + v[j].
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
    if (x.rank() != 2 || v.rank() != 1 || v.size(0) != x.size(1))
        throw std::invalid_argument("add_rowvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                                    shape_str(v.shape()));
    std::size_t r = x.size(0), c = x.size(1);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.data()[i * c + j] + v.data()[j];
    auto xi = x.impl(), vi = v.impl();
    return detail::make_result<T>(OpKind::add_rowvec, x.shape(), std::move(out), {x, v}, [xi, vi, r, c](TensorImpl<T>& o) {
        if (xi->requires_grad) detail::accumulate(*xi, o.grad);
        if (vi->requires_grad) {
            vi->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) vi->grad[j] += o.grad[i * c + j];
        }
    });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    std::size_t rows = parts[0].size(0), cols = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.size(0) != rows)
            throw std::invalid_argument("concat_cols: rows disagree at " + shape_str(p.shape()));
        cols += p.size(1);
    }
    std::vector<T> out(rows * cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t pc = p.size(1);
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(p.data().begin() + i * pc, pc, out.begin() + i * cols + off);
        off += pc;
    }
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return detail::make_result<T>(OpKind::concat_cols, {rows, cols}, std::move(out), parts,
                                  [impls, rows, cols](TensorImpl<T>& o) {
                                      std::size_t off = 0;
                                      for (auto& pi : impls) {
                                          std::size_t pc = pi->shape[1];
                                          if (pi->requires_grad) {
                                              pi->ensure_grad();
                                              for (std::size_t i = 0; i < rows; ++i)
                                                  for (std::size_t j = 0; j < pc; ++j)
                                                      pi->grad[i * pc + j] += o.grad[i * cols + off + j];
                                          }
                                          off += pc;
                                      }
                                  });
}

// out[i,j] = x[i, idx[i*n_out+j]]; idx is a constant index table. The adjoint
// scatter-adds, which makes this the lookup primitive for relative encodings.
template <class T>
Tensor<T> gather_cols(const Tensor<T>& x, const std::vector<std::int32_t>& idx, std::size_t n_out) {
    if (x.rank() != 2) throw std::invalid_argument("gather_cols: expects rank-2 tensor");
    std::size_t rows = x.size(0), cols = x.size(1);
    if (idx.size() != rows * n_out) throw std::invalid_argument("gather_cols: index table size mismatch");
    std::vector<T> out(rows * n_out);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n_out; ++j) {
            std::int32_t k = idx[i * n_out + j];
            if (k < 0 || static_cast<std::size_t>(k) >= cols)
                throw std::out_of_range("gather_cols: index " + std::to_string(k) + " outside [0," +
                                        std::to_string(cols) + ")");
            out[i * n_out + j] = x.data()[i * cols + static_cast<std::size_t>(k)];
        }
    auto xi = x.impl();
    return detail::make_result<T>(OpKind::gather_cols, {rows, n_out}, std::move(out), {x},
                                  [xi, idx, rows, cols, n_out](TensorImpl<T>& o) {
                                      if (!xi->requires_grad) return;
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < rows; ++i)
                                          for (std::size_t j = 0; j < n_out; ++j)
                                              xi->grad[i * cols + idx[i * n_out + j]] += o.grad[i * n_out + j];
                                  });
}

// out[i, idx[i*c+j]] += x[i,j]; adjoint of gather_cols.
template <class T>
Tensor<T> scatter_cols(const Tensor<T>& x, const std::vector<std::int32_t>& idx, std::size_t n_out) {
    if (x.rank() != 2) throw std::invalid_argument("scatter_cols: expects rank-2 tensor");
    std::size_t rows = x.size(0), cols = x.size(1);
    if (idx.size() != rows * cols) throw std::invalid_argument("scatter_cols: index table size mismatch");
    std::vector<T> out(rows * n_out, T(0));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            std::int32_t k = idx[i * cols + j];
            if (k < 0 || static_cast<std::size_t>(k) >= n_out)
                throw std::out_of_range("scatter_cols: index outside output width");
            out[i * n_out + static_cast<std::size_t>(k)] += x.data()[i * cols + j];
        }
    auto xi = x.impl();
    return detail::make_result<T>(OpKind::scatter_cols, {rows, n_out}, std::move(out), {x},
                                  [xi, idx, rows, cols, n_out](TensorImpl<T>& o) {
                                      if (!xi->requires_grad) return;
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < rows; ++i)
                                          for (std::size_t j = 0; j < cols; ++j)
                                              xi->grad[i * cols + j] += o.grad[i * n_out + idx[i * cols + j]];
                                  });
}

// Selects sample i of a batched tensor [N, rest...] -> [rest...].
template <class T>
Tensor<T> batch_item(const Tensor<T>& x, std::size_t i) {
    if (x.rank() < 2) throw std::invalid_argument("batch_item: expects a batched tensor");
    std::size_t n = x.size(0);
    if (i >= n) throw std::out_of_range("batch_item: sample index out of range");
    Shape rest(x.shape().begin() + 1, x.shape().end());
    std::size_t stride = shape_numel(rest);
    std::vector<T> out(x.data().begin() + i * stride, x.data().begin() + (i + 1) * stride);
    auto xi = x.impl();
    return detail::make_result<T>(OpKind::batch_item, rest, std::move(out), {x}, [xi, i, stride](TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (std::size_t j = 0; j < stride; ++j) xi->grad[i * stride + j] += o.grad[j];
    });
}

template <class T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack_batch: no inputs");
    const Shape& rest = parts[0].shape();
    std::size_t stride = shape_numel(rest);
    std::vector<T> out;
    out.reserve(parts.size() * stride);
    for (const auto& p : parts) {
        detail::check_same_shape(p.shape(), rest, "stack_batch");
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Shape shape;
    shape.push_back(parts.size());
    shape.insert(shape.end(), rest.begin(), rest.end());
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return detail::make_result<T>(OpKind::stack_batch, std::move(shape), std::move(out), parts,
                                  [impls, stride](TensorImpl<T>& o) {
                                      for (std::size_t i = 0; i < impls.size(); ++i) {
                                          if (!impls[i]->requires_grad) continue;
                                          impls[i]->ensure_grad();
                                          for (std::size_t j = 0; j < stride; ++j)
                                              impls[i]->grad[j] += o.grad[i * stride + j];
                                      }
                                  });
}

// ---------------------------------------------------------------------------
// reductions and softmax

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::sum_all, {1}, {acc}, {a}, [ai](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (auto& g : ai->grad) g += o.grad[0];
    });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    T inv = T(1) / static_cast<T>(a.numel());
    auto ai = a.impl();
    return detail::make_result<T>(OpKind::mean_all, {1}, {acc * inv}, {a}, [ai, inv](TensorImpl<T>& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (auto& g : ai->grad) g += o.grad[0] * inv;
    });
}

// Max-subtracted softmax along `axis`; every slice sums to 1.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank()) throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                                      " out of range for " + shape_str(a.shape()));
    std::size_t len = a.size(axis);
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.size(d);
    std::size_t outer = a.numel() / (len * inner);
    std::vector<T> out(a.numel());
    for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
            std::size_t base = ou * len * inner + in;
            T mx = a.data()[base];
            for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, a.data()[base + l * inner]);
            T denom = T(0);
            for (std::size_t l = 0; l < len; ++l) {
                T e = std::exp(a.data()[base + l * inner] - mx);
                out[base + l * inner] = e;
                denom += e;
            }
            for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= denom;
        }
    auto ai = a.impl();
    std::vector<T> saved = out;
    return detail::make_result<T>(OpKind::softmax, a.shape(), std::move(out), {a},
                                  [ai, saved, len, inner, outer](TensorImpl<T>& o) {
                                      if (!ai->requires_grad) return;
                                      ai->ensure_grad();
                                      for (std::size_t ou = 0; ou < outer; ++ou)
                                          for (std::size_t in = 0; in < inner; ++in) {
                                              std::size_t base = ou * len * inner + in;
                                              T dot = T(0);
                                              for (std::size_t l = 0; l < len; ++l)
                                                  dot += o.grad[base + l * inner] * saved[base + l * inner];
                                              for (std::size_t l = 0; l < len; ++l) {
                                                  std::size_t k = base + l * inner;
                                                  ai->grad[k] += saved[k] * (o.grad[k] - dot);
                                              }
                                          }
                                  });
}

// ---------------------------------------------------------------------------
// backward

// Populates grads of every tensor reachable from `loss` that requires grad.
// Gradients accumulate (+=); call zero_grads between optimizer steps.
template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.impl()->node && !loss.requires_grad())
        throw std::invalid_argument("backward: root has no computation graph attached");
    // reachable impls that carry a node, in discovery order
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> seen;
    std::unordered_set<TensorImpl<T>*> on_stack;
    std::function<void(TensorImpl<T>*)> visit = [&](TensorImpl<T>* impl) {
        if (!impl->node || seen.count(impl)) return;
        if (on_stack.count(impl)) throw std::runtime_error("backward: computation graph contains a cycle");
        on_stack.insert(impl);
        for (auto& in : impl->node->inputs) {
            if (in->node && in->node->seq >= impl->node->seq)
                throw std::runtime_error("backward: computation graph contains a cycle");
            visit(in.get());
        }
        on_stack.erase(impl);
        seen.insert(impl);
        order.push_back(impl);
    };
    visit(loss.impl().get());
    std::sort(order.begin(), order.end(),
              [](const TensorImpl<T>* a, const TensorImpl<T>* b) { return a->node->seq > b->node->seq; });
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += T(1);
    for (auto* impl : order) {
        impl->ensure_grad();
        impl->node->backward(*impl);
    }
}

template <class T>
void zero_grads(const std::vector<Tensor<T>>& params) {
    for (const auto& p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// finite-difference gradient checker

template <class T>
struct GradCheckOptions {
    T step = T(1e-5);
    // relative error denominator floor; coordinates where both gradients are
    // tiny would otherwise amplify finite-difference noise
    T denom_floor = T(1e-4);
    std::size_t max_coords = 0;  // 0 = check every coordinate
    std::uint64_t seed = 2024;
};

// Central finite differences of a scalar-valued evaluation against the
// analytic gradients of `wrt`. Returns the max relative error over the
// checked coordinates. `f` must be re-invokable at the current parameter
// values.
template <class T>
T grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> wrt,
             GradCheckOptions<T> opts = GradCheckOptions<T>{}) {
    for (auto& w : wrt)
        if (!w.requires_grad()) throw std::invalid_argument("grad_check: wrt tensor does not require grad");
    for (auto& w : wrt) w.zero_grad();
    Tensor<T> y = f();
    if (y.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    backward(y);
    std::vector<std::vector<T>> analytic;
    for (auto& w : wrt) analytic.push_back(w.grad());

    // coordinate list, optionally subsampled
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t t = 0; t < wrt.size(); ++t)
        for (std::size_t i = 0; i < wrt[t].numel(); ++i) coords.emplace_back(t, i);
    if (opts.max_coords > 0 && coords.size() > opts.max_coords) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(opts.max_coords);
    }

    T max_rel = T(0);
    NoGradGuard guard;
    for (auto [t, i] : coords) {
        T saved = wrt[t].data()[i];
        wrt[t].data()[i] = saved + opts.step;
        T up = f().item();
        wrt[t].data()[i] = saved - opts.step;
        T down = f().item();
        wrt[t].data()[i] = saved;
        T numeric = (up - down) / (2 * opts.step);
        T a = analytic[t][i];
        T denom = std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

// Spec-shaped convenience: checks d f(x) / d x at `point`.
template <class T>
T grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& point, T h) {
    Tensor<T> x = point.clone();
    x.set_requires_grad(true);
    GradCheckOptions<T> opts;
    opts.step = h;
    return grad_check<T>([&]() { return f(x); }, {x}, opts);
}

}  // namespace botkit
