#pragma once

// NCHW convolution, pooling, batch normalization, linear and cross-entropy
// ops on top of the autodiff core. Convolution runs as im2col + gemm; the
// naive nested-loop form lives in the tests as an independent oracle.

#include <cmath>
#include <limits>
#include <optional>
#include <type_traits>

#include "tensor.hpp"

namespace botkit {

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                                   const char* op) {
    if (kernel == 0 || stride == 0) throw std::invalid_argument(std::string(op) + ": kernel and stride must be positive");
    if (in + 2 * padding < kernel)
        throw std::invalid_argument(std::string(op) + ": kernel " + std::to_string(kernel) +
                                    " exceeds padded extent " + std::to_string(in + 2 * padding));
    return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

// cols is [C*kh*kw, OH*OW] for one sample.
template <class T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t padding, std::size_t OH, std::size_t OW, T* cols) {
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
                T* row = cols + ((c * kh + i) * kw + j) * OH * OW;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
                        T v = T(0);
                        if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(H) && iw >= 0 && iw < static_cast<std::ptrdiff_t>(W))
                            v = x[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
                        row[oh * OW + ow] = v;
                    }
                }
            }
}

template <class T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t padding, std::size_t OH, std::size_t OW, T* gx) {
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
                const T* row = cols + ((c * kh + i) * kw + j) * OH * OW;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        gx[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)] += row[oh * OW + ow];
                    }
                }
            }
}

}  // namespace detail

// input [N,C,H,W], weight [K,C,kh,kw], optional bias [K] -> [N,K,OH,OW]
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, std::size_t stride, std::size_t padding,
                 const std::type_identity_t<std::optional<Tensor<T>>>& bias = std::nullopt) {
    if (input.rank() != 4) throw std::invalid_argument("conv2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
    if (weight.rank() != 4) throw std::invalid_argument("conv2d: weight must be [K,C,kh,kw], got " + shape_str(weight.shape()));
    std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    std::size_t K = weight.size(0), kh = weight.size(2), kw = weight.size(3);
    if (weight.size(1) != C)
        throw std::invalid_argument("conv2d: input channels C=" + std::to_string(C) +
                                    " do not match weight channels C=" + std::to_string(weight.size(1)));
    if (bias && (bias->rank() != 1 || bias->size(0) != K))
        throw std::invalid_argument("conv2d: bias must be [K=" + std::to_string(K) + "], got " + shape_str(bias->shape()));
    std::size_t OH = conv_out_extent(H, kh, stride, padding, "conv2d");
    std::size_t OW = conv_out_extent(W, kw, stride, padding, "conv2d");

    std::size_t patch = C * kh * kw, area = OH * OW;
    std::vector<std::vector<T>> cols(N, std::vector<T>(patch * area));
    std::vector<T> out(N * K * area, T(0));
    for (std::size_t n = 0; n < N; ++n) {
        detail::im2col(input.data().data() + n * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW, cols[n].data());
        detail::gemm_nn(weight.data().data(), cols[n].data(), out.data() + n * K * area, K, patch, area);
        if (bias)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t o = 0; o < area; ++o) out[(n * K + k) * area + o] += bias->data()[k];
    }

    std::vector<Tensor<T>> inputs = {input, weight};
    if (bias) inputs.push_back(*bias);
    auto xi = input.impl(), wi = weight.impl();
    auto bi = bias ? bias->impl() : nullptr;
    bool keep_cols = autograd_enabled() && (input.requires_grad() || weight.requires_grad());
    auto saved_cols = keep_cols ? std::make_shared<std::vector<std::vector<T>>>(std::move(cols)) : nullptr;
    return detail::make_result<T>(
        OpKind::conv2d, {N, K, OH, OW}, std::move(out), std::move(inputs),
        [xi, wi, bi, saved_cols, N, C, H, W, K, kh, kw, stride, padding, OH, OW, patch, area](TensorImpl<T>& o) {
            for (std::size_t n = 0; n < N; ++n) {
                const T* go = o.grad.data() + n * K * area;
                if (wi->requires_grad) {
                    wi->ensure_grad();
                    detail::gemm_nt(go, (*saved_cols)[n].data(), wi->grad.data(), K, area, patch);
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    std::vector<T> gcols(patch * area, T(0));
                    detail::gemm_tn(wi->data.data(), go, gcols.data(), patch, K, area);
                    detail::col2im_add(gcols.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                                       xi->grad.data() + n * C * H * W);
                }
                if (bi && bi->requires_grad) {
                    bi->ensure_grad();
                    for (std::size_t k = 0; k < K; ++k)
                        for (std::size_t ofs = 0; ofs < area; ++ofs) bi->grad[k] += go[k * area + ofs];
                }
            }
        });
}

// Backward routes gradient only to the argmax cell of each window; the first
// cell in window scan order wins ties. Padding cells never win.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride, std::size_t padding = 0) {
    if (input.rank() != 4) throw std::invalid_argument("max_pool2d: input must be [N,C,H,W]");
    std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    std::size_t OH = conv_out_extent(H, kernel, stride, padding, "max_pool2d");
    std::size_t OW = conv_out_extent(W, kernel, stride, padding, "max_pool2d");
    std::size_t area = OH * OW;
    std::vector<T> out(N * C * area);
    std::vector<std::uint32_t> argmax(N * C * area);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* plane = input.data().data() + nc * H * W;
        for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
                T best = -std::numeric_limits<T>::infinity();
                std::uint32_t best_idx = 0;
                for (std::size_t i = 0; i < kernel; ++i) {
                    std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t j = 0; j < kernel; ++j) {
                        std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        T v = plane[static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)];
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<std::uint32_t>(ih * static_cast<std::ptrdiff_t>(W) + iw);
                        }
                    }
                }
                out[nc * area + oh * OW + ow] = best;
                argmax[nc * area + oh * OW + ow] = best_idx;
            }
    }
    auto xi = input.impl();
    return detail::make_result<T>(OpKind::max_pool2d, {N, C, OH, OW}, std::move(out), {input},
                                  [xi, argmax, N, C, H, W, area](TensorImpl<T>& o) {
                                      if (!xi->requires_grad) return;
                                      xi->ensure_grad();
                                      for (std::size_t nc = 0; nc < N * C; ++nc)
                                          for (std::size_t ofs = 0; ofs < area; ++ofs)
                                              xi->grad[nc * H * W + argmax[nc * area + ofs]] += o.grad[nc * area + ofs];
                                  });
}

// Unpadded windowed mean; gradient spreads uniformly over each window.
template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride) {
    if (input.rank() != 4) throw std::invalid_argument("avg_pool2d: input must be [N,C,H,W]");
    std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    std::size_t OH = conv_out_extent(H, kernel, stride, 0, "avg_pool2d");
    std::size_t OW = conv_out_extent(W, kernel, stride, 0, "avg_pool2d");
    std::size_t area = OH * OW;
    T inv = T(1) / static_cast<T>(kernel * kernel);
    std::vector<T> out(N * C * area, T(0));
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* plane = input.data().data() + nc * H * W;
        for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
                T acc = T(0);
                for (std::size_t i = 0; i < kernel; ++i)
                    for (std::size_t j = 0; j < kernel; ++j) acc += plane[(oh * stride + i) * W + ow * stride + j];
                out[nc * area + oh * OW + ow] = acc * inv;
            }
    }
    auto xi = input.impl();
    return detail::make_result<T>(OpKind::avg_pool2d, {N, C, OH, OW}, std::move(out), {input},
                                  [xi, N, C, H, W, kernel, stride, OH, OW, area, inv](TensorImpl<T>& o) {
                                      if (!xi->requires_grad) return;
                                      xi->ensure_grad();
                                      for (std::size_t nc = 0; nc < N * C; ++nc)
                                          for (std::size_t oh = 0; oh < OH; ++oh)
                                              for (std::size_t ow = 0; ow < OW; ++ow) {
                                                  T g = o.grad[nc * area + oh * OW + ow] * inv;
                                                  for (std::size_t i = 0; i < kernel; ++i)
                                                      for (std::size_t j = 0; j < kernel; ++j)
                                                          xi->grad[nc * H * W + (oh * stride + i) * W + ow * stride + j] += g;
                                              }
                                  });
}

// [N,C,H,W] -> [N,C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
    if (input.rank() != 4) throw std::invalid_argument("global_avg_pool: input must be [N,C,H,W]");
    std::size_t N = input.size(0), C = input.size(1), area = input.size(2) * input.size(3);
    if (area == 0) throw std::invalid_argument("global_avg_pool: empty spatial extent");
    T inv = T(1) / static_cast<T>(area);
    std::vector<T> out(N * C, T(0));
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        T acc = T(0);
        for (std::size_t o = 0; o < area; ++o) acc += input.data()[nc * area + o];
        out[nc] = acc * inv;
    }
    auto xi = input.impl();
    return detail::make_result<T>(OpKind::global_avg_pool, {N, C}, std::move(out), {input},
                                  [xi, N, C, area, inv](TensorImpl<T>& o) {
                                      if (!xi->requires_grad) return;
                                      xi->ensure_grad();
                                      for (std::size_t nc = 0; nc < N * C; ++nc)
                                          for (std::size_t ofs = 0; ofs < area; ++ofs)
                                              xi->grad[nc * area + ofs] += o.grad[nc] * inv;
                                  });
}

// ---------------------------------------------------------------------------
// batch normalization

enum class BnMode {
    train,               // batch statistics, running stats updated
    train_frozen_stats,  // batch statistics, running stats untouched (SAM second pass)
    eval,                // running statistics
};

template <class T>
struct BnStats {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    explicit BnStats(std::size_t channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Population (biased) variance throughout, both for normalization and for the
// running-average update.
template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, BnStats<T>& stats,
                       BnMode mode) {
    if (input.rank() != 4) throw std::invalid_argument("batch_norm2d: input must be [N,C,H,W]");
    std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    if (gamma.numel() != C || beta.numel() != C)
        throw std::invalid_argument("batch_norm2d: gamma/beta must have C=" + std::to_string(C) + " elements");
    if (stats.running_mean.size() != C)
        throw std::invalid_argument("batch_norm2d: running stats sized for " +
                                    std::to_string(stats.running_mean.size()) + " channels, input has " +
                                    std::to_string(C));
    std::size_t m = N * H * W;
    if (m == 0) throw std::invalid_argument("batch_norm2d: zero-size channel slab");
    bool use_batch_stats = (mode != BnMode::eval);
    if (use_batch_stats && m < 2)
        throw std::invalid_argument("batch_norm2d: train mode needs at least 2 values per channel, got " +
                                    std::to_string(m));

    std::size_t area = H * W;
    std::vector<T> mean(C, T(0)), var(C, T(0));
    if (use_batch_stats) {
        for (std::size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < area; ++o) acc += input.data()[(n * C + c) * area + o];
            mean[c] = acc / static_cast<T>(m);
        }
        for (std::size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < area; ++o) {
                    T d = input.data()[(n * C + c) * area + o] - mean[c];
                    acc += d * d;
                }
            var[c] = acc / static_cast<T>(m);
        }
        if (mode == BnMode::train) {
            for (std::size_t c = 0; c < C; ++c) {
                stats.running_mean[c] = (T(1) - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
                stats.running_var[c] = (T(1) - stats.momentum) * stats.running_var[c] + stats.momentum * var[c];
            }
        }
    } else {
        mean = stats.running_mean;
        var = stats.running_var;
    }

    std::vector<T> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + stats.eps);
    std::vector<T> xhat(input.numel());
    std::vector<T> out(input.numel());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t o = 0; o < area; ++o) {
                std::size_t k = (n * C + c) * area + o;
                xhat[k] = (input.data()[k] - mean[c]) * inv_std[c];
                out[k] = gamma.data()[c] * xhat[k] + beta.data()[c];
            }

    auto xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
    return detail::make_result<T>(
        OpKind::batch_norm2d, input.shape(), std::move(out), {input, gamma, beta},
        [xi, gi, bi, xhat, inv_std, use_batch_stats, N, C, area, m](TensorImpl<T>& o) {
            for (std::size_t c = 0; c < C; ++c) {
                T sum_g = T(0), sum_gx = T(0);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t ofs = 0; ofs < area; ++ofs) {
                        std::size_t k = (n * C + c) * area + ofs;
                        sum_g += o.grad[k];
                        sum_gx += o.grad[k] * xhat[k];
                    }
                if (gi->requires_grad) {
                    gi->ensure_grad();
                    gi->grad[c] += sum_gx;
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    bi->grad[c] += sum_g;
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    T g = gi->data[c] * inv_std[c];
                    if (use_batch_stats) {
                        T mg = sum_g / static_cast<T>(m);
                        T mgx = sum_gx / static_cast<T>(m);
                        for (std::size_t n = 0; n < N; ++n)
                            for (std::size_t ofs = 0; ofs < area; ++ofs) {
                                std::size_t k = (n * C + c) * area + ofs;
                                xi->grad[k] += g * (o.grad[k] - mg - xhat[k] * mgx);
                            }
                    } else {
                        for (std::size_t n = 0; n < N; ++n)
                            for (std::size_t ofs = 0; ofs < area; ++ofs) {
                                std::size_t k = (n * C + c) * area + ofs;
                                xi->grad[k] += g * o.grad[k];
                            }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------

// input [N,D] x weight [D,M] + bias [M]
template <class T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (input.rank() != 2 || weight.rank() != 2 || input.size(1) != weight.size(0))
        throw std::invalid_argument("linear: incompatible shapes " + shape_str(input.shape()) + " x " +
                                    shape_str(weight.shape()));
    return add_rowvec(matmul(input, weight), bias);
}

// Mean over the batch of -log softmax(logits)[label]. Gradient of the logits
// is (softmax - onehot) / N.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [N,K]");
    std::size_t N = logits.size(0), K = logits.size(1);
    if (labels.size() != N)
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                    std::to_string(N));
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= K)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(l) + " outside [0," +
                                        std::to_string(K) + ")");
    std::vector<T> probs(N * K);
    T loss = T(0);
    for (std::size_t n = 0; n < N; ++n) {
        const T* row = logits.data().data() + n * K;
        T mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        T denom = T(0);
        for (std::size_t k = 0; k < K; ++k) {
            probs[n * K + k] = std::exp(row[k] - mx);
            denom += probs[n * K + k];
        }
        for (std::size_t k = 0; k < K; ++k) probs[n * K + k] /= denom;
        loss += std::log(denom) + mx - row[static_cast<std::size_t>(labels[n])];
    }
    loss /= static_cast<T>(N);
    auto li = logits.impl();
    return detail::make_result<T>(OpKind::cross_entropy, {1}, {loss}, {logits},
                                  [li, probs, labels, N, K](TensorImpl<T>& o) {
                                      if (!li->requires_grad) return;
                                      li->ensure_grad();
                                      T g = o.grad[0] / static_cast<T>(N);
                                      for (std::size_t n = 0; n < N; ++n)
                                          for (std::size_t k = 0; k < K; ++k) {
                                              T onehot = (static_cast<std::size_t>(labels[n]) == k) ? T(1) : T(0);
                                              li->grad[n * K + k] += g * (probs[n * K + k] - onehot);
                                          }
                                  });
}

}  // namespace botkit
