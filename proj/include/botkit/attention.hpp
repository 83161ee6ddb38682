#pragma once

// 2D multi-head self-attention with factorized relative position encodings.
//
// For a H x W grid flattened row-major to L = H*W positions, each head h
// computes, per query i and key j,
//
//   logits[i][j] = (q_i . k_j + b_ij) / sqrt(d_head)
//   b_ij         = q_i . (R_h[dh] + R_w[dw])
//
// where dh = row(j) - row(i), dw = col(j) - col(i), and the shared tables
// R_h, R_w are indexed at dh + (H-1) and dw + (W-1). Offsets are key minus
// query. Heads are concatenated with no output projection.
//
// The pieces (content_logits, relative_logits, attention_weights,
// attention_output) are public so equivalence checks can reassemble the layer
// from primitives and compare against the fused path.

#include <cstdint>
#include <optional>
#include <type_traits>
#include <utility>

#include "tensor.hpp"

namespace botkit {

struct MhsaConfig {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t d_model = 0;
    std::size_t heads = 1;
    bool value_relative = false;  // adds sum_j a_ij * (V_h[dh] + V_w[dw]) to each output

    std::size_t d_head() const {
        if (heads == 0 || d_model % heads != 0)
            throw std::invalid_argument("mhsa: d_model " + std::to_string(d_model) + " not divisible by heads " +
                                        std::to_string(heads));
        return d_model / heads;
    }
    std::size_t positions() const { return height * width; }
};

template <class T>
struct MhsaLayer {
    MhsaConfig cfg;
    std::vector<Tensor<T>> wq, wk, wv;  // per head, [d_model, d_head]
    Tensor<T> rh, rw;                   // [(2H-1), d_head], [(2W-1), d_head], shared across heads
    Tensor<T> vh, vw;                   // value tables, only allocated when cfg.value_relative
};

template <class T>
MhsaLayer<T> make_mhsa(const MhsaConfig& cfg, std::mt19937_64& rng) {
    if (cfg.height == 0 || cfg.width == 0) throw std::invalid_argument("mhsa: grid extents must be positive");
    std::size_t d = cfg.d_head();
    MhsaLayer<T> layer;
    layer.cfg = cfg;
    T proj_std = T(1) / std::sqrt(static_cast<T>(cfg.d_model));
    T table_std = T(1) / std::sqrt(static_cast<T>(d));
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        layer.wq.push_back(Tensor<T>::randn({cfg.d_model, d}, rng, proj_std));
        layer.wk.push_back(Tensor<T>::randn({cfg.d_model, d}, rng, proj_std));
        layer.wv.push_back(Tensor<T>::randn({cfg.d_model, d}, rng, proj_std));
    }
    layer.rh = Tensor<T>::randn({2 * cfg.height - 1, d}, rng, table_std);
    layer.rw = Tensor<T>::randn({2 * cfg.width - 1, d}, rng, table_std);
    if (cfg.value_relative) {
        layer.vh = Tensor<T>::randn({2 * cfg.height - 1, d}, rng, table_std);
        layer.vw = Tensor<T>::randn({2 * cfg.width - 1, d}, rng, table_std);
    }
    return layer;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> mhsa_parameters(const MhsaLayer<T>& layer, const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t h = 0; h < layer.cfg.heads; ++h) {
        out.emplace_back(prefix + "wq" + std::to_string(h), layer.wq[h]);
        out.emplace_back(prefix + "wk" + std::to_string(h), layer.wk[h]);
        out.emplace_back(prefix + "wv" + std::to_string(h), layer.wv[h]);
    }
    out.emplace_back(prefix + "rh", layer.rh);
    out.emplace_back(prefix + "rw", layer.rw);
    if (layer.cfg.value_relative) {
        out.emplace_back(prefix + "vh", layer.vh);
        out.emplace_back(prefix + "vw", layer.vw);
    }
    return out;
}

// Flattened lookup tables mapping (query i, key j) to table rows.
// idx_h[i*L + j] = row(j) - row(i) + (H-1), idx_w likewise with columns.
inline std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> relative_index_tables(std::size_t H,
                                                                                             std::size_t W) {
    std::size_t L = H * W;
    std::vector<std::int32_t> idx_h(L * L), idx_w(L * L);
    for (std::size_t i = 0; i < L; ++i) {
        std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(i / W), iw = static_cast<std::ptrdiff_t>(i % W);
        for (std::size_t j = 0; j < L; ++j) {
            std::ptrdiff_t jh = static_cast<std::ptrdiff_t>(j / W), jw = static_cast<std::ptrdiff_t>(j % W);
            idx_h[i * L + j] = static_cast<std::int32_t>(jh - ih + static_cast<std::ptrdiff_t>(H) - 1);
            idx_w[i * L + j] = static_cast<std::int32_t>(jw - iw + static_cast<std::ptrdiff_t>(W) - 1);
        }
    }
    return {std::move(idx_h), std::move(idx_w)};
}

// q, k: [L, d_head]. Returns q k^T / sqrt(d_head).
template <class T>
Tensor<T> content_logits(const Tensor<T>& q, const Tensor<T>& k) {
    detail::check_same_shape(q.shape(), k.shape(), "content_logits");
    T inv = T(1) / std::sqrt(static_cast<T>(q.size(1)));
    return scale(matmul(q, transpose2d(k)), inv);
}

// x: [L, d_model] with per-head projections wq, wk: [d_model, d_head].
template <class T>
Tensor<T> content_logits(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk) {
    return content_logits(matmul(x, wq), matmul(x, wk));
}

// q: [L, d_head]. Returns the unscaled bias matrix b, [L, L].
template <class T>
Tensor<T> relative_logits(const Tensor<T>& q, const Tensor<T>& rh, const Tensor<T>& rw, std::size_t H,
                          std::size_t W) {
    std::size_t L = H * W;
    if (q.rank() != 2 || q.size(0) != L)
        throw std::invalid_argument("relative_logits: q must be [" + std::to_string(L) + ", d_head], got " +
                                    shape_str(q.shape()));
    if (rh.size(0) != 2 * H - 1 || rw.size(0) != 2 * W - 1)
        throw std::invalid_argument("relative_logits: tables must have 2*extent-1 rows");
    auto [idx_h, idx_w] = relative_index_tables(H, W);
    Tensor<T> scores_h = matmul(q, transpose2d(rh));  // [L, 2H-1]
    Tensor<T> scores_w = matmul(q, transpose2d(rw));  // [L, 2W-1]
    return add(gather_cols(scores_h, idx_h, L), gather_cols(scores_w, idx_w, L));
}

// Row softmax: each query's weights over all keys sum to one.
template <class T>
Tensor<T> attention_weights(const Tensor<T>& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("attention_weights: logits must be [L, L]");
    return softmax(logits, 1);
}

// weights: [L, L] row-stochastic, v: [L, d_head].
template <class T>
Tensor<T> attention_output(const Tensor<T>& weights, const Tensor<T>& v) {
    return matmul(weights, v);
}

// Value-side relative tables plus the grid needed to resolve their offsets.
template <class T>
struct ValueRelative {
    Tensor<T> vh, vw;  // [(2H-1), d_head], [(2W-1), d_head]
    std::size_t height = 0, width = 0;
};

// weights: [L, L], x: [L, d_model], wv: [d_model, d_head]. Computes
// z_i = sum_j a_ij (x_j W^V), plus sum_j a_ij (V_h[dh] + V_w[dw]) when the
// value-relative tables are supplied.
template <class T>
Tensor<T> attention_output(const Tensor<T>& weights, const Tensor<T>& x, const Tensor<T>& wv,
                           const std::type_identity_t<std::optional<ValueRelative<T>>>& vrel = std::nullopt) {
    Tensor<T> out = matmul(weights, matmul(x, wv));
    if (vrel) {
        auto [idx_h, idx_w] = relative_index_tables(vrel->height, vrel->width);
        // S[i][t] = sum of weights over keys j whose offset maps to table row t,
        // so S . table accumulates sum_j a_ij * table[offset(i,j)].
        Tensor<T> sum_h = scatter_cols(weights, idx_h, 2 * vrel->height - 1);
        Tensor<T> sum_w = scatter_cols(weights, idx_w, 2 * vrel->width - 1);
        out = add(out, add(matmul(sum_h, vrel->vh), matmul(sum_w, vrel->vw)));
    }
    return out;
}

// One head over flattened input x_flat [L, d_model] -> [L, d_head].
template <class T>
Tensor<T> mhsa_head(const MhsaLayer<T>& layer, const Tensor<T>& x_flat, std::size_t head) {
    const MhsaConfig& cfg = layer.cfg;
    Tensor<T> q = matmul(x_flat, layer.wq[head]);
    Tensor<T> k = matmul(x_flat, layer.wk[head]);
    T inv = T(1) / std::sqrt(static_cast<T>(cfg.d_head()));
    Tensor<T> logits = add(content_logits(q, k),
                           scale(relative_logits(q, layer.rh, layer.rw, cfg.height, cfg.width), inv));
    Tensor<T> weights = attention_weights(logits);
    std::optional<ValueRelative<T>> vrel;
    if (cfg.value_relative) vrel = ValueRelative<T>{layer.vh, layer.vw, cfg.height, cfg.width};
    return attention_output(weights, x_flat, layer.wv[head], vrel);
}

// x: [N, d_model, H, W] -> [N, heads*d_head, H, W]. Heads concatenated, no
// output projection.
template <class T>
Tensor<T> mhsa2d_forward(const MhsaLayer<T>& layer, const Tensor<T>& x) {
    const MhsaConfig& cfg = layer.cfg;
    if (x.rank() != 4) throw std::invalid_argument("mhsa2d_forward: input must be [N,C,H,W]");
    if (x.size(1) != cfg.d_model || x.size(2) != cfg.height || x.size(3) != cfg.width)
        throw std::invalid_argument("mhsa2d_forward: input " + shape_str(x.shape()) + " does not match layer [" +
                                    std::to_string(cfg.d_model) + "," + std::to_string(cfg.height) + "," +
                                    std::to_string(cfg.width) + "]");
    std::size_t N = x.size(0), L = cfg.positions();
    std::vector<Tensor<T>> outputs;
    outputs.reserve(N);
    for (std::size_t n = 0; n < N; ++n) {
        Tensor<T> item = reshape(batch_item(x, n), {cfg.d_model, L});
        Tensor<T> x_flat = transpose2d(item);  // [L, d_model]
        std::vector<Tensor<T>> heads;
        heads.reserve(cfg.heads);
        for (std::size_t h = 0; h < cfg.heads; ++h) heads.push_back(mhsa_head(layer, x_flat, h));
        Tensor<T> merged = (cfg.heads == 1) ? heads[0] : concat_cols(heads);   // [L, d_model]
        outputs.push_back(reshape(transpose2d(merged), {cfg.d_model, cfg.height, cfg.width}));
    }
    return stack_batch(outputs);
}

}  // namespace botkit
