#pragma once

// BoTNet-50: a ResNet-50 bottleneck stack whose last stage swaps each 3x3
// convolution for 2D multi-head self-attention. Stages:
//
//   c1  7x7/64 stride-2 conv, BN, ReLU
//   c2  3x3 stride-2 max pool, then 3 conv bottlenecks
//   c3  4 conv bottlenecks, first downsamples
//   c4  6 conv bottlenecks, first downsamples
//   c5  3 attention bottlenecks, first downsamples via a 2x2 average pool
//       after the attention (attention itself is stride-free)
//   head  global average pool, linear to num_classes logits
//
// Every bottleneck expands to out = 4 * mid channels; mismatched shortcuts use
// a 1x1 stride-matched projection conv + BN. width_multiplier scales every
// channel count exactly (rational arithmetic, rejected when fractional).

#include <algorithm>
#include <array>

#include "attention.hpp"
#include "checkpoint.hpp"
#include "nn_ops.hpp"
#include "util.hpp"

namespace botkit {

struct BotNet50Config {
    std::array<std::size_t, 4> stage_depths{3, 4, 6, 3};
    std::array<std::size_t, 4> stage_mid_channels{64, 128, 256, 512};
    std::size_t heads = 8;
    std::size_t num_classes = 2;
    std::size_t input_size = 224;  // must be divisible by 32
    Rational width{1, 1};
    bool value_relative = false;
};

constexpr std::size_t kInputChannels = 3;  // grayscale slices are replicated across 3 channels

template <class T>
struct Conv2dLayer {
    Tensor<T> weight;  // [K, C, k, k], bias-free (BN always follows)
    std::size_t stride = 1;
    std::size_t padding = 0;
};

template <class T>
struct BnLayer {
    Tensor<T> gamma, beta;
    BnStats<T> stats;
};

template <class T>
struct LinearLayer {
    Tensor<T> weight, bias;
};

namespace detail {

template <class T>
Conv2dLayer<T> make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t padding,
                         std::mt19937_64& rng) {
    T stddev = std::sqrt(T(2) / static_cast<T>(in * k * k));  // fan-in scaling
    Conv2dLayer<T> layer{Tensor<T>::randn({out, in, k, k}, rng, stddev), stride, padding};
    layer.weight.set_requires_grad(true);
    return layer;
}

template <class T>
BnLayer<T> make_bn(std::size_t channels) {
    BnLayer<T> layer{Tensor<T>::full({channels}, T(1)), Tensor<T>::zeros({channels}), BnStats<T>(channels)};
    layer.gamma.set_requires_grad(true);
    layer.beta.set_requires_grad(true);
    return layer;
}

}  // namespace detail

template <class T>
struct BottleneckBlock {
    std::size_t in_channels = 0, mid_channels = 0, out_channels = 0, stride = 1;
    bool attention = false;
    Conv2dLayer<T> conv1;  // 1x1 reduce
    BnLayer<T> bn1;
    Conv2dLayer<T> conv2;  // 3x3 spatial, conv blocks only
    std::optional<MhsaLayer<T>> mhsa;
    bool pool_after_attention = false;  // 2x2 stride-2 average pool
    BnLayer<T> bn2;
    Conv2dLayer<T> conv3;  // 1x1 expand
    BnLayer<T> bn3;
    std::optional<Conv2dLayer<T>> proj;
    std::optional<BnLayer<T>> proj_bn;
};

// grid_h/grid_w: spatial extent of the feature map entering the block's
// spatial op (attention blocks need it for the encoding tables).
template <class T>
BottleneckBlock<T> make_block(std::size_t in, std::size_t mid, std::size_t out, std::size_t stride, bool attention,
                              std::size_t grid_h, std::size_t grid_w, std::size_t heads, bool value_relative,
                              std::mt19937_64& rng) {
    if (out != 4 * mid) throw std::invalid_argument("bottleneck: out channels must be 4x mid channels");
    BottleneckBlock<T> block;
    block.in_channels = in;
    block.mid_channels = mid;
    block.out_channels = out;
    block.stride = stride;
    block.attention = attention;
    block.conv1 = detail::make_conv<T>(in, mid, 1, 1, 0, rng);
    block.bn1 = detail::make_bn<T>(mid);
    if (attention) {
        MhsaConfig cfg{.height = grid_h, .width = grid_w, .d_model = mid, .heads = heads,
                       .value_relative = value_relative};
        block.mhsa = make_mhsa<T>(cfg, rng);
        for (auto& [name, t] : mhsa_parameters(*block.mhsa, "")) t.set_requires_grad(true);
        block.pool_after_attention = (stride == 2);
    } else {
        block.conv2 = detail::make_conv<T>(mid, mid, 3, stride, 1, rng);
    }
    block.bn2 = detail::make_bn<T>(mid);
    block.conv3 = detail::make_conv<T>(mid, out, 1, 1, 0, rng);
    block.bn3 = detail::make_bn<T>(out);
    if (in != out || stride != 1) {
        block.proj = detail::make_conv<T>(in, out, 1, stride, 0, rng);
        block.proj_bn = detail::make_bn<T>(out);
    }
    return block;
}

template <class T>
Tensor<T> bottleneck_forward(BottleneckBlock<T>& block, const Tensor<T>& x, BnMode mode) {
    if (x.size(1) != block.in_channels)
        throw std::invalid_argument("bottleneck: input has " + std::to_string(x.size(1)) + " channels, block expects " +
                                    std::to_string(block.in_channels));
    Tensor<T> h = conv2d(x, block.conv1.weight, block.conv1.stride, block.conv1.padding);
    h = relu(batch_norm2d(h, block.bn1.gamma, block.bn1.beta, block.bn1.stats, mode));
    if (block.attention) {
        h = mhsa2d_forward(*block.mhsa, h);
        if (block.pool_after_attention) h = avg_pool2d(h, 2, 2);
    } else {
        h = conv2d(h, block.conv2.weight, block.conv2.stride, block.conv2.padding);
    }
    h = relu(batch_norm2d(h, block.bn2.gamma, block.bn2.beta, block.bn2.stats, mode));
    h = conv2d(h, block.conv3.weight, block.conv3.stride, block.conv3.padding);
    h = batch_norm2d(h, block.bn3.gamma, block.bn3.beta, block.bn3.stats, mode);
    Tensor<T> shortcut = x;
    if (block.proj) {
        shortcut = conv2d(x, block.proj->weight, block.proj->stride, block.proj->padding);
        shortcut = batch_norm2d(shortcut, block.proj_bn->gamma, block.proj_bn->beta, block.proj_bn->stats, mode);
    }
    if (h.shape() != shortcut.shape())
        throw std::invalid_argument("bottleneck: residual shape " + shape_str(h.shape()) +
                                    " does not match shortcut shape " + shape_str(shortcut.shape()));
    return relu(add(h, shortcut));
}

template <class T>
struct BotNetModel {
    BotNet50Config config;
    std::uint64_t seed = 0;
    Conv2dLayer<T> stem;
    BnLayer<T> stem_bn;
    std::vector<std::vector<BottleneckBlock<T>>> stages;  // stages[0..3] are c2..c5
    LinearLayer<T> fc;
};

template <class T>
BotNetModel<T> build_botnet50(const BotNet50Config& config, std::uint64_t seed) {
    if (config.input_size < 32 || config.input_size % 32 != 0)
        throw std::invalid_argument("botnet: input size must be a positive multiple of 32, got " +
                                    std::to_string(config.input_size));
    if (config.stage_depths.size() != 4) throw std::invalid_argument("botnet: expected 4 stages");
    std::mt19937_64 rng(seed);
    BotNetModel<T> model;
    model.config = config;
    model.seed = seed;
    auto w = [&](std::size_t c) { return config.width.scale(c); };

    model.stem = detail::make_conv<T>(kInputChannels, w(64), 7, 2, 3, rng);
    model.stem_bn = detail::make_bn<T>(w(64));

    std::size_t in = w(64);
    std::size_t spatial = config.input_size / 4;  // stem stride 2, max pool stride 2
    for (std::size_t s = 0; s < 4; ++s) {
        std::size_t mid = w(config.stage_mid_channels[s]);
        std::size_t out = 4 * mid;
        bool attention = (s == 3);  // c5
        std::vector<BottleneckBlock<T>> blocks;
        for (std::size_t b = 0; b < config.stage_depths[s]; ++b) {
            std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
            blocks.push_back(make_block<T>(in, mid, out, stride, attention, spatial, spatial, config.heads,
                                           config.value_relative, rng));
            if (stride == 2) spatial /= 2;
            in = out;
        }
        model.stages.push_back(std::move(blocks));
    }

    // Zero-initialized head: logits start at exactly zero (loss ln C), so the
    // class decision tracks the learned gradient signs from the first step
    // instead of having to outgrow init noise.
    std::size_t features = 4 * w(512);
    model.fc.weight = Tensor<T>::zeros({features, config.num_classes});
    model.fc.bias = Tensor<T>::zeros({config.num_classes});
    model.fc.weight.set_requires_grad(true);
    model.fc.bias.set_requires_grad(true);
    return model;
}

// stage_spatial, when given, receives the output spatial extent of c1..c5.
template <class T>
Tensor<T> forward(BotNetModel<T>& model, const Tensor<T>& batch, BnMode mode = BnMode::eval,
                  std::vector<std::size_t>* stage_spatial = nullptr) {
    if (batch.rank() != 4 || batch.size(1) != kInputChannels || batch.size(2) != model.config.input_size ||
        batch.size(3) != model.config.input_size)
        throw std::invalid_argument("botnet: batch " + shape_str(batch.shape()) + " does not match expected [N," +
                                    std::to_string(kInputChannels) + "," + std::to_string(model.config.input_size) +
                                    "," + std::to_string(model.config.input_size) + "]");
    if (stage_spatial) stage_spatial->clear();
    Tensor<T> h = conv2d(batch, model.stem.weight, model.stem.stride, model.stem.padding);
    h = relu(batch_norm2d(h, model.stem_bn.gamma, model.stem_bn.beta, model.stem_bn.stats, mode));
    if (stage_spatial) stage_spatial->push_back(h.size(2));
    h = max_pool2d(h, 3, 2, 1);
    for (auto& blocks : model.stages) {
        for (auto& block : blocks) h = bottleneck_forward(block, h, mode);
        if (stage_spatial) stage_spatial->push_back(h.size(2));
    }
    return linear(global_avg_pool(h), model.fc.weight, model.fc.bias);
}

namespace detail {

// Enumerates every learnable tensor and every running-statistics vector with
// its checkpoint name, in a fixed order shared by save and load.
template <class T, class ParamFn, class StatFn>
void visit_model(BotNetModel<T>& model, ParamFn&& on_param, StatFn&& on_stat) {
    auto visit_bn = [&](const std::string& prefix, BnLayer<T>& bn) {
        on_param(prefix + ".gamma", bn.gamma);
        on_param(prefix + ".beta", bn.beta);
        on_stat(prefix + ".running_mean", bn.stats.running_mean);
        on_stat(prefix + ".running_var", bn.stats.running_var);
    };
    on_param("c1.conv.weight", model.stem.weight);
    visit_bn("c1.bn", model.stem_bn);
    for (std::size_t s = 0; s < model.stages.size(); ++s)
        for (std::size_t b = 0; b < model.stages[s].size(); ++b) {
            std::string prefix = "c" + std::to_string(s + 2) + "." + std::to_string(b) + ".";
            auto& block = model.stages[s][b];
            on_param(prefix + "conv1.weight", block.conv1.weight);
            visit_bn(prefix + "bn1", block.bn1);
            if (block.attention)
                for (auto& [name, t] : mhsa_parameters(*block.mhsa, prefix + "mhsa.")) on_param(name, t);
            else
                on_param(prefix + "conv2.weight", block.conv2.weight);
            visit_bn(prefix + "bn2", block.bn2);
            on_param(prefix + "conv3.weight", block.conv3.weight);
            visit_bn(prefix + "bn3", block.bn3);
            if (block.proj) {
                on_param(prefix + "proj.weight", block.proj->weight);
                visit_bn(prefix + "proj_bn", *block.proj_bn);
            }
        }
    on_param("fc.weight", model.fc.weight);
    on_param("fc.bias", model.fc.bias);
}

}  // namespace detail

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> model_parameters(BotNetModel<T>& model) {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    detail::visit_model(
        model, [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); },
        [](const std::string&, std::vector<T>&) {});
    return out;
}

template <class T>
std::size_t parameter_count(BotNetModel<T>& model) {
    std::size_t total = 0;
    for (auto& [name, t] : model_parameters(model)) total += t.numel();
    return total;
}

template <class T>
std::size_t mhsa_layer_count(const BotNetModel<T>& model) {
    std::size_t count = 0;
    for (const auto& blocks : model.stages)
        for (const auto& block : blocks)
            if (block.attention) ++count;
    return count;
}

template <class T>
Checkpoint to_checkpoint(BotNetModel<T>& model,
                         const std::vector<std::pair<std::string, std::string>>& extra_metadata = {}) {
    Checkpoint ckpt;
    detail::visit_model(
        model, [&](const std::string& name, Tensor<T>& t) { ckpt.add(name, t); },
        [&](const std::string& name, std::vector<T>& v) { ckpt.add(name, v); });
    ckpt.set_meta("model", "botnet50");
    ckpt.set_meta("config.width", model.config.width.str());
    ckpt.set_meta("config.input_size", std::to_string(model.config.input_size));
    ckpt.set_meta("config.heads", std::to_string(model.config.heads));
    ckpt.set_meta("config.num_classes", std::to_string(model.config.num_classes));
    ckpt.set_meta("config.value_relative", model.config.value_relative ? "1" : "0");
    ckpt.set_meta("seed", std::to_string(model.seed));
    for (const auto& [k, v] : extra_metadata) ckpt.set_meta(k, v);
    return ckpt;
}

// Fills an existing model's parameters and running statistics. Every visited
// name must be present with matching dtype and shape.
template <class T>
void load_state_into(BotNetModel<T>& model, const Checkpoint& ckpt) {
    detail::visit_model(
        model,
        [&](const std::string& name, Tensor<T>& t) {
            const Checkpoint::Entry* e = ckpt.find(name);
            if (!e) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
            if (e->shape != t.shape())
                throw std::runtime_error("checkpoint: entry '" + name + "' has shape " + shape_str(e->shape) +
                                         ", model expects " + shape_str(t.shape()));
            t.impl()->data = ckpt.values<T>(name);
        },
        [&](const std::string& name, std::vector<T>& v) {
            std::vector<T> loaded = ckpt.values<T>(name);
            if (loaded.size() != v.size())
                throw std::runtime_error("checkpoint: entry '" + name + "' has " + std::to_string(loaded.size()) +
                                         " values, model expects " + std::to_string(v.size()));
            v = std::move(loaded);
        });
}

template <class T>
BotNetModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
    BotNet50Config cfg;
    cfg.width = Rational::parse(ckpt.meta_or_throw("config.width"));
    cfg.input_size = std::stoul(ckpt.meta_or_throw("config.input_size"));
    cfg.heads = std::stoul(ckpt.meta_or_throw("config.heads"));
    cfg.num_classes = std::stoul(ckpt.meta_or_throw("config.num_classes"));
    cfg.value_relative = ckpt.meta_or_throw("config.value_relative") == "1";
    std::uint64_t seed = std::stoull(ckpt.meta_or_throw("seed"));
    BotNetModel<T> model = build_botnet50<T>(cfg, seed);
    load_state_into(model, ckpt);
    return model;
}

template <class T>
void save_checkpoint(BotNetModel<T>& model, const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& extra_metadata = {}) {
    to_checkpoint(model, extra_metadata).save_file(path);
}

template <class T>
BotNetModel<T> load_checkpoint(const std::string& path) {
    return model_from_checkpoint<T>(Checkpoint::load_file(path));
}

}  // namespace botkit
