#pragma once

// Self-check battery behind the verify command.
//
// Each check recomputes a property against an independent reference (direct
// loops, finite differences, pairwise statistics, hand-computed values) and
// throws on disagreement. The battery returns one row per check; any failure
// should surface as a nonzero exit.
//
// Sabotage modes deliberately re-route a check's subject computation through
// a known-wrong variant (softmax over the wrong axis, position bias added
// without its scale, a subject copied across split partitions). A healthy
// battery must flag every sabotage; this is exercised by mutation tests.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "botkit/attention.hpp"
#include "botkit/botnet.hpp"
#include "botkit/ensemble.hpp"
#include "botkit/metrics.hpp"
#include "botkit/nn_ops.hpp"
#include "botkit/pipeline.hpp"
#include "botkit/sam.hpp"
#include "botkit/tensor.hpp"

namespace botkit {

enum class Sabotage { none, softmax_axis, unscaled_rel_logits, leaked_subject };

inline Sabotage parse_sabotage(const std::string& s) {
    if (s == "none" || s.empty()) return Sabotage::none;
    if (s == "softmax-axis") return Sabotage::softmax_axis;
    if (s == "unscaled-rel-logits") return Sabotage::unscaled_rel_logits;
    if (s == "leaked-subject") return Sabotage::leaked_subject;
    throw std::invalid_argument("unknown bug name: " + s +
                                " (expected softmax-axis, unscaled-rel-logits or leaked-subject)");
}

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;  // failure reason, empty on pass
};

namespace verify_detail {

inline void expect(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

inline void expect_close(double a, double b, double tol, const std::string& what) {
    if (!(std::abs(a - b) <= tol))
        throw std::runtime_error(what + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

// Direct convolution by its defining sums, no im2col.
inline Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride,
                                     std::size_t padding) {
    std::size_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    std::size_t F = w.size(0), K = w.size(2);
    std::size_t OH = (H + 2 * padding - K) / stride + 1;
    std::size_t OW = (W + 2 * padding - K) / stride + 1;
    std::vector<double> out(N * F * OH * OW, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < K; ++kh)
                            for (std::size_t kw = 0; kw < K; ++kw) {
                                long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(padding);
                                long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(padding);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W))
                                    continue;
                                acc += x.data()[((n * C + c) * H + static_cast<std::size_t>(ih)) * W +
                                                static_cast<std::size_t>(iw)] *
                                       w.data()[((f * C + c) * K + kh) * K + kw];
                            }
                    out[((n * F + f) * OH + oh) * OW + ow] = acc;
                }
    return Tensor<double>::from_data({N, F, OH, OW}, std::move(out));
}

// Per-position attention by its defining sums, one query at a time.
inline std::vector<double> mhsa_reference(const MhsaLayer<double>& layer, const Tensor<double>& x) {
    const MhsaConfig& cfg = layer.cfg;
    std::size_t H = cfg.height, W = cfg.width, L = H * W, C = cfg.d_model, d = cfg.d_head();
    std::vector<double> out(C * L, 0.0);
    auto feat = [&](std::size_t pos, std::size_t f) { return x.data()[f * L + pos]; };
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        std::vector<std::vector<double>> q(L, std::vector<double>(d, 0.0)), k = q, v = q;
        for (std::size_t pos = 0; pos < L; ++pos)
            for (std::size_t e = 0; e < d; ++e)
                for (std::size_t f = 0; f < C; ++f) {
                    q[pos][e] += feat(pos, f) * layer.wq[h].data()[f * d + e];
                    k[pos][e] += feat(pos, f) * layer.wk[h].data()[f * d + e];
                    v[pos][e] += feat(pos, f) * layer.wv[h].data()[f * d + e];
                }
        double inv = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < L; ++i) {
            long ri = static_cast<long>(i / W), ci = static_cast<long>(i % W);
            std::vector<double> logits(L, 0.0);
            for (std::size_t j = 0; j < L; ++j) {
                long rj = static_cast<long>(j / W), cj = static_cast<long>(j % W);
                double content = 0.0, bias = 0.0;
                for (std::size_t e = 0; e < d; ++e) {
                    content += q[i][e] * k[j][e];
                    bias += q[i][e] * (layer.rh.data()[static_cast<std::size_t>(rj - ri + static_cast<long>(H) - 1) *
                                                           d + e] +
                                       layer.rw.data()[static_cast<std::size_t>(cj - ci + static_cast<long>(W) - 1) *
                                                           d + e]);
                }
                logits[j] = inv * content + inv * bias;
            }
            double mx = logits[0];
            for (double l : logits) mx = std::max(mx, l);
            double z = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (std::size_t j = 0; j < L; ++j)
                for (std::size_t e = 0; e < d; ++e) out[(h * d + e) * L + i] += logits[j] / z * v[j][e];
        }
    }
    return out;
}

// The same layer assembled from the public single-head ops; sabotage swaps in
// the deliberately wrong softmax axis or drops the bias scaling.
inline std::vector<double> mhsa_assembly(const MhsaLayer<double>& layer, const Tensor<double>& x_flat,
                                         Sabotage sabotage) {
    const MhsaConfig& cfg = layer.cfg;
    std::size_t L = cfg.positions(), d = cfg.d_head(), C = cfg.d_model;
    std::vector<double> out(C * L, 0.0);
    double inv = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Tensor<double> q = matmul(x_flat, layer.wq[h]);
        Tensor<double> k = matmul(x_flat, layer.wk[h]);
        Tensor<double> v = matmul(x_flat, layer.wv[h]);
        Tensor<double> bias = relative_logits(q, layer.rh, layer.rw, cfg.height, cfg.width);
        Tensor<double> logits = (sabotage == Sabotage::unscaled_rel_logits)
                                    ? add(content_logits(q, k), bias)
                                    : add(content_logits(q, k), scale(bias, inv));
        Tensor<double> weights = softmax(logits, sabotage == Sabotage::softmax_axis ? 0 : 1);
        Tensor<double> y = attention_output(weights, v);  // [L, d]
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t e = 0; e < d; ++e) out[(h * d + e) * L + i] = y.data()[i * d + e];
    }
    return out;
}

}  // namespace verify_detail

inline std::vector<CheckResult> run_verification(Sabotage sabotage = Sabotage::none) {
    using verify_detail::expect;
    using verify_detail::expect_close;

    std::vector<std::pair<std::string, std::function<void()>>> checks;

    checks.emplace_back("conv2d matches the direct-sum reference", [] {
        std::mt19937_64 rng(fnv1a("verify-conv"));
        Tensor<double> x = Tensor<double>::randn({2, 3, 7, 7}, rng);
        Tensor<double> w = Tensor<double>::randn({4, 3, 3, 3}, rng);
        NoGradGuard guard;
        Tensor<double> got = conv2d(x, w, 2, 1);
        Tensor<double> want = verify_detail::conv_reference(x, w, 2, 1);
        for (std::size_t i = 0; i < got.numel(); ++i)
            expect_close(got.data()[i], want.data()[i], 1e-10, "conv output");
    });

    checks.emplace_back("pooling matches the direct scan", [] {
        std::mt19937_64 rng(fnv1a("verify-pool"));
        Tensor<double> x = Tensor<double>::randn({1, 2, 6, 6}, rng);
        NoGradGuard guard;
        Tensor<double> mx = max_pool2d(x, 2, 2, 0);
        Tensor<double> av = avg_pool2d(x, 2, 2);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t oh = 0; oh < 3; ++oh)
                for (std::size_t ow = 0; ow < 3; ++ow) {
                    double best = -1e300, sum = 0.0;
                    for (std::size_t kh = 0; kh < 2; ++kh)
                        for (std::size_t kw = 0; kw < 2; ++kw) {
                            double val = x.data()[(c * 6 + oh * 2 + kh) * 6 + ow * 2 + kw];
                            best = std::max(best, val);
                            sum += val;
                        }
                    expect_close(mx.data()[(c * 3 + oh) * 3 + ow], best, 1e-12, "max pool cell");
                    expect_close(av.data()[(c * 3 + oh) * 3 + ow], sum / 4.0, 1e-12, "avg pool cell");
                }
    });

    checks.emplace_back("batch normalization reproduces the two-point example", [] {
        Tensor<double> x = Tensor<double>::from_data({2, 1, 1, 1}, {0.0, 2.0});
        Tensor<double> gamma = Tensor<double>::from_data({1}, {1.0});
        Tensor<double> beta = Tensor<double>::from_data({1}, {0.0});
        BnStats<double> stats(1);
        NoGradGuard guard;
        Tensor<double> y = batch_norm2d(x, gamma, beta, stats, BnMode::train);
        double want = 1.0 / std::sqrt(1.0 + stats.eps);
        expect_close(y.data()[0], -want, 1e-12, "normalized low point");
        expect_close(y.data()[1], want, 1e-12, "normalized high point");
        expect_close(stats.running_mean[0], 0.1, 1e-12, "running mean after one update");
    });

    checks.emplace_back("gradients agree with central finite differences", [] {
        std::mt19937_64 rng(fnv1a("verify-grad"));
        Tensor<double> x = Tensor<double>::randn({2, 2, 6, 6}, rng, 0.5);
        Tensor<double> w = Tensor<double>::randn({4, 2, 3, 3}, rng, 0.5);
        Tensor<double> fc = Tensor<double>::randn({4, 2}, rng, 0.5);
        Tensor<double> b = Tensor<double>::zeros({2});
        for (Tensor<double>* t : {&x, &w, &fc, &b}) t->set_requires_grad(true);
        std::vector<int> labels{0, 1};
        auto loss = [&]() {
            Tensor<double> h = relu(conv2d(x, w, 2, 1));
            h = max_pool2d(h, 3, 1, 1);
            return cross_entropy(linear(global_avg_pool(h), fc, b), labels);
        };
        double err = grad_check<double>(loss, {x, w, fc, b});
        expect(err < 1e-4, "max relative error " + std::to_string(err));
    });

    checks.emplace_back("fused attention matches per-position evaluation", [sabotage] {
        std::mt19937_64 rng(fnv1a("verify-mhsa"));
        MhsaConfig cfg;
        cfg.height = 3;
        cfg.width = 3;
        cfg.d_model = 8;
        cfg.heads = 2;
        MhsaLayer<double> layer = make_mhsa<double>(cfg, rng);
        Tensor<double> x = Tensor<double>::randn({1, 8, 3, 3}, rng);
        NoGradGuard guard;
        std::vector<double> want = verify_detail::mhsa_reference(layer, x);

        Tensor<double> fused = mhsa2d_forward(layer, x);
        for (std::size_t i = 0; i < want.size(); ++i)
            expect_close(fused.data()[i], want[i], 1e-10, "fused attention value");

        Tensor<double> x_flat = transpose2d(reshape(batch_item(x, 0), {8, 9}));
        std::vector<double> assembled = verify_detail::mhsa_assembly(layer, x_flat, sabotage);
        for (std::size_t i = 0; i < want.size(); ++i)
            expect_close(assembled[i], want[i], 1e-10, "assembled attention value");
    });

    checks.emplace_back("attention weights are row-stochastic", [sabotage] {
        std::mt19937_64 rng(fnv1a("verify-rows"));
        Tensor<double> logits = Tensor<double>::randn({6, 6}, rng);
        NoGradGuard guard;
        Tensor<double> w = softmax(logits, sabotage == Sabotage::softmax_axis ? 0 : 1);
        for (std::size_t i = 0; i < 6; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 6; ++j) row += w.data()[i * 6 + j];
            expect_close(row, 1.0, 1e-12, "weight row sum");
        }
    });

    checks.emplace_back("zero position tables reduce to content-only attention", [] {
        std::mt19937_64 rng(fnv1a("verify-zero"));
        MhsaConfig cfg;
        cfg.height = 2;
        cfg.width = 3;
        cfg.d_model = 4;
        cfg.heads = 1;
        MhsaLayer<double> layer = make_mhsa<double>(cfg, rng);
        layer.rh = Tensor<double>::zeros({3, 4});
        layer.rw = Tensor<double>::zeros({5, 4});
        Tensor<double> x = Tensor<double>::randn({1, 4, 2, 3}, rng);
        NoGradGuard guard;
        Tensor<double> got = mhsa2d_forward(layer, x);
        Tensor<double> x_flat = transpose2d(reshape(batch_item(x, 0), {4, 6}));
        Tensor<double> q = matmul(x_flat, layer.wq[0]);
        Tensor<double> k = matmul(x_flat, layer.wk[0]);
        Tensor<double> content = attention_output(attention_weights(content_logits(q, k)), matmul(x_flat, layer.wv[0]));
        Tensor<double> content_chw = reshape(transpose2d(content), {4, 2, 3});
        for (std::size_t i = 0; i < got.numel(); ++i)
            expect_close(got.data()[i], content_chw.data()[i], 1e-12, "content-only value");
    });

    checks.emplace_back("sharpness perturbation has norm rho and raises the loss", [] {
        std::mt19937_64 rng(fnv1a("verify-sam"));
        Tensor<double> w = Tensor<double>::randn({5, 5}, rng);
        w.set_requires_grad(true);
        Tensor<double> target = Tensor<double>::randn({5, 5}, rng);
        std::vector<double> at_start = w.data();
        double rho = 0.05;
        SamAdam<double> opt({w}, AdamConfig<double>{}, SamConfig<double>{rho});
        double loss1 = 0.0, loss2 = 0.0;
        std::vector<double> at_pass2;
        opt.step([&](int pass) {
            if (pass == 2) at_pass2 = w.data();
            Tensor<double> diff = sub(w, target);
            Tensor<double> loss = sum_all(mul(diff, diff));
            (pass == 1 ? loss1 : loss2) = loss.data()[0];
            return loss;
        });
        double eps_norm = 0.0;
        for (std::size_t i = 0; i < at_start.size(); ++i)
            eps_norm += (at_pass2[i] - at_start[i]) * (at_pass2[i] - at_start[i]);
        eps_norm = std::sqrt(eps_norm);
        expect_close(eps_norm, rho, 1e-12, "perturbation norm");
        expect(loss2 >= loss1, "ascent step lowered a convex loss");
    });

    checks.emplace_back("zero sharpness radius reproduces the plain trajectory", [] {
        std::mt19937_64 rng(fnv1a("verify-rho0"));
        Tensor<double> init = Tensor<double>::randn({8}, rng);
        Tensor<double> a = init.clone();
        a.set_requires_grad(true);
        Tensor<double> b = init.clone();
        b.set_requires_grad(true);
        AdamConfig<double> cfg;
        cfg.lr = 1e-2;
        SamAdam<double> sam({a}, cfg, SamConfig<double>{0.0});
        Adam<double> plain({b}, cfg);
        for (int step = 0; step < 10; ++step) {
            sam.step([&](int) { return sum_all(mul(a, a)); });
            zero_grads<double>({b});
            backward(sum_all(mul(b, b)));
            plain.step();
        }
        for (std::size_t i = 0; i < a.numel(); ++i)
            expect(a.data()[i] == b.data()[i], "trajectories diverged at coordinate " + std::to_string(i));
    });

    checks.emplace_back("stage outputs halve down the documented chain", [] {
        BotNet50Config cfg;
        cfg.width = Rational{1, 8};
        BotNetModel<float> model = build_botnet50<float>(cfg, 7);
        std::mt19937_64 rng(fnv1a("verify-chain"));
        Tensor<float> x = Tensor<float>::randn({1, 3, 224, 224}, rng);
        NoGradGuard guard;
        std::vector<std::size_t> spatial;
        Tensor<float> logits = forward(model, x, BnMode::eval, &spatial);
        std::vector<std::size_t> want{112, 56, 28, 14, 7};
        expect(spatial == want, "stage spatial chain mismatch");
        expect(logits.rank() == 2 && logits.size(0) == 1 && logits.size(1) == 2, "logit shape mismatch");
        expect(mhsa_layer_count(model) == 3, "final stage must hold exactly 3 attention blocks");
    });

    checks.emplace_back("subject splits stay disjoint and folds partition", [sabotage] {
        Manifest m;
        for (int i = 0; i < 28; ++i)
            m.rows.push_back(ManifestRow{"s" + std::to_string(i), "scan0",
                                         i % 2 == 0 ? Diagnosis::cn : Diagnosis::ad, "p" + std::to_string(i)});
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SplitPlan plan = make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, seed, 5);
            if (sabotage == Sabotage::leaked_subject) plan.test_subjects.push_back(plan.train_subjects[0]);
            check_split_invariants(plan);

            std::vector<ScanSlices> scans;
            for (const auto& row : m.rows) {
                ScanSlices s;
                s.subject_id = row.subject_id;
                s.scan_id = row.scan_id;
                s.label = row.label;
                s.slices.assign(1, Image(4, 4));
                scans.push_back(std::move(s));
            }
            auto train = slice_stream(scans, plan, 0, 0, StreamRole::fold_train);
            auto val = slice_stream(scans, plan, 0, 0, StreamRole::fold_val);
            auto hold = slice_stream(scans, plan, 0, 0, StreamRole::holdout);
            check_stream_disjoint(train, val, hold);
        }
    });

    checks.emplace_back("trapezoidal area equals the pairwise statistic", [] {
        std::mt19937_64 rng(fnv1a("verify-auc"));
        std::uniform_int_distribution<int> grid(0, 9);
        std::uniform_int_distribution<int> coin(0, 1);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> scores;
            std::vector<int> truths;
            for (int i = 0; i < 30; ++i) {
                scores.push_back(grid(rng) / 9.0);
                truths.push_back(coin(rng));
            }
            truths[0] = 0;
            truths[29] = 1;
            double got = roc_auc(scores, truths).auc;
            double num = 0.0;
            long pairs = 0;
            for (std::size_t i = 0; i < scores.size(); ++i)
                for (std::size_t j = 0; j < scores.size(); ++j) {
                    if (truths[i] != 1 || truths[j] != 0) continue;
                    num += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
                    ++pairs;
                }
            expect_close(got, num / static_cast<double>(pairs), 1e-12, "area");
        }
    });

    checks.emplace_back("majority vote matches exhaustive enumeration", [] {
        for (unsigned pattern = 0; pattern < 1024; ++pattern) {
            std::vector<int> labels;
            std::vector<double> probs;
            long ones = 0;
            for (int bit = 0; bit < 10; ++bit) {
                int l = (pattern >> bit) & 1;
                labels.push_back(l);
                probs.push_back(l ? 0.75 : 0.25);
                ones += l;
            }
            int want = ones > 5 ? 1 : ones < 5 ? 0 : 1;  // ties average to exactly 0.5
            expect(majority_vote(labels, probs).label == want,
                   "vote mismatch on pattern " + std::to_string(pattern));
        }
    });

    checks.emplace_back("hand confusion example gives one half everywhere", [] {
        MetricsReport r = compute_metrics({1, 1, 0, 0}, {1, 0, 1, 0}, {0.9, 0.8, 0.3, 0.2});
        expect(r.accuracy == 0.5 && r.precision == 0.5 && r.recall == 0.5 && r.f1 == 0.5,
               "metrics deviate from 0.5");
    });

    checks.emplace_back("central slice indices follow the floor formula", [] {
        auto indices = [](std::size_t d) {
            Volume v;
            v.extents = {10, d, 10};
            v.voxels.assign(10 * d * 10, 0.0f);
            for (std::size_t s = 0; s < 10; ++s)
                for (std::size_t c = 0; c < d; ++c)
                    for (std::size_t a = 0; a < 10; ++a) v.at(s, c, a) = static_cast<float>(c);
            auto slices = extract_central_slices(v, 10);
            std::vector<std::size_t> out;
            for (const auto& img : slices) out.push_back(static_cast<std::size_t>(img.at(0, 0)));
            return out;
        };
        auto i180 = indices(180);
        expect(i180.front() == 85 && i180.back() == 94, "depth 180 window");
        auto i10 = indices(10);
        expect(i10.front() == 0 && i10.back() == 9, "depth 10 window");
        auto i11 = indices(11);
        expect(i11.front() == 0 && i11.back() == 9, "depth 11 window");
    });

    checks.emplace_back("center crop and min-max normalization are positional", [] {
        Image in(256, 256);
        for (std::size_t r = 0; r < 256; ++r)
            for (std::size_t c = 0; c < 256; ++c) in.at(r, c) = static_cast<float>(r * 256 + c);
        Image out = crop_and_normalize(in, 224);
        expect(out.at(0, 0) == 0.0f && out.at(223, 223) == 1.0f, "crop window is off");

        Image four(2, 2);
        four.pix = {2.0f, 4.0f, 6.0f, 6.0f};
        Image got = crop_and_normalize(four, 2);
        expect(got.pix == std::vector<float>({0.0f, 0.5f, 1.0f, 1.0f}), "min-max rescale");
    });

    checks.emplace_back("checkpoints restore forward outputs bitwise", [] {
        BotNet50Config cfg;
        cfg.width = Rational{1, 8};
        cfg.input_size = 32;
        BotNetModel<float> model = build_botnet50<float>(cfg, 21);
        std::mt19937_64 rng(fnv1a("verify-ckpt"));
        Tensor<float> x = Tensor<float>::randn({2, 3, 32, 32}, rng);
        forward(model, x, BnMode::train);  // move the running statistics off init
        NoGradGuard guard;
        Tensor<float> before = forward(model, x, BnMode::eval);

        auto path = std::filesystem::temp_directory_path() / "botkit_verify_ckpt.bin";
        save_checkpoint(model, path.string());
        BotNetModel<float> loaded = load_checkpoint<float>(path.string());
        std::filesystem::remove(path);
        Tensor<float> after = forward(loaded, x, BnMode::eval);
        for (std::size_t i = 0; i < before.numel(); ++i)
            expect(before.data()[i] == after.data()[i], "logit bits changed after reload");
    });

    std::vector<CheckResult> results;
    for (auto& [name, fn] : checks) {
        CheckResult r;
        r.name = name;
        try {
            fn();
            r.passed = true;
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

inline void print_verification(const std::vector<CheckResult>& results, std::ostream& os) {
    std::size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.name.size());
    std::size_t passed = 0;
    for (const auto& r : results) {
        os << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width)) << r.name;
        if (!r.passed) os << "  " << r.detail;
        os << '\n';
        passed += r.passed ? 1 : 0;
    }
    os << passed << "/" << results.size() << " checks passed\n";
}

}  // namespace botkit
