#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "botkit/botnet.hpp"
#include "botkit/util.hpp"

using botkit::BotNet50Config;
using botkit::Tensor;

namespace {

std::mt19937_64 rng_for(const char* name) { return std::mt19937_64(botkit::fnv1a(name)); }

// Closed-form parameter count, written independently of the model code:
// conv k*k*Cin*Cout, BN 2*C, attention 3*d_model^2 plus two offset tables,
// linear head Cin*classes + classes.
std::size_t expected_parameter_count(const BotNet50Config& cfg) {
    auto w = [&](std::size_t c) { return cfg.width.scale(c); };
    std::size_t total = 7 * 7 * 3 * w(64) + 2 * w(64);
    std::size_t in = w(64);
    std::size_t spatial = cfg.input_size / 4;
    for (std::size_t s = 0; s < 4; ++s) {
        std::size_t mid = w(cfg.stage_mid_channels[s]), out = 4 * mid;
        for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
            std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
            total += in * mid + 2 * mid;  // reduce conv + bn
            if (s == 3) {
                std::size_t d_head = mid / cfg.heads;
                total += 3 * mid * mid;                            // q, k, v projections over all heads
                total += (2 * spatial - 1) * d_head * 2;           // height and width tables
                if (cfg.value_relative) total += (2 * spatial - 1) * d_head * 2;
            } else {
                total += 3 * 3 * mid * mid;  // spatial conv
            }
            total += 2 * mid;             // bn after the spatial op
            total += mid * out + 2 * out;  // expand conv + bn
            if (in != out || stride == 2) total += in * out + 2 * out;  // projection shortcut
            if (stride == 2) spatial /= 2;
            in = out;
        }
    }
    total += 4 * w(512) * cfg.num_classes + cfg.num_classes;
    return total;
}

BotNet50Config desk_config(std::size_t input = 32) {
    BotNet50Config cfg;
    cfg.width = botkit::Rational{1, 8};
    cfg.input_size = input;
    return cfg;
}

}  // namespace

TEST_CASE("full-width forward walks the published stage plan") {
    auto model = botkit::build_botnet50<double>(BotNet50Config{}, 11);
    auto rng = rng_for("plan");
    Tensor<double> x = Tensor<double>::randn({1, 3, 224, 224}, rng);
    botkit::NoGradGuard guard;
    std::vector<std::size_t> spatial;
    Tensor<double> logits = botkit::forward(model, x, botkit::BnMode::eval, &spatial);
    REQUIRE(spatial == std::vector<std::size_t>{112, 56, 28, 14, 7});
    REQUIRE(logits.shape() == botkit::Shape{1, 2});
}

TEST_CASE("eighth-width model on 64x64 input builds and runs") {
    auto model = botkit::build_botnet50<double>(desk_config(64), 3);
    auto rng = rng_for("desk64");
    Tensor<double> x = Tensor<double>::randn({2, 3, 64, 64}, rng);
    botkit::NoGradGuard guard;
    Tensor<double> logits = botkit::forward(model, x);
    REQUIRE(logits.shape() == botkit::Shape{2, 2});
    for (double v : logits.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("stride-2 conv bottleneck halves 56 to 28 while doubling channels") {
    auto rng = rng_for("block-c3");
    auto block = botkit::make_block<double>(256, 128, 512, 2, false, 56, 56, 8, false, rng);
    Tensor<double> x = Tensor<double>::randn({1, 256, 56, 56}, rng);
    botkit::NoGradGuard guard;
    Tensor<double> y = botkit::bottleneck_forward(block, x, botkit::BnMode::eval);
    REQUIRE(y.shape() == botkit::Shape{1, 512, 28, 28});
}

TEST_CASE("first attention bottleneck maps 14x14 to 7x7") {
    auto rng = rng_for("block-c5");
    auto block = botkit::make_block<double>(1024, 512, 2048, 2, true, 14, 14, 8, false, rng);
    Tensor<double> x = Tensor<double>::randn({1, 1024, 14, 14}, rng);
    botkit::NoGradGuard guard;
    Tensor<double> y = botkit::bottleneck_forward(block, x, botkit::BnMode::eval);
    REQUIRE(y.shape() == botkit::Shape{1, 2048, 7, 7});

    auto keep = botkit::make_block<double>(2048, 512, 2048, 1, true, 7, 7, 8, false, rng);
    Tensor<double> y2 = botkit::bottleneck_forward(keep, y, botkit::BnMode::eval);
    REQUIRE(y2.shape() == botkit::Shape{1, 2048, 7, 7});
}

TEST_CASE("zeroing the expand conv collapses a conv block to relu of its input") {
    auto rng = rng_for("collapse-conv");
    auto block = botkit::make_block<double>(64, 16, 64, 1, false, 8, 8, 8, false, rng);
    block.conv3.weight.impl()->data.assign(block.conv3.weight.numel(), 0.0);
    Tensor<double> x = Tensor<double>::randn({1, 64, 8, 8}, rng);
    botkit::NoGradGuard guard;
    Tensor<double> y = botkit::bottleneck_forward(block, x, botkit::BnMode::eval);
    for (std::size_t i = 0; i < x.numel(); ++i)
        REQUIRE(y.data()[i] == Catch::Approx(std::max(x.data()[i], 0.0)).margin(1e-12));
}

TEST_CASE("zeroing the value projections collapses an attention block") {
    auto rng = rng_for("collapse-mhsa");
    auto block = botkit::make_block<double>(16, 4, 16, 1, true, 2, 2, 2, false, rng);
    for (auto& wv : block.mhsa->wv) wv.impl()->data.assign(wv.numel(), 0.0);
    Tensor<double> x = Tensor<double>::randn({1, 16, 2, 2}, rng);
    botkit::NoGradGuard guard;
    Tensor<double> y = botkit::bottleneck_forward(block, x, botkit::BnMode::eval);
    for (std::size_t i = 0; i < x.numel(); ++i)
        REQUIRE(y.data()[i] == Catch::Approx(std::max(x.data()[i], 0.0)).margin(1e-12));
}

TEST_CASE("exactly three attention layers exist, all in the last stage") {
    auto model = botkit::build_botnet50<double>(desk_config(), 5);
    REQUIRE(botkit::mhsa_layer_count(model) == 3);
    for (auto& [name, t] : botkit::model_parameters(model))
        if (name.find(".mhsa.") != std::string::npos) REQUIRE(name.rfind("c5.", 0) == 0);
}

TEST_CASE("parameter registry has unique names and the closed-form count") {
    auto model = botkit::build_botnet50<double>(desk_config(), 5);
    auto params = botkit::model_parameters(model);
    std::set<std::string> names;
    for (auto& [name, t] : params) names.insert(name);
    REQUIRE(names.size() == params.size());
    REQUIRE(names.count("c1.conv.weight") == 1);
    REQUIRE(names.count("c5.0.mhsa.wq0") == 1);
    REQUIRE(names.count("c5.2.mhsa.rh") == 1);
    REQUIRE(names.count("c3.0.proj.weight") == 1);
    REQUIRE(names.count("fc.bias") == 1);
    REQUIRE(botkit::parameter_count(model) == expected_parameter_count(desk_config()));
}

TEST_CASE("full-width parameter count matches the closed form") {
    auto model = botkit::build_botnet50<double>(BotNet50Config{}, 1);
    REQUIRE(botkit::parameter_count(model) == expected_parameter_count(BotNet50Config{}));
}

TEST_CASE("value-relative variant matches its closed-form count") {
    BotNet50Config cfg = desk_config();
    cfg.value_relative = true;
    auto model = botkit::build_botnet50<double>(cfg, 2);
    REQUIRE(botkit::parameter_count(model) == expected_parameter_count(cfg));
}

TEST_CASE("eval forward is deterministic") {
    auto model = botkit::build_botnet50<double>(desk_config(), 9);
    auto rng = rng_for("determinism");
    Tensor<double> x = Tensor<double>::randn({1, 3, 32, 32}, rng);
    botkit::NoGradGuard guard;
    Tensor<double> a = botkit::forward(model, x);
    Tensor<double> b = botkit::forward(model, x);
    REQUIRE(a.data() == b.data());
}

TEST_CASE("checkpoint round trip reproduces parameters and logits bit exactly") {
    auto model = botkit::build_botnet50<double>(desk_config(), 21);
    auto rng = rng_for("roundtrip");
    Tensor<double> x = Tensor<double>::randn({2, 3, 32, 32}, rng);
    {
        // leave nontrivial running statistics behind
        botkit::NoGradGuard guard;
        botkit::forward(model, x, botkit::BnMode::train);
    }
    botkit::Checkpoint ckpt = botkit::to_checkpoint(model, {{"epoch", "4"}, {"fold", "1"},
                                                            {"val_accuracy", "0.875"}, {"train_seed", "77"}});
    std::stringstream buf;
    ckpt.save(buf);
    botkit::Checkpoint loaded_ckpt = botkit::Checkpoint::load(buf);
    REQUIRE(loaded_ckpt.meta_or_throw("epoch") == "4");
    REQUIRE(loaded_ckpt.meta_or_throw("val_accuracy") == "0.875");
    auto restored = botkit::model_from_checkpoint<double>(loaded_ckpt);

    auto want = botkit::model_parameters(model);
    auto got = botkit::model_parameters(restored);
    REQUIRE(want.size() == got.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        REQUIRE(want[i].first == got[i].first);
        REQUIRE(want[i].second.data() == got[i].second.data());  // bitwise
    }
    botkit::NoGradGuard guard;
    Tensor<double> a = botkit::forward(model, x);
    Tensor<double> b = botkit::forward(restored, x);
    REQUIRE(a.data() == b.data());
}

TEST_CASE("corrupt checkpoints are rejected with a named entry") {
    auto model = botkit::build_botnet50<double>(desk_config(), 2);
    std::stringstream buf;
    botkit::to_checkpoint(model).save(buf);
    std::string bytes = buf.str();

    SECTION("bad magic") {
        std::string clipped = bytes;
        clipped[0] = 'X';
        std::stringstream is(clipped);
        REQUIRE_THROWS_WITH(botkit::Checkpoint::load(is), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("truncation names the entry being read") {
        std::stringstream is(bytes.substr(0, bytes.size() / 2));
        REQUIRE_THROWS_WITH(botkit::Checkpoint::load(is), Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("missing entry is reported by name") {
        std::stringstream is(bytes);
        botkit::Checkpoint ckpt = botkit::Checkpoint::load(is);
        ckpt.entries.erase(ckpt.entries.begin());  // drops c1.conv.weight
        REQUIRE_THROWS_WITH(botkit::model_from_checkpoint<double>(ckpt),
                            Catch::Matchers::ContainsSubstring("c1.conv.weight"));
    }
    SECTION("dtype mismatch is reported with both types") {
        std::stringstream is(bytes);
        botkit::Checkpoint ckpt = botkit::Checkpoint::load(is);
        REQUIRE_THROWS_WITH(botkit::model_from_checkpoint<float>(ckpt),
                            Catch::Matchers::ContainsSubstring("f64") &&
                                Catch::Matchers::ContainsSubstring("f32"));
    }
}

TEST_CASE("loading a checkpoint into a differently sized model names the entry") {
    auto small = botkit::build_botnet50<double>(desk_config(), 2);
    botkit::Checkpoint ckpt = botkit::to_checkpoint(small);
    BotNet50Config wide = desk_config();
    wide.width = botkit::Rational{1, 4};
    auto big = botkit::build_botnet50<double>(wide, 2);
    REQUIRE_THROWS_WITH(botkit::load_state_into(big, ckpt), Catch::Matchers::ContainsSubstring("shape"));
}

TEST_CASE("replicated grayscale channels produce finite logits") {
    auto model = botkit::build_botnet50<double>(desk_config(), 13);
    auto rng = rng_for("gray");
    Tensor<double> slice = Tensor<double>::randn({32, 32}, rng);
    std::vector<double> batch(3 * 32 * 32);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 32 * 32; ++i) batch[c * 32 * 32 + i] = slice.data()[i];
    Tensor<double> x = Tensor<double>::from_data({1, 3, 32, 32}, batch);
    botkit::NoGradGuard guard;
    Tensor<double> logits = botkit::forward(model, x);
    for (double v : logits.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("invalid configurations are rejected") {
    BotNet50Config fractional;
    fractional.width = botkit::Rational{1, 7};
    REQUIRE_THROWS_AS(botkit::build_botnet50<double>(fractional, 0), std::invalid_argument);

    BotNet50Config odd = desk_config();
    odd.input_size = 48;
    REQUIRE_THROWS_AS(botkit::build_botnet50<double>(odd, 0), std::invalid_argument);

    auto model = botkit::build_botnet50<double>(desk_config(), 0);
    auto rng = rng_for("badbatch");
    Tensor<double> wrong = Tensor<double>::randn({1, 3, 64, 64}, rng);
    REQUIRE_THROWS_AS(botkit::forward(model, wrong), std::invalid_argument);
}

TEST_CASE("conv bottleneck gradients match finite differences") {
    auto rng = rng_for("block-fd-conv");
    auto block = botkit::make_block<double>(4, 2, 8, 2, false, 4, 4, 2, false, rng);
    Tensor<double> x = Tensor<double>::randn({2, 4, 4, 4}, rng);
    x.set_requires_grad(true);
    std::vector<Tensor<double>> params = {x,
                                          block.conv1.weight,
                                          block.bn1.gamma,
                                          block.bn1.beta,
                                          block.conv2.weight,
                                          block.bn2.gamma,
                                          block.bn2.beta,
                                          block.conv3.weight,
                                          block.bn3.gamma,
                                          block.bn3.beta,
                                          block.proj->weight,
                                          block.proj_bn->gamma,
                                          block.proj_bn->beta};
    auto f = [&] {
        Tensor<double> y = botkit::bottleneck_forward(block, x, botkit::BnMode::train_frozen_stats);
        return botkit::sum_all(botkit::mul(y, y));
    };
    REQUIRE(botkit::grad_check<double>(f, params) < 1e-4);
}

TEST_CASE("attention bottleneck gradients match finite differences") {
    auto rng = rng_for("block-fd-mhsa");
    // grid 4x4 so the post-pool maps keep enough values per channel for the
    // batch statistics to stay smooth under finite differences
    auto block = botkit::make_block<double>(4, 2, 8, 2, true, 4, 4, 2, false, rng);
    Tensor<double> x = Tensor<double>::randn({2, 4, 4, 4}, rng);
    x.set_requires_grad(true);
    std::vector<Tensor<double>> params = {x,           block.conv1.weight, block.bn1.gamma,
                                          block.bn1.beta,  block.bn2.gamma,    block.bn2.beta,
                                          block.conv3.weight, block.bn3.gamma, block.bn3.beta,
                                          block.proj->weight, block.proj_bn->gamma, block.proj_bn->beta};
    for (auto& [name, t] : botkit::mhsa_parameters(*block.mhsa, "")) params.push_back(t);
    auto f = [&] {
        Tensor<double> y = botkit::bottleneck_forward(block, x, botkit::BnMode::train_frozen_stats);
        return botkit::sum_all(botkit::mul(y, y));
    };
    REQUIRE(botkit::grad_check<double>(f, params) < 1e-4);
}
