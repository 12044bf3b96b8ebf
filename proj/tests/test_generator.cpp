#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bitstain/core/rng.hpp"
#include "bitstain/net/generator.hpp"

using namespace bitstain;
using core::Tensor;
using net::Generator;
using net::GeneratorConfig;

namespace {

GeneratorConfig toy_config(int input = 64) {
    GeneratorConfig cfg;
    cfg.input_size = input;
    cfg.stage_channels = {16, 32, 64};
    cfg.scales = {1, 2, 4, 16};
    cfg.token_dim = 64;
    cfg.vit_depth = 2;
    cfg.vit_heads = 2;
    return cfg;
}

GeneratorConfig tiny_config() {
    GeneratorConfig cfg;
    cfg.input_size = 16;
    cfg.stage_channels = {4, 6, 8};
    cfg.scales = {1, 2, 4, 16};
    cfg.token_dim = 8;
    cfg.vit_depth = 1;
    cfg.vit_heads = 2;
    return cfg;
}

Tensor random_input(int n, int s, std::uint64_t seed) {
    core::Philox ph(seed);
    std::vector<double> v(static_cast<std::size_t>(n) * 3 * s * s);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * ph.uniform(i) - 1.0;
    return Tensor::from({n, 3, s, s}, std::move(v));
}

}  // namespace

TEST_CASE("pyramid shape contract at 64 px") {
    Generator gen(toy_config(), "g", 1);
    const auto x = random_input(1, 64, 2);
    const auto res = gen.forward(x);
    CHECK(res.pyramid.scales() == std::vector<int>{1, 2, 4, 16});
    CHECK(res.pyramid.at(1).shape() == core::Shape{1, 16, 64, 64});
    CHECK(res.pyramid.at(2).shape() == core::Shape{1, 32, 32, 32});
    CHECK(res.pyramid.at(4).shape() == core::Shape{1, 64, 16, 16});
    CHECK(res.pyramid.at(16).shape() == core::Shape{1, 64, 4, 4});
    CHECK(res.output.shape() == core::Shape{1, 3, 64, 64});
    CHECK(res.style.shape() == core::Shape{1, 64});
}

TEST_CASE("generator output is bounded to [-1, 1]") {
    Generator gen(tiny_config(), "g", 3);
    const auto x = random_input(2, 16, 4);
    const auto res = gen.forward(x);
    for (double v : res.output.values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("same input and parameters give identical outputs") {
    Generator gen(tiny_config(), "g", 5);
    const auto x = random_input(1, 16, 6);
    const auto a = gen.forward(x);
    const auto b = gen.forward(x);
    CHECK(a.output.values() == b.output.values());
    CHECK(a.style.values() == b.style.values());
}

TEST_CASE("style override with the network's own token is bit-identical") {
    Generator gen(tiny_config(), "g", 7);
    const auto x = random_input(2, 16, 8);
    const auto plain = gen.forward(x);
    const auto overridden = gen.forward(x, plain.style);
    CHECK(plain.output.values() == overridden.output.values());
    for (const auto& [k, t] : plain.pyramid.maps) {
        CHECK(t.values() == overridden.pyramid.at(k).values());
    }
    CHECK(plain.style.values() == overridden.style.values());
}

TEST_CASE("a different style override changes the output") {
    Generator gen(tiny_config(), "g", 9);
    const auto x = random_input(1, 16, 10);
    const auto plain = gen.forward(x);
    auto shifted_vals = plain.style.values();
    for (double& v : shifted_vals) v += 2.5;
    const auto shifted = gen.forward(x, Tensor::from(plain.style.shape(), shifted_vals));
    CHECK(plain.output.values() != shifted.output.values());
}

TEST_CASE("encode_features equals the pyramid of a full forward") {
    Generator gen(tiny_config(), "g", 11);
    const auto x = random_input(1, 16, 12);
    const auto pyr = gen.encode_features(x);
    const auto res = gen.forward(x);
    for (const auto& [k, t] : res.pyramid.maps) {
        CHECK(t.values() == pyr.at(k).values());
    }
    // full-resolution map has full input resolution
    CHECK(pyr.at(1).shape()[2] == 16);
    CHECK(pyr.at(1).shape()[3] == 16);
    // the bottleneck entry is the token-grid scale
    CHECK(pyr.at(16).shape()[2] == 1);
}

TEST_CASE("style override is validated") {
    Generator gen(tiny_config(), "g", 13);
    const auto x = random_input(1, 16, 14);
    CHECK_THROWS_AS(gen.forward(x, Tensor::from({1, 3}, {1, 2, 3})), ShapeError);
    const double nan = std::nan("");
    CHECK_THROWS_AS(gen.forward(x, Tensor::from({1, 8}, {nan, 0, 0, 0, 0, 0, 0, 0})), NumericError);
}

TEST_CASE("input shape is validated") {
    Generator gen(tiny_config(), "g", 15);
    CHECK_THROWS_AS(gen.forward(random_input(1, 8, 16)), ShapeError);
}

TEST_CASE("config invariants are enforced") {
    auto bad = tiny_config();
    bad.scales = {1, 3, 16};
    CHECK_THROWS_AS(Generator(bad, "g", 1), ValueError);
    bad = tiny_config();
    bad.scales = {1, 2, 4, 32};  // exceeds input 16
    CHECK_THROWS_AS(Generator(bad, "g", 1), ValueError);
    bad = tiny_config();
    bad.extra_tokens = 2;
    CHECK_THROWS_AS(Generator(bad, "g", 1), ValueError);
    bad = tiny_config();
    bad.vit_heads = 3;  // does not divide token_dim 8
    CHECK_THROWS_AS(Generator(bad, "g", 1), ValueError);
}

TEST_CASE("loss gradient is finite for every trainable parameter at init") {
    Generator gen(tiny_config(), "g", 17);
    const auto x = random_input(2, 16, 18);
    const auto res = gen.forward(x);
    auto loss = core::mean_all(core::square(res.output));
    const auto params = gen.params().all();
    core::zero_grad(params);
    core::backward(loss);
    for (const auto& p : params) {
        for (double g : p.grad()) CHECK(std::isfinite(g));
    }
    // the loss reaches every parameter except the mask token, which only
    // participates in masked pretraining passes
    const auto reach = core::reachable_params(loss);
    CHECK(reach.size() == params.size() - 1);
    CHECK(reach.count("g.vit.mask_token") == 0);
}

TEST_CASE("discriminator produces an 8x8 grid from 64 px input") {
    net::PatchDiscriminator d(3, 16, "d", 21);
    const auto x = random_input(2, 64, 22);
    const auto logits = d.forward(x);
    CHECK(logits.shape() == core::Shape{2, 1, 8, 8});
    for (double v : logits.values()) CHECK(std::isfinite(v));
    const auto again = d.forward(x);
    CHECK(logits.values() == again.values());
}

TEST_CASE("discriminator handles all-zero input") {
    net::PatchDiscriminator d(3, 8, "d", 23);
    const auto x = Tensor::zeros({1, 3, 32, 32});
    const auto logits = d.forward(x);
    CHECK(logits.shape() == core::Shape{1, 1, 4, 4});
    for (double v : logits.values()) CHECK(std::isfinite(v));
}

TEST_CASE("two generators with different prefixes have independent parameters") {
    Generator a(tiny_config(), "g_b2h", 31);
    Generator b(tiny_config(), "g_h2b", 31);
    // same seed but name-derived streams differ
    CHECK(a.params().at("g_b2h.enc1.conv.w").values() !=
          b.params().at("g_h2b.enc1.conv.w").values());
}
