#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bitstain/core/rng.hpp"
#include "bitstain/loss/losses.hpp"
#include "gradcheck.hpp"

using namespace bitstain;
using core::Tensor;
using loss::ChannelSubset;
using loss::ChannelSubsetConfig;
using loss::StopGradOn;

namespace {

net::GeneratorConfig tiny_config() {
    net::GeneratorConfig cfg;
    cfg.input_size = 16;
    cfg.stage_channels = {4, 6, 8};
    cfg.scales = {1, 2, 4, 16};
    cfg.token_dim = 8;
    cfg.vit_depth = 1;
    cfg.vit_heads = 2;
    return cfg;
}

Tensor random_input(int n, int s, std::uint64_t seed, double scale = 1.0) {
    core::Philox ph(seed);
    std::vector<double> v(static_cast<std::size_t>(n) * 3 * s * s);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = scale * (2.0 * ph.uniform(i) - 1.0);
    return Tensor::from({n, 3, s, s}, std::move(v));
}

net::FeaturePyramid single_scale_pyramid(Tensor t) {
    net::FeaturePyramid p;
    p.maps.emplace_back(1, std::move(t));
    return p;
}

ChannelSubset full_subset_for(const net::FeaturePyramid& p) {
    ChannelSubset s;
    for (const auto& [k, t] : p.maps) {
        std::vector<int> idx(static_cast<std::size_t>(t.shape()[1]));
        std::iota(idx.begin(), idx.end(), 0);
        s.per_scale.emplace_back(k, idx);
    }
    return s;
}

}  // namespace

TEST_CASE("multiscale loss is zero on identical pyramids") {
    auto t = random_input(1, 8, 3);
    auto p1 = single_scale_pyramid(t);
    auto p2 = single_scale_pyramid(t);
    const auto subset = full_subset_for(p1);
    CHECK(loss::multiscale_content_loss(p1, p2, subset, StopGradOn::None).item() == 0.0);
}

TEST_CASE("multiscale loss single-scale hand arithmetic") {
    auto a = single_scale_pyramid(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}));
    auto b = single_scale_pyramid(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 5}));
    const auto subset = full_subset_for(a);
    CHECK(loss::multiscale_content_loss(a, b, subset, StopGradOn::None).item() ==
          doctest::Approx(0.25));
}

TEST_CASE("multiscale loss averages over the scale set") {
    net::FeaturePyramid a, b;
    // scale 1: per-scale loss 0.2; scale 2: per-scale loss 0.4
    a.maps.emplace_back(1, Tensor::from({1, 1, 1, 1}, {0.0}));
    b.maps.emplace_back(1, Tensor::from({1, 1, 1, 1}, {0.2}));
    a.maps.emplace_back(2, Tensor::from({1, 1, 1, 1}, {0.0}));
    b.maps.emplace_back(2, Tensor::from({1, 1, 1, 1}, {0.4}));
    const auto subset = full_subset_for(a);
    CHECK(loss::multiscale_content_loss(a, b, subset, StopGradOn::None).item() ==
          doctest::Approx(0.3));
}

TEST_CASE("multiscale loss value is symmetric under operand swap") {
    auto a = single_scale_pyramid(random_input(1, 8, 11));
    auto b = single_scale_pyramid(random_input(1, 8, 12));
    const auto subset = full_subset_for(a);
    const double ab = loss::multiscale_content_loss(a, b, subset, StopGradOn::B).item();
    const double ba = loss::multiscale_content_loss(b, a, subset, StopGradOn::B).item();
    CHECK(ab == doctest::Approx(ba).epsilon(1e-15));
}

TEST_CASE("multiscale loss rejects mismatched scale sets") {
    auto a = single_scale_pyramid(random_input(1, 8, 13));
    net::FeaturePyramid b;
    b.maps.emplace_back(2, random_input(1, 8, 14));
    const auto subset = full_subset_for(a);
    CHECK_THROWS_AS(loss::multiscale_content_loss(a, b, subset, StopGradOn::None), ShapeError);
}

TEST_CASE("channel subset: full at ends, first-n in the middle, deterministic") {
    auto cfg = tiny_config();
    ChannelSubsetConfig sub;
    sub.n = 2;
    const auto s = ChannelSubset::make(cfg, sub);
    CHECK(s.at(1).size() == 4);   // full channels at scale 1
    CHECK(s.at(2) == std::vector<int>{0, 1});
    CHECK(s.at(4) == std::vector<int>{0, 1});
    CHECK(s.at(16).size() == 8);  // full token dim at the bottleneck
    const auto s2 = ChannelSubset::make(cfg, sub);
    for (std::size_t i = 0; i < s.per_scale.size(); ++i) {
        CHECK(s.per_scale[i].second == s2.per_scale[i].second);
    }
    // seeded-random alternative is deterministic in its seed too
    ChannelSubsetConfig rnd;
    rnd.rule = ChannelSubsetConfig::Rule::RandomN;
    rnd.n = 2;
    rnd.seed = 9;
    const auto r1 = ChannelSubset::make(cfg, rnd);
    const auto r2 = ChannelSubset::make(cfg, rnd);
    CHECK(r1.at(2) == r2.at(2));
    CHECK(r1.at(2).size() == 2);
}

TEST_CASE("cycle and identity losses") {
    auto x = Tensor::full({1, 3, 4, 4}, 0.5);
    auto roundtrip = Tensor::full({1, 3, 4, 4}, 0.4);
    CHECK(loss::l1_loss(x, roundtrip).item() == doctest::Approx(0.1));
    CHECK(loss::l1_loss(x, x).item() == 0.0);
}

TEST_CASE("lsgan hand cases") {
    // plug values directly into the objective shapes
    auto ones = Tensor::full({1, 1, 2, 2}, 1.0);
    auto zeros = Tensor::zeros({1, 1, 2, 2});
    auto halves = Tensor::full({1, 1, 2, 2}, 0.5);
    // d_loss = 0.5 (mean (D(real)-1)^2 + mean D(fake)^2)
    auto d_loss = [](const Tensor& real_logits, const Tensor& fake_logits) {
        const auto a = core::mean_all(core::square(core::add_scalar(real_logits, -1.0)));
        const auto b = core::mean_all(core::square(fake_logits));
        return 0.5 * (a.item() + b.item());
    };
    auto g_loss = [](const Tensor& fake_logits) {
        return core::mean_all(core::square(core::add_scalar(fake_logits, -1.0))).item();
    };
    CHECK(d_loss(ones, zeros) == doctest::Approx(0.0));
    CHECK(g_loss(ones) == doctest::Approx(0.0));
    CHECK(d_loss(halves, halves) == doctest::Approx(0.25));
    CHECK(g_loss(halves) == doctest::Approx(0.25));
}

TEST_CASE("lsgan losses against a live discriminator and detachment of the fake") {
    net::PatchDiscriminator d(3, 8, "d", 51);
    auto real = random_input(1, 16, 52);
    auto fake_src = random_input(1, 16, 53);
    fake_src.node()->requires_grad = true;
    const auto pair = loss::lsgan_losses(d, real, fake_src);
    CHECK(std::isfinite(pair.d_loss.item()));
    CHECK(std::isfinite(pair.g_loss.item()));
    // d_loss must not backpropagate into the fake source
    core::backward(pair.d_loss);
    for (double g : fake_src.grad()) CHECK(g == 0.0);
    // g_loss must backpropagate into the fake source
    core::backward(pair.g_loss);
    double norm = 0;
    for (double g : fake_src.grad()) norm += g * g;
    CHECK(norm > 0.0);
}

TEST_CASE("style statistics loss hand cases") {
    // identical tokens -> 0
    auto s = Tensor::from({1, 4}, {0.5, -0.5, 1.5, -1.5});
    CHECK(loss::style_statistics_loss(s, s).item() == doctest::Approx(0.0));
    // mu 1 sigma 1 vs mu 0 sigma 1 -> 1.0
    auto f = Tensor::from({1, 2}, {0.0, 2.0});   // mu 1, sigma 1
    auto r = Tensor::from({1, 2}, {-1.0, 1.0});  // mu 0, sigma 1
    CHECK(loss::style_statistics_loss(f, r).item() == doctest::Approx(1.0));
}

TEST_CASE("style statistics loss blocks gradients into the real token") {
    auto f = Tensor::from({2, 8}, std::vector<double>(16, 0.3), true);
    auto r = Tensor::from({2, 8}, std::vector<double>(16, -0.2), true);
    auto l = loss::style_statistics_loss(f, r);
    core::zero_grad({f, r});
    core::backward(l);
    for (double g : r.grad()) CHECK(g == 0.0);
}

TEST_CASE("style statistics loss gradient matches finite differences") {
    core::Philox ph(61);
    std::vector<double> fv(16), rv(16);
    for (int i = 0; i < 16; ++i) {
        fv[static_cast<std::size_t>(i)] = ph.normal(static_cast<std::uint64_t>(i));
        rv[static_cast<std::size_t>(i)] = ph.normal(static_cast<std::uint64_t>(i) + 100);
    }
    auto f = Tensor::from({2, 8}, fv, true);
    auto r = Tensor::from({2, 8}, rv, false);
    auto fn = [&] { return loss::style_statistics_loss(f, r); };
    const auto res = testing::gradcheck(fn, {f}, 1e-6, 1e-3);
    CHECK(res.passed == res.checked);
}

TEST_CASE("total generator loss weighting") {
    auto one = Tensor::scalar(1.0);
    auto zero = Tensor::scalar(0.0);
    loss::LossWeights w;  // 10, 0.5, 1, 1
    // adv contributes 1+1? use single-sided ones: components all equal one
    // total = (1 + 1) + 10*(1+1) + 0.5*(1+1) + 1*(1+1) + 1*1
    const auto total = loss::total_generator_loss(one, one, one, one, one, one, one, one, one, w);
    CHECK(total.item() == doctest::Approx(2 + 20 + 1 + 2 + 1));
    // per-direction halves match the spec's single-sided arithmetic:
    // 10 + 0.5 + 1 + 1 + 1 = 13.5 with one unit per weighted family
    const auto single = loss::total_generator_loss(one, zero, one, zero, one, zero, one, zero, one, w);
    CHECK(single.item() == doctest::Approx(13.5));
    const auto all_zero = loss::total_generator_loss(zero, zero, zero, zero, zero, zero, zero, zero, zero, w);
    CHECK(all_zero.item() == 0.0);
    // lambda_msc = 0 removes msc influence
    loss::LossWeights w0 = w;
    w0.msc = 0;
    const auto a = loss::total_generator_loss(one, zero, zero, zero, zero, zero, one, one, zero, w0);
    const auto b = loss::total_generator_loss(one, zero, zero, zero, zero, zero, zero, zero, zero, w0);
    CHECK(a.item() == b.item());
}

TEST_CASE("bidirectional msc: identical shared-path generators give zero") {
    // a single generator used as both directions: translation is that
    // generator's own output; encoding both sides with the same network and
    // comparing the SAME pyramids yields zero by construction
    net::Generator g(tiny_config(), "g", 71);
    const auto x = random_input(1, 16, 72, 0.5);
    const auto fwd = g.forward(x);
    const auto reenc = g.encode_features(fwd.output);
    // compare reenc with itself (simulates identity translation with shared encoders)
    ChannelSubsetConfig sub;
    sub.n = 2;
    const auto subset = ChannelSubset::make(tiny_config(), sub);
    CHECK(loss::multiscale_content_loss(reenc, reenc, subset, StopGradOn::B).item() == 0.0);
}

TEST_CASE("bidirectional msc runs and blocks gradients through the stop-gradient side") {
    net::Generator g_b2h(tiny_config(), "g_b2h", 81);
    net::Generator g_h2b(tiny_config(), "g_h2b", 82);
    const auto x_bit = random_input(1, 16, 83, 0.6);
    const auto y_he = random_input(1, 16, 84, 0.6);
    ChannelSubsetConfig sub;
    sub.n = 2;
    const auto subset = ChannelSubset::make(tiny_config(), sub);
    const auto [l_bit, l_he] = loss::bidirectional_msc(x_bit, y_he, g_b2h, g_h2b, subset);
    CHECK(std::isfinite(l_bit.item()));
    CHECK(std::isfinite(l_he.item()));
    CHECK(l_bit.item() > 0.0);

    // L_BIT reaches only the forward generator's parameters
    const auto reach = core::reachable_params(l_bit);
    for (const auto& name : reach) {
        CHECK(name.rfind("g_b2h.", 0) == 0);
    }
    // gradient w.r.t. parameters used only inside the stop-gradient branch is
    // exactly zero
    auto all_params = g_b2h.params().all();
    const auto other = g_h2b.params().all();
    all_params.insert(all_params.end(), other.begin(), other.end());
    core::zero_grad(all_params);
    core::backward(l_bit);
    for (const auto& p : other) {
        for (double g : p.grad()) CHECK(g == 0.0);
    }
}

TEST_CASE("multiscale loss gradients match finite differences against frozen targets") {
    // The stop-gradient branch is a constant of the optimization step, so the
    // finite-difference oracle must hold its values fixed; re-running it with
    // perturbed parameters would measure a different function than the tape.
    net::Generator g_b2h(tiny_config(), "g_b2h", 91);
    net::Generator g_h2b(tiny_config(), "g_h2b", 92);
    const auto x_bit = random_input(1, 16, 93, 0.5);
    ChannelSubsetConfig sub;
    sub.n = 2;
    const auto subset = ChannelSubset::make(tiny_config(), sub);
    const auto fwd0 = g_b2h.forward(x_bit);
    const auto target = g_h2b.encode_features(fwd0.output);
    net::FeaturePyramid frozen;
    for (const auto& [k, t] : target.maps) {
        frozen.maps.emplace_back(k, Tensor::from(t.shape(), t.values()));
    }
    auto fn = [&] {
        return loss::multiscale_content_loss(g_b2h.forward(x_bit).pyramid, frozen, subset,
                                             StopGradOn::B);
    };
    std::vector<core::Tensor> probe{
        g_b2h.params().at("g_b2h.enc1.conv.w"), g_b2h.params().at("g_b2h.style_proj.w"),
        g_b2h.params().at("g_b2h.vit.block0.q.w"), g_b2h.params().at("g_b2h.enc2.conv.w")};
    const auto res = testing::gradcheck(fn, probe, 1e-6, 1e-3, 1e-8, 12);
    CHECK(res.checked > 30);
    CHECK(res.ok(0.99));  // an L1 kink under a perturbed entry is tolerated
}

TEST_CASE("cycle and identity loss gradients match finite differences") {
    net::Generator g_fwd(tiny_config(), "g_fwd", 95);
    net::Generator g_bwd(tiny_config(), "g_bwd", 96);
    const auto x = random_input(1, 16, 97, 0.5);
    auto cyc = [&] { return loss::cycle_loss(x, g_fwd, g_bwd); };
    std::vector<core::Tensor> probe{g_fwd.params().at("g_fwd.enc1.conv.w"),
                                    g_bwd.params().at("g_bwd.dec1.conv.w"),
                                    g_bwd.params().at("g_bwd.head.w")};
    const auto res = testing::gradcheck(cyc, probe, 1e-7, 1e-3, 1e-8, 12);
    CHECK(res.checked > 20);
    CHECK(res.ok(0.95));  // allows one exact-kink entry in a small sample

    auto idt = [&] { return loss::identity_loss(x, g_fwd); };
    const auto res2 = testing::gradcheck(idt, {g_fwd.params().at("g_fwd.vit.block0.fc_in.w")},
                                         1e-7, 1e-3, 1e-8, 16);
    CHECK(res2.ok(0.95));
}

TEST_CASE("loss report json round trip and finite check") {
    loss::LossReport r;
    r.adv_b2h = 0.5;
    r.msc_bit = 0.25;
    r.msc_he = 0.5;
    r.msc_total = 0.75;
    r.total = 13.5;
    r.step = 7;
    const auto j = r.to_json();
    const auto back = loss::LossReport::from_json(j);
    CHECK(back.adv_b2h == r.adv_b2h);
    CHECK(back.msc_total == r.msc_total);
    CHECK(back.step == 7);
    CHECK_NOTHROW(r.check_finite());
    r.cycle_he = std::nan("");
    try {
        r.check_finite();
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("cycle_he") != std::string::npos);
    }
}
