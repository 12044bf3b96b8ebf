#include "bitstain/loss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bitstain/core/rng.hpp"
#include "bitstain/style/style.hpp"

namespace bitstain::loss {

const std::vector<int>& ChannelSubset::at(int scale) const {
    for (const auto& [k, idx] : per_scale) {
        if (k == scale) return idx;
    }
    throw ShapeError("ChannelSubset: no entry for scale " + std::to_string(scale));
}

ChannelSubset ChannelSubset::make(const net::GeneratorConfig& gen, const ChannelSubsetConfig& cfg) {
    if (cfg.n <= 0) throw ValueError("ChannelSubsetConfig: n must be positive");
    gen.validate();
    ChannelSubset out;
    for (int k : gen.scales) {
        int channels;
        if (k == gen.max_scale()) {
            channels = gen.token_dim;
        } else {
            const int level = static_cast<int>(std::log2(k));
            channels = level < static_cast<int>(gen.stage_channels.size())
                           ? gen.stage_channels[static_cast<std::size_t>(level)]
                           : gen.stage_channels.back();
        }
        std::vector<int> idx;
        if (k == 1 || k == gen.max_scale()) {
            idx.resize(static_cast<std::size_t>(channels));
            std::iota(idx.begin(), idx.end(), 0);
        } else if (cfg.rule == ChannelSubsetConfig::Rule::FirstN) {
            idx.resize(static_cast<std::size_t>(std::min(cfg.n, channels)));
            std::iota(idx.begin(), idx.end(), 0);
        } else {
            std::vector<int> all(static_cast<std::size_t>(channels));
            std::iota(all.begin(), all.end(), 0);
            core::SeqRng rng(cfg.seed, core::fnv1a("channel_subset") ^ static_cast<std::uint64_t>(k));
            rng.shuffle(all);
            all.resize(static_cast<std::size_t>(std::min(cfg.n, channels)));
            std::sort(all.begin(), all.end());
            idx = std::move(all);
        }
        out.per_scale.emplace_back(k, std::move(idx));
    }
    return out;
}

Tensor multiscale_content_loss(const FeaturePyramid& a, const FeaturePyramid& b,
                               const ChannelSubset& subset, StopGradOn stop_grad_on) {
    if (a.scales() != b.scales()) {
        throw ShapeError("multiscale_content_loss: pyramids carry different scale sets");
    }
    Tensor acc = Tensor::scalar(0.0);
    int count = 0;
    for (const auto& [k, fa] : a.maps) {
        const auto& idx = subset.at(k);
        Tensor sa = core::select_channels(fa, idx);
        Tensor sb = core::select_channels(b.at(k), idx);
        if (sa.shape() != sb.shape()) {
            throw ShapeError("multiscale_content_loss: shape mismatch at scale " + std::to_string(k));
        }
        if (stop_grad_on == StopGradOn::A) sa = sa.detach();
        if (stop_grad_on == StopGradOn::B) sb = sb.detach();
        acc = core::add(acc, core::mean_all(core::abs_val(core::sub(sa, sb))));
        ++count;
    }
    return core::mul_scalar(acc, 1.0 / count);
}

std::pair<Tensor, Tensor> bidirectional_msc(const Tensor& x_bit, const Tensor& y_he,
                                            const Generator& g_b2h, const Generator& g_h2b,
                                            const ChannelSubset& subset) {
    if (g_b2h.config().scales != g_h2b.config().scales ||
        g_b2h.config().stage_channels != g_h2b.config().stage_channels ||
        g_b2h.config().token_dim != g_h2b.config().token_dim) {
        throw ConfigError("bidirectional_msc: generators must share scale set and widths");
    }
    auto fwd = g_b2h.forward(x_bit);
    auto fwd_reenc = g_h2b.encode_features(fwd.output);
    Tensor l_bit = multiscale_content_loss(fwd.pyramid, fwd_reenc, subset, StopGradOn::B);

    auto rev = g_h2b.forward(y_he);
    auto rev_reenc = g_b2h.encode_features(rev.output);
    Tensor l_he = multiscale_content_loss(rev.pyramid, rev_reenc, subset, StopGradOn::B);
    return {l_bit, l_he};
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("l1_loss: shape mismatch");
    return core::mean_all(core::abs_val(core::sub(a, b)));
}

Tensor cycle_loss(const Tensor& x, const Generator& g_fwd, const Generator& g_bwd) {
    return l1_loss(x, g_bwd.forward(g_fwd.forward(x).output).output);
}

Tensor identity_loss(const Tensor& y, const Generator& g) {
    return l1_loss(y, g.forward(y).output);
}

Tensor lsgan_generator_loss(const net::PatchDiscriminator& d, const Tensor& fake) {
    return core::mean_all(core::square(core::add_scalar(d.forward(fake), -1.0)));
}

Tensor lsgan_discriminator_loss(const net::PatchDiscriminator& d, const Tensor& real,
                                const Tensor& fake_detached) {
    auto real_term = core::mean_all(core::square(core::add_scalar(d.forward(real), -1.0)));
    auto fake_term = core::mean_all(core::square(d.forward(fake_detached)));
    return core::mul_scalar(core::add(real_term, fake_term), 0.5);
}

AdversarialPair lsgan_losses(const net::PatchDiscriminator& d, const Tensor& real,
                             const Tensor& fake) {
    AdversarialPair out;
    out.g_loss = lsgan_generator_loss(d, fake);
    out.d_loss = lsgan_discriminator_loss(d, real, fake.detach());
    return out;
}

Tensor style_statistics_loss(const Tensor& s_fake, const Tensor& s_real) {
    if (s_fake.shape().size() != 2 || s_fake.shape() != s_real.shape()) {
        throw ShapeError("style_statistics_loss: tokens must be [N,D] with equal shapes");
    }
    if (s_fake.shape()[1] < 2) throw ValueError("style_statistics_loss: embedding dim must be >= 2");
    const Tensor r = s_real.detach();

    auto moments = [](const Tensor& t) {
        auto mu = core::row_mean(t);
        auto centered = core::row_sub(t, mu);
        auto var = core::row_mean(core::square(centered));
        auto sigma = core::max_scalar(core::sqrt_val(var), style::kSigmaFloor);
        return std::pair{mu, sigma};
    };
    auto [mu_f, sigma_f] = moments(s_fake);
    auto [mu_r, sigma_r] = moments(r);
    auto term_mu = core::square(core::sub(mu_f, mu_r));
    auto term_sigma = core::square(core::sub(sigma_f, sigma_r));
    return core::mean_all(core::add(term_mu, term_sigma));
}

nlohmann::json LossReport::to_json() const {
    return {{"adv_b2h", adv_b2h},     {"adv_h2b", adv_h2b}, {"cycle_bit", cycle_bit},
            {"cycle_he", cycle_he},   {"idt_bit", idt_bit}, {"idt_he", idt_he},
            {"msc_bit", msc_bit},     {"msc_he", msc_he},   {"msc_total", msc_total},
            {"style", style},         {"total", total},     {"disc_bit", disc_bit},
            {"disc_he", disc_he},     {"step", step},       {"fusion_w", fusion_w}};
}

LossReport LossReport::from_json(const nlohmann::json& j) {
    LossReport r;
    r.adv_b2h = j.at("adv_b2h");
    r.adv_h2b = j.at("adv_h2b");
    r.cycle_bit = j.at("cycle_bit");
    r.cycle_he = j.at("cycle_he");
    r.idt_bit = j.at("idt_bit");
    r.idt_he = j.at("idt_he");
    r.msc_bit = j.at("msc_bit");
    r.msc_he = j.at("msc_he");
    r.msc_total = j.at("msc_total");
    r.style = j.at("style");
    r.total = j.at("total");
    r.disc_bit = j.at("disc_bit");
    r.disc_he = j.at("disc_he");
    r.step = j.at("step");
    r.fusion_w = j.at("fusion_w");
    return r;
}

void LossReport::check_finite() const {
    const std::pair<const char*, double> fields[] = {
        {"adv_b2h", adv_b2h}, {"adv_h2b", adv_h2b}, {"cycle_bit", cycle_bit},
        {"cycle_he", cycle_he}, {"idt_bit", idt_bit}, {"idt_he", idt_he},
        {"msc_bit", msc_bit}, {"msc_he", msc_he}, {"msc_total", msc_total},
        {"style", style}, {"total", total}, {"disc_bit", disc_bit}, {"disc_he", disc_he}};
    for (const auto& [name, v] : fields) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite loss component: ") + name + " at step " +
                               std::to_string(step));
        }
    }
}

Tensor total_generator_loss(const Tensor& adv_b2h, const Tensor& adv_h2b, const Tensor& cycle_bit,
                            const Tensor& cycle_he, const Tensor& idt_bit, const Tensor& idt_he,
                            const Tensor& msc_bit, const Tensor& msc_he, const Tensor& style,
                            const LossWeights& w) {
    if (w.cycle < 0 || w.idt < 0 || w.msc < 0 || w.style < 0) {
        throw ValueError("LossWeights: weights must be non-negative");
    }
    auto total = core::add(adv_b2h, adv_h2b);
    total = core::add(total, core::mul_scalar(core::add(cycle_bit, cycle_he), w.cycle));
    total = core::add(total, core::mul_scalar(core::add(idt_bit, idt_he), w.idt));
    total = core::add(total, core::mul_scalar(core::add(msc_bit, msc_he), w.msc));
    total = core::add(total, core::mul_scalar(style, w.style));
    return total;
}

}  // namespace bitstain::loss
