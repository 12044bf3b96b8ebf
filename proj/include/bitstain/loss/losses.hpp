#ifndef BITSTAIN_LOSS_LOSSES_HPP
#define BITSTAIN_LOSS_LOSSES_HPP

#include <json.hpp>

#include "bitstain/net/generator.hpp"

namespace bitstain::loss {

using core::Tensor;
using net::FeaturePyramid;
using net::Generator;

// Which operand of the multiscale loss is treated as a constant target.
enum class StopGradOn { None, A, B };

// Deterministic per-scale channel selection: full channels at scale 1 and at
// the bottleneck, a subset at intermediate scales.
struct ChannelSubsetConfig {
    enum class Rule { FirstN, RandomN };
    Rule rule = Rule::FirstN;
    int n = 16;
    std::uint64_t seed = 0;  // used by RandomN only
};

struct ChannelSubset {
    std::vector<std::pair<int, std::vector<int>>> per_scale;  // ascending scale

    const std::vector<int>& at(int scale) const;
    static ChannelSubset make(const net::GeneratorConfig& gen, const ChannelSubsetConfig& cfg);
};

// Mean per-scale L1 between channel-subsetted pyramids, averaged over the
// scale set; gradients are blocked through the side named by stop_grad_on.
Tensor multiscale_content_loss(const FeaturePyramid& a, const FeaturePyramid& b,
                               const ChannelSubset& subset, StopGradOn stop_grad_on);

// The two translation-cycle content terms: each generator's encoding of its
// input against a stop-gradient encoding of its translation by the opposite
// generator.
std::pair<Tensor, Tensor> bidirectional_msc(const Tensor& x_bit, const Tensor& y_he,
                                            const Generator& g_b2h, const Generator& g_h2b,
                                            const ChannelSubset& subset);

Tensor l1_loss(const Tensor& a, const Tensor& b);  // mean |a - b|

Tensor cycle_loss(const Tensor& x, const Generator& g_fwd, const Generator& g_bwd);
Tensor identity_loss(const Tensor& y, const Generator& g);

// Least-squares adversarial pair. d_loss detaches the fake internally.
struct AdversarialPair {
    Tensor d_loss;
    Tensor g_loss;
};
AdversarialPair lsgan_losses(const net::PatchDiscriminator& d, const Tensor& real,
                             const Tensor& fake);
Tensor lsgan_generator_loss(const net::PatchDiscriminator& d, const Tensor& fake);
Tensor lsgan_discriminator_loss(const net::PatchDiscriminator& d, const Tensor& real,
                                const Tensor& fake_detached);

// First/second-moment matching across the embedding dimension; the real
// token is treated as a constant. Tokens are [N, D]; the result averages
// over the batch.
Tensor style_statistics_loss(const Tensor& s_fake, const Tensor& s_real);

struct LossWeights {
    double cycle = 10.0;
    double idt = 0.5;
    double msc = 1.0;
    double style = 1.0;
};

// Scalar components of one optimization step, serialized one JSON object
// per step into the training log.
struct LossReport {
    double adv_b2h = 0, adv_h2b = 0;
    double cycle_bit = 0, cycle_he = 0;
    double idt_bit = 0, idt_he = 0;
    double msc_bit = 0, msc_he = 0, msc_total = 0;
    double style = 0;
    double total = 0;
    double disc_bit = 0, disc_he = 0;
    std::int64_t step = 0;
    double fusion_w = 0;

    nlohmann::json to_json() const;
    static LossReport from_json(const nlohmann::json& j);
    // Throws NumericError naming the first non-finite component.
    void check_finite() const;
};

Tensor total_generator_loss(const Tensor& adv_b2h, const Tensor& adv_h2b, const Tensor& cycle_bit,
                            const Tensor& cycle_he, const Tensor& idt_bit, const Tensor& idt_he,
                            const Tensor& msc_bit, const Tensor& msc_he, const Tensor& style,
                            const LossWeights& w);

}  // namespace bitstain::loss

#endif
