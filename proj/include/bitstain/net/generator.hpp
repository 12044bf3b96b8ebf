#ifndef BITSTAIN_NET_GENERATOR_HPP
#define BITSTAIN_NET_GENERATOR_HPP

#include <optional>

#include "bitstain/net/layers.hpp"

namespace bitstain::net {

struct GeneratorConfig {
    int input_size = 64;
    std::vector<int> stage_channels{16, 32, 64};
    std::vector<int> scales{1, 2, 4, 16};  // ordered downsampling factors
    int token_dim = 64;
    int vit_depth = 2;
    int vit_heads = 2;
    int extra_tokens = 1;  // fixed by contract

    void validate() const;
    int max_scale() const { return scales.back(); }
    int grid_size() const { return input_size / max_scale(); }
    int num_patches() const { return grid_size() * grid_size(); }
    // image pixels per bottleneck patch edge
    int patch_px() const { return max_scale(); }
    bool operator==(const GeneratorConfig&) const = default;
};

// Per-scale encoder features plus the transformer output at the bottleneck
// scale, keyed by downsampling factor.
struct FeaturePyramid {
    std::vector<std::pair<int, Tensor>> maps;  // ascending scale

    const Tensor& at(int scale) const;
    std::vector<int> scales() const;
};

struct EncoderState {
    std::vector<Tensor> stage_outputs;  // one per stage, scale 1,2,4,...,max
    Tensor bottleneck_grid;             // [N, D, g, g]
    Tensor style_raw;                   // [N, D]
};

struct GeneratorResult {
    Tensor output;  // [N, 3, S, S], values in [-1, 1]
    FeaturePyramid pyramid;
    Tensor style;  // the extra token actually used, [N, D]
};

// U-Net translator with a transformer bottleneck carrying one extra style
// token. The style token is produced by pooling the bottleneck grid and can
// be replaced before the transformer blocks; the token fed in is also the
// token read out, so replaying a pass with its own extracted token is
// bit-identical.
class Generator {
public:
    Generator(const GeneratorConfig& cfg, const std::string& prefix, std::uint64_t seed);

    EncoderState encode(const Tensor& x) const;
    // Optional token masking (indices into the bottleneck patch grid)
    // supports masked-autoencoder pretraining.
    GeneratorResult complete(const EncoderState& st, const Tensor& style,
                             const std::vector<int>& masked_patches = {}) const;

    GeneratorResult forward(const Tensor& x,
                            std::optional<Tensor> style_override = std::nullopt) const;
    FeaturePyramid encode_features(const Tensor& x) const;

    const GeneratorConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Tensor& mask_token() const { return mask_token_; }
    const std::string& prefix() const { return prefix_; }

private:
    void check_input(const Tensor& x) const;

    GeneratorConfig cfg_;
    std::string prefix_;
    ParamStore params_;

    struct Stage {
        Conv2d conv;
        InstanceNorm norm;
    };
    std::vector<Stage> enc_;       // scale 1 .. max
    std::vector<Stage> dec_;       // scale max/2 .. 1 (output channels match encoder)
    std::vector<int> stage_ch_;    // channels per encoder stage
    Linear style_proj_;
    Tensor pos_embed_;             // [T, D]
    Tensor mask_token_;            // [D]
    std::vector<VitBlock> blocks_;
    LayerNorm ln_final_;
    Conv2d head_;
};

// Patch discriminator: three stride-2 stages then a 1-channel head, so a
// 64 px input yields an 8x8 logit grid.
class PatchDiscriminator {
public:
    PatchDiscriminator(int in_channels, int base_channels, const std::string& prefix,
                       std::uint64_t seed);

    Tensor forward(const Tensor& x) const;
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    ParamStore params_;
    Conv2d c1_, c2_, c3_, head_;
    InstanceNorm n2_, n3_;
};

}  // namespace bitstain::net

#endif
