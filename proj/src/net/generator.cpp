#include "bitstain/net/generator.hpp"

#include <algorithm>
#include <cmath>

namespace bitstain::net {

void GeneratorConfig::validate() const {
    if (input_size <= 0) throw ValueError("GeneratorConfig: input_size must be positive");
    if (scales.empty() || scales.front() != 1) {
        throw ValueError("GeneratorConfig: scale set must start at 1");
    }
    int prev = 0;
    for (int k : scales) {
        if (k <= 0 || (k & (k - 1)) != 0) throw ValueError("GeneratorConfig: scales must be powers of two");
        if (k <= prev) throw ValueError("GeneratorConfig: scales must be strictly increasing");
        if (k > input_size) throw ValueError("GeneratorConfig: scale exceeds input size");
        prev = k;
    }
    if (max_scale() < 2) throw ValueError("GeneratorConfig: bottleneck scale must be >= 2");
    if (input_size % max_scale() != 0) {
        throw ValueError("GeneratorConfig: input size must be divisible by the bottleneck scale");
    }
    if (stage_channels.empty()) throw ValueError("GeneratorConfig: stage_channels empty");
    for (int c : stage_channels) {
        if (c <= 0) throw ValueError("GeneratorConfig: stage channels must be positive");
    }
    if (token_dim <= 1) throw ValueError("GeneratorConfig: token_dim must be >= 2");
    if (vit_depth < 1 || vit_heads < 1) throw ValueError("GeneratorConfig: transformer shape invalid");
    if (token_dim % vit_heads != 0) throw ValueError("GeneratorConfig: heads must divide token_dim");
    if (extra_tokens != 1) throw ValueError("GeneratorConfig: extra_tokens is fixed at 1");
}

const Tensor& FeaturePyramid::at(int scale) const {
    for (const auto& [k, t] : maps) {
        if (k == scale) return t;
    }
    throw ShapeError("FeaturePyramid: no map at scale " + std::to_string(scale));
}

std::vector<int> FeaturePyramid::scales() const {
    std::vector<int> out;
    out.reserve(maps.size());
    for (const auto& [k, t] : maps) out.push_back(k);
    return out;
}

Generator::Generator(const GeneratorConfig& cfg, const std::string& prefix, std::uint64_t seed)
    : cfg_(cfg), prefix_(prefix), params_(seed) {
    cfg_.validate();
    const int levels = static_cast<int>(std::log2(cfg_.max_scale())) + 1;  // scales 1..max
    stage_ch_.resize(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        if (i == levels - 1) {
            stage_ch_[static_cast<std::size_t>(i)] = cfg_.token_dim;
        } else if (i < static_cast<int>(cfg_.stage_channels.size())) {
            stage_ch_[static_cast<std::size_t>(i)] = cfg_.stage_channels[static_cast<std::size_t>(i)];
        } else {
            stage_ch_[static_cast<std::size_t>(i)] = cfg_.stage_channels.back();
        }
    }
    int in_ch = 3;
    for (int i = 0; i < levels; ++i) {
        const std::string name = prefix_ + ".enc" + std::to_string(1 << i);
        const int out_ch = stage_ch_[static_cast<std::size_t>(i)];
        Stage st;
        st.conv = Conv2d(params_, name + ".conv", in_ch, out_ch, 3, i == 0 ? 1 : 2, 1);
        st.norm = InstanceNorm(params_, name + ".norm", out_ch);
        enc_.push_back(st);
        in_ch = out_ch;
    }
    for (int i = levels - 2; i >= 0; --i) {
        const std::string name = prefix_ + ".dec" + std::to_string(1 << i);
        const int out_ch = stage_ch_[static_cast<std::size_t>(i)];
        Stage st;
        st.conv = Conv2d(params_, name + ".conv", in_ch, out_ch, 3, 1, 1);
        st.norm = InstanceNorm(params_, name + ".norm", out_ch);
        dec_.push_back(st);
        in_ch = out_ch;
    }
    style_proj_ = Linear(params_, prefix_ + ".style_proj", cfg_.token_dim, cfg_.token_dim);
    pos_embed_ = params_.normal(prefix_ + ".vit.pos_embed", {cfg_.num_patches(), cfg_.token_dim},
                                kInitStd);
    mask_token_ = params_.normal(prefix_ + ".vit.mask_token", {cfg_.token_dim}, kInitStd);
    for (int d = 0; d < cfg_.vit_depth; ++d) {
        blocks_.emplace_back(params_, prefix_ + ".vit.block" + std::to_string(d), cfg_.token_dim,
                             cfg_.vit_heads);
    }
    ln_final_ = LayerNorm(params_, prefix_ + ".vit.ln_final", cfg_.token_dim);
    head_ = Conv2d(params_, prefix_ + ".head", stage_ch_.front(), 3, 3, 1, 1);
}

void Generator::check_input(const Tensor& x) const {
    if (x.shape().size() != 4 || x.shape()[1] != 3 || x.shape()[2] != cfg_.input_size ||
        x.shape()[3] != cfg_.input_size) {
        throw ShapeError("Generator: expected [N,3," + std::to_string(cfg_.input_size) + "," +
                         std::to_string(cfg_.input_size) + "], got " + core::shape_str(x.shape()));
    }
}

EncoderState Generator::encode(const Tensor& x) const {
    check_input(x);
    EncoderState st;
    Tensor cur = x;
    for (const auto& stage : enc_) {
        cur = core::leaky_relu(stage.norm.forward(stage.conv.forward(cur)), kLeakySlope);
        st.stage_outputs.push_back(cur);
    }
    st.bottleneck_grid = cur;
    st.style_raw = style_proj_.forward(core::mean_tokens(core::grid_to_tokens(cur)));
    return st;
}

GeneratorResult Generator::complete(const EncoderState& st, const Tensor& style,
                                    const std::vector<int>& masked_patches) const {
    if (style.shape().size() != 2 || style.shape()[1] != cfg_.token_dim) {
        throw ShapeError("Generator: style token must be [N," + std::to_string(cfg_.token_dim) + "]");
    }
    if (!style.all_finite()) throw NumericError("Generator: non-finite style token");
    const int g = cfg_.grid_size();
    Tensor tokens = core::grid_to_tokens(st.bottleneck_grid);
    if (!masked_patches.empty()) tokens = core::replace_tokens(tokens, mask_token_, masked_patches);
    tokens = core::add_position(tokens, pos_embed_);
    for (const auto& block : blocks_) tokens = block.forward(style, tokens);
    tokens = ln_final_.forward(tokens);
    const Tensor vit_grid = core::tokens_to_grid(tokens, g, g);

    Tensor cur = vit_grid;
    const int levels = static_cast<int>(enc_.size());
    for (int i = 0; i < static_cast<int>(dec_.size()); ++i) {
        const int enc_level = levels - 2 - i;
        cur = core::upsample_nearest2(cur);
        cur = core::leaky_relu(dec_[static_cast<std::size_t>(i)].norm.forward(
                                   dec_[static_cast<std::size_t>(i)].conv.forward(cur)),
                               kLeakySlope);
        cur = core::add(cur, st.stage_outputs[static_cast<std::size_t>(enc_level)]);
    }
    GeneratorResult res;
    res.output = core::tanh_val(head_.forward(cur));
    if (!res.output.all_finite()) throw NumericError("Generator: non-finite output");
    for (int k : cfg_.scales) {
        if (k == cfg_.max_scale()) {
            res.pyramid.maps.emplace_back(k, vit_grid);
        } else {
            const int level = static_cast<int>(std::log2(k));
            res.pyramid.maps.emplace_back(k, st.stage_outputs[static_cast<std::size_t>(level)]);
        }
    }
    res.style = style;
    return res;
}

GeneratorResult Generator::forward(const Tensor& x, std::optional<Tensor> style_override) const {
    EncoderState st = encode(x);
    return complete(st, style_override ? *style_override : st.style_raw);
}

FeaturePyramid Generator::encode_features(const Tensor& x) const {
    return forward(x).pyramid;
}

PatchDiscriminator::PatchDiscriminator(int in_channels, int base_channels,
                                       const std::string& prefix, std::uint64_t seed)
    : params_(seed),
      c1_(params_, prefix + ".c1", in_channels, base_channels, 4, 2, 1),
      c2_(params_, prefix + ".c2", base_channels, base_channels * 2, 4, 2, 1),
      c3_(params_, prefix + ".c3", base_channels * 2, base_channels * 4, 4, 2, 1),
      head_(params_, prefix + ".head", base_channels * 4, 1, 3, 1, 1),
      n2_(params_, prefix + ".n2", base_channels * 2),
      n3_(params_, prefix + ".n3", base_channels * 4) {}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
    auto h1 = core::leaky_relu(c1_.forward(x), kLeakySlope);
    auto h2 = core::leaky_relu(n2_.forward(c2_.forward(h1)), kLeakySlope);
    auto h3 = core::leaky_relu(n3_.forward(c3_.forward(h2)), kLeakySlope);
    auto logits = head_.forward(h3);
    if (!logits.all_finite()) throw NumericError("PatchDiscriminator: non-finite logits");
    return logits;
}

}  // namespace bitstain::net
