#ifndef BITSTAIN_STYLE_STYLE_HPP
#define BITSTAIN_STYLE_STYLE_HPP

#include <cstdint>
#include <vector>

#include "bitstain/core/tensor.hpp"

namespace bitstain::style {

inline constexpr double kSigmaFloor = 1e-5;

// mu = mean over the embedding dimension, sigma = population standard
// deviation floored at kSigmaFloor. Requires D >= 2.
struct TokenStats {
    double mu = 0;
    double sigma = 0;
};
TokenStats token_stats(const std::vector<double>& token);

// Running-mean style embedding observed from the target domain.
struct StylePrototype {
    std::vector<double> values;
    double alpha = 0.99;
    std::uint64_t observations = 0;
    bool initialized = false;

    // First observation copies; later ones blend alpha*old + (1-alpha)*new.
    void update(const std::vector<double>& observation);
    TokenStats stats() const;
};

// s~ = sigma(proto) * (s - mu(s)) / sigma(s) + mu(proto)
std::vector<double> adain_fuse(const std::vector<double>& src, const StylePrototype& proto);

// w * adain_fuse(src, proto) + (1 - w) * src
std::vector<double> apply_fusion(const std::vector<double>& src, const StylePrototype& proto, double w);

struct FusionSchedule {
    double w0 = 1.0;
    double w_min = 0.0;
    std::int64_t total_steps = 1;

    void validate() const;
};

// Cosine decay: w(t) = w_min + (w0 - w_min) * (1 + cos(pi t / T)) / 2.
double fusion_weight(std::int64_t t, const FusionSchedule& sched);

// Graph versions used inside training passes; gradients flow into the
// source tokens only, the prototype is a constant.
// tokens: [N, D].
core::Tensor adain_fuse_graph(const core::Tensor& tokens, const StylePrototype& proto);
core::Tensor apply_fusion_graph(const core::Tensor& tokens, const StylePrototype& proto, double w);

}  // namespace bitstain::style

#endif
