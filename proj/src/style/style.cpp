#include "bitstain/style/style.hpp"

#include <cmath>
#include <numbers>

namespace bitstain::style {

TokenStats token_stats(const std::vector<double>& token) {
    if (token.size() < 2) throw ValueError("token_stats: need embedding dim >= 2");
    TokenStats st;
    for (double v : token) {
        if (!std::isfinite(v)) throw NumericError("token_stats: non-finite entry");
        st.mu += v;
    }
    st.mu /= static_cast<double>(token.size());
    double var = 0;
    for (double v : token) {
        const double d = v - st.mu;
        var += d * d;
    }
    var /= static_cast<double>(token.size());
    st.sigma = std::max(std::sqrt(var), kSigmaFloor);
    return st;
}

void StylePrototype::update(const std::vector<double>& observation) {
    if (initialized && observation.size() != values.size()) {
        throw ShapeError("StylePrototype::update: dimension mismatch");
    }
    if (!(alpha > 0 && alpha < 1)) throw ValueError("StylePrototype: alpha must be in (0,1)");
    if (!initialized) {
        values = observation;
        initialized = true;
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = alpha * values[i] + (1.0 - alpha) * observation[i];
        }
    }
    ++observations;
}

TokenStats StylePrototype::stats() const {
    if (!initialized) throw StateError("StylePrototype: not initialized");
    return token_stats(values);
}

std::vector<double> adain_fuse(const std::vector<double>& src, const StylePrototype& proto) {
    if (!proto.initialized) throw StateError("adain_fuse: prototype not initialized");
    if (src.size() != proto.values.size()) throw ShapeError("adain_fuse: dimension mismatch");
    const TokenStats ss = token_stats(src);
    const TokenStats ps = proto.stats();
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        out[i] = ps.sigma * (src[i] - ss.mu) / ss.sigma + ps.mu;
    }
    return out;
}

std::vector<double> apply_fusion(const std::vector<double>& src, const StylePrototype& proto, double w) {
    auto fused = adain_fuse(src, proto);
    for (std::size_t i = 0; i < src.size(); ++i) fused[i] = w * fused[i] + (1.0 - w) * src[i];
    return fused;
}

void FusionSchedule::validate() const {
    if (!(0 <= w_min && w_min <= w0 && w0 <= 1)) {
        throw ValueError("FusionSchedule: need 0 <= w_min <= w0 <= 1");
    }
    if (total_steps < 1) throw ValueError("FusionSchedule: total_steps must be >= 1");
}

double fusion_weight(std::int64_t t, const FusionSchedule& sched) {
    sched.validate();
    if (t < 0 || t > sched.total_steps) throw ValueError("fusion_weight: step outside [0, T]");
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(sched.total_steps);
    return sched.w_min + 0.5 * (sched.w0 - sched.w_min) * (1.0 + std::cos(phase));
}

core::Tensor adain_fuse_graph(const core::Tensor& tokens, const StylePrototype& proto) {
    if (!proto.initialized) throw StateError("adain_fuse_graph: prototype not initialized");
    if (tokens.shape().size() != 2 || tokens.shape()[1] != static_cast<int>(proto.values.size())) {
        throw ShapeError("adain_fuse_graph: tokens must be [N, D] with prototype dim");
    }
    const int n = tokens.shape()[0];
    const TokenStats ps = proto.stats();
    auto mu = core::row_mean(tokens);
    auto centered = core::row_sub(tokens, mu);
    auto var = core::row_mean(core::square(centered));
    auto sigma = core::max_scalar(core::sqrt_val(var), kSigmaFloor);
    auto normalized = core::row_div(centered, sigma);
    auto proto_sigma = core::Tensor::full({n, 1}, ps.sigma);
    auto proto_mu = core::Tensor::full({n, 1}, ps.mu);
    return core::row_add(core::row_mul(normalized, proto_sigma), proto_mu);
}

core::Tensor apply_fusion_graph(const core::Tensor& tokens, const StylePrototype& proto, double w) {
    auto fused = adain_fuse_graph(tokens, proto);
    return core::add(core::mul_scalar(fused, w), core::mul_scalar(tokens, 1.0 - w));
}

}  // namespace bitstain::style
