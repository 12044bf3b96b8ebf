#include "bitstain/net/layers.hpp"

#include <cmath>

#include "bitstain/core/rng.hpp"

namespace bitstain::net {

Tensor ParamStore::insert(const std::string& name, Tensor t) {
    if (params_.count(name)) throw StateError("ParamStore: duplicate parameter name " + name);
    t.node()->requires_grad = true;
    t.node()->param_name = name;
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::normal(const std::string& name, core::Shape shape, double std_dev) {
    core::Philox ph(seed_, core::fnv1a(name));
    std::vector<double> v(static_cast<std::size_t>(core::numel(shape)));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std_dev * ph.normal(i);
    return insert(name, Tensor::from(std::move(shape), std::move(v)));
}

Tensor ParamStore::constant(const std::string& name, core::Shape shape, double fill) {
    return insert(name, Tensor::full(std::move(shape), fill));
}

std::vector<Tensor> ParamStore::all() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
}

Tensor ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("ParamStore: unknown parameter " + name);
    return it->second;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int k, int stride,
               int pad)
    : stride(stride), pad(pad) {
    w = ps.normal(name + ".w", {out_ch, in_ch, k, k}, kInitStd);
    b = ps.constant(name + ".b", {out_ch}, 0.0);
}

Tensor Conv2d::forward(const Tensor& x) const { return core::conv2d(x, w, b, stride, pad); }

InstanceNorm::InstanceNorm(ParamStore& ps, const std::string& name, int channels) {
    gamma = ps.constant(name + ".gamma", {channels}, 1.0);
    beta = ps.constant(name + ".beta", {channels}, 0.0);
}

Tensor InstanceNorm::forward(const Tensor& x) const {
    return core::instance_norm(x, gamma, beta, kNormEps);
}

Linear::Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim) {
    w = ps.normal(name + ".w", {in_dim, out_dim}, kInitStd);
    b = ps.constant(name + ".b", {out_dim}, 0.0);
}

Tensor Linear::forward(const Tensor& x) const { return core::linear(x, w, b); }

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim) {
    gamma = ps.constant(name + ".gamma", {dim}, 1.0);
    beta = ps.constant(name + ".beta", {dim}, 0.0);
}

Tensor LayerNorm::forward(const Tensor& x) const {
    return core::layer_norm(x, gamma, beta, kNormEps);
}

VitBlock::VitBlock(ParamStore& ps, const std::string& name, int dim, int heads, int mlp_ratio)
    : ln_attn(ps, name + ".ln_attn", dim),
      ln_mlp(ps, name + ".ln_mlp", dim),
      q_proj(ps, name + ".q", dim, dim),
      k_proj(ps, name + ".k", dim, dim),
      v_proj(ps, name + ".v", dim, dim),
      out_proj(ps, name + ".out", dim, dim),
      fc_in(ps, name + ".fc_in", dim, dim * mlp_ratio),
      fc_out(ps, name + ".fc_out", dim * mlp_ratio, dim),
      heads(heads) {}

Tensor VitBlock::forward(const Tensor& style, const Tensor& patches) const {
    // the style token enters keys/values unnormalized: per-token layer norm
    // would cancel exactly the mean/std statistics that style fusion edits
    auto normed = ln_attn.forward(patches);
    auto kv_seq = core::prepend_token(style, normed);
    auto q = q_proj.forward(normed);
    auto k = k_proj.forward(kv_seq);
    auto v = v_proj.forward(kv_seq);
    auto attended = out_proj.forward(core::attention(q, k, v, heads));
    auto mid = core::add(patches, attended);
    auto mlp = fc_out.forward(core::gelu(fc_in.forward(ln_mlp.forward(mid))));
    return core::add(mid, mlp);
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& vals = params_[pi].raw_values();
        const auto& g = params_[pi].grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < vals.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            vals[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace bitstain::net
