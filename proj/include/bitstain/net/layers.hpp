#ifndef BITSTAIN_NET_LAYERS_HPP
#define BITSTAIN_NET_LAYERS_HPP

#include <map>
#include <string>
#include <vector>

#include "bitstain/core/tensor.hpp"

namespace bitstain::net {

using core::Tensor;

// Registry of named trainable leaves. Names are hierarchical
// ("g_b2h.enc1.conv.w"); initialization draws a per-parameter stream from
// (seed, fnv1a(name)) so the values do not depend on registration order.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    Tensor normal(const std::string& name, core::Shape shape, double std_dev);
    Tensor constant(const std::string& name, core::Shape shape, double fill);

    const std::map<std::string, Tensor>& params() const { return params_; }
    std::vector<Tensor> all() const;
    Tensor at(const std::string& name) const;
    std::uint64_t seed() const { return seed_; }

private:
    Tensor insert(const std::string& name, Tensor t);
    std::uint64_t seed_;
    std::map<std::string, Tensor> params_;
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEps = 1e-5;

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int k, int stride,
           int pad);
    Tensor forward(const Tensor& x) const;
};

struct InstanceNorm {
    Tensor gamma, beta;

    InstanceNorm() = default;
    InstanceNorm(ParamStore& ps, const std::string& name, int channels);
    Tensor forward(const Tensor& x) const;
};

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim);
    Tensor forward(const Tensor& x) const;
};

struct LayerNorm {
    Tensor gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, int dim);
    Tensor forward(const Tensor& x) const;
};

// Pre-norm transformer block in which the first sequence position (the
// style token) contributes keys/values but is never updated itself; the
// token read out after the last block is therefore exactly the injected one.
struct VitBlock {
    LayerNorm ln_attn, ln_mlp;
    Linear q_proj, k_proj, v_proj, out_proj, fc_in, fc_out;
    int heads = 1;

    VitBlock() = default;
    VitBlock(ParamStore& ps, const std::string& name, int dim, int heads, int mlp_ratio = 4);
    // style: [N, D]; patches: [N, T, D] -> updated patches
    Tensor forward(const Tensor& style, const Tensor& patches) const;
};

// First-order adaptive-moment optimizer.
class Adam {
public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.5, double beta2 = 0.999,
         double eps = 1e-8);

    void step();

    std::int64_t t() const { return t_; }
    void set_t(std::int64_t t) { t_ = t; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<double>& slot_m(std::size_t i) { return m_[i]; }
    std::vector<double>& slot_v(std::size_t i) { return v_[i]; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

}  // namespace bitstain::net

#endif
