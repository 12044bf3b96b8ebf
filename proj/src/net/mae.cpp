#include "bitstain/net/mae.hpp"

#include <algorithm>
#include <numeric>

namespace bitstain::net {

std::vector<int> sample_mask_indices(int num_patches, double mask_ratio, core::SeqRng& rng) {
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw ValueError("sample_mask_indices: mask_ratio must lie in (0, 1)");
    }
    const int count = static_cast<int>(mask_ratio * num_patches);
    if (count < 1) {
        throw ValueError("sample_mask_indices: mask_ratio * num_patches rounds down to zero");
    }
    std::vector<int> all(static_cast<std::size_t>(num_patches));
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(count));
    std::sort(all.begin(), all.end());
    return all;
}

namespace {

// 1 on masked patch pixels, 0 elsewhere; shared across batch and channels.
std::vector<double> patch_mask_plane(int side_px, int grid, const std::vector<int>& masked,
                                     int patch_px) {
    std::vector<double> plane(static_cast<std::size_t>(side_px) * side_px, 0.0);
    for (int idx : masked) {
        if (idx < 0 || idx >= grid * grid) throw ValueError("patch mask index out of range");
        const int gy = idx / grid;
        const int gx = idx % grid;
        for (int y = gy * patch_px; y < (gy + 1) * patch_px; ++y)
            for (int x = gx * patch_px; x < (gx + 1) * patch_px; ++x)
                plane[static_cast<std::size_t>(y) * side_px + x] = 1.0;
    }
    return plane;
}

void check_batch(const Tensor& batch, int patch_px) {
    if (batch.shape().size() != 4 || batch.shape()[2] != batch.shape()[3]) {
        throw ShapeError("mae: batch must be [N,C,S,S]");
    }
    if (batch.shape()[2] % patch_px != 0) throw ShapeError("mae: patch size does not tile the image");
}

}  // namespace

Tensor zero_patches(const Tensor& batch, const std::vector<int>& masked, int patch_px) {
    check_batch(batch, patch_px);
    const int n = batch.shape()[0], c = batch.shape()[1], s = batch.shape()[2];
    const int grid = s / patch_px;
    const auto plane = patch_mask_plane(s, grid, masked, patch_px);
    std::vector<double> out = batch.values();
    const std::size_t plane_sz = plane.size();
    for (int p = 0; p < n * c; ++p) {
        double* dst = out.data() + static_cast<std::size_t>(p) * plane_sz;
        for (std::size_t i = 0; i < plane_sz; ++i) {
            if (plane[i] != 0.0) dst[i] = 0.0;
        }
    }
    return Tensor::from(batch.shape(), std::move(out));
}

Tensor masked_patch_mse(const Tensor& recon, const Tensor& target, const std::vector<int>& masked,
                        int patch_px) {
    if (recon.shape() != target.shape()) throw ShapeError("masked_patch_mse: shape mismatch");
    check_batch(recon, patch_px);
    if (masked.empty()) throw ValueError("masked_patch_mse: empty mask");
    const int n = recon.shape()[0], c = recon.shape()[1], s = recon.shape()[2];
    const int grid = s / patch_px;
    const auto plane = patch_mask_plane(s, grid, masked, patch_px);
    std::vector<double> mask_data;
    mask_data.reserve(static_cast<std::size_t>(n) * c * plane.size());
    for (int p = 0; p < n * c; ++p) mask_data.insert(mask_data.end(), plane.begin(), plane.end());
    const auto mask = Tensor::from(recon.shape(), std::move(mask_data));
    const double count = static_cast<double>(n) * c * masked.size() * patch_px * patch_px;
    auto sq = core::square(core::sub(recon, target));
    return core::mul_scalar(core::sum_all(core::mul(sq, mask)), 1.0 / count);
}

double mae_pretrain_step(Generator& gen, Adam& opt, const Tensor& batch, double mask_ratio,
                         core::SeqRng& rng) {
    const int patch_px = gen.config().patch_px();
    check_batch(batch, patch_px);
    if (batch.shape()[2] != gen.config().input_size) throw ShapeError("mae: batch size mismatch");
    const auto masked = sample_mask_indices(gen.config().num_patches(), mask_ratio, rng);
    const Tensor masked_input = zero_patches(batch, masked, patch_px);
    EncoderState st = gen.encode(masked_input);
    GeneratorResult res = gen.complete(st, st.style_raw, masked);
    Tensor loss = masked_patch_mse(res.output, batch, masked, patch_px);
    if (!loss.all_finite()) throw NumericError("mae_pretrain_step: non-finite loss");
    core::zero_grad(opt.params());
    core::backward(loss);
    opt.step();
    return loss.item();
}

}  // namespace bitstain::net
