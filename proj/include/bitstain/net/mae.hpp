#ifndef BITSTAIN_NET_MAE_HPP
#define BITSTAIN_NET_MAE_HPP

#include "bitstain/core/rng.hpp"
#include "bitstain/net/generator.hpp"

namespace bitstain::net {

// Masked-autoencoder pretraining over bottleneck patches. A mask covers
// floor(mask_ratio * num_patches) patches chosen uniformly; the matching
// image regions are zeroed at the input, the bottleneck tokens are replaced
// by a learned mask token, and the loss is the MSE over masked patch pixels
// only.

std::vector<int> sample_mask_indices(int num_patches, double mask_ratio, core::SeqRng& rng);

// Zeroes the image regions behind the selected bottleneck patches. Returns a
// fresh constant leaf (inputs carry no gradient).
Tensor zero_patches(const Tensor& batch, const std::vector<int>& masked, int patch_px);

// Mean squared error restricted to the masked patch regions.
Tensor masked_patch_mse(const Tensor& recon, const Tensor& target, const std::vector<int>& masked,
                        int patch_px);

// One optimization step; returns the loss value.
double mae_pretrain_step(Generator& gen, Adam& opt, const Tensor& batch, double mask_ratio,
                         core::SeqRng& rng);

}  // namespace bitstain::net

#endif
