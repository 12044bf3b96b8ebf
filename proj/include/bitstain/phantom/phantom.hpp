#ifndef BITSTAIN_PHANTOM_PHANTOM_HPP
#define BITSTAIN_PHANTOM_PHANTOM_HPP

#include <array>
#include <cstdint>

#include "bitstain/image/image.hpp"

namespace bitstain::phantom {

// Synthetic tissue phantom: non-overlapping ellipsoidal nuclei whose
// source-modality contrast flips polarity at a focal plane, a fixed
// purple-on-pink target rendering of the same geometry, and voxel-exact
// instance labels. Everything is a pure function of the spec (seed included).
struct PhantomSpec {
    std::array<int, 3> volume_dims{64, 64, 16};         // X, Y, Z voxels
    std::array<double, 3> voxel_spacing_um{1.0, 1.0, 1.0};
    int nuclei_count = 12;
    std::array<double, 2> radius_range_um{3.0, 6.0};    // min, max semi-axis
    int focal_plane_z = 8;       // polarity flips at this z index
    double contrast_amplitude = 0.35;  // fraction of the 8-bit dynamic range
    double noise_sigma = 0.0;    // additive Gaussian, intensity units
    std::uint64_t seed = 1;

    void validate() const;
};

struct PhantomVolumes {
    image::Volume8 bit;      // single-channel source modality
    image::Volume8 he;       // RGB target modality
    image::Volume16 labels;  // instance ids 1..n
};

// Background/palette constants used by the renderer (and by tests).
inline constexpr int kBitBackground = 128;
inline constexpr std::array<std::uint8_t, 3> kHeBackground{235, 180, 200};
inline constexpr std::array<std::uint8_t, 3> kHeNucleus{110, 50, 170};

PhantomVolumes generate_phantom(const PhantomSpec& spec);

}  // namespace bitstain::phantom

#endif
