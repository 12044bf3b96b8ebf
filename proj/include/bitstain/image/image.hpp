#ifndef BITSTAIN_IMAGE_IMAGE_HPP
#define BITSTAIN_IMAGE_IMAGE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bitstain/core/errors.hpp"

namespace bitstain::image {

// Planar image: data[c * H * W + y * W + x].
template <typename T>
struct PlanarImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    PlanarImage() = default;
    PlanarImage(int w, int h, int c, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    T& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    T at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    bool empty() const { return data.empty(); }
};

using Image8 = PlanarImage<std::uint8_t>;
using Image16 = PlanarImage<std::uint16_t>;

// A raw acquisition slice before any preprocessing. Intensities are in
// arbitrary units and may be negative after background subtraction.
struct RawSlice {
    int width = 0;
    int height = 0;
    double pixel_pitch_um = 1.0;
    int z_index = 0;
    double z_spacing_um = 1.0;
    std::vector<double> pixels;  // row-major [y][x]

    RawSlice() = default;
    RawSlice(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    void validate() const;
};

enum class Modality { BIT, HE, Label };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct VolumeMeta {
    std::array<int, 3> dims{0, 0, 0};          // X, Y, Z (voxels)
    std::array<double, 3> spacing_um{1, 1, 1};  // dx, dy, dz
    Modality modality = Modality::BIT;

    void validate() const;
};

// Volumes are stored slice-per-file on disk and slice-wise in memory.
template <typename T>
struct Volume {
    VolumeMeta meta;
    std::vector<PlanarImage<T>> slices;  // slices[z]
};

using Volume8 = Volume<std::uint8_t>;
using Volume16 = Volume<std::uint16_t>;

struct TileOrigin {
    std::string volume_id;
    int z_index = 0;
    int x_offset = 0;
    int y_offset = 0;
};

// Three-channel source tile: channel 0 = intensity, 1 = inverted, 2 = copy.
struct BitTile {
    Image8 channels;  // channels == 3
    TileOrigin origin;

    void validate() const;
};

// RGB target-domain tile.
struct HETile {
    Image8 rgb;  // channels == 3
    TileOrigin origin;
};

}  // namespace bitstain::image

#endif
