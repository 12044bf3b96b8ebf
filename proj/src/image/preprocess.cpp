#include "bitstain/image/preprocess.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>

namespace bitstain::image {

void RawSlice::validate() const {
    if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * height) {
        throw ShapeError("RawSlice: empty or inconsistent dimensions");
    }
    if (pixel_pitch_um <= 0 || z_spacing_um <= 0) throw ValueError("RawSlice: spacing must be positive");
    for (double v : pixels) {
        if (!std::isfinite(v)) throw NumericError("RawSlice: non-finite intensity");
    }
}

void BitTile::validate() const {
    if (channels.channels != 3) throw ShapeError("BitTile: expected 3 channels");
    const std::size_t plane = channels.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        const int v = channels.data[i];
        if (channels.data[plane + i] != 255 - v || channels.data[2 * plane + i] != v) {
            throw ValueError("BitTile: channel identities violated");
        }
    }
}

namespace {

// index reflection with edge repeat: -1 -> 0, -2 -> 1, n -> n-1, ...
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

RawSlice background_subtract(const RawSlice& slice, double sigma_px) {
    if (sigma_px <= 0) throw ValueError("background_subtract: sigma must be positive");
    slice.validate();
    const int radius = static_cast<int>(std::ceil(4.0 * sigma_px));
    const auto kernel = gaussian_kernel(sigma_px, radius);
    const int w = slice.width, h = slice.height;

    // separable blur, horizontal then vertical
    std::vector<double> tmp(slice.pixels.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[static_cast<std::size_t>(i + radius)] * slice.at(y, reflect_index(x + i, w));
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    RawSlice out = slice;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(reflect_index(y + i, h)) * w + x];
            }
            out.at(y, x) = slice.at(y, x) - acc;
        }
    }
    return out;
}

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) throw ValueError("percentile: empty input");
    if (pct < 0 || pct > 100) throw ValueError("percentile: out of [0,100]");
    std::sort(values.begin(), values.end());
    const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

Image8 to_eight_bit(const RawSlice& slice, double lo_pct, double hi_pct) {
    if (!(lo_pct >= 0 && lo_pct < hi_pct && hi_pct <= 100)) {
        throw ValueError("to_eight_bit: need 0 <= lo < hi <= 100");
    }
    slice.validate();
    const double lo = percentile(slice.pixels, lo_pct);
    const double hi = percentile(slice.pixels, hi_pct);
    return to_eight_bit_fixed(slice, lo, hi);
}

Image8 to_eight_bit_fixed(const RawSlice& slice, double lo_value, double hi_value) {
    slice.validate();
    Image8 out(slice.width, slice.height, 1);
    if (hi_value <= lo_value) return out;  // degenerate range -> all zeros
    const double scale = 255.0 / (hi_value - lo_value);
    for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
        const double clipped = std::clamp(slice.pixels[i], lo_value, hi_value);
        // nearbyint under the default FE_TONEAREST mode rounds half to even
        out.data[i] = static_cast<std::uint8_t>(std::nearbyint((clipped - lo_value) * scale));
    }
    return out;
}

BitTile make_three_channel(const Image8& slice8) {
    if (slice8.channels != 1) throw ShapeError("make_three_channel: expected single-channel input");
    BitTile tile;
    tile.channels = Image8(slice8.width, slice8.height, 3);
    const std::size_t plane = slice8.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        const std::uint8_t v = slice8.data[i];
        tile.channels.data[i] = v;
        tile.channels.data[plane + i] = static_cast<std::uint8_t>(255 - v);
        tile.channels.data[2 * plane + i] = v;
    }
    return tile;
}

std::vector<std::pair<int, int>> tile_origins(int width, int height, int tile, int stride) {
    if (stride <= 0) throw ValueError("tile_origins: stride must be positive");
    if (tile <= 0 || tile > width || tile > height) {
        throw ShapeError("tile_origins: tile size exceeds image dimensions");
    }
    auto axis_offsets = [&](int extent) {
        std::vector<int> offs;
        for (int o = 0; o + tile <= extent; o += stride) offs.push_back(o);
        if (offs.empty() || offs.back() + tile < extent) offs.push_back(extent - tile);
        return offs;
    };
    const auto xs = axis_offsets(width);
    const auto ys = axis_offsets(height);
    std::vector<std::pair<int, int>> out;
    out.reserve(xs.size() * ys.size());
    for (int y : ys)
        for (int x : xs) out.emplace_back(x, y);
    return out;
}

template <typename T>
PlanarImage<T> cut_tile(const PlanarImage<T>& img, int x0, int y0, int tile) {
    if (x0 < 0 || y0 < 0 || x0 + tile > img.width || y0 + tile > img.height) {
        throw ShapeError("cut_tile: tile outside image bounds");
    }
    PlanarImage<T> out(tile, tile, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < tile; ++y)
            for (int x = 0; x < tile; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

template PlanarImage<std::uint8_t> cut_tile(const PlanarImage<std::uint8_t>&, int, int, int);
template PlanarImage<std::uint16_t> cut_tile(const PlanarImage<std::uint16_t>&, int, int, int);

}  // namespace bitstain::image
