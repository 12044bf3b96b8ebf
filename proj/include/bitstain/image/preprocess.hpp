#ifndef BITSTAIN_IMAGE_PREPROCESS_HPP
#define BITSTAIN_IMAGE_PREPROCESS_HPP

#include <utility>
#include <vector>

#include "bitstain/image/image.hpp"

namespace bitstain::image {

// Subtracts a Gaussian blur (scale sigma_px, kernel truncated at 4 sigma,
// symmetric-reflected boundary) from the slice. Output can be negative.
RawSlice background_subtract(const RawSlice& slice, double sigma_px);

// Percentile-clips to [P_lo, P_hi] and maps affinely to [0, 255], rounding
// half to even. A degenerate range (P_lo == P_hi) maps everything to 0.
Image8 to_eight_bit(const RawSlice& slice, double lo_pct, double hi_pct);

// Same mapping against externally supplied clip points (per-volume scaling).
Image8 to_eight_bit_fixed(const RawSlice& slice, double lo_value, double hi_value);

// Linear-interpolation percentile of arbitrary data, the convention used by
// to_eight_bit.
double percentile(std::vector<double> values, double pct);

// (v, 255 - v, v) per pixel.
BitTile make_three_channel(const Image8& slice8);

// Deterministic row-major tile enumeration; the final row/column clamps to
// the image edge so every pixel is covered.
std::vector<std::pair<int, int>> tile_origins(int width, int height, int tile, int stride);

// Cuts one planar image tile at the given origin.
template <typename T>
PlanarImage<T> cut_tile(const PlanarImage<T>& img, int x0, int y0, int tile);

}  // namespace bitstain::image

#endif
