#ifndef BITSTAIN_IMAGE_PNG_IO_HPP
#define BITSTAIN_IMAGE_PNG_IO_HPP

#include <filesystem>
#include <variant>

#include "bitstain/image/image.hpp"

namespace bitstain::image {

// 8-bit grayscale (1 channel) or RGB (3 channels).
void write_png8(const std::filesystem::path& path, const Image8& img);
// 16-bit grayscale, used for instance labels.
void write_png16(const std::filesystem::path& path, const Image16& img);

using AnyImage = std::variant<Image8, Image16>;

// Reads gray8 / rgb8 / gray16 PNG; palette, alpha and other layouts are
// rejected with IoError naming the file.
AnyImage read_png(const std::filesystem::path& path);

Image8 read_png8(const std::filesystem::path& path);
Image16 read_png16(const std::filesystem::path& path);

}  // namespace bitstain::image

#endif
