#ifndef BITSTAIN_IMAGE_VOLUME_IO_HPP
#define BITSTAIN_IMAGE_VOLUME_IO_HPP

#include <filesystem>

#include "bitstain/image/image.hpp"

namespace bitstain::image {

// A volume on disk is a directory of zero-padded slice PNGs plus a UTF-8
// key-value sidecar (meta.txt) holding dims, spacing_um and modality.
// 8-bit volumes hold intensity data (gray or RGB); 16-bit volumes hold
// instance labels.

void save_volume(const Volume8& volume, const std::filesystem::path& dir);
void save_volume(const Volume16& volume, const std::filesystem::path& dir);

Volume8 load_volume8(const std::filesystem::path& dir);
Volume16 load_volume16(const std::filesystem::path& dir);

VolumeMeta load_volume_meta(const std::filesystem::path& dir);

std::string slice_filename(int z);

}  // namespace bitstain::image

#endif
