#ifndef BITSTAIN_EVAL_METRICS_HPP
#define BITSTAIN_EVAL_METRICS_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "bitstain/image/image.hpp"

namespace bitstain::eval {

// 3D integer-labeled volume; 0 is background, instance ids need not be
// contiguous. Flat index (z * ny + y) * nx + x.
struct LabelVolume {
    int nx = 0, ny = 0, nz = 0;
    std::array<double, 3> spacing_um{1, 1, 1};
    std::vector<std::uint32_t> labels;

    LabelVolume() = default;
    LabelVolume(int nx, int ny, int nz, std::array<double, 3> spacing = {1, 1, 1})
        : nx(nx), ny(ny), nz(nz), spacing_um(spacing),
          labels(static_cast<std::size_t>(nx) * ny * nz, 0) {}

    std::uint32_t& at(int x, int y, int z) {
        return labels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    std::uint32_t at(int x, int y, int z) const {
        return labels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    std::size_t size() const { return labels.size(); }
    bool same_dims(const LabelVolume& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz;
    }
    double voxel_volume_um3() const { return spacing_um[0] * spacing_um[1] * spacing_um[2]; }
};

LabelVolume label_volume_from(const image::Volume16& v);
image::Volume16 to_volume16(const LabelVolume& v);

// Foreground voxel-level overlap 2|A^B| / (|A|+|B|); 1 when both foregrounds
// are empty, 0 when exactly one is.
double dice3d(const LabelVolume& a, const LabelVolume& b);

enum class Hd95Variant { Pooled, DirectedMax };

// Boundary voxels: foreground voxels with at least one six-connected
// background or out-of-bounds neighbor.
std::vector<std::array<int, 3>> boundary_voxels(const LabelVolume& v);

// 95th percentile (linear interpolation) of the anisotropic Euclidean
// surface-to-surface distances, in micrometers. Pooled merges both directed
// distance multisets; DirectedMax takes the max of the two directed
// percentiles. Empty foreground on either side -> UndefinedMetricError.
double hd95(const LabelVolume& a, const LabelVolume& b, Hd95Variant variant = Hd95Variant::Pooled);

// Mean over distinct nonzero labels of voxel count times voxel volume.
double mean_instance_volume(const LabelVolume& v);

std::size_t count_instances(const LabelVolume& v);

// Greedy cross-slice instance linking: each instance in slice z+1 adopts the
// 3D id of the slice-z instance with maximal IoU when IoU >= threshold (ties
// resolved toward the lower 3D id); otherwise it opens a new id.
using LabelSlice = image::PlanarImage<std::uint32_t>;
LabelVolume stack_masks_2d_to_3d(const std::vector<LabelSlice>& slices, double iou_threshold,
                                 std::array<double, 3> spacing_um = {1, 1, 1});

// Fixed threshold-based nuclei detector for RGB virtual stains: foreground
// where blue minus green >= threshold (the hematoxylin-dominant response),
// instances from six-connected components.
LabelVolume segment_nuclei_threshold(const image::Volume8& rgb, int blue_minus_green_threshold);

// Six-connected component labeling of the binarized foreground.
LabelVolume connected_components(const LabelVolume& binary);

}  // namespace bitstain::eval

#endif
