#include "bitstain/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bitstain/core/rng.hpp"

namespace bitstain::phantom {

using image::Image16;
using image::Image8;

void PhantomSpec::validate() const {
    for (int d : volume_dims) {
        if (d <= 0) throw ValueError("PhantomSpec: volume_dims must be positive");
    }
    for (double s : voxel_spacing_um) {
        if (!(s > 0)) throw ValueError("PhantomSpec: voxel spacing must be positive");
    }
    if (nuclei_count < 0) throw ValueError("PhantomSpec: nuclei_count must be >= 0");
    if (!(radius_range_um[0] > 0) || radius_range_um[0] > radius_range_um[1]) {
        throw ValueError("PhantomSpec: radius range must satisfy 0 < min <= max");
    }
    if (focal_plane_z < 0 || focal_plane_z > volume_dims[2]) {
        throw ValueError("PhantomSpec: focal_plane_z outside [0, Z]");
    }
    if (contrast_amplitude < 0 || contrast_amplitude > 1) {
        throw ValueError("PhantomSpec: contrast_amplitude outside [0, 1]");
    }
    if (noise_sigma < 0) throw ValueError("PhantomSpec: noise_sigma must be >= 0");
}

namespace {

struct Nucleus {
    double cx, cy, cz;        // center, voxel coordinates
    double ax, ay, az;        // semi-axes, voxel units
    double max_semi_um;       // bounding-sphere radius, um
};

std::vector<Nucleus> place_nuclei(const PhantomSpec& spec) {
    core::SeqRng rng(spec.seed, /*stream=*/0);
    std::vector<Nucleus> placed;
    placed.reserve(static_cast<std::size_t>(spec.nuclei_count));
    const long max_attempts = 1000L * std::max(1, spec.nuclei_count);
    long attempts = 0;
    const auto& dims = spec.volume_dims;
    const auto& sp = spec.voxel_spacing_um;
    while (static_cast<int>(placed.size()) < spec.nuclei_count) {
        if (++attempts > max_attempts) {
            throw GenerationError(
                "generate_phantom: placed only " + std::to_string(placed.size()) + " of " +
                    std::to_string(spec.nuclei_count) + " nuclei without overlap",
                static_cast<int>(placed.size()));
        }
        const double span = spec.radius_range_um[1] - spec.radius_range_um[0];
        Nucleus n{};
        const double rx = spec.radius_range_um[0] + span * rng.uniform();
        const double ry = spec.radius_range_um[0] + span * rng.uniform();
        const double rz = spec.radius_range_um[0] + span * rng.uniform();
        n.ax = rx / sp[0];
        n.ay = ry / sp[1];
        n.az = rz / sp[2];
        n.max_semi_um = std::max({rx, ry, rz});
        // keep the whole ellipsoid inside the volume
        if (2 * n.ax >= dims[0] || 2 * n.ay >= dims[1] || 2 * n.az >= dims[2]) continue;
        n.cx = n.ax + (dims[0] - 2 * n.ax) * rng.uniform();
        n.cy = n.ay + (dims[1] - 2 * n.ay) * rng.uniform();
        n.cz = n.az + (dims[2] - 2 * n.az) * rng.uniform();
        // conservative non-overlap test on bounding spheres (um space)
        bool ok = true;
        for (const auto& o : placed) {
            const double dx = (n.cx - o.cx) * sp[0];
            const double dy = (n.cy - o.cy) * sp[1];
            const double dz = (n.cz - o.cz) * sp[2];
            const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (dist <= n.max_semi_um + o.max_semi_um) {
                ok = false;
                break;
            }
        }
        if (ok) placed.push_back(n);
    }
    return placed;
}

std::uint8_t clamp8(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
}

}  // namespace

PhantomVolumes generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const auto nuclei = place_nuclei(spec);
    const int nx = spec.volume_dims[0], ny = spec.volume_dims[1], nz = spec.volume_dims[2];

    PhantomVolumes out;
    out.bit.meta = {spec.volume_dims, spec.voxel_spacing_um, image::Modality::BIT};
    out.he.meta = {spec.volume_dims, spec.voxel_spacing_um, image::Modality::HE};
    out.labels.meta = {spec.volume_dims, spec.voxel_spacing_um, image::Modality::Label};

    // instance id per voxel, 0 = background
    std::vector<std::uint16_t> ids(static_cast<std::size_t>(nx) * ny * nz, 0);
    for (std::size_t i = 0; i < nuclei.size(); ++i) {
        const auto& n = nuclei[i];
        const int x0 = std::max(0, static_cast<int>(std::floor(n.cx - n.ax)));
        const int x1 = std::min(nx - 1, static_cast<int>(std::ceil(n.cx + n.ax)));
        const int y0 = std::max(0, static_cast<int>(std::floor(n.cy - n.ay)));
        const int y1 = std::min(ny - 1, static_cast<int>(std::ceil(n.cy + n.ay)));
        const int z0 = std::max(0, static_cast<int>(std::floor(n.cz - n.az)));
        const int z1 = std::min(nz - 1, static_cast<int>(std::ceil(n.cz + n.az)));
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double fx = (x - n.cx) / n.ax;
                    const double fy = (y - n.cy) / n.ay;
                    const double fz = (z - n.cz) / n.az;
                    if (fx * fx + fy * fy + fz * fz <= 1.0) {
                        ids[(static_cast<std::size_t>(z) * ny + y) * nx + x] =
                            static_cast<std::uint16_t>(i + 1);
                    }
                }
    }

    const double delta = spec.contrast_amplitude * 255.0;
    const core::Philox bit_noise(spec.seed, /*stream=*/1);
    const core::Philox he_noise(spec.seed, /*stream=*/2);

    for (int z = 0; z < nz; ++z) {
        Image8 bit_slice(nx, ny, 1);
        Image8 he_slice(nx, ny, 3);
        Image16 label_slice(nx, ny, 1);
        const bool below_focus = z < spec.focal_plane_z;
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                const std::size_t v = (static_cast<std::size_t>(z) * ny + y) * nx + x;
                const std::uint16_t id = ids[v];
                label_slice.at(0, y, x) = id;
                double bit_val = kBitBackground;
                if (id != 0) bit_val += below_focus ? -delta : delta;
                if (spec.noise_sigma > 0) bit_val += spec.noise_sigma * bit_noise.normal(v);
                bit_slice.at(0, y, x) = clamp8(bit_val);
                const auto& color = id != 0 ? kHeNucleus : kHeBackground;
                for (int c = 0; c < 3; ++c) {
                    double he_val = color[static_cast<std::size_t>(c)];
                    if (spec.noise_sigma > 0) he_val += spec.noise_sigma * he_noise.normal(3 * v + static_cast<std::size_t>(c));
                    he_slice.at(c, y, x) = clamp8(he_val);
                }
            }
        }
        out.bit.slices.push_back(std::move(bit_slice));
        out.he.slices.push_back(std::move(he_slice));
        out.labels.slices.push_back(std::move(label_slice));
    }
    return out;
}

}  // namespace bitstain::phantom
