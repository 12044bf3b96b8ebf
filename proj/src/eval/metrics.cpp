#include "bitstain/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>

#include "bitstain/image/preprocess.hpp"

namespace bitstain::eval {

LabelVolume label_volume_from(const image::Volume16& v) {
    v.meta.validate();
    LabelVolume out(v.meta.dims[0], v.meta.dims[1], v.meta.dims[2], v.meta.spacing_um);
    for (int z = 0; z < out.nz; ++z) {
        const auto& s = v.slices[static_cast<std::size_t>(z)];
        if (s.width != out.nx || s.height != out.ny || s.channels != 1) {
            throw ShapeError("label_volume_from: slice dims inconsistent with meta");
        }
        for (int y = 0; y < out.ny; ++y)
            for (int x = 0; x < out.nx; ++x) out.at(x, y, z) = s.at(0, y, x);
    }
    return out;
}

image::Volume16 to_volume16(const LabelVolume& v) {
    image::Volume16 out;
    out.meta = {{v.nx, v.ny, v.nz}, v.spacing_um, image::Modality::Label};
    for (int z = 0; z < v.nz; ++z) {
        image::Image16 s(v.nx, v.ny, 1);
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                const std::uint32_t id = v.at(x, y, z);
                if (id > 0xFFFF) throw ValueError("to_volume16: label id exceeds 16 bits");
                s.at(0, y, x) = static_cast<std::uint16_t>(id);
            }
        out.slices.push_back(std::move(s));
    }
    return out;
}

double dice3d(const LabelVolume& a, const LabelVolume& b) {
    if (!a.same_dims(b)) throw ShapeError("dice3d: volume dimensions differ");
    std::size_t ca = 0, cb = 0, inter = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool fa = a.labels[i] != 0;
        const bool fb = b.labels[i] != 0;
        ca += fa;
        cb += fb;
        inter += fa && fb;
    }
    if (ca == 0 && cb == 0) return 1.0;
    if (ca == 0 || cb == 0) return 0.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

std::vector<std::array<int, 3>> boundary_voxels(const LabelVolume& v) {
    std::vector<std::array<int, 3>> out;
    auto fg = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= v.nx || y >= v.ny || z >= v.nz) return false;
        return v.at(x, y, z) != 0;
    };
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                if (!fg(x, y, z)) continue;
                if (!fg(x - 1, y, z) || !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z) ||
                    !fg(x, y, z - 1) || !fg(x, y, z + 1)) {
                    out.push_back({x, y, z});
                }
            }
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared-distance lower envelope with anisotropic weight w2 = spacing^2:
//   out(x) = min_q f(q) + w2 (x - q)^2
void dt1d(const double* f, double* out, int n, double w2, int* v, double* zbuf) {
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            if (k < 0) {
                s = -kInf;
                break;
            }
            const int p = v[k];
            s = (f[q] + w2 * q * q - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
            if (s <= zbuf[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        zbuf[k] = s;
        zbuf[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill_n(out, n, kInf);
        return;
    }
    int j = 0;
    for (int x = 0; x < n; ++x) {
        while (zbuf[j + 1] < x) ++j;
        const int q = v[j];
        out[x] = f[q] + w2 * (x - q) * (x - q);
    }
}

// Exact anisotropic squared Euclidean distance (um^2) to the given sites.
std::vector<double> squared_edt(const LabelVolume& shape_ref,
                                const std::vector<std::array<int, 3>>& sites) {
    const int nx = shape_ref.nx, ny = shape_ref.ny, nz = shape_ref.nz;
    std::vector<double> g(static_cast<std::size_t>(nx) * ny * nz, kInf);
    for (const auto& s : sites) {
        g[(static_cast<std::size_t>(s[2]) * ny + s[1]) * nx + s[0]] = 0.0;
    }
    const double wx = shape_ref.spacing_um[0] * shape_ref.spacing_um[0];
    const double wy = shape_ref.spacing_um[1] * shape_ref.spacing_um[1];
    const double wz = shape_ref.spacing_um[2] * shape_ref.spacing_um[2];
    const int maxn = std::max({nx, ny, nz});
    std::vector<double> f(static_cast<std::size_t>(maxn)), o(static_cast<std::size_t>(maxn));
    std::vector<int> v(static_cast<std::size_t>(maxn));
    std::vector<double> zbuf(static_cast<std::size_t>(maxn) + 1);

    // x pass
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y) {
            double* row = g.data() + (static_cast<std::size_t>(z) * ny + y) * nx;
            dt1d(row, o.data(), nx, wx, v.data(), zbuf.data());
            std::copy_n(o.data(), nx, row);
        }
    // y pass
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x) {
            for (int y = 0; y < ny; ++y) f[static_cast<std::size_t>(y)] = g[(static_cast<std::size_t>(z) * ny + y) * nx + x];
            dt1d(f.data(), o.data(), ny, wy, v.data(), zbuf.data());
            for (int y = 0; y < ny; ++y) g[(static_cast<std::size_t>(z) * ny + y) * nx + x] = o[static_cast<std::size_t>(y)];
        }
    // z pass
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            for (int z = 0; z < nz; ++z) f[static_cast<std::size_t>(z)] = g[(static_cast<std::size_t>(z) * ny + y) * nx + x];
            dt1d(f.data(), o.data(), nz, wz, v.data(), zbuf.data());
            for (int z = 0; z < nz; ++z) g[(static_cast<std::size_t>(z) * ny + y) * nx + x] = o[static_cast<std::size_t>(z)];
        }
    return g;
}

std::vector<double> directed_surface_distances(const std::vector<std::array<int, 3>>& from,
                                               const std::vector<double>& to_sq_edt,
                                               const LabelVolume& ref) {
    std::vector<double> out;
    out.reserve(from.size());
    for (const auto& p : from) {
        const double d2 = to_sq_edt[(static_cast<std::size_t>(p[2]) * ref.ny + p[1]) * ref.nx + p[0]];
        out.push_back(std::sqrt(d2));
    }
    return out;
}

}  // namespace

double hd95(const LabelVolume& a, const LabelVolume& b, Hd95Variant variant) {
    if (!a.same_dims(b)) throw ShapeError("hd95: volume dimensions differ");
    if (a.spacing_um != b.spacing_um) throw ValueError("hd95: spacing mismatch");
    const auto sa = boundary_voxels(a);
    const auto sb = boundary_voxels(b);
    if (sa.empty() || sb.empty()) {
        throw UndefinedMetricError("hd95: undefined for empty foreground");
    }
    const auto edt_b = squared_edt(a, sb);
    const auto edt_a = squared_edt(a, sa);
    auto d_ab = directed_surface_distances(sa, edt_b, a);
    auto d_ba = directed_surface_distances(sb, edt_a, a);
    if (variant == Hd95Variant::DirectedMax) {
        return std::max(image::percentile(std::move(d_ab), 95.0),
                        image::percentile(std::move(d_ba), 95.0));
    }
    d_ab.insert(d_ab.end(), d_ba.begin(), d_ba.end());
    return image::percentile(std::move(d_ab), 95.0);
}

double mean_instance_volume(const LabelVolume& v) {
    std::map<std::uint32_t, std::size_t> counts;
    for (std::uint32_t id : v.labels) {
        if (id != 0) ++counts[id];
    }
    if (counts.empty()) throw UndefinedMetricError("mean_instance_volume: no instances");
    double acc = 0;
    for (const auto& [id, c] : counts) acc += static_cast<double>(c);
    return acc / static_cast<double>(counts.size()) * v.voxel_volume_um3();
}

std::size_t count_instances(const LabelVolume& v) {
    std::set<std::uint32_t> ids(v.labels.begin(), v.labels.end());
    ids.erase(0);
    return ids.size();
}

LabelVolume stack_masks_2d_to_3d(const std::vector<LabelSlice>& slices, double iou_threshold,
                                 std::array<double, 3> spacing_um) {
    if (slices.empty()) throw ShapeError("stack_masks: no slices");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw ValueError("stack_masks: threshold must lie in (0, 1]");
    }
    const int w = slices.front().width, h = slices.front().height;
    for (const auto& s : slices) {
        if (s.width != w || s.height != h || s.channels != 1) {
            throw ShapeError("stack_masks: slice dimensions differ");
        }
    }
    LabelVolume out(w, h, static_cast<int>(slices.size()), spacing_um);
    std::uint32_t next_id = 1;

    // per-slice instance pixel sets
    auto instances_of = [&](const LabelSlice& s) {
        std::map<std::uint32_t, std::vector<int>> inst;  // 2d label -> pixel indices
        for (int i = 0; i < w * h; ++i) {
            const std::uint32_t id = s.data[static_cast<std::size_t>(i)];
            if (id != 0) inst[id].push_back(i);
        }
        return inst;
    };

    std::map<std::uint32_t, std::uint32_t> prev_assign;   // 2d label in slice z-1 -> 3d id
    std::map<std::uint32_t, std::vector<int>> prev_inst;  // 2d label -> pixel indices
    for (std::size_t z = 0; z < slices.size(); ++z) {
        auto inst = instances_of(slices[z]);
        std::map<std::uint32_t, std::uint32_t> assign;
        for (const auto& [id2d, pixels] : inst) {
            std::uint32_t chosen = 0;
            if (z > 0) {
                const LabelSlice& prev = slices[z - 1];
                std::map<std::uint32_t, std::size_t> overlap;
                for (int p : pixels) {
                    const std::uint32_t pid = prev.data[static_cast<std::size_t>(p)];
                    if (pid != 0) ++overlap[pid];
                }
                double best_iou = 0;
                std::uint32_t best_3d = 0;
                for (const auto& [pid, inter] : overlap) {
                    const std::size_t prev_size = prev_inst.at(pid).size();
                    const double uni = static_cast<double>(pixels.size() + prev_size - inter);
                    const double iou = static_cast<double>(inter) / uni;
                    const std::uint32_t cand = prev_assign.at(pid);
                    if (iou > best_iou || (iou == best_iou && best_3d != 0 && cand < best_3d)) {
                        best_iou = iou;
                        best_3d = cand;
                    }
                }
                if (best_3d != 0 && best_iou >= iou_threshold) chosen = best_3d;
            }
            if (chosen == 0) chosen = next_id++;
            assign[id2d] = chosen;
            for (int p : pixels) {
                out.labels[static_cast<std::size_t>(z) * w * h + static_cast<std::size_t>(p)] = chosen;
            }
        }
        prev_assign = std::move(assign);
        prev_inst = std::move(inst);
    }
    return out;
}

LabelVolume connected_components(const LabelVolume& binary) {
    LabelVolume out(binary.nx, binary.ny, binary.nz, binary.spacing_um);
    std::uint32_t next_id = 0;
    std::deque<std::array<int, 3>> queue;
    for (int z = 0; z < binary.nz; ++z)
        for (int y = 0; y < binary.ny; ++y)
            for (int x = 0; x < binary.nx; ++x) {
                if (binary.at(x, y, z) == 0 || out.at(x, y, z) != 0) continue;
                ++next_id;
                out.at(x, y, z) = next_id;
                queue.push_back({x, y, z});
                while (!queue.empty()) {
                    const auto [cx, cy, cz] = queue.front();
                    queue.pop_front();
                    constexpr int nbr[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                               {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
                    for (const auto& d : nbr) {
                        const int qx = cx + d[0], qy = cy + d[1], qz = cz + d[2];
                        if (qx < 0 || qy < 0 || qz < 0 || qx >= binary.nx || qy >= binary.ny ||
                            qz >= binary.nz) {
                            continue;
                        }
                        if (binary.at(qx, qy, qz) != 0 && out.at(qx, qy, qz) == 0) {
                            out.at(qx, qy, qz) = next_id;
                            queue.push_back({qx, qy, qz});
                        }
                    }
                }
            }
    return out;
}

LabelVolume segment_nuclei_threshold(const image::Volume8& rgb, int blue_minus_green_threshold) {
    rgb.meta.validate();
    LabelVolume binary(rgb.meta.dims[0], rgb.meta.dims[1], rgb.meta.dims[2], rgb.meta.spacing_um);
    for (int z = 0; z < binary.nz; ++z) {
        const auto& s = rgb.slices[static_cast<std::size_t>(z)];
        if (s.channels != 3) throw ShapeError("segment_nuclei_threshold: expected RGB slices");
        for (int y = 0; y < binary.ny; ++y)
            for (int x = 0; x < binary.nx; ++x) {
                const int diff = static_cast<int>(s.at(2, y, x)) - static_cast<int>(s.at(1, y, x));
                binary.at(x, y, z) = diff >= blue_minus_green_threshold ? 1 : 0;
            }
    }
    return connected_components(binary);
}

}  // namespace bitstain::eval
