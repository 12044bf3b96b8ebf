#include "bitstain/image/volume_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "bitstain/image/png_io.hpp"

namespace bitstain::image {

namespace fs = std::filesystem;

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::BIT: return "BIT";
        case Modality::HE: return "HE";
        case Modality::Label: return "label";
    }
    throw ValueError("modality_name: unknown modality");
}

Modality modality_from_name(const std::string& name) {
    if (name == "BIT") return Modality::BIT;
    if (name == "HE") return Modality::HE;
    if (name == "label") return Modality::Label;
    throw ValueError("unknown modality tag: " + name);
}

void VolumeMeta::validate() const {
    for (int d : dims) {
        if (d <= 0) throw ValueError("VolumeMeta: dims must be strictly positive");
    }
    for (double s : spacing_um) {
        if (!(s > 0)) throw ValueError("VolumeMeta: spacing must be strictly positive");
    }
}

std::string slice_filename(int z) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "slice_%04d.png", z);
    return buf;
}

namespace {

void write_meta(const VolumeMeta& meta, const fs::path& dir) {
    std::ofstream out(dir / "meta.txt");
    if (!out) throw IoError("cannot write metadata: " + (dir / "meta.txt").string());
    out << "dims = " << meta.dims[0] << " " << meta.dims[1] << " " << meta.dims[2] << "\n";
    out << "spacing_um = " << meta.spacing_um[0] << " " << meta.spacing_um[1] << " "
        << meta.spacing_um[2] << "\n";
    out << "modality = " << modality_name(meta.modality) << "\n";
}

template <typename VolumeT, typename WriteSlice>
void save_volume_impl(const VolumeT& volume, const fs::path& dir, WriteSlice write_slice) {
    volume.meta.validate();
    if (static_cast<int>(volume.slices.size()) != volume.meta.dims[2]) {
        throw ShapeError("save_volume: slice count does not match dims");
    }
    for (const auto& s : volume.slices) {
        if (s.width != volume.meta.dims[0] || s.height != volume.meta.dims[1]) {
            throw ShapeError("save_volume: slice dimensions do not match volume dims");
        }
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create volume directory: " + dir.string());
    write_meta(volume.meta, dir);
    for (int z = 0; z < volume.meta.dims[2]; ++z) {
        write_slice(volume.slices[static_cast<std::size_t>(z)], dir / slice_filename(z));
    }
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("missing metadata sidecar: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed metadata line in " + path.string() + ": " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::vector<fs::path> collect_slices(const fs::path& dir, int expected) {
    std::vector<fs::path> out;
    for (int z = 0; z < expected; ++z) {
        const fs::path p = dir / slice_filename(z);
        if (!fs::exists(p)) throw IoError("missing slice file: " + p.string());
        out.push_back(p);
    }
    // reject stray extra slices so dims stay authoritative
    const fs::path extra = dir / slice_filename(expected);
    if (fs::exists(extra)) throw IoError("unexpected extra slice beyond dims: " + extra.string());
    return out;
}

}  // namespace

VolumeMeta load_volume_meta(const fs::path& dir) {
    const auto kv = read_key_values(dir / "meta.txt");
    VolumeMeta meta;
    for (const char* key : {"dims", "spacing_um", "modality"}) {
        if (!kv.count(key)) throw IoError("metadata missing key '" + std::string(key) + "' in " + (dir / "meta.txt").string());
    }
    {
        std::istringstream is(kv.at("dims"));
        if (!(is >> meta.dims[0] >> meta.dims[1] >> meta.dims[2])) {
            throw IoError("malformed dims in " + (dir / "meta.txt").string());
        }
    }
    {
        std::istringstream is(kv.at("spacing_um"));
        if (!(is >> meta.spacing_um[0] >> meta.spacing_um[1] >> meta.spacing_um[2])) {
            throw IoError("malformed spacing_um in " + (dir / "meta.txt").string());
        }
    }
    meta.modality = modality_from_name(kv.at("modality"));
    meta.validate();
    return meta;
}

void save_volume(const Volume8& volume, const fs::path& dir) {
    save_volume_impl(volume, dir, [](const Image8& s, const fs::path& p) { write_png8(p, s); });
}

void save_volume(const Volume16& volume, const fs::path& dir) {
    save_volume_impl(volume, dir, [](const Image16& s, const fs::path& p) { write_png16(p, s); });
}

Volume8 load_volume8(const fs::path& dir) {
    Volume8 vol;
    vol.meta = load_volume_meta(dir);
    const auto paths = collect_slices(dir, vol.meta.dims[2]);
    for (const auto& p : paths) {
        Image8 img = read_png8(p);
        if (img.width != vol.meta.dims[0] || img.height != vol.meta.dims[1]) {
            throw IoError("slice dimensions inconsistent with metadata: " + p.string());
        }
        vol.slices.push_back(std::move(img));
    }
    return vol;
}

Volume16 load_volume16(const fs::path& dir) {
    Volume16 vol;
    vol.meta = load_volume_meta(dir);
    const auto paths = collect_slices(dir, vol.meta.dims[2]);
    for (const auto& p : paths) {
        Image16 img = read_png16(p);
        if (img.width != vol.meta.dims[0] || img.height != vol.meta.dims[1]) {
            throw IoError("slice dimensions inconsistent with metadata: " + p.string());
        }
        vol.slices.push_back(std::move(img));
    }
    return vol;
}

}  // namespace bitstain::image
