#include "bitstain/net/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace bitstain::net {

using nlohmann::json;

void CheckpointWriter::add(const std::string& name, const core::Shape& shape,
                           const std::vector<double>& data) {
    if (static_cast<std::int64_t>(data.size()) != core::numel(shape)) {
        throw ShapeError("CheckpointWriter: data does not match shape for " + name);
    }
    if (tensors_.count(name)) throw StateError("CheckpointWriter: duplicate tensor " + name);
    tensors_[name] = Entry{shape, data};
}

void CheckpointWriter::save(const std::filesystem::path& path) const {
    json dir = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : tensors_) {
        dir.push_back({{"name", name}, {"shape", e.shape}, {"offset", offset},
                       {"count", e.data.size()}});
        offset += e.data.size();
    }
    json header{{"tensors", dir}, {"meta", meta_}};
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, e] : tensors_) {
        out.write(reinterpret_cast<const char*>(e.data.data()),
                  static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw IoError("not a checkpoint file: " + path.string());
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version in " + path.string());
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("truncated checkpoint header: " + path.string());
    json header = json::parse(header_str, nullptr, false);
    if (header.is_discarded()) throw IoError("corrupt checkpoint header: " + path.string());

    Checkpoint c;
    c.meta_ = header.value("meta", json::object());
    const std::streampos data_start = in.tellg();
    for (const auto& t : header.at("tensors")) {
        Entry e;
        e.shape = t.at("shape").get<core::Shape>();
        const auto count = t.at("count").get<std::uint64_t>();
        const auto offset = t.at("offset").get<std::uint64_t>();
        e.data.resize(count);
        in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(double)));
        in.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint data: " + path.string());
        c.tensors_[t.at("name").get<std::string>()] = std::move(e);
    }
    return c;
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [name, e] : tensors_) out.push_back(name);
    return out;
}

const core::Shape& Checkpoint::shape(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw StateError("checkpoint has no tensor " + name);
    return it->second.shape;
}

const std::vector<double>& Checkpoint::data(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw StateError("checkpoint has no tensor " + name);
    return it->second.data;
}

void write_prototype(CheckpointWriter& w, const style::StylePrototype& proto) {
    if (!proto.initialized) throw StateError("write_prototype: prototype not initialized");
    w.add(kPrototypeTensor, {static_cast<int>(proto.values.size())}, proto.values);
    w.meta()[kPrototypeMeta] = {{"alpha", proto.alpha},
                                {"observations", proto.observations},
                                {"initialized", proto.initialized},
                                {"dim", proto.values.size()}};
}

style::StylePrototype read_prototype(const Checkpoint& c) {
    if (!c.meta().contains(kPrototypeMeta) || !c.has(kPrototypeTensor)) {
        throw StateError("checkpoint contains no style prototype");
    }
    const auto& m = c.meta().at(kPrototypeMeta);
    style::StylePrototype proto;
    proto.alpha = m.at("alpha").get<double>();
    proto.observations = m.at("observations").get<std::uint64_t>();
    proto.initialized = m.at("initialized").get<bool>();
    proto.values = c.data(kPrototypeTensor);
    if (proto.values.size() != m.at("dim").get<std::size_t>()) {
        throw IoError("prototype dimension mismatch in checkpoint");
    }
    return proto;
}

}  // namespace bitstain::net
