#ifndef BITSTAIN_NET_CHECKPOINT_HPP
#define BITSTAIN_NET_CHECKPOINT_HPP

#include <filesystem>
#include <map>

#include <json.hpp>

#include "bitstain/core/tensor.hpp"
#include "bitstain/style/style.hpp"

namespace bitstain::net {

// Versioned binary container: magic + version + JSON directory + raw
// little-endian float64 blobs. Tensors are keyed by hierarchical name.
inline constexpr char kCheckpointMagic[8] = {'B', 'S', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointWriter {
public:
    void add(const std::string& name, const core::Shape& shape, const std::vector<double>& data);
    nlohmann::json& meta() { return meta_; }
    void save(const std::filesystem::path& path) const;

private:
    struct Entry {
        core::Shape shape;
        std::vector<double> data;
    };
    std::map<std::string, Entry> tensors_;
    nlohmann::json meta_ = nlohmann::json::object();
};

class Checkpoint {
public:
    static Checkpoint load(const std::filesystem::path& path);

    const nlohmann::json& meta() const { return meta_; }
    bool has(const std::string& name) const { return tensors_.count(name) != 0; }
    std::vector<std::string> names() const;
    const core::Shape& shape(const std::string& name) const;
    const std::vector<double>& data(const std::string& name) const;

private:
    struct Entry {
        core::Shape shape;
        std::vector<double> data;
    };
    std::map<std::string, Entry> tensors_;
    nlohmann::json meta_;
};

// Prototype persistence inside the container, under a reserved key.
inline constexpr const char* kPrototypeTensor = "style_prototype.values";
inline constexpr const char* kPrototypeMeta = "style_prototype";

void write_prototype(CheckpointWriter& w, const style::StylePrototype& proto);
// Missing prototype -> StateError (an absent prototype is never defaulted).
style::StylePrototype read_prototype(const Checkpoint& c);

}  // namespace bitstain::net

#endif
