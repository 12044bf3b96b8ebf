#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bitstain/core/rng.hpp"
#include "bitstain/net/checkpoint.hpp"

using namespace bitstain;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    const auto dir = fs::temp_directory_path() / "bitstain_test_ckpt";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    net::CheckpointWriter w;
    core::Philox ph(3);
    std::vector<double> a(64), b(7);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = ph.normal(i) * 1e-7;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = ph.normal(100 + i) * 1e12;
    w.add("module.w", {8, 8}, a);
    w.add("module.b", {7}, b);
    w.meta()["step"] = 41;
    w.meta()["config"] = {{"alpha", 0.1234567891234567}};
    const auto path = temp_file("roundtrip.bsck");
    w.save(path);

    const auto c = net::Checkpoint::load(path);
    CHECK(c.names() == std::vector<std::string>{"module.b", "module.w"});
    CHECK(c.shape("module.w") == core::Shape{8, 8});
    CHECK(c.data("module.w") == a);
    CHECK(c.data("module.b") == b);
    CHECK(c.meta().at("step") == 41);
    CHECK(c.meta().at("config").at("alpha").get<double>() == 0.1234567891234567);
}

TEST_CASE("checkpoint rejects wrong magic and version") {
    const auto path = temp_file("bad_magic.bsck");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTCKPT!payload";
    }
    CHECK_THROWS_AS(net::Checkpoint::load(path), IoError);

    // corrupt the version field of a valid file
    net::CheckpointWriter w;
    w.add("t", {1}, {1.0});
    const auto vpath = temp_file("bad_version.bsck");
    w.save(vpath);
    {
        std::fstream f(vpath, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const std::uint32_t wrong = 999;
        f.write(reinterpret_cast<const char*>(&wrong), sizeof(wrong));
    }
    CHECK_THROWS_AS(net::Checkpoint::load(vpath), IoError);
}

TEST_CASE("missing tensors are reported by name") {
    net::CheckpointWriter w;
    w.add("present", {1}, {2.0});
    const auto path = temp_file("missing.bsck");
    w.save(path);
    const auto c = net::Checkpoint::load(path);
    CHECK(c.has("present"));
    CHECK(!c.has("absent"));
    try {
        c.data("absent");
        FAIL("expected StateError");
    } catch (const StateError& e) {
        CHECK(std::string(e.what()).find("absent") != std::string::npos);
    }
}

TEST_CASE("duplicate tensor names are rejected at write time") {
    net::CheckpointWriter w;
    w.add("t", {1}, {1.0});
    CHECK_THROWS_AS(w.add("t", {1}, {2.0}), StateError);
}
