#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bitstain/core/rng.hpp"
#include "bitstain/eval/distribution.hpp"
#include "oracles.hpp"

using namespace bitstain;
using eval::FeatureSet;

namespace {

FeatureSet random_features(int n, int d, std::uint64_t seed, double mu = 0, double sigma = 1) {
    FeatureSet f;
    f.n = n;
    f.d = d;
    f.extractor = "toy";
    f.rows.resize(static_cast<std::size_t>(n) * d);
    core::Philox ph(seed);
    for (std::size_t i = 0; i < f.rows.size(); ++i) f.rows[i] = mu + sigma * ph.normal(i);
    return f;
}

}  // namespace

TEST_CASE("fid of a set against itself is ~0") {
    const auto a = random_features(64, 8, 3);
    CHECK(eval::fid(a, a) <= 1e-6);
}

TEST_CASE("fid closed form for unit-covariance Gaussians with injected moments") {
    // N(0, I2) vs N((3,4), I2) -> |mu|^2 = 25
    eval::GaussianMoments a, b;
    a.d = b.d = 2;
    a.mean = {0, 0};
    b.mean = {3, 4};
    a.cov = {1, 0, 0, 1};
    b.cov = {1, 0, 0, 1};
    CHECK(eval::fid_from_moments(a, b) == doctest::Approx(25.0).epsilon(1e-9));
}

TEST_CASE("fid closed form in one dimension") {
    // N(0,1) vs N(0,4): (sigma_a - sigma_b)^2 = (1-2)^2 = 1
    eval::GaussianMoments a, b;
    a.d = b.d = 1;
    a.mean = {0};
    b.mean = {0};
    a.cov = {1};
    b.cov = {4};
    CHECK(eval::fid_from_moments(a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fid rejects tiny sets") {
    const auto a = random_features(2, 3, 5);
    FeatureSet tiny = a;
    tiny.n = 1;
    tiny.rows.resize(3);
    CHECK_THROWS_AS(eval::fid(tiny, a), ValueError);
}

TEST_CASE("sample moments are correct on a hand set") {
    FeatureSet f;
    f.n = 3;
    f.d = 2;
    f.extractor = "hand";
    f.rows = {0, 0, 2, 2, 4, 4};
    const auto m = eval::feature_moments(f);
    CHECK(m.mean[0] == doctest::Approx(2.0));
    CHECK(m.mean[1] == doctest::Approx(2.0));
    // sample covariance with N-1: var = (4+0+4)/2 = 4
    CHECK(m.cov[0] == doctest::Approx(4.0));
    CHECK(m.cov[3] == doctest::Approx(4.0));
    CHECK(m.cov[1] == doctest::Approx(4.0));
}

TEST_CASE("kid matches the double-loop oracle on 100 random set pairs") {
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const int na = 3 + static_cast<int>(trial % 6);
        const int nb = 3 + static_cast<int>((trial / 2) % 6);
        const int d = 2 + static_cast<int>(trial % 4);
        const auto a = random_features(na, d, 100 + trial * 3);
        const auto b = random_features(nb, d, 200 + trial * 3, 0.5, 1.5);
        const double fast = eval::kid(a, b);
        const double slow = oracle::double_loop_kid(na, nb, d, a.rows, b.rows);
        CHECK(std::abs(fast - slow) <= 1e-10);
    }
}

TEST_CASE("kid of identical sets with distinct rows matches the oracle") {
    const auto a = random_features(8, 4, 7);
    const double fast = eval::kid(a, a);
    const double slow = oracle::double_loop_kid(8, 8, 4, a.rows, a.rows);
    CHECK(std::abs(fast - slow) <= 1e-10);
}

TEST_CASE("kid hand-size case and symmetry") {
    const auto a = random_features(4, 2, 11);
    const auto b = random_features(4, 2, 12);
    CHECK(std::abs(eval::kid(a, b) - oracle::double_loop_kid(4, 4, 2, a.rows, b.rows)) <= 1e-12);
    CHECK(eval::kid(a, b) == doctest::Approx(eval::kid(b, a)).epsilon(1e-12));
}

TEST_CASE("kid unbiasedness: same-distribution estimates cancel in the mean") {
    double acc = 0, acc_abs = 0;
    double acc_first = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        const auto a = random_features(24, 3, 5000 + static_cast<std::uint64_t>(t) * 2);
        const auto b = random_features(24, 3, 5001 + static_cast<std::uint64_t>(t) * 2);
        const double e = eval::kid(a, b);
        acc += e;
        acc_abs += std::abs(e);
        if (t == 24) acc_first = acc / 25.0;
    }
    const double mean = acc / trials;
    const double mean_abs = acc_abs / trials;
    // strong cancellation relative to the typical estimate magnitude,
    // and shrinking |mean| as the number of pairs grows
    CHECK(std::abs(mean) < 0.15 * mean_abs);
    CHECK(std::abs(mean) < std::abs(acc_first) + 0.05 * mean_abs);
}

TEST_CASE("feature csv round trip and malformed input errors") {
    const auto dir = std::filesystem::temp_directory_path() / "bitstain_test_feats";
    std::filesystem::create_directories(dir);
    const auto f = random_features(5, 3, 21);
    const auto path = dir / "feats.csv";
    f.write_csv(path);
    const auto r = FeatureSet::read_csv(path);
    CHECK(r.n == 5);
    CHECK(r.d == 3);
    CHECK(r.extractor == "toy");
    for (std::size_t i = 0; i < f.rows.size(); ++i) CHECK(r.rows[i] == f.rows[i]);

    const auto bad = dir / "bad.csv";
    {
        std::ofstream out(bad);
        out << "2,2,x\n1.0,2.0\n3.0,oops\n";
    }
    try {
        FeatureSet::read_csv(bad);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bad.csv") != std::string::npos);
        CHECK(msg.find("line 3") != std::string::npos);
    }
    const auto short_file = dir / "short.csv";
    {
        std::ofstream out(short_file);
        out << "3,2,x\n1.0,2.0\n";
    }
    CHECK_THROWS_AS(FeatureSet::read_csv(short_file), IoError);
}
