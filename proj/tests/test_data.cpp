#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "splashlab/data.hpp"

using namespace splashlab;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("data");

namespace {

fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "splashlab-data-tests";
    fs::create_directories(p);
    return p;
}

Dataset quantized_mnist_like(std::size_t n, std::uint64_t seed) {
    Dataset ds = make_mnist_like(n, 10, seed, "train");
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        ds.images[i] = std::round(ds.images[i] * 255.0) / 255.0;
    return ds;
}

} // namespace

TEST_CASE("idx round trip is exact") {
    fs::path dir = temp_dir();
    Dataset ds = quantized_mnist_like(24, 5);
    std::string ip = (dir / "imgs.idx").string(), lp = (dir / "labs.idx").string();
    write_idx(ds, ip, lp);
    Dataset back = load_idx(ip, lp, "mnist-like", "train");
    REQUIRE(back.size() == ds.size());
    CHECK(back.images.shape() == ds.images.shape());
    CHECK(back.images.vec() == ds.images.vec());
    CHECK(back.labels == ds.labels);
}

TEST_CASE("idx header errors are distinct") {
    fs::path dir = temp_dir();
    Dataset ds = quantized_mnist_like(6, 7);
    std::string ip = (dir / "i2.idx").string(), lp = (dir / "l2.idx").string();
    write_idx(ds, ip, lp);

    SUBCASE("a file with image magic used as labels is rejected") {
        std::string msg;
        try {
            load_idx(ip, ip);
        } catch (const std::runtime_error& e) {
            msg = e.what();
        }
        CHECK(msg.find("magic") != std::string::npos);
        CHECK(msg.find("0x00000803") != std::string::npos);
    }
    SUBCASE("label magic used as images is rejected") {
        CHECK_THROWS_WITH_AS(load_idx(lp, lp), doctest::Contains("magic"), std::runtime_error);
    }
    SUBCASE("truncated image payload") {
        std::string tp = (dir / "trunc.idx").string();
        fs::copy_file(ip, tp, fs::copy_options::overwrite_existing);
        fs::resize_file(tp, fs::file_size(tp) - 100);
        CHECK_THROWS_WITH_AS(load_idx(tp, lp), doctest::Contains("truncated"),
                             std::runtime_error);
    }
    SUBCASE("count mismatch between images and labels") {
        Dataset small = quantized_mnist_like(4, 7);
        std::string lp4 = (dir / "l4.idx").string(), ip4 = (dir / "i4.idx").string();
        write_idx(small, ip4, lp4);
        CHECK_THROWS_WITH_AS(load_idx(ip, lp4), doctest::Contains("match"),
                             std::runtime_error);
    }
}

TEST_CASE("idx pixel scaling: byte 255 becomes 1.0") {
    fs::path dir = temp_dir();
    std::string ip = (dir / "one.idx").string(), lp = (dir / "onel.idx").string();
    {
        std::ofstream img(ip, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        img.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char px[4] = {255, 0, 128, 51};
        img.write(reinterpret_cast<const char*>(px), 4);
        std::ofstream lab(lp, std::ios::binary);
        const unsigned char lheader[] = {0, 0, 8, 1, 0, 0, 0, 1};
        lab.write(reinterpret_cast<const char*>(lheader), sizeof(lheader));
        lab.put(3);
    }
    Dataset ds = load_idx(ip, lp);
    CHECK(ds.images[0] == 1.0);
    CHECK(ds.images[1] == 0.0);
    CHECK(ds.images[2] == doctest::Approx(128.0 / 255.0));
    CHECK(ds.labels[0] == 3);
}

TEST_CASE("cifar10 binary records") {
    fs::path dir = temp_dir();
    std::string path = (dir / "batch.bin").string();
    const std::size_t n = 7;
    {
        std::ofstream out(path, std::ios::binary);
        for (std::size_t i = 0; i < n; ++i) {
            out.put(static_cast<char>(i % 10 == 0 ? 9 : i % 10)); // label byte
            for (std::size_t p = 0; p < 3072; ++p)
                out.put(static_cast<char>(p == 0 ? 128 : (p + i) % 256));
        }
    }
    Dataset ds = load_cifar10_files({path}, "test");
    CHECK(ds.size() == n); // file length / 3073
    CHECK(ds.labels[0] == 9);
    CHECK(ds.images[0] == doctest::Approx(128.0 / 255.0));
    CHECK(ds.images.shape() == std::vector<std::size_t>{n, 3, 32, 32});

    SUBCASE("record misalignment is an error") {
        std::string bad = (dir / "bad.bin").string();
        fs::copy_file(path, bad, fs::copy_options::overwrite_existing);
        fs::resize_file(bad, fs::file_size(bad) - 1);
        CHECK_THROWS_WITH_AS(load_cifar10_files({bad}), doctest::Contains("3073"),
                             std::runtime_error);
    }
}

TEST_CASE("subsample determinism and stratification") {
    Dataset ds = make_mnist_like(300, 10, 11, "test");

    Dataset a = subsample(ds, 50, 42, false);
    Dataset b = subsample(ds, 50, 42, false);
    CHECK(a.images.vec() == b.images.vec());
    CHECK(a.labels == b.labels);
    Dataset c = subsample(ds, 50, 43, false);
    CHECK(a.images.vec() != c.images.vec());

    Dataset strat = subsample(ds, 100, 7, true);
    std::vector<int> counts(10, 0);
    for (int y : strat.labels) ++counts[y];
    for (int k = 0; k < 10; ++k) CHECK(counts[k] == 10);

    CHECK_THROWS_AS(subsample(ds, 301, 0, false), std::invalid_argument);
}

TEST_CASE("mnist-like generator is deterministic and in range") {
    Dataset a = make_mnist_like(40, 10, 3, "train");
    Dataset b = make_mnist_like(40, 10, 3, "train");
    CHECK(a.images.vec() == b.images.vec());
    a.validate();

    Dataset t = make_mnist_like(40, 10, 3, "test");
    CHECK(a.images.vec() != t.images.vec()); // fresh draws per split
    // but with matching labels (round-robin assignment)
    CHECK(a.labels == t.labels);
}

TEST_CASE("grounded function set") {
    for (const auto& nf : synthetic_grounded_functions()) {
        CAPTURE(nf.name);
        CHECK(nf.f(0.0) == 0.0);
    }
    CHECK(grounded_function("flat-relu").f(2.0) == 1.5);
    CHECK(grounded_function("abs").f(-0.3) == 0.3);
    CHECK(grounded_function("xsin").f(1.0) == doctest::Approx(std::sin(3.0)));
    CHECK_THROWS_AS(grounded_function("nope"), std::invalid_argument);
}

TEST_SUITE_END();
