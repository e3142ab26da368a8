#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "hijacklab/dataset.hpp"
#include "hijacklab/errors.hpp"
#include "hijacklab/io.hpp"
#include "hijacklab/mlp.hpp"
#include "hijacklab/rng.hpp"

using namespace hijacklab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("hijacklab_dataset_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void push_u32_be(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

// Two 2x2 images with known pixels, labels 3 and 1.
struct IdxFixture {
    fs::path images, labels;
    IdxFixture() {
        const fs::path dir = temp_dir();
        images = dir / "fixture-images-idx3-ubyte";
        labels = dir / "fixture-labels-idx1-ubyte";
        std::vector<unsigned char> img;
        push_u32_be(img, 0x00000803);
        push_u32_be(img, 2);  // count
        push_u32_be(img, 2);  // rows
        push_u32_be(img, 2);  // cols
        for (unsigned char px : {0, 51, 102, 255, 10, 20, 30, 40}) img.push_back(px);
        write_bytes(images, img);
        std::vector<unsigned char> lab;
        push_u32_be(lab, 0x00000801);
        push_u32_be(lab, 2);
        lab.push_back(3);
        lab.push_back(1);
        write_bytes(labels, lab);
    }
};

}  // namespace

TEST_CASE("load_idx parses a byte-built fixture exactly") {
    IdxFixture fx;
    Dataset d = load_idx(fx.images, fx.labels);
    CHECK(d.size() == 2);
    CHECK(d.dim() == 4);
    CHECK(d.labels == std::vector<int>{3, 1});
    CHECK(d.samples.data[0] == 0.0);
    CHECK(d.samples.data[1] == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
    CHECK(d.samples.data[3] == 1.0);
    CHECK(d.samples.data[7] == doctest::Approx(40.0 / 255.0).epsilon(1e-15));
    CHECK(d.n_classes == 4);
}

TEST_CASE("load_idx rejects a label file fed to the image slot") {
    IdxFixture fx;
    CHECK_THROWS_WITH_AS(load_idx(fx.labels, fx.labels), doctest::Contains("magic"), ParseError);
}

TEST_CASE("load_idx rejects truncated files and count mismatches") {
    IdxFixture fx;
    const fs::path dir = temp_dir();

    const fs::path truncated = dir / "trunc-images";
    std::vector<unsigned char> img;
    push_u32_be(img, 0x00000803);
    push_u32_be(img, 2);
    push_u32_be(img, 2);
    push_u32_be(img, 2);
    img.push_back(0);  // only one pixel of 8
    write_bytes(truncated, img);
    CHECK_THROWS_AS(load_idx(truncated, fx.labels), ParseError);

    const fs::path bad_count = dir / "badcount-labels";
    std::vector<unsigned char> lab;
    push_u32_be(lab, 0x00000801);
    push_u32_be(lab, 5);
    for (int i = 0; i < 5; ++i) lab.push_back(0);
    write_bytes(bad_count, lab);
    CHECK_THROWS_WITH_AS(load_idx(fx.images, bad_count), doctest::Contains("mismatch"),
                         ParseError);
}

TEST_CASE("load_idx reads official MNIST when available") {
    const char* dir = std::getenv("MNIST_DIR");
    if (!dir) {
        MESSAGE("MNIST_DIR not set; skipping");
        return;
    }
    Dataset d = load_idx(fs::path(dir) / "train-images-idx3-ubyte",
                         fs::path(dir) / "train-labels-idx1-ubyte");
    CHECK(d.size() == 60000);
    CHECK(d.dim() == 784);
    CHECK(d.n_classes == 10);
}

TEST_CASE("synth_blobs is deterministic and balanced") {
    Dataset a = synth_blobs(10, 3, 4, 0.05, 42);
    Dataset b = synth_blobs(10, 3, 4, 0.05, 42);
    CHECK(a.samples.data == b.samples.data);
    CHECK(a.labels == b.labels);
    int counts[4] = {0, 0, 0, 0};
    for (int y : a.labels) counts[y]++;
    CHECK(counts[0] == 3);  // 10 samples round-robin over 4 classes
    CHECK(counts[3] == 2);
    for (double v : a.samples.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("synth_blobs with n == k emits one sample per class") {
    Dataset d = synth_blobs(4, 2, 4, 0.01, 7);
    CHECK(d.labels == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("two-class blobs with small spread are linearly separable") {
    // Probe oracle: a single-layer model must fit the blobs almost perfectly.
    Dataset d = synth_blobs(120, 4, 2, 0.02, 5);
    MLPModel probe(HyperConfig{1, 8, 0.5, 77}, 4, 2);
    Rng rng(78);
    TrainReport report = train_model(probe, d, TrainOptions{30, 32}, rng);
    CHECK(report.final_train_loss < 0.1);
}

TEST_CASE("split produces floor-based sizes with the remainder in train") {
    Dataset d = synth_blobs(100, 2, 4, 0.05, 1);
    Splits s = split(d, SplitSpec{0.6, 0.2, 0.2, 9});
    CHECK(s.train.size() == 60);
    CHECK(s.val.size() == 20);
    CHECK(s.test.size() == 20);
}

TEST_CASE("split is a partition of the original multiset") {
    Rng seed_rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 20 + seed_rng.below(80);
        Dataset d = synth_blobs(n, 3, 3, 0.05, seed_rng.next_u64());
        SplitSpec spec{0.5, 0.25, 0.25, seed_rng.next_u64(), trial % 2 == 1};
        Splits s = split(d, spec);
        CHECK(s.train.size() + s.val.size() + s.test.size() == n);

        // Multiset equality via sorted sample signatures.
        auto signatures = [](const Dataset& ds) {
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                std::vector<double> row(ds.samples.data.begin() + i * ds.dim(),
                                        ds.samples.data.begin() + (i + 1) * ds.dim());
                row.push_back(ds.labels[i]);
                rows.push_back(std::move(row));
            }
            return rows;
        };
        auto all = signatures(d);
        std::vector<std::vector<double>> merged;
        for (const Dataset* part : {&s.train, &s.val, &s.test})
            for (auto& row : signatures(*part)) merged.push_back(std::move(row));
        std::sort(all.begin(), all.end());
        std::sort(merged.begin(), merged.end());
        CHECK(all == merged);
    }
}

TEST_CASE("split is deterministic given the seed") {
    Dataset d = synth_blobs(50, 2, 2, 0.05, 3);
    Splits a = split(d, SplitSpec{0.8, 0.1, 0.1, 123});
    Splits b = split(d, SplitSpec{0.8, 0.1, 0.1, 123});
    CHECK(a.train.samples.data == b.train.samples.data);
    CHECK(a.val.labels == b.val.labels);
    CHECK(a.test.samples.data == b.test.samples.data);
}

TEST_CASE("split rejects bad fractions and empty splits") {
    Dataset d = synth_blobs(10, 2, 2, 0.05, 3);
    CHECK_THROWS_AS(split(d, SplitSpec{0.5, 0.5, 0.5, 0}), ContractError);
    CHECK_THROWS_AS(split(d, SplitSpec{-0.2, 0.6, 0.6, 0}), ContractError);
    // 10 samples at 1% validation -> empty split.
    CHECK_THROWS_AS(split(d, SplitSpec{0.98, 0.01, 0.01, 0}), ContractError);
}

TEST_CASE("dataset binary round-trip is byte-identical") {
    const fs::path dir = temp_dir();
    Dataset d = synth_blobs(17, 5, 3, 0.05, 99);
    save_dataset(dir / "a.bin", d, 99, 0xDEADBEEF);
    LoadedDataset loaded = load_dataset(dir / "a.bin");
    CHECK(loaded.seed == 99);
    CHECK(loaded.config_hash == 0xDEADBEEF);
    CHECK(loaded.data.samples.data == d.samples.data);
    CHECK(loaded.data.labels == d.labels);
    save_dataset(dir / "b.bin", loaded.data, loaded.seed, loaded.config_hash);
    CHECK(io::read_file(dir / "a.bin") == io::read_file(dir / "b.bin"));
}

TEST_CASE("dataset loader rejects a corrupted header without partial state") {
    const fs::path dir = temp_dir();
    Dataset d = synth_blobs(5, 2, 2, 0.05, 1);
    save_dataset(dir / "c.bin", d, 1, 2);
    std::string bytes = io::read_file(dir / "c.bin");
    bytes[0] = 'X';
    io::atomic_write(dir / "c.bin", bytes);
    CHECK_THROWS_WITH_AS(load_dataset(dir / "c.bin"), doctest::Contains("magic"), ParseError);
}
