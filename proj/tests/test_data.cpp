#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "branchnet/checkpoint.hpp"
#include "branchnet/data.hpp"
#include "branchnet/transform.hpp"
#include "branchnet/util.hpp"
#include "oracles.hpp"

using namespace branchnet;
using testutil::bit_equal;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("branchnet_data_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    static int counter;
};
int TempDir::counter = 0;

CifarRecord patterned_record(int label, int coarse, uint8_t base) {
    CifarRecord rec;
    rec.label = label;
    rec.coarse = coarse;
    for (size_t i = 0; i < rec.pixels.size(); ++i)
        rec.pixels[i] = static_cast<uint8_t>((base + i * 7) % 256);
    return rec;
}

void write_records(const fs::path& file, const std::vector<CifarRecord>& recs, bool c100) {
    const size_t rec_size = c100 ? 3074 : 3073;
    std::vector<uint8_t> bytes(recs.size() * rec_size);
    for (size_t i = 0; i < recs.size(); ++i)
        encode_cifar_record(recs[i], c100, bytes.data() + i * rec_size);
    std::ofstream f(file, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cifar record codec round-trips both layouts") {
    for (bool c100 : {false, true}) {
        CifarRecord rec = patterned_record(c100 ? 87 : 7, c100 ? 13 : -1, 3);
        std::vector<uint8_t> bytes(c100 ? 3074 : 3073);
        encode_cifar_record(rec, c100, bytes.data());
        CifarRecord back = decode_cifar_record(bytes.data(), c100);
        CHECK(back.label == rec.label);
        if (c100) CHECK(back.coarse == 13);
        CHECK(back.pixels == rec.pixels);
    }
}

TEST_CASE("cifar10 loader maps plane-major bytes to interleaved [0,1] pixels") {
    TempDir dir;
    CifarRecord a = patterned_record(3, -1, 0);
    CifarRecord b = patterned_record(9, -1, 11);
    write_records(dir.path / "test_batch.bin", {a, b}, false);
    Dataset ds = load_cifar(dir.str(), "cifar10", "test");
    CHECK(ds.size() == 2);
    CHECK(ds.num_classes == 10);
    CHECK(ds.labels == std::vector<int>{3, 9});
    for (int c = 0; c < 3; ++c)
        for (int h : {0, 17, 31})
            for (int w : {0, 5, 31}) {
                float want = static_cast<float>(a.pixels[c * 1024 + h * 32 + w]) / 255.0f;
                CHECK(ds.images.at(0, h, w, c) == want);
            }
    CHECK(ds.images.at(1, 0, 0, 0) == static_cast<float>(b.pixels[0]) / 255.0f);
}

TEST_CASE("cifar100 loader skips the coarse byte and reads train.bin") {
    TempDir dir;
    CifarRecord a = patterned_record(42, 9, 5);
    write_records(dir.path / "train.bin", {a}, true);
    Dataset ds = load_cifar(dir.str(), "cifar100", "train");
    CHECK(ds.num_classes == 100);
    CHECK(ds.labels == std::vector<int>{42});
    CHECK(ds.images.at(0, 0, 1, 0) == static_cast<float>(a.pixels[1]) / 255.0f);
}

TEST_CASE("cifar loader rejects truncated files and bad labels") {
    TempDir dir;
    {
        std::ofstream f(dir.path / "test_batch.bin", std::ios::binary);
        std::vector<char> junk(3073 + 100, 1);
        f.write(junk.data(), static_cast<std::streamsize>(junk.size()));
    }
    CHECK_THROWS_AS(load_cifar(dir.str(), "cifar10", "test"), IoError);

    TempDir dir2;
    CifarRecord bad = patterned_record(17, -1, 0);  // out of range for cifar10
    write_records(dir2.path / "test_batch.bin", {bad}, false);
    CHECK_THROWS_AS(load_cifar(dir2.str(), "cifar10", "test"), IoError);

    CHECK_THROWS_AS(load_cifar(dir.str(), "cifar17", "test"), ConfigError);
    CHECK_THROWS_AS(load_cifar(dir.str(), "cifar10", "val"), ConfigError);
    CHECK_THROWS_AS(load_cifar("/nonexistent", "cifar10", "test"), IoError);
}

TEST_CASE("cifar loader accepts the standard extracted subdirectory") {
    TempDir dir;
    fs::create_directories(dir.path / "cifar-10-batches-bin");
    for (int i = 1; i <= 5; ++i)
        write_records(dir.path / "cifar-10-batches-bin" /
                          ("data_batch_" + std::to_string(i) + ".bin"),
                      {patterned_record(i, -1, static_cast<uint8_t>(i))}, false);
    Dataset ds = load_cifar(dir.str(), "cifar10", "train");
    CHECK(ds.size() == 5);
    CHECK(ds.labels == std::vector<int>{1, 2, 3, 4, 5});
}

TEST_CASE("odd glyph classes are the exact mirror of the preceding even class") {
    const int size = 32;
    const double cx = 13.7, cy = 16.2;
    const std::array<float, 3> color{0.9f, 0.55f, 0.7f};
    for (int j = 0; j < 4; ++j) {
        Tensor4 even = render_glyph(2 * j, size, cx, cy, 11.4, color);
        Tensor4 odd = render_glyph(2 * j + 1, size, size - 1 - cx, cy, 11.4, color);
        CHECK(bit_equal(odd, flip_h_tensor(even)));
    }
}

TEST_CASE("synthetic glyph dataset is deterministic with cycled labels in range") {
    Dataset a = synth_shapes(24, 16, 4, 99);
    Dataset b = synth_shapes(24, 16, 4, 99);
    CHECK(bit_equal(a.images, b.images));
    CHECK(a.labels == b.labels);
    for (int i = 0; i < 24; ++i) CHECK(a.labels[static_cast<size_t>(i)] == i % 4);
    for (float v : a.images.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    Dataset c = synth_shapes(24, 16, 4, 100);
    CHECK_FALSE(bit_equal(a.images, c.images));
}

TEST_CASE("synthetic dataset validates its parameters") {
    CHECK_THROWS_AS(synth_shapes(8, 16, 3, 1), ConfigError);   // odd
    CHECK_THROWS_AS(synth_shapes(8, 16, 10, 1), ConfigError);  // > 8
    CHECK_THROWS_AS(synth_shapes(8, 16, 0, 1), ConfigError);
    CHECK_THROWS_AS(synth_shapes(0, 16, 4, 1), ConfigError);
    CHECK_THROWS_AS(synth_shapes(8, 4, 4, 1), ConfigError);  // too small
}

TEST_CASE("train/test pair shares train normalization over disjoint draws") {
    auto [train, test] = synth_shapes_pair(32, 16, 16, 4, 7);
    CHECK(train.split == "train");
    CHECK(test.split == "test");
    CHECK(train.mean == test.mean);
    CHECK(train.stddev == test.stddev);
    CHECK_FALSE(bit_equal(train.images, test.images));
    // stats really come from the train split
    Dataset copy = train;
    compute_normalization(copy);
    CHECK(copy.mean == train.mean);
}

TEST_CASE("normalization is the population mean and stddev per channel") {
    Dataset ds;
    ds.images = Tensor4(1, 1, 2, 3);
    ds.images.data = {0.2f, 0.5f, 1.0f, 0.4f, 0.5f, 0.0f};
    ds.labels = {0};
    ds.num_classes = 1;
    compute_normalization(ds);
    CHECK(ds.mean[0] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(ds.mean[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(ds.mean[2] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(ds.stddev[0] == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(ds.stddev[1] == doctest::Approx(std::sqrt(1e-12)).epsilon(1.0));
    CHECK(ds.stddev[2] == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("class-balanced subset draws per_class of each label deterministically") {
    Dataset ds = synth_shapes(40, 16, 4, 3);
    Dataset sub = subset(ds, 5, 11);
    CHECK(sub.size() == 20);
    CHECK(sub.num_classes == 4);
    std::vector<int> counts(4, 0);
    for (int l : sub.labels) ++counts[static_cast<size_t>(l)];
    CHECK(counts == std::vector<int>{5, 5, 5, 5});
    Dataset sub2 = subset(ds, 5, 11);
    CHECK(bit_equal(sub.images, sub2.images));
    CHECK(sub.labels == sub2.labels);
    Dataset sub3 = subset(ds, 5, 12);
    CHECK_FALSE(bit_equal(sub.images, sub3.images));
    CHECK_THROWS_AS(subset(ds, 11, 1), ConfigError);  // only 10 per class
}

TEST_CASE("subset rows are verbatim copies of rows with the same label") {
    Dataset ds = synth_shapes(12, 12, 2, 5);
    Dataset sub = subset(ds, 2, 1);
    const size_t row = 12 * 12 * 3;
    for (int i = 0; i < sub.size(); ++i) {
        bool found = false;
        for (int j = 0; j < ds.size() && !found; ++j) {
            if (ds.labels[static_cast<size_t>(j)] != sub.labels[static_cast<size_t>(i)])
                continue;
            found = std::equal(sub.images.data.begin() + i * row,
                               sub.images.data.begin() + (i + 1) * row,
                               ds.images.data.begin() + j * row);
        }
        CHECK(found);
    }
}

TEST_CASE("dataset file round-trip preserves everything") {
    TempDir dir;
    auto [train, test] = synth_shapes_pair(16, 8, 16, 4, 21);
    std::string path = (dir.path / "train.brt").string();
    save_dataset(train, path);
    Dataset back = load_dataset(path);
    CHECK(bit_equal(back.images, train.images));
    CHECK(back.labels == train.labels);
    CHECK(back.num_classes == 4);
    CHECK(back.mean == train.mean);
    CHECK(back.stddev == train.stddev);
    CHECK(back.split == "train");

    std::string tpath = (dir.path / "test.brt").string();
    save_dataset(test, tpath);
    CHECK(load_dataset(tpath).split == "test");
}

TEST_CASE("dataset loader rejects files with missing or extra tensors") {
    TempDir dir;
    Tensor4 imgs(2, 8, 8, 3, 0.5f);
    std::string missing = (dir.path / "missing.brt").string();
    write_tensor_file(missing, {{"images", &imgs}});
    CHECK_THROWS_AS(load_dataset(missing), IoError);

    Dataset ds = synth_shapes(4, 8, 2, 1);
    std::string ok = (dir.path / "ok.brt").string();
    save_dataset(ds, ok);
    auto tensors = read_tensor_file(ok);
    Tensor4 extra(1, 1, 1, 1, 0.0f);
    std::vector<std::pair<std::string, const Tensor4*>> plus;
    for (auto& [name, t] : tensors) plus.emplace_back(name, &t);
    plus.emplace_back("bogus", &extra);
    std::string extra_path = (dir.path / "extra.brt").string();
    write_tensor_file(extra_path, plus);
    CHECK_THROWS_AS(load_dataset(extra_path), IoError);
}

TEST_CASE("gather_batch applies the stored normalization to selected rows") {
    Dataset ds = synth_shapes(10, 8, 2, 13);
    ds.mean = {0.25f, 0.5f, 0.75f};
    ds.stddev = {0.5f, 0.25f, 2.0f};
    std::vector<int> idx{7, 2, 2};
    auto [batch, labels] = gather_batch(ds, idx);
    REQUIRE(batch.rows == 3);
    CHECK(labels == std::vector<int>{ds.labels[7], ds.labels[2], ds.labels[2]});
    for (int h : {0, 3})
        for (int w : {1, 6})
            for (int c = 0; c < 3; ++c) {
                float want = (ds.images.at(7, h, w, c) - ds.mean[static_cast<size_t>(c)]) /
                             ds.stddev[static_cast<size_t>(c)];
                CHECK(batch.at(0, h, w, c) == doctest::Approx(want).epsilon(1e-6));
            }
    auto [raw, rlabels] = gather_raw(ds, idx);
    CHECK(rlabels == labels);
    for (float v : raw.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    Tensor4 renorm = normalize_images(raw, ds.mean, ds.stddev);
    CHECK(testutil::max_abs_diff(renorm, batch) == 0.0);
}

TEST_CASE("dataset validation rejects inconsistent contents") {
    Dataset ds = synth_shapes(4, 8, 2, 2);
    ds.labels[0] = 5;
    CHECK_THROWS_AS(ds.validate(), IoError);
    ds.labels[0] = 0;
    ds.labels.pop_back();
    CHECK_THROWS_AS(ds.validate(), IoError);
    ds.labels.push_back(0);
    ds.images.data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(ds.validate(), IoError);
}
