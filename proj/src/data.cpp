#include "branchnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "branchnet/checkpoint.hpp"
#include "branchnet/util.hpp"

namespace branchnet {

void Dataset::validate() const {
    if (images.channels != 3) throw IoError("dataset images must have 3 channels");
    if (labels.size() != static_cast<size_t>(images.rows))
        throw IoError("dataset: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(images.rows) + " images");
    for (int l : labels)
        if (l < 0 || l >= num_classes)
            throw IoError("dataset: label " + std::to_string(l) + " outside [0," +
                          std::to_string(num_classes) + ")");
    if (!images.all_finite()) throw IoError("dataset: non-finite pixel");
}

void compute_normalization(Dataset& ds) {
    double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
    const size_t n = ds.images.size() / 3;
    const float* d = ds.images.data.data();
    for (size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            double v = d[i * 3 + c];
            sum[c] += v;
            sumsq[c] += v * v;
        }
    for (int c = 0; c < 3; ++c) {
        double m = sum[c] / static_cast<double>(n);
        double var = sumsq[c] / static_cast<double>(n) - m * m;
        ds.mean[c] = static_cast<float>(m);
        ds.stddev[c] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
    }
}

CifarRecord decode_cifar_record(const uint8_t* bytes, bool cifar100) {
    CifarRecord rec;
    if (cifar100) {
        rec.coarse = bytes[0];
        rec.label = bytes[1];
        std::copy(bytes + 2, bytes + 2 + 3072, rec.pixels.begin());
    } else {
        rec.label = bytes[0];
        std::copy(bytes + 1, bytes + 1 + 3072, rec.pixels.begin());
    }
    return rec;
}

void encode_cifar_record(const CifarRecord& rec, bool cifar100, uint8_t* out) {
    if (cifar100) {
        out[0] = static_cast<uint8_t>(rec.coarse);
        out[1] = static_cast<uint8_t>(rec.label);
        std::copy(rec.pixels.begin(), rec.pixels.end(), out + 2);
    } else {
        out[0] = static_cast<uint8_t>(rec.label);
        std::copy(rec.pixels.begin(), rec.pixels.end(), out + 1);
    }
}

namespace {

std::string find_cifar_file(const std::string& dir, const std::string& variant,
                            const std::string& file) {
    namespace fs = std::filesystem;
    std::string subdir =
        variant == "cifar10" ? "cifar-10-batches-bin" : "cifar-100-binary";
    for (const auto& cand : {dir + "/" + file, dir + "/" + subdir + "/" + file}) {
        if (fs::exists(cand)) return cand;
    }
    throw IoError("CIFAR file '" + file + "' not found under " + dir);
}

void append_cifar_file(Dataset& ds, const std::string& path, bool cifar100, size_t& next) {
    const size_t rec_size = cifar100 ? 3074 : 3073;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % rec_size != 0)
        throw IoError("truncated CIFAR file (size " + std::to_string(bytes.size()) + "): " +
                      path);
    const size_t n = bytes.size() / rec_size;
    const int nc = cifar100 ? 100 : 10;
    for (size_t i = 0; i < n; ++i, ++next) {
        CifarRecord rec = decode_cifar_record(bytes.data() + i * rec_size, cifar100);
        if (rec.label < 0 || rec.label >= nc)
            throw IoError("label " + std::to_string(rec.label) + " out of range in " + path);
        ds.labels[next] = rec.label;
        int b = static_cast<int>(next);
        for (int c = 0; c < 3; ++c)
            for (int h = 0; h < 32; ++h)
                for (int w = 0; w < 32; ++w)
                    ds.images.at(b, h, w, c) =
                        static_cast<float>(rec.pixels[static_cast<size_t>(c) * 1024 +
                                                      static_cast<size_t>(h) * 32 + w]) /
                        255.0f;
    }
}

}  // namespace

Dataset load_cifar(const std::string& dir, const std::string& variant,
                   const std::string& split) {
    if (variant != "cifar10" && variant != "cifar100")
        throw ConfigError("unknown CIFAR variant '" + variant + "'");
    if (split != "train" && split != "test")
        throw ConfigError("split must be train or test, got '" + split + "'");
    const bool c100 = variant == "cifar100";
    std::vector<std::string> files;
    if (c100) {
        files.push_back(find_cifar_file(dir, variant, split == "train" ? "train.bin" : "test.bin"));
    } else if (split == "train") {
        for (int i = 1; i <= 5; ++i)
            files.push_back(
                find_cifar_file(dir, variant, "data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(find_cifar_file(dir, variant, "test_batch.bin"));
    }
    size_t total = 0;
    const size_t rec_size = c100 ? 3074 : 3073;
    for (const auto& f : files) total += std::filesystem::file_size(f) / rec_size;
    Dataset ds;
    ds.images = Tensor4(static_cast<int>(total), 32, 32, 3);
    ds.labels.resize(total);
    ds.num_classes = c100 ? 100 : 10;
    ds.split = split;
    size_t next = 0;
    for (const auto& f : files) append_cifar_file(ds, f, c100, next);
    ds.validate();
    return ds;
}

std::pair<Dataset, Dataset> load_cifar_pair(const std::string& dir,
                                            const std::string& variant) {
    Dataset train = load_cifar(dir, variant, "train");
    Dataset test = load_cifar(dir, variant, "test");
    compute_normalization(train);
    test.mean = train.mean;
    test.stddev = train.stddev;
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic glyphs. Four base shapes, each horizontally asymmetric; odd
// classes mirror the preceding even class.

namespace {

bool glyph_inside(int base, double u, double v) {
    switch (base) {
        case 0:  // triangle, apex pointing right
            return u >= -0.6 && u <= 0.7 && std::abs(v) <= 0.6 * (0.7 - u) / 1.3;
        case 1:  // left vertical bar plus top bar
            return (u >= -0.75 && u <= -0.35 && std::abs(v) <= 0.75) ||
                   (v >= -0.75 && v <= -0.35 && std::abs(u) <= 0.75);
        case 2:  // left vertical bar plus bottom bar
            return (u >= -0.75 && u <= -0.35 && std::abs(v) <= 0.75) ||
                   (v >= 0.35 && v <= 0.75 && std::abs(u) <= 0.75);
        case 3:  // half disk, round side right
            return (u >= 0.0 && u * u + v * v <= 0.49) ||
                   (u >= -0.3 && u < 0.0 && std::abs(v) <= 0.7);
        default: return false;
    }
}

}  // namespace

Tensor4 render_glyph(int cls, int size, double cx, double cy, double radius,
                     const std::array<float, 3>& color) {
    if (cls < 0 || cls >= 8) throw ConfigError("render_glyph: class must be in [0,8)");
    const int base = cls / 2;
    const bool mirrored = cls % 2 == 1;
    Tensor4 img(1, size, size, 3);
    const double sub[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};
    for (int h = 0; h < size; ++h)
        for (int w = 0; w < size; ++w) {
            int hits = 0;
            for (double dh : sub)
                for (double dw : sub) {
                    double v = (h + dh - cy) / radius;
                    double u = (w + dw - cx) / radius;
                    if (mirrored) u = -u;
                    if (glyph_inside(base, u, v)) ++hits;
                }
            if (hits == 0) continue;
            float cov = static_cast<float>(hits) / 9.0f;
            for (int c = 0; c < 3; ++c) img.at(0, h, w, c) = color[c] * cov;
        }
    return img;
}

Dataset synth_shapes(int n, int size, int num_classes, uint64_t seed) {
    if (num_classes < 2 || num_classes > 8 || num_classes % 2 != 0)
        throw ConfigError("synth_shapes: num_classes must be even and in [2,8]");
    if (n < 1 || size < 8) throw ConfigError("synth_shapes: need n >= 1 and size >= 8");
    std::mt19937 rng = make_rng(seed, 0x5157);
    std::uniform_real_distribution<double> jitter(-0.09, 0.09);
    std::uniform_real_distribution<double> rad(0.30, 0.44);
    std::uniform_real_distribution<float> col(0.45f, 1.0f);
    std::uniform_real_distribution<float> noise(0.0f, 0.08f);
    Dataset ds;
    ds.images = Tensor4(n, size, size, 3);
    ds.labels.resize(static_cast<size_t>(n));
    ds.num_classes = num_classes;
    for (int i = 0; i < n; ++i) {
        int cls = i % num_classes;
        ds.labels[static_cast<size_t>(i)] = cls;
        double cx = (size - 1) / 2.0 + jitter(rng) * size;
        double cy = (size - 1) / 2.0 + jitter(rng) * size;
        double radius = rad(rng) * size;
        std::array<float, 3> color{col(rng), col(rng), col(rng)};
        Tensor4 glyph = render_glyph(cls, size, cx, cy, radius, color);
        for (int h = 0; h < size; ++h)
            for (int w = 0; w < size; ++w)
                for (int c = 0; c < 3; ++c)
                    ds.images.at(i, h, w, c) =
                        std::min(1.0f, glyph.at(0, h, w, c) + noise(rng));
    }
    ds.validate();
    return ds;
}

std::pair<Dataset, Dataset> synth_shapes_pair(int n_train, int n_test, int size,
                                              int num_classes, uint64_t seed) {
    Dataset train = synth_shapes(n_train, size, num_classes, mix64(seed, 1));
    Dataset test = synth_shapes(n_test, size, num_classes, mix64(seed, 2));
    train.split = "train";
    test.split = "test";
    compute_normalization(train);
    test.mean = train.mean;
    test.stddev = train.stddev;
    return {std::move(train), std::move(test)};
}

Dataset subset(const Dataset& ds, int per_class, uint64_t seed) {
    std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.num_classes));
    for (int i = 0; i < ds.size(); ++i)
        by_class[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
    std::vector<int> chosen;
    for (int c = 0; c < ds.num_classes; ++c) {
        auto& idx = by_class[static_cast<size_t>(c)];
        if (static_cast<int>(idx.size()) < per_class)
            throw ConfigError("subset: class " + std::to_string(c) + " has only " +
                              std::to_string(idx.size()) + " images, need " +
                              std::to_string(per_class));
        std::mt19937 rng = make_rng(seed, 1000 + static_cast<uint64_t>(c));
        std::shuffle(idx.begin(), idx.end(), rng);
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + per_class);
    }
    std::mt19937 rng = make_rng(seed, 999);
    std::shuffle(chosen.begin(), chosen.end(), rng);

    Dataset out;
    out.images = Tensor4(static_cast<int>(chosen.size()), ds.images.height, ds.images.width, 3);
    out.labels.resize(chosen.size());
    out.num_classes = ds.num_classes;
    out.split = ds.split;
    out.mean = ds.mean;
    out.stddev = ds.stddev;
    const size_t row = static_cast<size_t>(ds.images.height) * ds.images.width * 3;
    for (size_t i = 0; i < chosen.size(); ++i) {
        std::copy_n(ds.images.data.begin() + static_cast<size_t>(chosen[i]) * row, row,
                    out.images.data.begin() + i * row);
        out.labels[i] = ds.labels[static_cast<size_t>(chosen[i])];
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    Tensor4 labels(ds.size(), 1, 1, 1);
    for (int i = 0; i < ds.size(); ++i)
        labels.data[static_cast<size_t>(i)] = static_cast<float>(ds.labels[static_cast<size_t>(i)]);
    Tensor4 meta(1, 1, 1, 8);
    meta.data[0] = static_cast<float>(ds.num_classes);
    for (int c = 0; c < 3; ++c) {
        meta.data[static_cast<size_t>(1 + c)] = ds.mean[static_cast<size_t>(c)];
        meta.data[static_cast<size_t>(4 + c)] = ds.stddev[static_cast<size_t>(c)];
    }
    meta.data[7] = ds.split == "test" ? 1.0f : 0.0f;
    write_tensor_file(path, {{"images", &ds.images}, {"labels", &labels}, {"meta", &meta}});
}

Dataset load_dataset(const std::string& path) {
    auto tensors = read_tensor_file(path);
    Dataset ds;
    bool have_images = false, have_labels = false, have_meta = false;
    Tensor4 labels, meta;
    for (auto& [name, t] : tensors) {
        if (name == "images") { ds.images = std::move(t); have_images = true; }
        else if (name == "labels") { labels = std::move(t); have_labels = true; }
        else if (name == "meta") { meta = std::move(t); have_meta = true; }
        else throw IoError("unexpected tensor '" + name + "' in dataset file " + path);
    }
    if (!have_images || !have_labels || !have_meta)
        throw IoError("dataset file missing images/labels/meta: " + path);
    if (labels.rows != ds.images.rows || meta.size() != 8)
        throw IoError("dataset file has inconsistent tensors: " + path);
    ds.labels.resize(static_cast<size_t>(labels.rows));
    for (size_t i = 0; i < ds.labels.size(); ++i)
        ds.labels[i] = static_cast<int>(labels.data[i]);
    ds.num_classes = static_cast<int>(meta.data[0]);
    for (int c = 0; c < 3; ++c) {
        ds.mean[static_cast<size_t>(c)] = meta.data[static_cast<size_t>(1 + c)];
        ds.stddev[static_cast<size_t>(c)] = meta.data[static_cast<size_t>(4 + c)];
    }
    ds.split = meta.data[7] == 1.0f ? "test" : "train";
    ds.validate();
    return ds;
}

std::pair<Tensor4, std::vector<int>> gather_raw(const Dataset& ds,
                                                const std::vector<int>& indices) {
    Tensor4 batch(static_cast<int>(indices.size()), ds.images.height, ds.images.width, 3);
    std::vector<int> labels(indices.size());
    const size_t row = static_cast<size_t>(ds.images.height) * ds.images.width * 3;
    for (size_t i = 0; i < indices.size(); ++i) {
        int src = indices[i];
        if (src < 0 || src >= ds.size()) throw ShapeError("gather_raw: index out of range");
        std::copy_n(ds.images.data.begin() + static_cast<size_t>(src) * row, row,
                    batch.data.begin() + i * row);
        labels[i] = ds.labels[static_cast<size_t>(src)];
    }
    return {std::move(batch), std::move(labels)};
}

Tensor4 normalize_images(const Tensor4& raw, const std::array<float, 3>& mean,
                         const std::array<float, 3>& stddev) {
    if (raw.channels != 3) throw ShapeError("normalize_images: expected 3 channels");
    Tensor4 out = raw;
    float* d = out.data.data();
    const size_t n = out.size() / 3;
    for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < 3; ++c) d[i * 3 + c] = (d[i * 3 + c] - mean[c]) / stddev[c];
    return out;
}

std::pair<Tensor4, std::vector<int>> gather_batch(const Dataset& ds,
                                                  const std::vector<int>& indices) {
    auto [raw, labels] = gather_raw(ds, indices);
    return {normalize_images(raw, ds.mean, ds.stddev), std::move(labels)};
}

}  // namespace branchnet
