#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "branchnet/tensor.hpp"

namespace branchnet {

struct Dataset {
    Tensor4 images;  // N x H x W x 3, raw values in [0,1]
    std::vector<int> labels;
    int num_classes = 0;
    std::string split;  // "train" or "test"
    // per-channel normalization, computed on the train split and copied to test
    std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
    std::array<float, 3> stddev{1.0f, 1.0f, 1.0f};

    int size() const { return images.rows; }
    void validate() const;
};

// mean/std over all pixels of this dataset's own images.
void compute_normalization(Dataset& ds);

// One record of the CIFAR binary layout. pixels are the raw plane-major bytes
// (R plane, G plane, B plane, each 32x32 row-major).
struct CifarRecord {
    int coarse = -1;  // cifar100 only
    int label = 0;
    std::array<uint8_t, 3072> pixels{};
};

CifarRecord decode_cifar_record(const uint8_t* bytes, bool cifar100);
void encode_cifar_record(const CifarRecord& rec, bool cifar100, uint8_t* out);

// variant: "cifar10" or "cifar100"; split: "train" or "test". Reads the
// standard binary batch files under dir. Normalization is left at identity;
// use load_cifar_pair to get train-split statistics applied to both.
Dataset load_cifar(const std::string& dir, const std::string& variant,
                   const std::string& split);
std::pair<Dataset, Dataset> load_cifar_pair(const std::string& dir,
                                            const std::string& variant);

// Anti-aliased glyph without noise, drawn at (cx, cy) with the given radius
// in pixels. Odd classes are the horizontal mirror of the preceding even
// class. Exposed so the mirror-pair construction is directly testable.
Tensor4 render_glyph(int cls, int size, double cx, double cy, double radius,
                     const std::array<float, 3>& color);

// Synthetic dataset of colored glyphs with class-dependent horizontal
// asymmetry: classes come in mirror pairs (2j, 2j+1), so horizontal flips
// move images toward the paired class. num_classes even, <= 8.
Dataset synth_shapes(int n, int size, int num_classes, uint64_t seed);
// Train/test pair with shared normalization and disjoint random draws.
std::pair<Dataset, Dataset> synth_shapes_pair(int n_train, int n_test, int size,
                                              int num_classes, uint64_t seed);

// Class-balanced deterministic subsample, per_class images per class.
Dataset subset(const Dataset& ds, int per_class, uint64_t seed);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Normalized batch at the given indices: (images - mean) / std, plus labels.
std::pair<Tensor4, std::vector<int>> gather_batch(const Dataset& ds,
                                                  const std::vector<int>& indices);

// Raw [0,1] batch; augmentation runs on this, then normalize_images.
std::pair<Tensor4, std::vector<int>> gather_raw(const Dataset& ds,
                                                const std::vector<int>& indices);
Tensor4 normalize_images(const Tensor4& raw, const std::array<float, 3>& mean,
                         const std::array<float, 3>& stddev);

}  // namespace branchnet
