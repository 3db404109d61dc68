#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pydnet/tensor.hpp"

// CIFAR-10/100 binary ingestion, augmentation, normalization, batching, and a
// synthetic quadrant dataset for fast desk-scale runs.

namespace pydnet {

constexpr int kImageHW = 32;
constexpr int kImageChannels = 3;
constexpr int kImageBytes = kImageChannels * kImageHW * kImageHW;  // 3072

enum class DatasetKind { Cifar10, Cifar100 };
enum class Split { Train, Test };

inline int classes_for(DatasetKind kind) { return kind == DatasetKind::Cifar10 ? 10 : 100; }
// CIFAR-10 records: label byte + 3072 pixel bytes. CIFAR-100 records carry a
// coarse label byte first; we keep the fine label.
inline size_t record_bytes(DatasetKind kind) {
    return kind == DatasetKind::Cifar10 ? 1 + kImageBytes : 2 + kImageBytes;
}

// Pixels are channel-major (all R, then G, then B), row-major within a
// channel: index = c*1024 + y*32 + x. Exactly the on-disk order.
struct LabeledImage {
    std::uint8_t label = 0;
    std::array<std::uint8_t, kImageBytes> pixels{};

    std::uint8_t at(int c, int y, int x) const {
        return pixels[static_cast<size_t>(c) * kImageHW * kImageHW +
                      static_cast<size_t>(y) * kImageHW + static_cast<size_t>(x)];
    }
    std::uint8_t& at(int c, int y, int x) {
        return pixels[static_cast<size_t>(c) * kImageHW * kImageHW +
                      static_cast<size_t>(y) * kImageHW + static_cast<size_t>(x)];
    }
    bool operator==(const LabeledImage&) const = default;
};

// Binary record layout round-trip. decode throws on labels outside the
// dataset's class range.
std::vector<std::uint8_t> encode_record(const LabeledImage& img, DatasetKind kind);
LabeledImage decode_record(const std::uint8_t* record, DatasetKind kind);

// Loads one split. CIFAR-10 expects data_batch_1.bin .. data_batch_5.bin and
// test_batch.bin under dir; CIFAR-100 expects train.bin / test.bin. Throws
// std::runtime_error naming the offending file on missing files, sizes that
// are not a whole number of records, or empty files.
std::vector<LabeledImage> load_cifar(const std::string& dir, DatasetKind kind, Split split);

// Writes images in the exact on-disk record layout (used by tests and tools
// to fabricate datasets).
void write_cifar_file(const std::string& path, const std::vector<LabeledImage>& images,
                      DatasetKind kind);

// Per-channel normalization constants in [0,1] intensity scale.
struct NormConstants {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
};

// Population mean/std of byte/255 per channel over the training split.
// A degenerate (constant) channel gets stddev clamped to 1e-6.
NormConstants compute_norm_constants(const std::vector<LabeledImage>& train);
// Cache format: six decimal numbers, one per line (3 means then 3 stds).
void save_norm_constants(const std::string& path, const NormConstants& nc);
NormConstants load_norm_constants(const std::string& path);

// dst receives 3*32*32 floats in channel-major order: (byte/255 - mean)/std.
void normalize_into(const LabeledImage& img, const NormConstants& nc, float* dst);
// Inverse map back to [0,1] intensity: x*std + mean.
void denormalize_into(const float* src, const NormConstants& nc, double* dst);

LabeledImage flip_horizontal(const LabeledImage& img);
// Zero-pads 4 pixels on every side (virtual 40x40 canvas) and crops the 32x32
// window whose top-left corner is (off_y, off_x) in padded coordinates,
// off in [0,8]. Offset (4,4) is the identity.
LabeledImage pad4_crop(const LabeledImage& img, int off_y, int off_x);

// Training-time transform. Draw order is fixed: flip coin, then off_y, then
// off_x, so a stream's byte-exact content is determined by the rng seed.
void augment_into(const LabeledImage& img, SeededRng& rng, const NormConstants& nc, float* dst);

// Fast-training fixture: the label names the quadrant (0 top-left, 1
// top-right, 2 bottom-left, 3 bottom-right) holding a bright 12x12 patch.
// Background bytes are < 64 and patch bytes >= 192, so the patch is strictly
// brighter. classes in [2,4]; labels drawn uniformly.
std::vector<LabeledImage> synthetic_quadrants(int n, int classes, SeededRng& rng);

struct Batch {
    Tensor<float> images;     // (n, 3, 32, 32) normalized floats
    std::vector<int> labels;  // n entries
};

// One epoch over a dataset split. Training streams (shuffle=true) visit a
// Fisher-Yates permutation drawn from the shuffle seed and drop a final
// partial batch; eval streams keep source order and keep the partial batch.
// Augmentation (when on) consumes one rng stream in visit order under the
// augmentation seed; otherwise images are normalized only. The seed pair
// fully determines the byte-exact stream. Batches are produced sequentially
// on the calling thread, so delivery order equals the seeded logical order.
class BatchStream {
  public:
    BatchStream(const std::vector<LabeledImage>* data, int batch_size, NormConstants nc,
                bool shuffle, bool augment, std::uint64_t shuffle_seed,
                std::uint64_t augment_seed);

    std::optional<Batch> next();
    size_t batch_count() const;
    void rewind(std::uint64_t shuffle_seed, std::uint64_t augment_seed);

  private:
    const std::vector<LabeledImage>* data_;
    int batch_size_;
    NormConstants nc_;
    bool shuffle_;
    bool augment_;
    std::vector<std::uint32_t> order_;
    size_t cursor_ = 0;
    SeededRng augment_rng_{0};
};

}  // namespace pydnet
