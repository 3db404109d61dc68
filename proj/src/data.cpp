#include "pydnet/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace pydnet {

std::vector<std::uint8_t> encode_record(const LabeledImage& img, DatasetKind kind) {
    std::vector<std::uint8_t> rec;
    rec.reserve(record_bytes(kind));
    if (kind == DatasetKind::Cifar100) rec.push_back(0);  // coarse label, not modeled
    rec.push_back(img.label);
    rec.insert(rec.end(), img.pixels.begin(), img.pixels.end());
    return rec;
}

LabeledImage decode_record(const std::uint8_t* record, DatasetKind kind) {
    LabeledImage img;
    const std::uint8_t label = kind == DatasetKind::Cifar100 ? record[1] : record[0];
    if (label >= classes_for(kind)) {
        throw std::runtime_error("cifar record label " + std::to_string(int(label)) +
                                 " out of range for " +
                                 (kind == DatasetKind::Cifar10 ? std::string("cifar10")
                                                               : std::string("cifar100")));
    }
    img.label = label;
    const std::uint8_t* px = record + (kind == DatasetKind::Cifar100 ? 2 : 1);
    std::copy(px, px + kImageBytes, img.pixels.begin());
    return img;
}

namespace {

std::vector<LabeledImage> load_cifar_file(const std::string& path, DatasetKind kind) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("missing dataset file: " + path);
    const std::streamoff size = in.tellg();
    const size_t rec = record_bytes(kind);
    if (size <= 0) throw std::runtime_error("empty dataset file: " + path);
    if (static_cast<size_t>(size) % rec != 0) {
        throw std::runtime_error("truncated dataset file (size " + std::to_string(size) +
                                 " is not a multiple of " + std::to_string(rec) +
                                 "-byte records): " + path);
    }
    in.seekg(0);
    std::vector<std::uint8_t> raw(static_cast<size_t>(size));
    if (!in.read(reinterpret_cast<char*>(raw.data()), size)) {
        throw std::runtime_error("short read on dataset file: " + path);
    }
    const size_t count = raw.size() / rec;
    std::vector<LabeledImage> images;
    images.reserve(count);
    for (size_t i = 0; i < count; ++i) images.push_back(decode_record(raw.data() + i * rec, kind));
    return images;
}

}  // namespace

std::vector<LabeledImage> load_cifar(const std::string& dir, DatasetKind kind, Split split) {
    std::vector<LabeledImage> images;
    if (kind == DatasetKind::Cifar10) {
        if (split == Split::Train) {
            for (int b = 1; b <= 5; ++b) {
                auto part =
                    load_cifar_file(dir + "/data_batch_" + std::to_string(b) + ".bin", kind);
                images.insert(images.end(), part.begin(), part.end());
            }
        } else {
            images = load_cifar_file(dir + "/test_batch.bin", kind);
        }
    } else {
        images = load_cifar_file(dir + (split == Split::Train ? "/train.bin" : "/test.bin"), kind);
    }
    return images;
}

void write_cifar_file(const std::string& path, const std::vector<LabeledImage>& images,
                      DatasetKind kind) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    for (const LabeledImage& img : images) {
        const auto rec = encode_record(img, kind);
        out.write(reinterpret_cast<const char*>(rec.data()),
                  static_cast<std::streamsize>(rec.size()));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

NormConstants compute_norm_constants(const std::vector<LabeledImage>& train) {
    if (train.empty()) throw std::invalid_argument("norm constants need a non-empty split");
    NormConstants nc;
    const size_t plane = static_cast<size_t>(kImageHW) * kImageHW;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (const LabeledImage& img : train) {
            const std::uint8_t* px = img.pixels.data() + static_cast<size_t>(c) * plane;
            for (size_t i = 0; i < plane; ++i) {
                const double x = px[i] / 255.0;
                sum += x;
                sum_sq += x * x;
            }
        }
        const double n = static_cast<double>(train.size()) * static_cast<double>(plane);
        const double mean = sum / n;
        const double var = std::max(0.0, sum_sq / n - mean * mean);
        nc.mean[c] = mean;
        nc.stddev[c] = std::max(std::sqrt(var), 1e-6);
    }
    return nc;
}

void save_norm_constants(const std::string& path, const NormConstants& nc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    char buf[64];
    for (int c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", nc.mean[c]);
        out << buf;
    }
    for (int c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", nc.stddev[c]);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

NormConstants load_norm_constants(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing normalization cache: " + path);
    NormConstants nc;
    for (int c = 0; c < 3; ++c) {
        if (!(in >> nc.mean[c])) throw std::runtime_error("bad normalization cache: " + path);
    }
    for (int c = 0; c < 3; ++c) {
        if (!(in >> nc.stddev[c]) || nc.stddev[c] <= 0.0) {
            throw std::runtime_error("bad normalization cache: " + path);
        }
    }
    return nc;
}

void normalize_into(const LabeledImage& img, const NormConstants& nc, float* dst) {
    const size_t plane = static_cast<size_t>(kImageHW) * kImageHW;
    for (int c = 0; c < 3; ++c) {
        const double mean = nc.mean[c];
        const double inv_std = 1.0 / nc.stddev[c];
        const std::uint8_t* px = img.pixels.data() + static_cast<size_t>(c) * plane;
        float* out = dst + static_cast<size_t>(c) * plane;
        for (size_t i = 0; i < plane; ++i) {
            out[i] = static_cast<float>((px[i] / 255.0 - mean) * inv_std);
        }
    }
}

void denormalize_into(const float* src, const NormConstants& nc, double* dst) {
    const size_t plane = static_cast<size_t>(kImageHW) * kImageHW;
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < plane; ++i) {
            const size_t at = static_cast<size_t>(c) * plane + i;
            dst[at] = static_cast<double>(src[at]) * nc.stddev[c] + nc.mean[c];
        }
    }
}

LabeledImage flip_horizontal(const LabeledImage& img) {
    LabeledImage out;
    out.label = img.label;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < kImageHW; ++y) {
            for (int x = 0; x < kImageHW; ++x) out.at(c, y, x) = img.at(c, y, kImageHW - 1 - x);
        }
    }
    return out;
}

LabeledImage pad4_crop(const LabeledImage& img, int off_y, int off_x) {
    if (off_y < 0 || off_y > 8 || off_x < 0 || off_x > 8) {
        throw std::invalid_argument("crop offset out of range [0,8]");
    }
    LabeledImage out;
    out.label = img.label;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < kImageHW; ++y) {
            const int sy = y + off_y - 4;
            for (int x = 0; x < kImageHW; ++x) {
                const int sx = x + off_x - 4;
                const bool inside = sy >= 0 && sy < kImageHW && sx >= 0 && sx < kImageHW;
                out.at(c, y, x) = inside ? img.at(c, sy, sx) : std::uint8_t{0};
            }
        }
    }
    return out;
}

void augment_into(const LabeledImage& img, SeededRng& rng, const NormConstants& nc, float* dst) {
    const bool flip = rng.coin();
    const int off_y = static_cast<int>(rng.below(9));
    const int off_x = static_cast<int>(rng.below(9));
    LabeledImage work = flip ? flip_horizontal(img) : img;
    work = pad4_crop(work, off_y, off_x);
    normalize_into(work, nc, dst);
}

std::vector<LabeledImage> synthetic_quadrants(int n, int classes, SeededRng& rng) {
    if (n <= 0) throw std::invalid_argument("synthetic_quadrants: n must be positive");
    if (classes < 2 || classes > 4) {
        throw std::invalid_argument("synthetic_quadrants: classes must be in [2,4]");
    }
    std::vector<LabeledImage> images;
    images.reserve(static_cast<size_t>(n));
    constexpr int kPatch = 12;
    for (int i = 0; i < n; ++i) {
        LabeledImage img;
        img.label = static_cast<std::uint8_t>(rng.below(static_cast<uint64_t>(classes)));
        for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng.below(64));
        const int qy = (img.label / 2) * 16;  // 0,1 top row; 2,3 bottom row
        const int qx = (img.label % 2) * 16;
        const int jy = static_cast<int>(rng.below(16 - kPatch + 1));
        const int jx = static_cast<int>(rng.below(16 - kPatch + 1));
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < kPatch; ++y) {
                for (int x = 0; x < kPatch; ++x) {
                    img.at(c, qy + jy + y, qx + jx + x) =
                        static_cast<std::uint8_t>(192 + rng.below(64));
                }
            }
        }
        images.push_back(img);
    }
    return images;
}

BatchStream::BatchStream(const std::vector<LabeledImage>* data, int batch_size, NormConstants nc,
                         bool shuffle, bool augment, std::uint64_t shuffle_seed,
                         std::uint64_t augment_seed)
    : data_(data), batch_size_(batch_size), nc_(nc), shuffle_(shuffle), augment_(augment) {
    if (data_ == nullptr || data_->empty()) throw std::invalid_argument("batch stream: no data");
    if (batch_size_ <= 0) throw std::invalid_argument("batch stream: batch size must be positive");
    rewind(shuffle_seed, augment_seed);
}

void BatchStream::rewind(std::uint64_t shuffle_seed, std::uint64_t augment_seed) {
    order_.resize(data_->size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (shuffle_) {
        SeededRng shuffle(shuffle_seed);
        for (size_t i = order_.size() - 1; i > 0; --i) {
            const size_t j = shuffle.below(i + 1);
            std::swap(order_[i], order_[j]);
        }
    }
    augment_rng_ = SeededRng(augment_seed);
    cursor_ = 0;
}

size_t BatchStream::batch_count() const {
    const size_t n = data_->size();
    const size_t b = static_cast<size_t>(batch_size_);
    return shuffle_ ? n / b : (n + b - 1) / b;  // training drops the partial tail
}

std::optional<Batch> BatchStream::next() {
    const size_t n = data_->size();
    const size_t remaining = n - cursor_;
    const size_t want = static_cast<size_t>(batch_size_);
    size_t take = 0;
    if (shuffle_) {
        if (remaining < want) return std::nullopt;
        take = want;
    } else {
        if (remaining == 0) return std::nullopt;
        take = std::min(remaining, want);
    }
    Batch batch;
    batch.images = Tensor<float>(static_cast<int>(take), kImageChannels, kImageHW, kImageHW);
    batch.labels.resize(take);
    for (size_t i = 0; i < take; ++i) {
        const LabeledImage& img = (*data_)[order_[cursor_ + i]];
        float* dst = batch.images.plane(static_cast<int>(i), 0);
        if (augment_) {
            augment_into(img, augment_rng_, nc_, dst);
        } else {
            normalize_into(img, nc_, dst);
        }
        batch.labels[i] = img.label;
    }
    cursor_ += take;
    return batch;
}

}  // namespace pydnet
