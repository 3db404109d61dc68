#include "pydnet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "pydnet/model_names.hpp"
#include "pydnet/ops.hpp"

namespace pydnet {

void TrainConfig::validate() const {
    if (epochs <= 0) throw std::invalid_argument("config: epochs must be positive");
    if (base_lr <= 0.0) throw std::invalid_argument("config: base_lr must be positive");
    if (lr_drop_factor <= 0.0) throw std::invalid_argument("config: lr_drop_factor must be positive");
    if (momentum < 0.0) throw std::invalid_argument("config: momentum must be non-negative");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be non-negative");
    if (batch_size <= 0) throw std::invalid_argument("config: batch_size must be positive");
    if (mixup_alpha <= 0.0) throw std::invalid_argument("config: mixup_alpha must be positive");
    if (checkpoint_every <= 0) throw std::invalid_argument("config: checkpoint_every must be positive");
    if (synthetic_train <= 0 || synthetic_test <= 0)
        throw std::invalid_argument("config: synthetic dataset sizes must be positive");
    int prev = -1;
    for (int e : lr_drop_epochs) {
        if (e <= prev) throw std::invalid_argument("config: lr_drop_epochs must be strictly increasing");
        if (e >= epochs) throw std::invalid_argument("config: lr_drop_epochs must be below epochs");
        prev = e;
    }
    if (dataset != "cifar10" && dataset != "cifar100" && dataset != "synthetic")
        throw std::invalid_argument("config: dataset must be cifar10, cifar100, or synthetic");
}

double lr_at(int epoch, const TrainConfig& cfg) {
    double lr = cfg.base_lr;
    for (int drop : cfg.lr_drop_epochs) {
        if (epoch >= drop) lr *= cfg.lr_drop_factor;
    }
    return lr;
}

OptimizerState::OptimizerState(const std::vector<ParamRef<float>>& params) {
    names.reserve(params.size());
    velocity.reserve(params.size());
    for (const auto& p : params) {
        names.push_back(p.name);
        velocity.emplace_back(p.size, 0.0f);
    }
}

void nag_step(const std::vector<ParamRef<float>>& params, OptimizerState& state, double lr,
              double momentum, double weight_decay) {
    if (params.size() != state.velocity.size())
        throw std::invalid_argument("optimizer step: parameter count mismatch");
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const ParamRef<float>& p = params[pi];
        std::vector<float>& v = state.velocity[pi];
        if (v.size() != p.size)
            throw std::invalid_argument("optimizer step: velocity shape mismatch for " + p.name);
        if (p.grad == nullptr)
            throw std::invalid_argument("optimizer step: parameter without gradient: " + p.name);
        for (size_t i = 0; i < p.size; ++i) {
            const float decayed = p.grad[i] + static_cast<float>(weight_decay) * p.value[i];
            v[i] = static_cast<float>(momentum) * v[i] + decayed;
            p.value[i] -= static_cast<float>(lr) * (decayed + static_cast<float>(momentum) * v[i]);
        }
    }
}

namespace {

int argmax_class(const float* row, int classes) {
    int best = 0;
    for (int k = 1; k < classes; ++k) {
        if (row[k] > row[best]) best = k;
    }
    return best;
}

}  // namespace

EpochStats train_epoch(Network<float>& net, const std::vector<LabeledImage>& train,
                       const NormConstants& nc, const TrainConfig& cfg, OptimizerState& opt,
                       int epoch) {
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
    BatchStream stream(&train, cfg.batch_size, nc, /*shuffle=*/true, /*augment=*/cfg.augment,
                       derive_seed(epoch_seed, "shuffle"), derive_seed(epoch_seed, "augment"));
    SeededRng mixup_rng(derive_seed(epoch_seed, "mixup"));
    const double lr = lr_at(epoch, cfg);

    double loss_sum = 0.0;
    size_t steps = 0, seen = 0, wrong = 0;
    while (auto batch = stream.next()) {
        const int n = batch->images.n();
        Tensor<float> input = std::move(batch->images);
        std::vector<int> labels_primary = std::move(batch->labels);
        std::vector<int> labels_partner;
        double lam = 1.0;
        if (cfg.mixup) {
            // Pair each sample with a shuffled partner: x = lam*x_i +
            // (1-lam)*x_j, loss = lam*CE(y_i) + (1-lam)*CE(y_j). Training
            // error is still measured against the primary labels.
            lam = mixup_rng.beta_symmetric(cfg.mixup_alpha);
            std::vector<int> partner(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) partner[static_cast<size_t>(i)] = i;
            for (int i = n - 1; i > 0; --i) {
                const int j = static_cast<int>(mixup_rng.below(static_cast<uint64_t>(i) + 1));
                std::swap(partner[static_cast<size_t>(i)], partner[static_cast<size_t>(j)]);
            }
            Tensor<float> mixed(input.n(), input.c(), input.h(), input.w());
            const size_t item = input.numel() / static_cast<size_t>(n);
            labels_partner.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const size_t pi = static_cast<size_t>(partner[static_cast<size_t>(i)]);
                const float* xi = input.data() + static_cast<size_t>(i) * item;
                const float* xj = input.data() + pi * item;
                float* out = mixed.data() + static_cast<size_t>(i) * item;
                for (size_t t = 0; t < item; ++t) {
                    out[t] =
                        static_cast<float>(lam) * xi[t] + static_cast<float>(1.0 - lam) * xj[t];
                }
                labels_partner[static_cast<size_t>(i)] = labels_primary[pi];
            }
            input = std::move(mixed);
        }

        net.zero_grad();
        const Tensor<float> logits = net.forward(input, Mode::Train);
        double loss = 0.0;
        Tensor<float> dlogits;
        if (cfg.mixup) {
            auto [loss_i, d_i] = softmax_cross_entropy(logits, labels_primary);
            auto [loss_j, d_j] = softmax_cross_entropy(logits, labels_partner);
            loss = lam * loss_i + (1.0 - lam) * loss_j;
            dlogits = std::move(d_i);
            for (size_t t = 0; t < dlogits.numel(); ++t) {
                dlogits.data()[t] = static_cast<float>(lam) * dlogits.data()[t] +
                                    static_cast<float>(1.0 - lam) * d_j.data()[t];
            }
        } else {
            auto [l, d] = softmax_cross_entropy(logits, labels_primary);
            loss = l;
            dlogits = std::move(d);
        }
        if (!std::isfinite(loss)) {
            throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                     ", step " + std::to_string(steps) + ", lr " +
                                     std::to_string(lr));
        }
        for (int i = 0; i < n; ++i) {
            if (argmax_class(logits.plane(i, 0), logits.c()) !=
                labels_primary[static_cast<size_t>(i)]) {
                ++wrong;
            }
        }
        seen += static_cast<size_t>(n);
        net.backward(dlogits);
        nag_step(net.params(), opt, lr, cfg.momentum, cfg.weight_decay);
        loss_sum += loss;
        ++steps;
    }
    if (steps == 0) throw std::runtime_error("training epoch produced no full batches");
    return {loss_sum / static_cast<double>(steps),
            static_cast<double>(wrong) / static_cast<double>(seen)};
}

double evaluate(Network<float>& net, const std::vector<LabeledImage>& test,
                const NormConstants& nc, int batch_size) {
    BatchStream stream(&test, batch_size, nc, /*shuffle=*/false, /*augment=*/false, 0, 0);
    size_t wrong = 0, seen = 0;
    while (auto batch = stream.next()) {
        Tensor<float> logits = net.forward(batch->images, Mode::Eval);
        for (int i = 0; i < logits.n(); ++i) {
            if (argmax_class(logits.plane(i, 0), logits.c()) != batch->labels[static_cast<size_t>(i)])
                ++wrong;
        }
        seen += batch->labels.size();
    }
    return static_cast<double>(wrong) / static_cast<double>(seen);
}

// -------------------------- checkpoint container ---------------------------

namespace {

constexpr char kMagic[4] = {'P', 'Y', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::uint8_t* p;
    size_t remaining;
    const std::string& path;

    void need(size_t n) const {
        if (remaining < n)
            throw std::runtime_error("corrupted checkpoint (truncated record): " + path);
    }
    std::uint32_t u32() {
        need(4);
        const std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                                (static_cast<std::uint32_t>(p[1]) << 8) |
                                (static_cast<std::uint32_t>(p[2]) << 16) |
                                (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        remaining -= 4;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        remaining -= n;
        return s;
    }
    void f32_block(float* dst, size_t count) {
        need(count * 4);
        for (size_t i = 0; i < count; ++i) {
            const std::uint32_t bits = static_cast<std::uint32_t>(p[4 * i]) |
                                       (static_cast<std::uint32_t>(p[4 * i + 1]) << 8) |
                                       (static_cast<std::uint32_t>(p[4 * i + 2]) << 16) |
                                       (static_cast<std::uint32_t>(p[4 * i + 3]) << 24);
            std::memcpy(dst + i, &bits, 4);
        }
        p += count * 4;
        remaining -= count * 4;
    }
};

void append_tensor_record(std::string& out, const std::string& name, const std::vector<int>& dims,
                          const float* values, size_t count) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, kDtypeF32);
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (size_t i = 0; i < count; ++i) put_f32(out, values[i]);
}

struct LoadedTensor {
    std::vector<int> dims;
    std::vector<float> values;
};

std::map<std::string, LoadedTensor, std::less<>> parse_checkpoint(const std::string& path,
                                                                  std::string& model_name,
                                                                  int& epoch) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("missing checkpoint: " + path);
    const std::streamoff size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> raw(static_cast<size_t>(std::max<std::streamoff>(size, 0)));
    if (!raw.empty() && !in.read(reinterpret_cast<char*>(raw.data()), size))
        throw std::runtime_error("short read on checkpoint: " + path);
    Reader r{raw.data(), raw.size(), path};
    r.need(4);
    if (std::memcmp(r.p, kMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic (not a PYDN file): " + path);
    r.p += 4;
    r.remaining -= 4;
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                                 ": " + path);
    model_name = r.str(r.u32());
    epoch = static_cast<int>(r.u32());
    std::map<std::string, LoadedTensor, std::less<>> tensors;
    while (r.remaining > 0) {
        const std::string name = r.str(r.u32());
        const std::uint32_t dtype = r.u32();
        if (dtype != kDtypeF32)
            throw std::runtime_error("unsupported tensor dtype in checkpoint: " + path);
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw std::runtime_error("corrupted checkpoint (bad rank): " + path);
        LoadedTensor t;
        size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint32_t d = r.u32();
            if (d == 0 || d > (1u << 24))
                throw std::runtime_error("corrupted checkpoint (bad dimension): " + path);
            t.dims.push_back(static_cast<int>(d));
            count *= d;
        }
        t.values.resize(count);
        r.f32_block(t.values.data(), count);
        if (!tensors.emplace(name, std::move(t)).second)
            throw std::runtime_error("corrupted checkpoint (duplicate tensor " + name + "): " + path);
    }
    return tensors;
}

void fill_from(const std::map<std::string, LoadedTensor, std::less<>>& tensors,
               const std::string& name, const std::vector<int>& dims, float* dst, size_t count,
               const std::string& path) {
    const auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::runtime_error("checkpoint is missing tensor " + name + ": " + path);
    if (it->second.dims != dims || it->second.values.size() != count)
        throw std::runtime_error("checkpoint tensor " + name + " has mismatched shape: " + path);
    std::copy(it->second.values.begin(), it->second.values.end(), dst);
}

}  // namespace

void checkpoint_save(Network<float>& net, const OptimizerState* opt, const std::string& path,
                     int epoch, const NormConstants* nc) {
    const std::string name = canonical_model_name(net.config());
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(epoch));
    const auto params = net.params();
    for (const auto& p : params) append_tensor_record(out, p.name, p.dims, p.value, p.size);
    for (const auto& s : net.state()) append_tensor_record(out, s.name, s.dims, s.value, s.size);
    if (opt != nullptr) {
        for (size_t i = 0; i < params.size(); ++i) {
            append_tensor_record(out, "opt." + opt->names[i], params[i].dims,
                                 opt->velocity[i].data(), opt->velocity[i].size());
        }
    }
    if (nc != nullptr) {
        float six[6];
        for (int c = 0; c < 3; ++c) {
            six[c] = static_cast<float>(nc->mean[static_cast<size_t>(c)]);
            six[c + 3] = static_cast<float>(nc->stddev[static_cast<size_t>(c)]);
        }
        append_tensor_record(out, "norm.constants", {6}, six, 6);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

int checkpoint_load(Network<float>& net, OptimizerState* opt, const std::string& path) {
    std::string stored_name;
    int epoch = 0;
    const auto tensors = parse_checkpoint(path, stored_name, epoch);
    const std::string expect = canonical_model_name(net.config());
    if (stored_name != expect) {
        throw std::runtime_error("checkpoint was written for model " + stored_name +
                                 " but the target network is " + expect + ": " + path);
    }
    // Validate every record against the live model before mutating anything,
    // so a bad file can never leave a partially-loaded network.
    const auto params = net.params();
    const auto state = net.state();
    for (const auto& p : params) {
        const auto it = tensors.find(p.name);
        if (it == tensors.end())
            throw std::runtime_error("checkpoint is missing tensor " + p.name + ": " + path);
        if (it->second.dims != p.dims || it->second.values.size() != p.size)
            throw std::runtime_error("checkpoint tensor " + p.name + " has mismatched shape: " + path);
    }
    for (const auto& s : state) {
        const auto it = tensors.find(s.name);
        if (it == tensors.end())
            throw std::runtime_error("checkpoint is missing tensor " + s.name + ": " + path);
        if (it->second.dims != s.dims || it->second.values.size() != s.size)
            throw std::runtime_error("checkpoint tensor " + s.name + " has mismatched shape: " + path);
    }
    if (opt != nullptr) {
        if (opt->velocity.size() != params.size())
            throw std::runtime_error("optimizer state does not match the network");
        for (size_t i = 0; i < params.size(); ++i) {
            const std::string vname = "opt." + opt->names[i];
            const auto it = tensors.find(vname);
            if (it == tensors.end())
                throw std::runtime_error("checkpoint is missing tensor " + vname + ": " + path);
            if (it->second.dims != params[i].dims ||
                it->second.values.size() != opt->velocity[i].size())
                throw std::runtime_error("checkpoint tensor " + vname + " has mismatched shape: " +
                                         path);
        }
    }
    for (const auto& p : params) fill_from(tensors, p.name, p.dims, p.value, p.size, path);
    for (const auto& s : state) fill_from(tensors, s.name, s.dims, s.value, s.size, path);
    if (opt != nullptr) {
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& src = tensors.at("opt." + opt->names[i]);
            std::copy(src.values.begin(), src.values.end(), opt->velocity[i].data());
        }
    }
    return epoch;
}

std::string checkpoint_model_name(const std::string& path) {
    std::string name;
    int epoch = 0;
    parse_checkpoint(path, name, epoch);
    return name;
}

bool checkpoint_norm_constants(const std::string& path, NormConstants& nc) {
    std::string name;
    int epoch = 0;
    const auto tensors = parse_checkpoint(path, name, epoch);
    const auto it = tensors.find("norm.constants");
    if (it == tensors.end()) return false;
    if (it->second.values.size() != 6)
        throw std::runtime_error("checkpoint tensor norm.constants has mismatched shape: " + path);
    for (int c = 0; c < 3; ++c) {
        nc.mean[static_cast<size_t>(c)] = it->second.values[static_cast<size_t>(c)];
        nc.stddev[static_cast<size_t>(c)] = it->second.values[static_cast<size_t>(c) + 3];
    }
    return true;
}

void append_metrics_row(const std::string& path, int epoch, double lr, const EpochStats& train,
                        double test_err, double seconds) {
    std::error_code ec;
    const bool fresh =
        !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open metrics file: " + path);
    std::string row;
    if (fresh) row = "epoch,lr,train_loss,train_err,test_err,seconds\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.6g,%.8f,%.6f,%.6f,%.3f\n", epoch, lr, train.loss,
                  train.error, test_err, seconds);
    row += buf;
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

FitResult fit(const TrainConfig& cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume_checkpoint, std::ostream* log) {
    cfg.validate();

    std::vector<LabeledImage> train_set, test_set;
    int classes = 0;
    if (cfg.dataset == "synthetic") {
        // Independent derived seeds so an evaluator can rebuild the test
        // split without knowing the training split size.
        SeededRng train_rng(derive_seed(cfg.seed, "data-train"));
        SeededRng test_rng(derive_seed(cfg.seed, "data-test"));
        train_set = synthetic_quadrants(cfg.synthetic_train, 4, train_rng);
        test_set = synthetic_quadrants(cfg.synthetic_test, 4, test_rng);
        classes = 4;
    } else {
        const DatasetKind kind =
            cfg.dataset == "cifar10" ? DatasetKind::Cifar10 : DatasetKind::Cifar100;
        train_set = load_cifar(data_dir, kind, Split::Train);
        test_set = load_cifar(data_dir, kind, Split::Test);
        classes = classes_for(kind);
    }

    const std::string norm_path = out_dir + "/norm.txt";
    NormConstants nc;
    if (std::ifstream(norm_path).good()) {
        nc = load_norm_constants(norm_path);
    } else {
        nc = compute_norm_constants(train_set);
        save_norm_constants(norm_path, nc);
    }

    NetworkConfig net_cfg = parse_model_name(cfg.model, classes);
    SeededRng init_rng(derive_seed(cfg.seed, "init"));
    auto net = build_network<float>(net_cfg, init_rng);
    OptimizerState opt(net->params());

    int start_epoch = 0;
    if (!resume_checkpoint.empty()) {
        start_epoch = checkpoint_load(*net, &opt, resume_checkpoint) + 1;
        if (log) *log << "resumed from " << resume_checkpoint << " at epoch " << start_epoch << "\n";
    }

    FitResult result;
    result.metrics_csv = out_dir + "/metrics.csv";
    const auto clock_seconds = [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
            .count();
    };
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double t0 = cfg.timing ? clock_seconds() : 0.0;
        const EpochStats stats = train_epoch(*net, train_set, nc, cfg, opt, epoch);
        const double test_err = evaluate(*net, test_set, nc, cfg.batch_size);
        const double seconds = cfg.timing ? clock_seconds() - t0 : 0.0;
        append_metrics_row(result.metrics_csv, epoch, lr_at(epoch, cfg), stats, test_err, seconds);
        if (log) {
            *log << "epoch " << epoch << " lr " << lr_at(epoch, cfg) << " loss " << stats.loss
                 << " train_err " << stats.error << " test_err " << test_err << "\n";
        }
        result.final_test_error = test_err;
        result.epochs_run = epoch + 1;
        if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs) {
            checkpoint_save(*net, &opt, out_dir + "/latest.ckpt", epoch, &nc);
        }
    }
    result.final_checkpoint = out_dir + "/final.ckpt";
    checkpoint_save(*net, &opt, result.final_checkpoint, cfg.epochs - 1, &nc);
    return result;
}

}  // namespace pydnet
