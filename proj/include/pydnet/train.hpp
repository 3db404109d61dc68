#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pydnet/data.hpp"
#include "pydnet/network.hpp"

// SGD with Nesterov momentum, the step learning-rate schedule, train/eval
// loops, checkpointing, and metrics emission.

namespace pydnet {

struct TrainConfig {
    std::string model = "PydMobileNet-Add-29-1";
    std::string dataset = "cifar10";  // cifar10 | cifar100 | synthetic
    int epochs = 320;
    double base_lr = 0.1;
    std::vector<int> lr_drop_epochs = {150, 225};
    double lr_drop_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 128;
    std::uint64_t seed = 1;
    bool mixup = false;
    double mixup_alpha = 0.2;
    bool augment = true;
    // When false the metrics CSV's seconds column is written as 0.000, making
    // identically-seeded runs byte-identical.
    bool timing = true;
    int checkpoint_every = 50;
    int synthetic_train = 2048;  // synthetic dataset sizes
    int synthetic_test = 512;

    // Throws std::invalid_argument on non-positive fields or drop epochs that
    // are not strictly increasing and below epochs.
    void validate() const;
};

// Piecewise-constant schedule: base_lr before the first drop epoch, multiplied
// by lr_drop_factor at each drop epoch (inclusive: the drop applies from the
// start of the named epoch).
double lr_at(int epoch, const TrainConfig& cfg);

// One velocity buffer per trainable parameter, zero-initialized, in the
// order/naming of Network::params().
struct OptimizerState {
    std::vector<std::string> names;
    std::vector<std::vector<float>> velocity;

    explicit OptimizerState(const std::vector<ParamRef<float>>& params);
};

// Nesterov momentum in the practical form:
//   g' = g + weight_decay * theta
//   v  = momentum * v + g'
//   theta -= lr * (g' + momentum * v)
// Weight decay applies to every trainable parameter, batch-norm scale/shift
// and classifier bias included. Scalar recurrence, exactly testable.
void nag_step(const std::vector<ParamRef<float>>& params, OptimizerState& state, double lr,
              double momentum, double weight_decay);

struct EpochStats {
    double loss = 0.0;   // mean cross-entropy over steps
    double error = 0.0;  // fraction of training samples misclassified
};

// One shuffled, augmented pass with batch-norm in Train mode. Per-epoch
// shuffle/augment/mixup seeds derive from (cfg.seed, epoch), so a resumed run
// replays the identical stream. Throws std::runtime_error with the step index
// and lr when the loss turns non-finite.
EpochStats train_epoch(Network<float>& net, const std::vector<LabeledImage>& train,
                       const NormConstants& nc, const TrainConfig& cfg, OptimizerState& opt,
                       int epoch);

// Top-1 error with batch-norm in Eval mode and no augmentation.
double evaluate(Network<float>& net, const std::vector<LabeledImage>& test,
                const NormConstants& nc, int batch_size);

// Checkpoint container: magic "PYDN", u32 LE version, model-name string,
// u32 LE epoch, then per-tensor records (u32 name length + name bytes + u32
// dtype tag (1 = f32) + u32 rank + u32 dims + raw little-endian f32 payload).
// Stores parameters, batch-norm running statistics, optionally the optimizer
// velocities under "opt." names, and optionally the normalization constants
// as a 6-element record so evaluation is self-contained.
void checkpoint_save(Network<float>& net, const OptimizerState* opt, const std::string& path,
                     int epoch, const NormConstants* nc = nullptr);
// Validates the whole file before touching the model: magic/version mismatch,
// a model name differing from net's canonical name, unknown or missing tensor
// names, shape mismatches, and truncated payloads all throw with nothing
// partially loaded. Returns the stored epoch. opt may be null (evaluation-
// only load); when non-null the file must carry matching velocity records.
int checkpoint_load(Network<float>& net, OptimizerState* opt, const std::string& path);
// Reads just the model-name string from a checkpoint header.
std::string checkpoint_model_name(const std::string& path);
// Reads the stored normalization constants; false when the record is absent.
bool checkpoint_norm_constants(const std::string& path, NormConstants& nc);

// Metrics CSV: header "epoch,lr,train_loss,train_err,test_err,seconds",
// one row per epoch, each row flushed as a single write.
void append_metrics_row(const std::string& path, int epoch, double lr, const EpochStats& train,
                        double test_err, double seconds);

struct FitResult {
    double final_test_error = 1.0;
    int epochs_run = 0;
    std::string final_checkpoint;
    std::string metrics_csv;
};

// Full training driver: loads (or fabricates) the dataset, builds the model,
// optionally resumes, then runs train/eval epochs with periodic checkpoints
// ("latest.ckpt" every checkpoint_every epochs, "final.ckpt" at the end) and
// metrics rows in out_dir/metrics.csv. log may be null for silence.
FitResult fit(const TrainConfig& cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume_checkpoint, std::ostream* log);

}  // namespace pydnet
