#include "pydnet/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pydnet {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
    size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": not an integer: " + value);
    }
    if (pos != value.size())
        throw std::invalid_argument("config key " + key + ": not an integer: " + value);
    return v;
}

double parse_double(const std::string& key, const std::string& value) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": not a number: " + value);
    }
    if (pos != value.size())
        throw std::invalid_argument("config key " + key + ": not a number: " + value);
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw std::invalid_argument("config key " + key + ": expected on/off: " + value);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(static_cast<int>(parse_int(key, trim(item))));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        " is not key=value: " + t);
        }
        pairs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return pairs;
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    TrainConfig& t = cfg.train;
    if (key == "model") {
        t.model = value;
    } else if (key == "dataset") {
        t.dataset = value;
    } else if (key == "epochs") {
        t.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "base_lr") {
        t.base_lr = parse_double(key, value);
    } else if (key == "lr_drop_epochs") {
        t.lr_drop_epochs = parse_int_list(key, value);
    } else if (key == "lr_drop_factor") {
        t.lr_drop_factor = parse_double(key, value);
    } else if (key == "momentum") {
        t.momentum = parse_double(key, value);
    } else if (key == "weight_decay") {
        t.weight_decay = parse_double(key, value);
    } else if (key == "batch_size") {
        t.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
        t.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "mixup") {
        t.mixup = parse_bool(key, value);
    } else if (key == "mixup_alpha") {
        t.mixup_alpha = parse_double(key, value);
    } else if (key == "augment") {
        t.augment = parse_bool(key, value);
    } else if (key == "timing") {
        t.timing = parse_bool(key, value);
    } else if (key == "checkpoint_every") {
        t.checkpoint_every = static_cast<int>(parse_int(key, value));
    } else if (key == "synthetic_train") {
        t.synthetic_train = static_cast<int>(parse_int(key, value));
    } else if (key == "synthetic_test") {
        t.synthetic_test = static_cast<int>(parse_int(key, value));
    } else if (key == "data_dir") {
        cfg.data_dir = value;
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "resume") {
        cfg.resume = value;
    } else {
        throw std::invalid_argument("unknown config key: " + key);
    }
}

std::string render_config(const RunConfig& cfg) {
    const TrainConfig& t = cfg.train;
    std::string drops;
    for (size_t i = 0; i < t.lr_drop_epochs.size(); ++i) {
        if (i) drops += ",";
        drops += std::to_string(t.lr_drop_epochs[i]);
    }
    std::string out;
    out += "model=" + t.model + "\n";
    out += "dataset=" + t.dataset + "\n";
    out += "epochs=" + std::to_string(t.epochs) + "\n";
    out += "base_lr=" + format_double(t.base_lr) + "\n";
    out += "lr_drop_epochs=" + drops + "\n";
    out += "lr_drop_factor=" + format_double(t.lr_drop_factor) + "\n";
    out += "momentum=" + format_double(t.momentum) + "\n";
    out += "weight_decay=" + format_double(t.weight_decay) + "\n";
    out += "batch_size=" + std::to_string(t.batch_size) + "\n";
    out += "seed=" + std::to_string(t.seed) + "\n";
    out += std::string("mixup=") + (t.mixup ? "on" : "off") + "\n";
    out += "mixup_alpha=" + format_double(t.mixup_alpha) + "\n";
    out += std::string("augment=") + (t.augment ? "on" : "off") + "\n";
    out += std::string("timing=") + (t.timing ? "on" : "off") + "\n";
    out += "checkpoint_every=" + std::to_string(t.checkpoint_every) + "\n";
    out += "synthetic_train=" + std::to_string(t.synthetic_train) + "\n";
    out += "synthetic_test=" + std::to_string(t.synthetic_test) + "\n";
    out += "data_dir=" + cfg.data_dir + "\n";
    out += "out_dir=" + cfg.out_dir + "\n";
    out += "resume=" + cfg.resume + "\n";
    return out;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "model",          "dataset",       "epochs",           "base_lr",
        "lr_drop_epochs", "lr_drop_factor", "momentum",        "weight_decay",
        "batch_size",     "seed",          "mixup",            "mixup_alpha",
        "augment",        "timing",        "checkpoint_every", "synthetic_train",
        "synthetic_test", "data_dir",      "out_dir",          "resume"};
    return keys;
}

}  // namespace pydnet
