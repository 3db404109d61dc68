#include "pydnet/model_names.hpp"

#include <cstdio>
#include <cstdlib>

namespace pydnet {

namespace {

const char* family_name(BlockKind kind) {
    switch (kind) {
        case BlockKind::StdConv: return "ResNet";
        case BlockKind::DWConv: return "MobileNet";
        case BlockKind::PydAdd: return "PydMobileNet-Add";
        case BlockKind::PydConcat: return "PydMobileNet-Concat";
    }
    throw std::invalid_argument("unknown block kind");
}

}  // namespace

// Shortest decimal string that parses back to exactly the same double.
std::string format_alpha(double alpha) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, alpha);
        if (std::strtod(buf, nullptr) == alpha) break;
    }
    return buf;
}

std::string canonical_model_name(BlockKind kind, int depth, double alpha) {
    if (alpha <= 0.0)
        throw std::invalid_argument("canonical_model_name: alpha must be positive");
    if (depth < 2 || (depth - 2) % 9 != 0)
        throw std::invalid_argument("canonical_model_name: depth must be 2 + 9*blocks_per_stage");
    return std::string(family_name(kind)) + "-" + std::to_string(depth) + "-" +
           format_alpha(alpha);
}

std::string canonical_model_name(const NetworkConfig& cfg) {
    return canonical_model_name(cfg.kind, nominal_depth(cfg), cfg.alpha);
}

NetworkConfig parse_model_name(const std::string& name, int classes) {
    const auto bad = [&name](const std::string& why) {
        return std::invalid_argument("bad model name '" + name + "': " + why);
    };
    // Family names contain dashes, so peel depth and alpha off the right.
    const size_t alpha_dash = name.rfind('-');
    if (alpha_dash == std::string::npos || alpha_dash + 1 >= name.size())
        throw bad("expected <family>-<depth>-<alpha>");
    const size_t depth_dash = name.rfind('-', alpha_dash - 1);
    if (depth_dash == std::string::npos || depth_dash == 0)
        throw bad("expected <family>-<depth>-<alpha>");

    const std::string family = name.substr(0, depth_dash);
    const std::string depth_str = name.substr(depth_dash + 1, alpha_dash - depth_dash - 1);
    const std::string alpha_str = name.substr(alpha_dash + 1);

    NetworkConfig cfg;
    cfg.classes = classes;
    if (family == "ResNet")
        cfg.kind = BlockKind::StdConv;
    else if (family == "MobileNet")
        cfg.kind = BlockKind::DWConv;
    else if (family == "PydMobileNet-Add")
        cfg.kind = BlockKind::PydAdd;
    else if (family == "PydMobileNet-Concat")
        cfg.kind = BlockKind::PydConcat;
    else
        throw bad("unknown family '" + family + "'");

    char* end = nullptr;
    const long depth = std::strtol(depth_str.c_str(), &end, 10);
    if (end == depth_str.c_str() || *end != '\0')
        throw bad("depth '" + depth_str + "' is not an integer");
    if (depth < 11 || (depth - 2) % 9 != 0)
        throw bad("depth " + std::to_string(depth) + " is not 2 + 9*blocks_per_stage");
    cfg.blocks_per_stage = static_cast<int>((depth - 2) / 9);

    end = nullptr;
    const double alpha = std::strtod(alpha_str.c_str(), &end);
    if (end == alpha_str.c_str() || *end != '\0' || alpha <= 0.0)
        throw bad("alpha '" + alpha_str + "' is not a positive number");
    cfg.alpha = alpha;
    cfg.validate();
    return cfg;
}

std::vector<NetworkConfig> benchmark_grid(int classes) {
    struct Family {
        BlockKind kind;
        std::vector<double> alphas;
    };
    static const std::vector<Family> families = {
        {BlockKind::StdConv, {0.5}},
        {BlockKind::DWConv, {0.5, 1.0, 1.5}},
        {BlockKind::PydAdd, {0.25, 0.5, 0.75, 1.0}},
        {BlockKind::PydConcat, {0.25, 0.5, 0.75}},
    };
    std::vector<NetworkConfig> grid;
    for (int blocks : {3, 6})
        for (const Family& fam : families)
            for (double a : fam.alphas) {
                NetworkConfig cfg;
                cfg.kind = fam.kind;
                cfg.blocks_per_stage = blocks;
                cfg.alpha = a;
                cfg.classes = classes;
                grid.push_back(cfg);
            }
    return grid;
}

}  // namespace pydnet
