// Command-line front end: analyze, train, eval, bench, selftest.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pydnet/cost.hpp"
#include "pydnet/model_names.hpp"
#include "pydnet/network.hpp"
#include "pydnet/run_config.hpp"
#include "pydnet/selftest.hpp"
#include "pydnet/train.hpp"

namespace {

using namespace pydnet;

FlopsConvention parse_convention(const std::string& s) {
    if (s == "macs") return FlopsConvention::MACs;
    if (s == "2macs") return FlopsConvention::TwoMACs;
    throw std::invalid_argument("--flops-convention must be macs or 2macs");
}

int cmd_analyze(const std::string& model, bool all_grid, const std::string& convention,
                const std::string& format, const std::string& out_path) {
    const FlopsConvention conv = parse_convention(convention);
    std::string text;
    if (all_grid) {
        if (format == "csv") {
            text = "model,depth,alpha,params,flops\n";
            for (const NetworkConfig& cfg : benchmark_grid()) {
                const CostReport r = analyze_network(cfg);
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%s,%d,%s,%llu,%llu\n",
                              canonical_model_name(cfg).c_str(), nominal_depth(cfg),
                              format_alpha(cfg.alpha).c_str(),
                              static_cast<unsigned long long>(r.total_params),
                              static_cast<unsigned long long>(r.flops(conv)));
                text += buf;
            }
        } else {
            for (const NetworkConfig& cfg : benchmark_grid()) {
                const CostReport r = analyze_network(cfg);
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%-28s params %12llu  flops(%s) %14llu\n",
                              canonical_model_name(cfg).c_str(),
                              static_cast<unsigned long long>(r.total_params),
                              convention.c_str(),
                              static_cast<unsigned long long>(r.flops(conv)));
                text += buf;
            }
        }
    } else {
        const NetworkConfig cfg = parse_model_name(model);
        const CostReport r = analyze_network(cfg);
        text = format == "csv" ? r.to_csv(conv) : r.to_table(conv);
    }
    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for write: " + out_path);
        out << text;
    }
    return 0;
}

std::string resolve_data_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("PYDNET_DATA_DIR")) return env;
    return "";
}

int cmd_train(const RunConfig& run, bool print_config) {
    RunConfig cfg = run;
    cfg.data_dir = resolve_data_dir(cfg.data_dir);
    cfg.train.validate();
    parse_model_name(cfg.train.model);  // reject bad names before any work
    if (print_config) {
        std::cout << render_config(cfg);
        return 0;
    }
    if (cfg.train.dataset != "synthetic" && cfg.data_dir.empty()) {
        throw std::runtime_error(
            "no dataset directory: pass --data-dir, set data_dir in the config file, or export "
            "PYDNET_DATA_DIR");
    }
    std::filesystem::create_directories(cfg.out_dir);
    const FitResult result = fit(cfg.train, cfg.data_dir, cfg.out_dir, cfg.resume, &std::cout);
    std::cout << "final test error " << result.final_test_error << " after " << result.epochs_run
              << " epoch(s); checkpoint " << result.final_checkpoint << "; metrics "
              << result.metrics_csv << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir_flag,
             const std::string& dataset, int batch_size, std::uint64_t seed, int synthetic_test) {
    const std::string name = checkpoint_model_name(checkpoint);
    std::vector<LabeledImage> test;
    int classes = 0;
    if (dataset == "synthetic") {
        SeededRng test_rng(derive_seed(seed, "data-test"));
        test = synthetic_quadrants(synthetic_test, 4, test_rng);
        classes = 4;
    } else if (dataset == "cifar10" || dataset == "cifar100") {
        const std::string dir = resolve_data_dir(data_dir_flag);
        if (dir.empty()) throw std::runtime_error("no dataset directory for eval");
        const DatasetKind kind = dataset == "cifar10" ? DatasetKind::Cifar10 : DatasetKind::Cifar100;
        test = load_cifar(dir, kind, Split::Test);
        classes = classes_for(kind);
    } else {
        throw std::invalid_argument("dataset must be cifar10, cifar100, or synthetic");
    }
    NetworkConfig net_cfg = parse_model_name(name, classes);
    SeededRng rng(1);
    Network<float> net(net_cfg, rng);
    checkpoint_load(net, nullptr, checkpoint);
    // Prefer the constants the model trained with; fall back to recomputing
    // from the evaluation split for checkpoints that lack the record.
    NormConstants nc;
    if (!checkpoint_norm_constants(checkpoint, nc)) nc = compute_norm_constants(test);
    const double err = evaluate(net, test, nc, batch_size);
    std::cout << "model " << name << " top-1 error " << err << "\n";
    return 0;
}

int cmd_bench(const std::string& model, int batch, int repeat, int warmup) {
    const NetworkConfig cfg = parse_model_name(model);
    SeededRng rng(1);
    Network<float> net(cfg, rng);
    Tensor<float> x(batch, 3, 32, 32);
    SeededRng fill(2);
    for (size_t i = 0; i < x.numel(); ++i)
        x.data()[i] = static_cast<float>(fill.uniform(-1.0, 1.0));
    for (int i = 0; i < warmup; ++i) net.forward(x, Mode::Eval);
    double total_ms = 0.0, best_ms = 0.0;
    for (int i = 0; i < repeat; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        net.forward(x, Mode::Eval);
        const auto t1 = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        total_ms += ms;
        best_ms = i == 0 ? ms : std::min(best_ms, ms);
    }
    std::printf("%s batch %d: mean %.3f ms, min %.3f ms over %d run(s)\n", model.c_str(), batch,
                total_ms / repeat, best_ms, repeat);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pyramid depthwise-separable network toolkit"};
    app.require_subcommand(1);

    // analyze
    std::string an_model, an_convention = "macs", an_format = "table", an_out;
    bool an_grid = false;
    auto* analyze = app.add_subcommand("analyze", "parameter/FLOP cost report for a model");
    analyze->add_option("model", an_model, "canonical model name, e.g. PydMobileNet-Add-29-0.5");
    analyze->add_flag("--all-grid", an_grid, "report every model in the benchmark grid");
    analyze->add_option("--flops-convention", an_convention, "macs | 2macs")
        ->check(CLI::IsMember({"macs", "2macs"}));
    analyze->add_option("--format", an_format, "table | csv")
        ->check(CLI::IsMember({"table", "csv"}));
    analyze->add_option("--out", an_out, "write the report to a file instead of stdout");

    // train
    RunConfig run;
    std::string tr_config_path;
    bool tr_print_config = false;
    std::vector<std::string> tr_sets;
    auto* train = app.add_subcommand("train", "train a model; flags override the config file");
    train->add_option("--config", tr_config_path, "flat key=value config file");
    train->add_option("--model", run.train.model, "canonical model name");
    train->add_option("--dataset", run.train.dataset, "cifar10 | cifar100 | synthetic");
    train->add_option("--epochs", run.train.epochs, "training epochs");
    train->add_option("--batch-size", run.train.batch_size, "minibatch size");
    train->add_option("--seed", run.train.seed, "master seed");
    train->add_option("--data-dir", run.data_dir, "dataset directory (or PYDNET_DATA_DIR)");
    train->add_option("--out", run.out_dir, "output directory for checkpoints/metrics");
    train->add_option("--resume", run.resume, "checkpoint to continue from");
    train->add_option("--set", tr_sets, "extra key=value override (any config key)");
    train->add_flag("--print-config", tr_print_config,
                    "print the resolved configuration and exit without training");

    // eval
    std::string ev_checkpoint, ev_data_dir, ev_dataset = "cifar10";
    int ev_batch = 128, ev_synth_test = 512;
    std::uint64_t ev_seed = 1;
    auto* eval = app.add_subcommand("eval", "top-1 error of a checkpoint on the test split");
    eval->add_option("checkpoint", ev_checkpoint, "checkpoint file")->required();
    eval->add_option("--dataset", ev_dataset, "cifar10 | cifar100 | synthetic");
    eval->add_option("--data-dir", ev_data_dir, "dataset directory (or PYDNET_DATA_DIR)");
    eval->add_option("--batch-size", ev_batch, "evaluation batch size");
    eval->add_option("--seed", ev_seed, "seed for the synthetic test split");
    eval->add_option("--synthetic-test", ev_synth_test, "synthetic test split size");

    // bench
    std::string be_model;
    int be_batch = 128, be_repeat = 10, be_warmup = 2;
    auto* bench = app.add_subcommand("bench", "forward-pass latency of a model");
    bench->add_option("model", be_model, "canonical model name")->required();
    bench->add_option("--batch-size", be_batch, "inference batch size");
    bench->add_option("--repeat", be_repeat, "timed repetitions");
    bench->add_option("--warmup", be_warmup, "untimed warmup passes");

    // selftest
    bool st_sabotage = false;
    auto* selftest = app.add_subcommand("selftest", "run the built-in verification suite");
    selftest
        ->add_flag("--sabotage-gradient", st_sabotage,
                   "perturb one analytic gradient (test fixture; must fail)")
        ->group("");  // hidden from normal help

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) {
            if (an_model.empty() && !an_grid) {
                std::cerr << "error: analyze needs a model name or --all-grid (usage: analyze "
                             "PydMobileNet-Add-29-0.5)\n";
                return 2;
            }
            return cmd_analyze(an_model, an_grid, an_convention, an_format, an_out);
        }
        if (train->parsed()) {
            // Config file first, then flags (flags win by re-applying parsed values).
            if (!tr_config_path.empty()) {
                RunConfig from_file;
                for (const auto& [k, v] : parse_key_value_file(tr_config_path)) {
                    apply_config_key(from_file, k, v);
                }
                // overlay CLI-provided values onto file values
                RunConfig merged = from_file;
                if (train->count("--model")) merged.train.model = run.train.model;
                if (train->count("--dataset")) merged.train.dataset = run.train.dataset;
                if (train->count("--epochs")) merged.train.epochs = run.train.epochs;
                if (train->count("--batch-size")) merged.train.batch_size = run.train.batch_size;
                if (train->count("--seed")) merged.train.seed = run.train.seed;
                if (train->count("--data-dir")) merged.data_dir = run.data_dir;
                if (train->count("--out")) merged.out_dir = run.out_dir;
                if (train->count("--resume")) merged.resume = run.resume;
                run = merged;
            }
            for (const std::string& kv : tr_sets) {
                const size_t eq = kv.find('=');
                if (eq == std::string::npos)
                    throw std::invalid_argument("--set expects key=value, got: " + kv);
                apply_config_key(run, kv.substr(0, eq), kv.substr(eq + 1));
            }
            return cmd_train(run, tr_print_config);
        }
        if (eval->parsed()) {
            return cmd_eval(ev_checkpoint, ev_data_dir, ev_dataset, ev_batch, ev_seed,
                            ev_synth_test);
        }
        if (bench->parsed()) {
            if (be_batch <= 0 || be_repeat <= 0 || be_warmup < 0)
                throw std::invalid_argument("bench sizes must be positive");
            return cmd_bench(be_model, be_batch, be_repeat, be_warmup);
        }
        if (selftest->parsed()) {
            return run_selftest(std::cout, st_sabotage);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << " (run with --help for usage)\n";
        return 1;
    }
    return 2;
}
