// Command-line front end: gradcheck, params, kernel, train, eval, bench.
// Exit codes: 0 success, 1 verification failure, 2 numerical abort,
// 64 configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lyra/bench.hpp"
#include "lyra/run.hpp"

namespace {

constexpr int kExitVerification = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitConfig = 64;

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string precision;
};

lyra::RunConfig load_config(const GlobalArgs& args, bool task_required) {
    if (args.config_path.empty()) throw lyra::ConfigError("missing --config PATH");
    lyra::RunConfig cfg = lyra::load_run_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (!args.precision.empty()) cfg.precision = args.precision;
    if (task_required && !cfg.has_task())
        throw lyra::ConfigError("config: this command needs a task section");
    return cfg;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::size_t begin = 0;
    while (begin <= csv.size()) {
        const auto comma = csv.find(',', begin);
        const std::string tok = csv.substr(begin, comma == std::string::npos ? csv.size() - begin
                                                                             : comma - begin);
        if (!tok.empty()) out.push_back(std::stoull(tok));
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lyra sequence model: training, verification and benchmarks"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name

    GlobalArgs args;
    app.add_option("--config", args.config_path, "run configuration (JSON)");
    auto* seed_opt = app.add_option("--seed", args.seed, "override the config seed");
    app.add_option("--out", args.out_dir, "override the output directory");
    app.add_option("--precision", args.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));

    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    bool corrupt_adjoint = false;
    cmd_gradcheck->add_flag("--corrupt-adjoint", corrupt_adjoint,
                            "deliberately break one adjoint (negative test)");

    auto* cmd_params = app.add_subcommand("params", "print parameter counts");

    auto* cmd_kernel = app.add_subcommand("kernel", "dump S4D kernels and singular values");
    std::size_t kernel_length = 96;
    bool zero_c = false;
    std::string kernel_ckpt;
    cmd_kernel->add_option("--length", kernel_length, "kernel length (default 96)");
    cmd_kernel->add_flag("--zero-c", zero_c, "zero the C parameters before materializing");
    cmd_kernel->add_option("--checkpoint", kernel_ckpt, "materialize from a checkpoint");

    auto* cmd_train = app.add_subcommand("train", "train per the config's task section");

    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on the config's task");
    std::string eval_ckpt;
    cmd_eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();

    auto* cmd_bench = app.add_subcommand("bench", "wall-clock scaling benchmark");
    std::string lengths_csv = "1024,2048,4096,8192,16384,32768,65536";
    std::string batches_csv = "2";
    std::size_t reps = 7, warmups = 2;
    cmd_bench->add_option("--lengths", lengths_csv, "comma-separated powers of two");
    cmd_bench->add_option("--batch-sizes", batches_csv, "comma-separated batch sizes");
    cmd_bench->add_option("--reps", reps, "timed reps per point (min 5)");
    cmd_bench->add_option("--warmups", warmups, "untimed warmup reps (min 2)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    args.seed_set = seed_opt->count() > 0;

    try {
        if (cmd_gradcheck->parsed()) {
            return lyra::run_gradcheck(load_config(args, false), corrupt_adjoint);
        }
        if (cmd_params->parsed()) {
            return lyra::run_params(load_config(args, false));
        }
        if (cmd_kernel->parsed()) {
            return lyra::run_kernel(load_config(args, false), kernel_length, zero_c, kernel_ckpt);
        }
        if (cmd_train->parsed()) {
            auto artifacts = lyra::run_train(load_config(args, true));
            std::cout << "wrote " << artifacts.metrics_path << "\n";
            std::cout << "final checkpoint: " << artifacts.final_checkpoint << "\n";
            std::cout << "best checkpoint:  " << artifacts.best_checkpoint << " (eval loss "
                      << artifacts.result.best_eval_loss << " at " << artifacts.result.best_at
                      << ")\n";
            return 0;
        }
        if (cmd_eval->parsed()) {
            return lyra::run_eval(load_config(args, true), eval_ckpt);
        }
        if (cmd_bench->parsed()) {
            // the standard model unless a config overrides it
            lyra::LyraConfig model_cfg;
            std::uint64_t seed = args.seed_set ? args.seed : 0;
            std::string precision = args.precision.empty() ? "f32" : args.precision;
            std::string out_dir = args.out_dir.empty() ? "out" : args.out_dir;
            if (!args.config_path.empty()) {
                auto cfg = lyra::load_run_config(args.config_path);
                model_cfg = cfg.model;
                if (!args.seed_set) seed = cfg.seed;
                if (args.out_dir.empty()) out_dir = cfg.output_dir;
            }
            auto rows = lyra::run_bench(model_cfg, parse_size_list(lengths_csv),
                                        parse_size_list(batches_csv), reps, warmups, precision,
                                        seed);
            std::filesystem::create_directories(out_dir);
            std::ofstream file(out_dir + "/bench.csv");
            lyra::write_bench_csv(file, rows);
            lyra::write_bench_csv(std::cout, rows);
            for (const auto& row : rows)
                if (!row.ok) return kExitVerification;
            return 0;
        }
    } catch (const lyra::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lyra::CsvError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lyra::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lyra::ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lyra::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kExitVerification;
    }
    return 0;
}
