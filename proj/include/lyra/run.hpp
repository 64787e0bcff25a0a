#pragma once

#include <string>

#include "lyra/checkpoint.hpp"
#include "lyra/config.hpp"
#include "lyra/tasks.hpp"
#include "lyra/train.hpp"

namespace lyra {

// Dataset plus the task-specific evaluation glue.
struct TaskBundle {
    Dataset dataset;
    MetricsFn metrics;
    std::vector<std::string> metric_columns;
    std::string kind;
    SelectiveCopySpec copy_spec;    // populated for kind == "copy"
    FrequencySpec frequency_spec;   // populated for kind == "frequency"
};

// Builds the dataset and metric callbacks for a config's task section.
// Deterministic given the seed.
TaskBundle build_task(const nlohmann::json& task, std::uint64_t seed);

struct TrainArtifacts {
    TrainResult result;
    double final_eval_loss = 0;
    std::string metrics_path;
    std::string predictions_path;
    std::string final_checkpoint;
    std::string best_checkpoint;
};

// Full training command: trains per config, writes metrics.csv,
// predictions.csv and the final/best checkpoints under cfg.output_dir.
// The model and bundle stay with the caller for further checks.
TrainArtifacts run_train(const RunConfig& cfg, LyraModel* model_out = nullptr,
                         TaskBundle* bundle_out = nullptr);

// Evaluates a checkpoint against the config's task; writes
// eval_metrics.csv and predictions.csv under cfg.output_dir.
int run_eval(const RunConfig& cfg, const std::string& checkpoint_path);

// Prints per-block and total parameter counts.
int run_params(const RunConfig& cfg);

// Dumps the first S4D block's kernels (channel, t, value) and their singular
// values (index, sigma) as CSV files under cfg.output_dir.
int run_kernel(const RunConfig& cfg, std::size_t length, bool zero_c,
               const std::string& checkpoint_path);

// Finite-difference verification of every parameter tensor on a tiny model.
// Returns 0 when all tensors pass at 1e-5.
int run_gradcheck(const RunConfig& cfg, bool corrupt_adjoint);

}  // namespace lyra
