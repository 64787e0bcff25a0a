#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "lyra/model.hpp"

namespace lyra {

struct TrainSection {
    std::size_t epochs = 100;
    std::size_t steps = 0;
    std::size_t batch_size = 32;
    std::size_t eval_every = 10;
    std::string loss;  // "mse" | "cross_entropy"; empty derives from the task
    double lr = 0.001;
    double weight_decay = 0.01;
};

// A full run description: model, training settings, and one task section.
struct RunConfig {
    LyraConfig model;
    TrainSection train;
    nlohmann::json task;  // discriminated by "kind"
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    std::string precision = "f64";

    bool has_task() const { return task.is_object() && task.contains("kind"); }
};

// Parses and validates a JSON run config; task-referenced paths must exist.
RunConfig load_run_config(const std::string& path);

}  // namespace lyra
