#include "lyra/config.hpp"

#include <filesystem>
#include <fstream>

#include "lyra/config_io.hpp"

namespace lyra {

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }

    RunConfig cfg;
    try {
        if (j.contains("model")) cfg.model = lyra_config_from_json(j.at("model"));
        if (j.contains("train")) {
            const auto& t = j.at("train");
            if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<std::size_t>();
            if (t.contains("steps")) cfg.train.steps = t.at("steps").get<std::size_t>();
            if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<std::size_t>();
            if (t.contains("eval_every")) cfg.train.eval_every = t.at("eval_every").get<std::size_t>();
            if (t.contains("loss")) cfg.train.loss = t.at("loss").get<std::string>();
            if (t.contains("lr")) cfg.train.lr = t.at("lr").get<double>();
            if (t.contains("weight_decay"))
                cfg.train.weight_decay = t.at("weight_decay").get<double>();
        }
        if (j.contains("task")) cfg.task = j.at("task");
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("precision")) cfg.precision = j.at("precision").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: malformed field: ") + e.what());
    }

    if (cfg.precision != "f32" && cfg.precision != "f64")
        throw ConfigError("config: precision must be f32 or f64, got " + cfg.precision);
    if (!cfg.train.loss.empty() && cfg.train.loss != "mse" && cfg.train.loss != "cross_entropy")
        throw ConfigError("config: train.loss must be mse or cross_entropy");
    if (cfg.task.is_object()) {
        if (!cfg.task.contains("kind") || !cfg.task.at("kind").is_string())
            throw ConfigError("config: task section needs a string 'kind'");
        const std::string kind = cfg.task.at("kind").get<std::string>();
        if (kind != "poly" && kind != "epistasis" && kind != "copy" && kind != "frequency" &&
            kind != "csv")
            throw ConfigError("config: unknown task kind '" + kind + "'");
        if (kind == "csv") {
            if (!cfg.task.contains("path"))
                throw ConfigError("config: csv task needs a 'path'");
            const std::string p = cfg.task.at("path").get<std::string>();
            if (!std::filesystem::exists(p))
                throw ConfigError("config: csv task path does not exist: " + p);
        }
    } else if (!cfg.task.is_null()) {
        throw ConfigError("config: task must be a single object");
    }
    return cfg;
}

}  // namespace lyra
