#include "lyra/run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lyra/fft.hpp"
#include "lyra/gradcheck.hpp"
#include "lyra/metrics.hpp"

namespace lyra {

namespace {

// fixed-width float formatting so identical runs produce identical bytes
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 of (seed + stream) keeps the streams distinct
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<double> column(const Tensor& preds, std::size_t col) {
    const std::size_t n = preds.dim(0), d = preds.dim(1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = preds.data[i * d + col];
    return out;
}

MetricsFn regression_metrics(const Dataset* data) {
    return [data](Split, const Tensor& preds, const std::vector<std::size_t>& rows) {
        std::vector<double> p = column(preds, 0), t(rows.size());
        const std::size_t d = data->targets.dim(1);
        for (std::size_t i = 0; i < rows.size(); ++i) t[i] = data->targets.data[rows[i] * d];
        std::vector<std::pair<std::string, double>> out;
        out.emplace_back("r2", r2(p, t));
        out.emplace_back("spearman", spearman(p, t));
        return out;
    };
}

}  // namespace

TaskBundle build_task(const nlohmann::json& task, std::uint64_t seed) {
    if (!task.is_object() || !task.contains("kind"))
        throw ConfigError("task: missing task section");
    TaskBundle bundle;
    bundle.kind = task.at("kind").get<std::string>();
    const std::uint64_t task_seed =
        task.contains("seed") ? task.at("seed").get<std::uint64_t>() : derive_seed(seed, 11);

    if (bundle.kind == "poly") {
        SyntheticPolySpec spec;
        spec.seed = task_seed;
        if (task.contains("poly")) spec.poly = task.at("poly").get<std::array<double, 6>>();
        if (task.contains("sin_amp")) spec.sin_amp = task.at("sin_amp").get<double>();
        if (task.contains("sin_freq")) spec.sin_freq = task.at("sin_freq").get<double>();
        if (task.contains("cos_amp")) spec.cos_amp = task.at("cos_amp").get<double>();
        if (task.contains("cos_freq")) spec.cos_freq = task.at("cos_freq").get<double>();
        if (task.contains("n_train")) spec.n_train = task.at("n_train").get<std::size_t>();
        if (task.contains("n_test")) spec.n_test = task.at("n_test").get<std::size_t>();
        Rng rng(spec.seed);
        bundle.dataset = gen_poly_task(spec, rng);
        bundle.metric_columns = {"r2", "spearman"};
        bundle.metrics = regression_metrics(nullptr);  // bound below
    } else if (bundle.kind == "epistasis") {
        const std::size_t l = task.value("l", 8), K = task.value("K", 3);
        const std::size_t n_terms = task.value("n_terms", 24);
        const double train_frac = task.value("train_frac", 0.8);
        Rng rng(task_seed);
        auto gen = gen_epistasis_dataset(l, K, n_terms, rng);
        Rng split_rng(derive_seed(task_seed, 3));
        assign_split_stratified(gen.dataset, train_frac, split_rng, gen.dataset.orders);
        bundle.dataset = std::move(gen.dataset);
        bundle.metric_columns = {"r2", "spearman"};
        for (std::size_t k = 1; k <= K; ++k)
            bundle.metric_columns.push_back("r2_order_" + std::to_string(k));
    } else if (bundle.kind == "copy") {
        SelectiveCopySpec spec = default_copy_spec(task.value("wild_type_seed", 7));
        if (task.contains("L")) spec.L = task.at("L").get<std::size_t>();
        if (task.contains("alphabet")) spec.alphabet = task.at("alphabet").get<std::string>();
        if (task.contains("wild_type")) spec.wild_type = task.at("wild_type").get<std::string>();
        if (task.contains("mutable_positions"))
            spec.mutable_positions = task.at("mutable_positions").get<std::vector<std::size_t>>();
        if (task.contains("comutation_patterns"))
            spec.comutation_patterns =
                task.at("comutation_patterns").get<std::vector<std::vector<std::size_t>>>();
        if (task.contains("m_min")) spec.m_min = task.at("m_min").get<std::size_t>();
        if (task.contains("m_max")) spec.m_max = task.at("m_max").get<std::size_t>();
        const std::size_t n_train = task.value("n_train", 4096);
        const std::size_t n_test = task.value("n_test", 512);
        Rng rng(task_seed);
        bundle.dataset = gen_selective_copy(spec, rng, n_train + n_test);
        for (std::size_t i = n_train; i < n_train + n_test; ++i)
            bundle.dataset.split[i] = Split::Test;
        bundle.copy_spec = spec;
        bundle.metric_columns = {"slot_acc", "pos_acc", "tok_acc"};
    } else if (bundle.kind == "frequency") {
        FrequencySpec spec = default_frequency_spec(task.value("L", 64));
        if (task.contains("components")) {
            const auto& comps = task.at("components");
            if (!comps.is_array() || comps.size() != 4)
                throw ConfigError("frequency task: components must be an array of 4");
            for (std::size_t i = 0; i < 4; ++i) {
                spec.components[i].amp = comps[i].value("amp", 1.0);
                spec.components[i].omega = comps[i].at("omega").get<double>();
                spec.components[i].phase = comps[i].value("phase", 0.0);
            }
        }
        if (task.contains("amp_jitter")) spec.amp_jitter = task.at("amp_jitter").get<double>();
        if (task.contains("phase_jitter"))
            spec.phase_jitter = task.at("phase_jitter").get<double>();
        const std::size_t n_train = task.value("n_train", 1024);
        const std::size_t n_test = task.value("n_test", 128);
        Rng rng(task_seed);
        bundle.dataset = gen_frequency_task(spec, rng, n_train, n_test);
        bundle.frequency_spec = spec;
        bundle.metric_columns = {"r2_composite", "r2_components", "bin_match"};
    } else if (bundle.kind == "csv") {
        CsvSchema schema;
        if (task.contains("alphabet")) schema.alphabet = task.at("alphabet").get<std::string>();
        if (task.value("label", "real") == std::string("class")) {
            schema.label = CsvSchema::Label::Class;
            schema.n_classes = task.value("n_classes", 2);
        }
        schema.train_frac = task.value("train_frac", 0.8);
        schema.split_seed = task.value("split_seed", task_seed);
        bundle.dataset = load_csv_dataset(task.at("path").get<std::string>(), schema);
        if (bundle.dataset.label_kind == LabelKind::Regression)
            bundle.metric_columns = {"r2", "spearman"};
        else
            bundle.metric_columns = {"accuracy"};
    } else {
        throw ConfigError("task: unknown kind '" + bundle.kind + "'");
    }
    return bundle;
}

namespace {

// Metric callbacks need the final dataset address, so they are bound after
// the bundle stops moving.
void bind_metrics(TaskBundle& bundle) {
    const Dataset* data = &bundle.dataset;
    if (bundle.kind == "poly" || (bundle.kind == "csv" && data->label_kind == LabelKind::Regression)) {
        bundle.metrics = regression_metrics(data);
    } else if (bundle.kind == "csv" && data->label_kind == LabelKind::SingleClass) {
        bundle.metrics = [data](Split, const Tensor& preds, const std::vector<std::size_t>& rows) {
            const std::size_t d = preds.dim(1);
            std::vector<int> p(rows.size()), t(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < d; ++c)
                    if (preds.data[i * d + c] > preds.data[i * d + best]) best = c;
                p[i] = int(best);
                t[i] = data->class_labels[rows[i]];
            }
            std::vector<std::pair<std::string, double>> out;
            out.emplace_back("accuracy", accuracy(p, t));
            return out;
        };
    } else if (bundle.kind == "epistasis") {
        const std::size_t K = bundle.metric_columns.size() - 2;
        bundle.metrics = [data, K](Split, const Tensor& preds,
                                   const std::vector<std::size_t>& rows) {
            std::vector<double> p = column(preds, 0), t(rows.size());
            std::vector<int> orders(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                t[i] = data->targets.data[rows[i]];
                orders[i] = data->orders[rows[i]];
            }
            std::vector<std::pair<std::string, double>> out;
            out.emplace_back("r2", r2(p, t));
            out.emplace_back("spearman", spearman(p, t));
            auto by_order = r2_by_order(p, t, orders);
            for (std::size_t k = 1; k <= K; ++k) {
                const auto it = by_order.find(int(k));
                if (it != by_order.end())
                    out.emplace_back("r2_order_" + std::to_string(k), it->second);
            }
            return out;
        };
    } else if (bundle.kind == "copy") {
        const SelectiveCopySpec spec = bundle.copy_spec;
        bundle.metrics = [data, spec](Split, const Tensor& preds,
                                      const std::vector<std::size_t>& rows) {
            const std::size_t d = preds.dim(1), S = spec.m_max;
            std::size_t slot_hits = 0, pos_hits = 0, tok_hits = 0, total = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                auto pred_labels = copy_logits_to_labels(
                    std::span<const double>(preds.data.data() + i * d, d), spec);
                const auto& truth = data->head_labels[rows[i]];
                for (std::size_t s = 0; s < S; ++s) {
                    const bool pos_ok = pred_labels[s] == truth[s];
                    const bool tok_ok = pred_labels[S + s] == truth[S + s];
                    pos_hits += pos_ok;
                    tok_hits += tok_ok;
                    slot_hits += (pos_ok && tok_ok);
                    ++total;
                }
            }
            std::vector<std::pair<std::string, double>> out;
            out.emplace_back("slot_acc", double(slot_hits) / double(total));
            out.emplace_back("pos_acc", double(pos_hits) / double(total));
            out.emplace_back("tok_acc", double(tok_hits) / double(total));
            return out;
        };
    } else if (bundle.kind == "frequency") {
        const FrequencySpec spec = bundle.frequency_spec;
        bundle.metrics = [data, spec](Split, const Tensor& preds,
                                      const std::vector<std::size_t>& rows) {
            const std::size_t L = spec.L, d = preds.dim(1);
            std::vector<double> pc, tc, pk, tk;
            std::size_t matches = 0, checks = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t t = 0; t < L; ++t) {
                    pc.push_back(preds.data[i * d + t]);
                    tc.push_back(data->targets.data[rows[i] * d + t]);
                }
                for (std::size_t comp = 0; comp < 4; ++comp) {
                    std::vector<double> sig(L);
                    for (std::size_t t = 0; t < L; ++t) {
                        const double pv = preds.data[i * d + (comp + 1) * L + t];
                        const double tv = data->targets.data[rows[i] * d + (comp + 1) * L + t];
                        sig[t] = pv;
                        pk.push_back(pv);
                        tk.push_back(tv);
                    }
                    // dominant bin of the recovered component
                    auto pf = rfft<double>(std::span<const double>(sig), next_pow2(L));
                    std::size_t peak = 0;
                    for (std::size_t k = 1; k < pf.size(); ++k)
                        if (std::abs(pf[k]) > std::abs(pf[peak])) peak = k;
                    const double bin =
                        spec.components[comp].omega * double(next_pow2(L)) / (2.0 * std::numbers::pi);
                    matches += (peak == std::size_t(std::lround(bin)));
                    ++checks;
                }
            }
            std::vector<std::pair<std::string, double>> out;
            out.emplace_back("r2_composite", r2(pc, tc));
            out.emplace_back("r2_components", r2(pk, tk));
            out.emplace_back("bin_match", double(matches) / double(checks));
            return out;
        };
    }
}

void validate_model_against_task(const RunConfig& cfg, const Dataset& data) {
    if (cfg.model.d_input != data.input_dim())
        throw ConfigError("config: model.d_input = " + std::to_string(cfg.model.d_input) +
                          " but the task produces " + std::to_string(data.input_dim()) +
                          " input channels");
    if (cfg.model.d_output != data.output_dim())
        throw ConfigError("config: model.d_output = " + std::to_string(cfg.model.d_output) +
                          " but the task needs " + std::to_string(data.output_dim()));
    if (!cfg.train.loss.empty()) {
        const bool wants_mse = cfg.train.loss == "mse";
        const bool is_mse = data.label_kind == LabelKind::Regression;
        if (wants_mse != is_mse)
            throw ConfigError("config: train.loss '" + cfg.train.loss +
                              "' does not match the task's label kind");
    }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& history,
                       const std::vector<std::string>& metric_columns) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "epoch,split,loss";
    for (const auto& c : metric_columns) out << "," << c;
    out << "\n";
    for (const auto& row : history) {
        out << row.at << "," << row.split << "," << fmt(row.loss);
        for (const auto& col : metric_columns) {
            out << ",";
            for (const auto& [name, value] : row.metrics)
                if (name == col) out << fmt(value);
        }
        out << "\n";
    }
}

void write_predictions_csv(const std::string& path, const TaskBundle& bundle, LyraModel& model,
                           std::size_t batch_size) {
    const auto rows = bundle.dataset.rows_of(Split::Test);
    if (rows.empty()) return;
    Tensor preds = predict(model, bundle.dataset, rows, batch_size);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    const Dataset& data = bundle.dataset;
    const std::size_t d = preds.dim(1);
    if (bundle.kind == "copy") {
        out << "id,slot,pred_position,true_position,pred_token,true_token\n";
        const std::size_t S = bundle.copy_spec.m_max;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto labels = copy_logits_to_labels(
                std::span<const double>(preds.data.data() + i * d, d), bundle.copy_spec);
            const auto& truth = data.head_labels[rows[i]];
            for (std::size_t s = 0; s < S; ++s)
                out << rows[i] << "," << s << "," << labels[s] << "," << truth[s] << ","
                    << labels[S + s] << "," << truth[S + s] << "\n";
        }
    } else if (data.label_kind == LabelKind::SingleClass) {
        out << "id,prediction,target\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < d; ++c)
                if (preds.data[i * d + c] > preds.data[i * d + best]) best = c;
            out << rows[i] << "," << best << "," << data.class_labels[rows[i]] << "\n";
        }
    } else {
        out << "id";
        if (d == 1) {
            out << ",prediction,target\n";
        } else {
            for (std::size_t j = 0; j < d; ++j) out << ",prediction_" << j;
            for (std::size_t j = 0; j < d; ++j) out << ",target_" << j;
            out << "\n";
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out << rows[i];
            for (std::size_t j = 0; j < d; ++j) out << "," << fmt(preds.data[i * d + j]);
            for (std::size_t j = 0; j < d; ++j)
                out << "," << fmt(data.targets.data[rows[i] * d + j]);
            out << "\n";
        }
    }
}

}  // namespace

TrainArtifacts run_train(const RunConfig& cfg, LyraModel* model_out, TaskBundle* bundle_out) {
    if (cfg.precision != "f64")
        throw ConfigError("config: training runs at f64; f32 is supported on the bench path");
    TaskBundle bundle = build_task(cfg.task, cfg.seed);
    bind_metrics(bundle);
    validate_model_against_task(cfg, bundle.dataset);

    Rng model_rng(derive_seed(cfg.seed, 1));
    LyraModel model = build<double>(cfg.model, model_rng);

    TrainOptions opt;
    opt.epochs = cfg.train.epochs;
    opt.steps = cfg.train.steps;
    opt.batch_size = cfg.train.batch_size;
    opt.eval_every = cfg.train.eval_every;
    opt.seed = derive_seed(cfg.seed, 2);
    opt.optim.lr = cfg.train.lr;
    opt.optim.weight_decay = cfg.train.weight_decay;

    TrainArtifacts artifacts;
    artifacts.result = train_loop(model, bundle.dataset, opt, bundle.metrics);

    std::filesystem::create_directories(cfg.output_dir);
    artifacts.metrics_path = cfg.output_dir + "/metrics.csv";
    write_metrics_csv(artifacts.metrics_path, artifacts.result.history, bundle.metric_columns);

    artifacts.final_checkpoint = cfg.output_dir + "/final.ckpt";
    save_checkpoint(model, artifacts.final_checkpoint);

    // best checkpoint: restore the snapshot, save, put the final weights back
    const auto final_params = snapshot_params(model);
    restore_params(model, artifacts.result.best_params);
    artifacts.best_checkpoint = cfg.output_dir + "/best.ckpt";
    save_checkpoint(model, artifacts.best_checkpoint);
    restore_params(model, final_params);

    artifacts.predictions_path = cfg.output_dir + "/predictions.csv";
    write_predictions_csv(artifacts.predictions_path, bundle, model, opt.batch_size);

    const auto test_rows = bundle.dataset.rows_of(Split::Test);
    if (!test_rows.empty())
        artifacts.final_eval_loss = eval_loss(model, bundle.dataset, test_rows, opt.batch_size);

    if (model_out) *model_out = std::move(model);
    if (bundle_out) *bundle_out = std::move(bundle);
    return artifacts;
}

int run_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
    TaskBundle bundle = build_task(cfg.task, cfg.seed);
    bind_metrics(bundle);
    LyraModel model = load_checkpoint<double>(checkpoint_path);
    validate_model_against_task(
        RunConfig{model.cfg, cfg.train, cfg.task, cfg.output_dir, cfg.seed, cfg.precision},
        bundle.dataset);

    std::filesystem::create_directories(cfg.output_dir);
    std::vector<MetricRow> history;
    for (Split s : {Split::Val, Split::Test}) {
        const auto rows = bundle.dataset.rows_of(s);
        if (rows.empty()) continue;
        MetricRow row;
        row.at = 0;
        row.split = split_name(s);
        row.loss = eval_loss(model, bundle.dataset, rows, cfg.train.batch_size);
        Tensor preds = predict(model, bundle.dataset, rows, cfg.train.batch_size);
        row.metrics = bundle.metrics(s, preds, rows);
        history.push_back(row);
        std::cout << row.split << " loss " << fmt(row.loss);
        for (const auto& [name, value] : row.metrics) std::cout << "  " << name << " " << fmt(value);
        std::cout << "\n";
    }
    write_metrics_csv(cfg.output_dir + "/eval_metrics.csv", history, bundle.metric_columns);
    write_predictions_csv(cfg.output_dir + "/predictions.csv", bundle, model, cfg.train.batch_size);
    return 0;
}

int run_params(const RunConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 1));
    LyraModel model = build<double>(cfg.model, rng);
    auto params = model.parameters();

    auto block_of = [](const std::string& name) {
        const auto dot = name.find('.');
        std::string head = name.substr(0, dot);
        if (head == "pgc" || head == "s4") {
            const auto second = name.find('.', dot + 1);
            head = name.substr(0, second);
        }
        return head;
    };
    std::vector<std::pair<std::string, std::size_t>> blocks;
    for (auto& np : params) {
        const std::string block = block_of(np.name);
        if (blocks.empty() || blocks.back().first != block) blocks.emplace_back(block, 0);
        blocks.back().second += np.param->value->size();
    }
    std::size_t total = 0;
    for (const auto& [name, count] : blocks) {
        std::printf("%-12s %8zu\n", name.c_str(), count);
        total += count;
    }
    std::printf("%-12s %8zu\n", "total", total);
    return 0;
}

int run_kernel(const RunConfig& cfg, std::size_t length, bool zero_c,
               const std::string& checkpoint_path) {
    LyraModel model = [&] {
        if (!checkpoint_path.empty()) return load_checkpoint<double>(checkpoint_path);
        Rng rng(derive_seed(cfg.seed, 1));
        return build<double>(cfg.model, rng);
    }();
    if (model.s4_blocks.empty())
        throw ConfigError("kernel: the configured model has no S4D blocks");
    auto& kernel = model.s4_blocks[0].layer.kernel;
    if (zero_c)
        for (auto& v : kernel.C.value->data) v = 0.0;

    Tensor K = materialize_kernel_values(kernel, length);
    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream out(cfg.output_dir + "/kernel.csv");
        if (!out) throw ConfigError("cannot write kernel.csv");
        out << "channel,t,value\n";
        for (std::size_t h = 0; h < K.dim(0); ++h)
            for (std::size_t t = 0; t < K.dim(1); ++t)
                out << h << "," << t << "," << fmt(K.data[h * K.dim(1) + t]) << "\n";
    }
    {
        auto sigma = kernel_svd_spectrum(K);
        std::ofstream out(cfg.output_dir + "/kernel_svd.csv");
        if (!out) throw ConfigError("cannot write kernel_svd.csv");
        out << "index,sigma\n";
        for (std::size_t i = 0; i < sigma.size(); ++i) out << i << "," << fmt(sigma[i]) << "\n";
    }
    std::cout << "wrote " << K.dim(0) << " kernels of length " << K.dim(1) << " to "
              << cfg.output_dir << "\n";
    return 0;
}

int run_gradcheck(const RunConfig& cfg, bool corrupt_adjoint) {
    if (cfg.model.d_model > 8)
        throw ConfigError("gradcheck: d_model must be <= 8 to keep finite differences "
                          "tractable; shrink the model section");
    for (auto h : cfg.model.pgc_hiddens)
        if (h > 8) throw ConfigError("gradcheck: pgc hidden widths must be <= 8");
    const std::size_t L = 8, B = 2;

    Rng rng(derive_seed(cfg.seed, 1));
    LyraModel model = build<double>(cfg.model, rng);

    Rng data_rng(derive_seed(cfg.seed, 4));
    Tensor x({B, L, cfg.model.d_input});
    for (auto& v : x.data) v = data_rng.normal();
    Tensor target({B, cfg.model.d_output});
    for (auto& v : target.data) v = data_rng.normal();

    auto make_loss = [&](Tape& tape) {
        Rng fw(derive_seed(cfg.seed, 5));
        auto y = lyra_forward(tape, model, x, fw, false);
        return mse_loss(tape, y, target);
    };

    detail::corrupt_adjoint_flag() = corrupt_adjoint;
    auto report = gradcheck(model.parameters(), make_loss);
    detail::corrupt_adjoint_flag() = false;

    std::printf("%-24s %-14s %s\n", "tensor", "max_rel_err", "status");
    for (const auto& row : report.rows)
        std::printf("%-24s %-14.3e %s\n", row.name.c_str(), row.rel_err,
                    row.pass ? "pass" : "FAIL");
    std::printf("gradcheck: %s (tolerance 1e-5, step 1e-5)\n",
                report.all_pass ? "all tensors pass" : "FAILED");
    return report.all_pass ? 0 : 1;
}

}  // namespace lyra
