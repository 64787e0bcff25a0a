#pragma once

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lyra/dataset.hpp"
#include "lyra/model.hpp"
#include "lyra/optim.hpp"

namespace lyra {

struct TrainOptions {
    std::size_t epochs = 100;
    std::size_t steps = 0;  // when > 0, trains by step count instead of epochs
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t eval_every = 10;  // cadence, in epochs (or steps in step mode)
    AdamWOptions optim;

    void validate() const {
        if (steps == 0 && epochs == 0) throw ConfigError("train: epochs or steps must be positive");
        if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
        if (eval_every == 0) throw ConfigError("train: eval_every must be positive");
    }
};

struct MetricRow {
    std::size_t at = 0;  // epoch (epoch mode) or step (step mode)
    std::string split;
    double loss = 0;
    std::vector<std::pair<std::string, double>> metrics;
};

using ParamSnapshot = std::vector<std::vector<double>>;

inline ParamSnapshot snapshot_params(LyraModel& model) {
    ParamSnapshot snap;
    for (auto& np : model.parameters()) snap.push_back(np.param->value->data);
    return snap;
}

inline void restore_params(LyraModel& model, const ParamSnapshot& snap) {
    auto params = model.parameters();
    if (snap.size() != params.size()) throw ShapeError("restore: snapshot arity mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) params[i].param->value->data = snap[i];
}

struct TrainResult {
    std::vector<MetricRow> history;
    ParamSnapshot best_params;
    double best_eval_loss = 0;
    std::size_t best_at = 0;
};

// Extra task-specific metrics computed on eval predictions.
using MetricsFn = std::function<std::vector<std::pair<std::string, double>>(
    Split, const Tensor& preds, const std::vector<std::size_t>& rows)>;

namespace detail {

inline Tensor gather_inputs(const Dataset& data, const std::vector<std::size_t>& rows,
                            std::size_t begin, std::size_t end) {
    const std::size_t L = data.seq_len(), D = data.input_dim();
    Tensor x({end - begin, L, D});
    for (std::size_t i = begin; i < end; ++i) {
        const double* src = data.inputs.data.data() + rows[i] * L * D;
        std::copy(src, src + L * D, x.data.data() + (i - begin) * L * D);
    }
    return x;
}

inline Var batch_loss(Tape& tape, const Var& pred, const Dataset& data,
                      const std::vector<std::size_t>& rows, std::size_t begin, std::size_t end) {
    const std::size_t B = end - begin;
    switch (data.label_kind) {
        case LabelKind::Regression: {
            const std::size_t D = data.targets.dim(1);
            Tensor t({B, D});
            for (std::size_t i = begin; i < end; ++i) {
                const double* src = data.targets.data.data() + rows[i] * D;
                std::copy(src, src + D, t.data.data() + (i - begin) * D);
            }
            return mse_loss(tape, pred, t);
        }
        case LabelKind::SingleClass: {
            std::vector<int> labels(B);
            for (std::size_t i = begin; i < end; ++i) labels[i - begin] = data.class_labels[rows[i]];
            return cross_entropy_loss(tape, pred, labels);
        }
        case LabelKind::MultiHead: {
            std::vector<std::vector<int>> labels(B);
            for (std::size_t i = begin; i < end; ++i) labels[i - begin] = data.head_labels[rows[i]];
            return cross_entropy_heads(tape, pred, data.heads, labels);
        }
    }
    throw ContractError("batch_loss: unknown label kind");
}

}  // namespace detail

// Eval-mode predictions for the given rows, batched. Deterministic.
inline Tensor predict(LyraModel& model, const Dataset& data, const std::vector<std::size_t>& rows,
                      std::size_t batch_size) {
    const std::size_t d_out = model.cfg.d_output;
    Tensor preds({rows.size(), d_out});
    Rng unused(0);
    for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
        const std::size_t end = std::min(rows.size(), begin + batch_size);
        Tensor x = detail::gather_inputs(data, rows, begin, end);
        Tape tape;
        tape.recording = false;
        auto y = lyra_forward(tape, model, x, unused, false);
        std::copy(y.val->data.begin(), y.val->data.end(), preds.data.data() + begin * d_out);
    }
    return preds;
}

// Eval-mode loss over rows (batch-size weighted so it matches the full-split
// value).
inline double eval_loss(LyraModel& model, const Dataset& data,
                        const std::vector<std::size_t>& rows, std::size_t batch_size) {
    double total = 0;
    Rng unused(0);
    for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
        const std::size_t end = std::min(rows.size(), begin + batch_size);
        Tensor x = detail::gather_inputs(data, rows, begin, end);
        Tape tape;
        tape.recording = false;
        auto y = lyra_forward(tape, model, x, unused, false);
        auto loss = detail::batch_loss(tape, y, data, rows, begin, end);
        total += loss.val->data[0] * double(end - begin);
    }
    return rows.empty() ? 0.0 : total / double(rows.size());
}

// Deterministic training loop: seeded shuffling, AdamW steps, periodic
// eval rows, best-checkpoint tracking by eval loss (val split when present,
// else test). Aborts with NumericError on a non-finite loss.
inline TrainResult train_loop(LyraModel& model, const Dataset& data, const TrainOptions& opt,
                              const MetricsFn& metrics_fn = {}) {
    opt.validate();
    auto train_rows = data.rows_of(Split::Train);
    if (train_rows.empty()) throw ConfigError("train: empty train split");
    const auto val_rows = data.rows_of(Split::Val);
    const auto test_rows = data.rows_of(Split::Test);
    const Split best_split = val_rows.empty() ? Split::Test : Split::Val;

    Rng rng(opt.seed);
    AdamW optim(model.parameters(), opt.optim);

    TrainResult result;
    result.best_eval_loss = std::numeric_limits<double>::infinity();
    result.best_params = snapshot_params(model);

    const bool step_mode = opt.steps > 0;
    const std::size_t total_steps = step_mode ? opt.steps : 0;
    std::size_t step = 0, epoch = 0;

    auto run_eval = [&](std::size_t at) {
        for (Split s : {Split::Val, Split::Test}) {
            const auto& rows = (s == Split::Val) ? val_rows : test_rows;
            if (rows.empty()) continue;
            MetricRow row;
            row.at = at;
            row.split = split_name(s);
            row.loss = eval_loss(model, data, rows, opt.batch_size);
            if (metrics_fn) {
                Tensor preds = predict(model, data, rows, opt.batch_size);
                row.metrics = metrics_fn(s, preds, rows);
            }
            result.history.push_back(row);
            if (s == best_split && row.loss < result.best_eval_loss) {
                result.best_eval_loss = row.loss;
                result.best_at = at;
                result.best_params = snapshot_params(model);
            }
        }
    };

    bool done = false;
    while (!done) {
        ++epoch;
        // seeded Fisher-Yates reshuffle each epoch
        for (std::size_t i = train_rows.size(); i > 1; --i)
            std::swap(train_rows[i - 1], train_rows[rng.below(i)]);

        double epoch_loss = 0;
        std::size_t epoch_samples = 0;
        for (std::size_t begin = 0; begin < train_rows.size(); begin += opt.batch_size) {
            const std::size_t end = std::min(train_rows.size(), begin + opt.batch_size);
            Tensor x = detail::gather_inputs(data, train_rows, begin, end);
            Tape tape;
            auto y = lyra_forward(tape, model, x, rng, true);
            auto loss = detail::batch_loss(tape, y, data, train_rows, begin, end);
            const double loss_val = loss.val->data[0];
            if (!std::isfinite(loss_val))
                throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));
            tape.backward(loss);
            optim.step();
            model.zero_grad();
            epoch_loss += loss_val * double(end - begin);
            epoch_samples += end - begin;
            ++step;
            if (step_mode) {
                if (step % opt.eval_every == 0 || step == total_steps) {
                    MetricRow row;
                    row.at = step;
                    row.split = "train";
                    row.loss = loss_val;
                    result.history.push_back(row);
                    run_eval(step);
                }
                if (step >= total_steps) {
                    done = true;
                    break;
                }
            }
        }
        if (!step_mode) {
            MetricRow row;
            row.at = epoch;
            row.split = "train";
            row.loss = epoch_loss / double(epoch_samples);
            result.history.push_back(row);
            if (epoch % opt.eval_every == 0 || epoch == opt.epochs) run_eval(epoch);
            if (epoch >= opt.epochs) done = true;
        }
    }
    return result;
}

}  // namespace lyra
