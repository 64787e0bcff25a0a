#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lyra/ops.hpp"
#include "lyra/tensor.hpp"

namespace lyra {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

enum class LabelKind { Regression, SingleClass, MultiHead };

// In-memory dataset: one-hot or real-valued channel inputs plus one of three
// label payloads. `orders` optionally carries a per-sample epistatic order
// for bucketed metrics.
struct Dataset {
    Tensor inputs;  // [n, L, d_in]
    LabelKind label_kind = LabelKind::Regression;
    Tensor targets;                               // [n, d_out] for regression
    std::vector<int> class_labels;                // [n] for single-class
    std::vector<std::vector<int>> head_labels;    // [n][heads] for multi-head
    std::vector<HeadSpec> heads;                  // logit layout for class tasks
    std::vector<Split> split;                     // per row
    std::vector<int> orders;                      // optional, per row

    std::size_t size() const { return inputs.rank() ? inputs.dim(0) : 0; }
    std::size_t seq_len() const { return inputs.dim(1); }
    std::size_t input_dim() const { return inputs.dim(2); }

    // width the model's decoder must produce
    std::size_t output_dim() const {
        switch (label_kind) {
            case LabelKind::Regression: return targets.dim(1);
            case LabelKind::SingleClass: return heads.at(0).classes;
            case LabelKind::MultiHead: {
                std::size_t total = 0;
                for (const auto& h : heads) total = std::max(total, h.offset + h.classes);
                return total;
            }
        }
        return 0;
    }

    std::vector<std::size_t> rows_of(Split s) const {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) rows.push_back(i);
        return rows;
    }
};

// Seeded random split assignment: train_frac of rows to Train, the rest to
// Test.
inline void assign_split_random(Dataset& data, double train_frac, Rng& rng) {
    const std::size_t n = data.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const std::size_t n_train = std::size_t(double(n) * train_frac + 0.5);
    data.split.assign(n, Split::Test);
    for (std::size_t i = 0; i < n_train && i < n; ++i) data.split[idx[i]] = Split::Train;
}

// Stratified variant: splits within each stratum so every stratum keeps test
// representation (used by the epistasis task so each interaction order keeps
// at least a couple of held-out rows).
inline void assign_split_stratified(Dataset& data, double train_frac, Rng& rng,
                                    const std::vector<int>& strata) {
    const std::size_t n = data.size();
    if (strata.size() != n) throw ShapeError("stratified split: strata size mismatch");
    data.split.assign(n, Split::Train);
    std::vector<int> uniq(strata);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int s : uniq) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < n; ++i)
            if (strata[i] == s) rows.push_back(i);
        for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
        std::size_t n_test = std::size_t(double(rows.size()) * (1.0 - train_frac) + 0.5);
        if (rows.size() >= 4) n_test = std::max<std::size_t>(n_test, 2);
        n_test = std::min(n_test, rows.size() > 1 ? rows.size() - 1 : 0);
        for (std::size_t i = 0; i < n_test; ++i) data.split[rows[i]] = Split::Test;
    }
}

}  // namespace lyra
