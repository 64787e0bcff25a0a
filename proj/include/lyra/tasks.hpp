#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lyra/dataset.hpp"
#include "lyra/rng.hpp"

namespace lyra {

inline constexpr const char* kDnaAlphabet = "ACGT";
inline constexpr const char* kProteinAlphabet = "ACDEFGHIKLMNPQRSTVWY";

// ---------------------------------------------------------------------------
// Synthetic polynomial regression
// ---------------------------------------------------------------------------

struct SyntheticPolySpec {
    std::array<double, 6> poly = {0.3, 0.8, -0.6, 0.5, 0.4, 0.9};  // a0..a5
    double sin_amp = 0.4;
    double sin_freq = 3.0;
    double cos_amp = 0.3;
    double cos_freq = 2.0;
    std::uint64_t seed = 2024;
    std::size_t n_train = 256;
    std::size_t n_test = 64;
};

// Inputs x ~ U[-1, 1] as length-1 scalar sequences; labels
// y = sum_k a_k x^k + sin_amp*sin(sin_freq*x) + cos_amp*cos(cos_freq*x).
Dataset gen_poly_task(const SyntheticPolySpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Epistatic landscapes
// ---------------------------------------------------------------------------

// Sparse multilinear polynomial over position indicators. Term keys are
// sorted 1-based position subsets of size 1..K.
struct EpistasisLandscape {
    std::size_t l = 0;
    std::size_t K = 0;
    std::map<std::vector<int>, double> terms;
};

// f(u) = sum over terms of c_S * prod_{i in S} u_i
double eval_epistasis(const EpistasisLandscape& landscape, std::span<const double> u);

struct EpistasisData {
    EpistasisLandscape landscape;
    Dataset dataset;  // exhaustive over {0,1}^l, one-hot over a 2-letter alphabet
};

// Exhaustive dataset (requires l <= 16). Terms get distinct random subsets
// with order drawn uniformly in 1..K and coefficients ~ N(0, 1/order);
// `orders` carries the Hamming weight of each row.
EpistasisData gen_epistasis_dataset(std::size_t l, std::size_t K, std::size_t n_terms, Rng& rng);

// ---------------------------------------------------------------------------
// Selective copying
// ---------------------------------------------------------------------------

struct SelectiveCopySpec {
    std::string alphabet = kProteinAlphabet;
    std::string wild_type;                               // length L over alphabet
    std::vector<std::size_t> mutable_positions;          // subset of [0, L)
    std::vector<std::vector<std::size_t>> comutation_patterns;  // groups of positions
    std::size_t m_min = 1;
    std::size_t m_max = 14;
    std::size_t L = 64;

    void validate() const;
};

struct Mutation {
    std::size_t position;
    int token;  // 1-based alphabet id; 0 is the zero token
    bool operator==(const Mutation&) const = default;
};

// Each sample plants m ~ U[m_min, m_max] substitutions at positions drawn
// from mutable_positions (co-mutation groups are taken together while the
// budget allows). Inputs carry the zero token everywhere else; targets are
// m_max (position, token) slots sorted by position and sentinel-padded,
// trained with per-slot cross-entropy.
Dataset gen_selective_copy(const SelectiveCopySpec& spec, Rng& rng, std::size_t n);

// Reads the planted mutations back out of one row's slot labels.
std::vector<Mutation> decode_copy_target(const std::vector<int>& slot_labels,
                                         const SelectiveCopySpec& spec);

// Argmax decode of predicted logits into slot labels (same layout).
std::vector<int> copy_logits_to_labels(std::span<const double> logits,
                                       const SelectiveCopySpec& spec);

// A ready-made desk-scale spec: L=64, 14 irregular mutable positions with a
// few co-mutating pairs over the protein alphabet.
SelectiveCopySpec default_copy_spec(std::uint64_t seed = 7);

// ---------------------------------------------------------------------------
// Frequency analysis
// ---------------------------------------------------------------------------

struct FrequencyComponent {
    double amp = 1.0;
    double omega = 0.0;  // radians per step
    double phase = 0.0;
};

struct FrequencySpec {
    std::array<FrequencyComponent, 4> components;
    std::size_t L = 64;
    // Per-sample variation: amplitudes scale by U[1-amp_jitter, 1+amp_jitter],
    // phases shift by U[-phase_jitter, +phase_jitter]. Zero keeps the spec
    // values exactly.
    double amp_jitter = 0.0;
    double phase_jitter = 0.0;

    void validate() const;
};

// Inputs: composite signals [n, L, 1]. Targets: the composite followed by
// the four component signals, flattened to [n, 5L].
Dataset gen_frequency_task(const FrequencySpec& spec, Rng& rng, std::size_t n_train,
                           std::size_t n_test);

// Bin-aligned default: omega_i = 2*pi*k_i/L with distinct integers k_i.
FrequencySpec default_frequency_spec(std::size_t L = 64);

// ---------------------------------------------------------------------------
// Encoding and CSV ingestion
// ---------------------------------------------------------------------------

// [L, |alphabet|], strict unknown-token policy (error names the position).
Tensor one_hot_encode(const std::string& seq, const std::string& alphabet);

// Stacked guide-target mode: 4+4 channel blocks over the nucleotide alphabet.
Tensor one_hot_encode_stacked(const std::string& guide, const std::string& target);

std::string one_hot_decode(const Tensor& mat, const std::string& alphabet);

struct CsvSchema {
    std::string alphabet = kDnaAlphabet;
    enum class Label { Real, Class } label = Label::Real;
    std::size_t n_classes = 2;
    double train_frac = 0.8;       // used when the file has no split column
    std::uint64_t split_seed = 0;
};

// Header `sequence,label[,split]`; UTF-8, comma-separated, unquoted.
Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema);

}  // namespace lyra
