#include "lyra/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace lyra {

// ---------------------------------------------------------------------------
// Polynomial task
// ---------------------------------------------------------------------------

Dataset gen_poly_task(const SyntheticPolySpec& spec, Rng& rng) {
    if (spec.n_train < 1 || spec.n_test < 1)
        throw ConfigError("poly task: n_train and n_test must be >= 1");
    const std::size_t n = spec.n_train + spec.n_test;
    Dataset d;
    d.inputs = Tensor({n, 1, 1});
    d.targets = Tensor({n, 1});
    d.split.assign(n, Split::Train);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        double y = 0, xp = 1;
        for (double a : spec.poly) {
            y += a * xp;
            xp *= x;
        }
        y += spec.sin_amp * std::sin(spec.sin_freq * x);
        y += spec.cos_amp * std::cos(spec.cos_freq * x);
        d.inputs.data[i] = x;
        d.targets.data[i] = y;
        if (i >= spec.n_train) d.split[i] = Split::Test;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Epistasis
// ---------------------------------------------------------------------------

double eval_epistasis(const EpistasisLandscape& landscape, std::span<const double> u) {
    if (u.size() != landscape.l) throw ShapeError("eval_epistasis: sequence length mismatch");
    double f = 0;
    for (const auto& [subset, coef] : landscape.terms) {
        double prod = coef;
        for (int pos : subset) prod *= u[std::size_t(pos - 1)];
        f += prod;
    }
    return f;
}

EpistasisData gen_epistasis_dataset(std::size_t l, std::size_t K, std::size_t n_terms, Rng& rng) {
    if (l < 1 || l > 16) throw ConfigError("epistasis: l must be in [1, 16] (exhaustive)");
    if (K < 1 || K > l) throw ConfigError("epistasis: K must be in [1, l]");

    // count available subsets of size 1..K
    double available = 0;
    {
        double binom = 1;
        for (std::size_t k = 1; k <= K; ++k) {
            binom = binom * double(l - k + 1) / double(k);
            available += binom;
        }
    }
    if (double(n_terms) > available)
        throw ConfigError("epistasis: n_terms exceeds available subsets");

    EpistasisData out;
    out.landscape.l = l;
    out.landscape.K = K;
    while (out.landscape.terms.size() < n_terms) {
        const std::size_t k = 1 + rng.below(K);
        std::set<int> subset;
        while (subset.size() < k) subset.insert(int(1 + rng.below(l)));
        std::vector<int> key(subset.begin(), subset.end());
        if (out.landscape.terms.count(key)) continue;
        out.landscape.terms[key] = rng.normal(0.0, 1.0 / std::sqrt(double(k)));
    }

    const std::size_t n = std::size_t(1) << l;
    auto& d = out.dataset;
    d.inputs = Tensor({n, l, 2});
    d.targets = Tensor({n, 1});
    d.orders.resize(n);
    d.split.assign(n, Split::Train);
    std::vector<double> u(l);
    for (std::size_t row = 0; row < n; ++row) {
        int weight = 0;
        for (std::size_t i = 0; i < l; ++i) {
            const int bit = int((row >> i) & 1u);
            u[i] = double(bit);
            weight += bit;
            d.inputs.data[(row * l + i) * 2 + std::size_t(bit)] = 1.0;
        }
        d.targets.data[row] = eval_epistasis(out.landscape, u);
        d.orders[row] = weight;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Selective copying
// ---------------------------------------------------------------------------

void SelectiveCopySpec::validate() const {
    if (L < 1) throw ConfigError("copy task: L must be >= 1");
    if (alphabet.size() < 2) throw ConfigError("copy task: alphabet needs >= 2 tokens");
    if (wild_type.size() != L) throw ConfigError("copy task: wild_type length must equal L");
    for (char c : wild_type)
        if (alphabet.find(c) == std::string::npos)
            throw ConfigError("copy task: wild_type token outside the alphabet");
    if (mutable_positions.empty()) throw ConfigError("copy task: mutable_positions is empty");
    for (auto p : mutable_positions)
        if (p >= L) throw ConfigError("copy task: mutable position out of range");
    for (const auto& group : comutation_patterns)
        for (auto p : group)
            if (std::find(mutable_positions.begin(), mutable_positions.end(), p) ==
                mutable_positions.end())
                throw ConfigError("copy task: co-mutation pattern position is not mutable");
    if (m_min < 1 || m_max < m_min) throw ConfigError("copy task: bad mutation count range");
    if (m_max > 14) throw ConfigError("copy task: mutation count range is capped at 14");
    if (m_max > mutable_positions.size())
        throw ConfigError("copy task: m_max exceeds the available mutable positions");
}

namespace {

std::vector<HeadSpec> copy_heads(const SelectiveCopySpec& spec) {
    std::vector<HeadSpec> heads;
    const std::size_t pos_classes = spec.L + 1;              // positions + sentinel
    const std::size_t tok_classes = spec.alphabet.size() + 1;  // tokens + sentinel 0
    std::size_t offset = 0;
    for (std::size_t s = 0; s < spec.m_max; ++s) {
        heads.push_back({offset, pos_classes});
        offset += pos_classes;
    }
    for (std::size_t s = 0; s < spec.m_max; ++s) {
        heads.push_back({offset, tok_classes});
        offset += tok_classes;
    }
    return heads;
}

}  // namespace

Dataset gen_selective_copy(const SelectiveCopySpec& spec, Rng& rng, std::size_t n) {
    spec.validate();
    const std::size_t T = spec.alphabet.size();
    Dataset d;
    d.label_kind = LabelKind::MultiHead;
    d.heads = copy_heads(spec);
    d.inputs = Tensor({n, spec.L, T + 1});
    d.head_labels.resize(n);
    d.split.assign(n, Split::Train);

    std::vector<std::size_t> pool = spec.mutable_positions;
    for (std::size_t row = 0; row < n; ++row) {
        const std::size_t m = spec.m_min + rng.below(spec.m_max - spec.m_min + 1);

        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
        std::vector<std::size_t> chosen;
        std::set<std::size_t> taken;
        for (std::size_t p : pool) {
            if (chosen.size() >= m) break;
            if (taken.count(p)) continue;
            // take the whole co-mutation group while budget remains
            std::vector<std::size_t> group = {p};
            for (const auto& pattern : spec.comutation_patterns) {
                if (std::find(pattern.begin(), pattern.end(), p) != pattern.end()) {
                    group.assign(pattern.begin(), pattern.end());
                    break;
                }
            }
            for (std::size_t q : group) {
                if (chosen.size() >= m) break;
                if (taken.insert(q).second) chosen.push_back(q);
            }
        }
        std::sort(chosen.begin(), chosen.end());

        std::vector<Mutation> muts;
        for (std::size_t p : chosen) {
            const std::size_t wt = spec.alphabet.find(spec.wild_type[p]);
            std::size_t tok = rng.below(T - 1);
            if (tok >= wt) ++tok;
            muts.push_back({p, int(tok) + 1});
        }

        // inputs: zero token everywhere, substituted tokens at mutated spots
        for (std::size_t i = 0; i < spec.L; ++i)
            d.inputs.data[(row * spec.L + i) * (T + 1)] = 1.0;
        for (const auto& mu : muts) {
            double* cell = d.inputs.data.data() + (row * spec.L + mu.position) * (T + 1);
            cell[0] = 0.0;
            cell[std::size_t(mu.token)] = 1.0;
        }

        // slot labels, sentinel-padded
        auto& labels = d.head_labels[row];
        labels.assign(2 * spec.m_max, 0);
        for (std::size_t s = 0; s < spec.m_max; ++s)
            labels[s] = int(spec.L);  // position sentinel
        for (std::size_t s = 0; s < muts.size(); ++s) {
            labels[s] = int(muts[s].position);
            labels[spec.m_max + s] = muts[s].token;
        }
    }
    return d;
}

std::vector<Mutation> decode_copy_target(const std::vector<int>& slot_labels,
                                         const SelectiveCopySpec& spec) {
    if (slot_labels.size() != 2 * spec.m_max)
        throw ShapeError("decode: expected " + std::to_string(2 * spec.m_max) + " slot labels");
    std::vector<Mutation> muts;
    for (std::size_t s = 0; s < spec.m_max; ++s) {
        const int pos = slot_labels[s];
        const int tok = slot_labels[spec.m_max + s];
        if (pos == int(spec.L) || tok == 0) continue;  // sentinel slot
        muts.push_back({std::size_t(pos), tok});
    }
    return muts;
}

std::vector<int> copy_logits_to_labels(std::span<const double> logits,
                                       const SelectiveCopySpec& spec) {
    const auto heads = copy_heads(spec);
    std::vector<int> labels(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const double* z = logits.data() + heads[h].offset;
        std::size_t best = 0;
        for (std::size_t c = 1; c < heads[h].classes; ++c)
            if (z[c] > z[best]) best = c;
        labels[h] = int(best);
    }
    return labels;
}

SelectiveCopySpec default_copy_spec(std::uint64_t seed) {
    SelectiveCopySpec spec;
    spec.L = 64;
    spec.alphabet = kProteinAlphabet;
    Rng rng(seed);
    spec.wild_type.resize(spec.L);
    for (auto& c : spec.wild_type) c = spec.alphabet[rng.below(spec.alphabet.size())];
    spec.mutable_positions = {3, 7, 12, 18, 22, 27, 31, 36, 41, 45, 50, 54, 58, 61};
    spec.comutation_patterns = {{7, 36}, {12, 50}, {22, 61}};
    spec.m_min = 1;
    spec.m_max = 14;
    return spec;
}

// ---------------------------------------------------------------------------
// Frequency analysis
// ---------------------------------------------------------------------------

void FrequencySpec::validate() const {
    if (L < 8) throw ConfigError("frequency task: L must be >= 8");
    for (std::size_t i = 0; i < components.size(); ++i)
        for (std::size_t j = i + 1; j < components.size(); ++j)
            if (components[i].omega == components[j].omega)
                throw ValueError("frequency task: duplicate frequencies");
    if (amp_jitter < 0 || amp_jitter >= 1 || phase_jitter < 0)
        throw ConfigError("frequency task: bad jitter settings");
}

Dataset gen_frequency_task(const FrequencySpec& spec, Rng& rng, std::size_t n_train,
                           std::size_t n_test) {
    spec.validate();
    const std::size_t n = n_train + n_test;
    if (n == 0) throw ConfigError("frequency task: need at least one sample");
    const std::size_t L = spec.L;
    Dataset d;
    d.inputs = Tensor({n, L, 1});
    d.targets = Tensor({n, 5 * L});
    d.split.assign(n, Split::Train);
    for (std::size_t row = 0; row < n; ++row) {
        std::array<FrequencyComponent, 4> comps = spec.components;
        for (auto& c : comps) {
            if (spec.amp_jitter > 0) c.amp *= 1.0 + spec.amp_jitter * rng.uniform(-1.0, 1.0);
            if (spec.phase_jitter > 0) c.phase += spec.phase_jitter * rng.uniform(-1.0, 1.0);
        }
        for (std::size_t t = 0; t < L; ++t) {
            double composite = 0;
            for (std::size_t i = 0; i < comps.size(); ++i) {
                const double v = comps[i].amp * std::cos(comps[i].omega * double(t) + comps[i].phase);
                d.targets.data[row * 5 * L + (i + 1) * L + t] = v;
                composite += v;
            }
            d.inputs.data[row * L + t] = composite;
            d.targets.data[row * 5 * L + t] = composite;
        }
        if (row >= n_train) d.split[row] = Split::Test;
    }
    return d;
}

FrequencySpec default_frequency_spec(std::size_t L) {
    FrequencySpec spec;
    spec.L = L;
    const double base = 2.0 * std::numbers::pi / double(L);
    spec.components = {{{1.0, base * 3.0, 0.4},
                        {0.8, base * 7.0, 1.1},
                        {0.6, base * 12.0, 2.3},
                        {0.5, base * 19.0, 5.0}}};
    spec.amp_jitter = 0.5;
    spec.phase_jitter = std::numbers::pi;
    return spec;
}

// ---------------------------------------------------------------------------
// Encoding and CSV
// ---------------------------------------------------------------------------

Tensor one_hot_encode(const std::string& seq, const std::string& alphabet) {
    const std::size_t L = seq.size(), A = alphabet.size();
    Tensor out({L, A});
    for (std::size_t i = 0; i < L; ++i) {
        const auto idx = alphabet.find(seq[i]);
        if (idx == std::string::npos)
            throw EncodingError("unknown token '" + std::string(1, seq[i]) + "' at position " +
                                std::to_string(i));
        out.data[i * A + idx] = 1.0;
    }
    return out;
}

Tensor one_hot_encode_stacked(const std::string& guide, const std::string& target) {
    if (guide.size() != target.size())
        throw ShapeError("stacked encoding: guide and target lengths differ");
    const std::string dna = kDnaAlphabet;
    const std::size_t L = guide.size();
    Tensor out({L, 8});
    auto put = [&](const std::string& seq, std::size_t block) {
        for (std::size_t i = 0; i < L; ++i) {
            const auto idx = dna.find(seq[i]);
            if (idx == std::string::npos)
                throw EncodingError("unknown token '" + std::string(1, seq[i]) +
                                    "' at position " + std::to_string(i));
            out.data[i * 8 + block + idx] = 1.0;
        }
    };
    put(guide, 0);
    put(target, 4);
    return out;
}

std::string one_hot_decode(const Tensor& mat, const std::string& alphabet) {
    if (mat.rank() != 2 || mat.dim(1) != alphabet.size())
        throw ShapeError("one_hot_decode: shape does not match the alphabet");
    std::string seq(mat.dim(0), '?');
    for (std::size_t i = 0; i < mat.dim(0); ++i) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < alphabet.size(); ++a)
            if (mat.data[i * alphabet.size() + a] > mat.data[i * alphabet.size() + best]) best = a;
        seq[i] = alphabet[best];
    }
    return seq;
}

Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw CsvError("csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw CsvError("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool has_split = false;
    if (line == "sequence,label") {
        has_split = false;
    } else if (line == "sequence,label,split") {
        has_split = true;
    } else {
        throw CsvError("csv line 1: expected header 'sequence,label[,split]', got '" + line + "'");
    }

    std::vector<std::string> seqs;
    std::vector<double> labels_real;
    std::vector<int> labels_class;
    std::vector<Split> splits;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.push_back("");
        const std::size_t expected = has_split ? 3 : 2;
        if (fields.size() != expected)
            throw CsvError("csv line " + std::to_string(line_no) + ": expected " +
                           std::to_string(expected) + " fields, got " +
                           std::to_string(fields.size()));
        if (!seqs.empty() && fields[0].size() != seqs[0].size())
            throw CsvError("csv line " + std::to_string(line_no) +
                           ": inconsistent sequence length");
        for (std::size_t i = 0; i < fields[0].size(); ++i)
            if (schema.alphabet.find(fields[0][i]) == std::string::npos)
                throw CsvError("csv line " + std::to_string(line_no) + ": unknown token '" +
                               std::string(1, fields[0][i]) + "' at position " + std::to_string(i));
        seqs.push_back(fields[0]);

        try {
            std::size_t consumed = 0;
            if (schema.label == CsvSchema::Label::Real) {
                labels_real.push_back(std::stod(fields[1], &consumed));
            } else {
                const long v = std::stol(fields[1], &consumed);
                if (v < 0 || std::size_t(v) >= schema.n_classes)
                    throw CsvError("csv line " + std::to_string(line_no) +
                                   ": class label out of range");
                labels_class.push_back(int(v));
            }
            if (consumed != fields[1].size()) throw std::invalid_argument("trailing characters");
        } catch (const CsvError&) {
            throw;
        } catch (const std::exception&) {
            throw CsvError("csv line " + std::to_string(line_no) + ": unparsable label '" +
                           fields[1] + "'");
        }

        if (has_split) {
            if (fields[2] == "train") splits.push_back(Split::Train);
            else if (fields[2] == "val") splits.push_back(Split::Val);
            else if (fields[2] == "test") splits.push_back(Split::Test);
            else
                throw CsvError("csv line " + std::to_string(line_no) + ": unknown split '" +
                               fields[2] + "'");
        }
    }
    if (seqs.empty()) throw CsvError("csv: no data rows in " + path);

    const std::size_t n = seqs.size(), L = seqs[0].size(), A = schema.alphabet.size();
    Dataset d;
    d.inputs = Tensor({n, L, A});
    for (std::size_t i = 0; i < n; ++i) {
        Tensor row = one_hot_encode(seqs[i], schema.alphabet);
        std::copy(row.data.begin(), row.data.end(), d.inputs.data.begin() + i * L * A);
    }
    if (schema.label == CsvSchema::Label::Real) {
        d.label_kind = LabelKind::Regression;
        d.targets = Tensor({n, 1}, std::move(labels_real));
    } else {
        d.label_kind = LabelKind::SingleClass;
        d.class_labels = std::move(labels_class);
        d.heads = {{0, schema.n_classes}};
    }
    if (has_split) {
        d.split = std::move(splits);
    } else {
        Rng rng(schema.split_seed);
        assign_split_random(d, schema.train_frac, rng);
    }
    return d;
}

}  // namespace lyra
