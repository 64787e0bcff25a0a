#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "lyra/fft.hpp"
#include "lyra/tasks.hpp"

using namespace lyra;

namespace {

std::string write_temp_csv(const std::string& name, const std::string& body) {
    const std::string path = "/tmp/lyra_csv_" + name;
    std::ofstream out(path);
    out << body;
    return path;
}

// Horner-scheme evaluation of the polynomial part plus the trig terms.
double poly_oracle(const SyntheticPolySpec& spec, double x) {
    double y = 0;
    for (int k = 5; k >= 0; --k) y = y * x + spec.poly[std::size_t(k)];
    return y + spec.sin_amp * std::sin(spec.sin_freq * x) + spec.cos_amp * std::cos(spec.cos_freq * x);
}

}  // namespace

TEST_CASE("poly task: constant spec gives constant labels") {
    SyntheticPolySpec spec;
    spec.poly = {1.4, 0, 0, 0, 0, 0};
    spec.sin_amp = 0;
    spec.cos_amp = 0;
    spec.n_train = 8;
    spec.n_test = 4;
    Rng rng(1);
    auto d = gen_poly_task(spec, rng);
    REQUIRE(d.size() == 12);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.targets.data[i] == 1.4);
}

TEST_CASE("poly task: pure quintic is odd") {
    SyntheticPolySpec spec;
    spec.poly = {0, 0, 0, 0, 0, 1.0};
    spec.sin_amp = 0;
    spec.cos_amp = 0;
    spec.n_train = 16;
    spec.n_test = 1;
    Rng rng(2);
    auto d = gen_poly_task(spec, rng);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = d.inputs.data[i];
        const double y = d.targets.data[i];
        CHECK(y == doctest::Approx(std::pow(x, 5)).epsilon(1e-12));
        CHECK(-y == doctest::Approx(-std::pow(-(-x), 5)).epsilon(1e-12));
    }
}

TEST_CASE("poly task matches the Horner oracle on 100 points") {
    SyntheticPolySpec spec;  // defaults
    spec.n_train = 80;
    spec.n_test = 20;
    Rng rng(3);
    auto d = gen_poly_task(spec, rng);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(std::abs(d.targets.data[i] - poly_oracle(spec, d.inputs.data[i])) < 1e-12);
        CHECK(d.inputs.data[i] >= -1.0);
        CHECK(d.inputs.data[i] <= 1.0);
    }
}

TEST_CASE("poly task is deterministic given the seed") {
    SyntheticPolySpec spec;
    Rng a(9), b(9);
    auto da = gen_poly_task(spec, a);
    auto db = gen_poly_task(spec, b);
    CHECK(da.inputs.data == db.inputs.data);
    CHECK(da.targets.data == db.targets.data);
}

TEST_CASE("eval_epistasis trivial sums") {
    EpistasisLandscape land;
    land.l = 2;
    land.K = 2;
    std::vector<double> u = {1, 1};
    CHECK(eval_epistasis(land, u) == 0.0);  // empty terms
    land.terms[{1}] = 2.0;
    land.terms[{1, 2}] = 3.0;
    CHECK(eval_epistasis(land, u) == 5.0);
    u = {1, 0};
    CHECK(eval_epistasis(land, u) == 2.0);
}

TEST_CASE("eval_epistasis matches a nested-loop expansion oracle") {
    Rng rng(11);
    auto gen = gen_epistasis_dataset(6, 3, 20, rng);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> u(6);
        for (auto& v : u) v = double(rng.below(2));
        // oracle: expand every term with explicit loops over its positions
        double expect = 0;
        for (const auto& [subset, coef] : gen.landscape.terms) {
            double prod = 1;
            for (int pos : subset) prod = prod * u[std::size_t(pos - 1)];
            expect += coef * prod;
        }
        CHECK(eval_epistasis(gen.landscape, u) == expect);
    }
}

TEST_CASE("epistasis dataset is exhaustive with one-hot rows and orders") {
    Rng rng(13);
    auto gen = gen_epistasis_dataset(8, 3, 24, rng);
    CHECK(gen.dataset.size() == 256);
    for (std::size_t row = 0; row < 256; ++row) {
        int weight = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            const double c0 = gen.dataset.inputs.data[(row * 8 + i) * 2];
            const double c1 = gen.dataset.inputs.data[(row * 8 + i) * 2 + 1];
            CHECK(c0 + c1 == 1.0);  // one-hot row
            weight += int(c1);
        }
        CHECK(gen.dataset.orders[row] == weight);
    }
}

TEST_CASE("epistasis with zero terms labels everything zero") {
    Rng rng(15);
    auto gen = gen_epistasis_dataset(5, 2, 0, rng);
    for (double y : gen.dataset.targets.data) CHECK(y == 0.0);
}

TEST_CASE("epistasis rejects impossible term counts") {
    Rng rng(17);
    CHECK_THROWS_AS(gen_epistasis_dataset(3, 1, 4, rng), ConfigError);   // C(3,1) = 3
    CHECK_THROWS_AS(gen_epistasis_dataset(17, 2, 1, rng), ConfigError);  // l > 16
}

TEST_CASE("order-1 landscape is recovered by ordinary least squares") {
    Rng rng(19);
    const std::size_t l = 6;
    auto gen = gen_epistasis_dataset(l, 1, l, rng);
    // design matrix [n, l+1]: indicators + intercept; solve normal equations
    const std::size_t n = gen.dataset.size(), p = l + 1;
    std::vector<double> ata(p * p, 0.0), aty(p, 0.0);
    for (std::size_t row = 0; row < n; ++row) {
        std::vector<double> x(p, 1.0);
        for (std::size_t i = 0; i < l; ++i)
            x[i] = gen.dataset.inputs.data[(row * l + i) * 2 + 1];
        const double y = gen.dataset.targets.data[row];
        for (std::size_t a = 0; a < p; ++a) {
            aty[a] += x[a] * y;
            for (std::size_t b = 0; b < p; ++b) ata[a * p + b] += x[a] * x[b];
        }
    }
    // Gaussian elimination with partial pivoting
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < p; ++r)
            if (std::abs(ata[r * p + col]) > std::abs(ata[piv * p + col])) piv = r;
        for (std::size_t c = 0; c < p; ++c) std::swap(ata[col * p + c], ata[piv * p + c]);
        std::swap(aty[col], aty[piv]);
        for (std::size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = ata[r * p + col] / ata[col * p + col];
            for (std::size_t c = 0; c < p; ++c) ata[r * p + c] -= f * ata[col * p + c];
            aty[r] -= f * aty[col];
        }
    }
    for (std::size_t i = 0; i < l; ++i) {
        const double coef = aty[i] / ata[i * p + i];
        const auto it = gen.landscape.terms.find({int(i + 1)});
        const double expect = it == gen.landscape.terms.end() ? 0.0 : it->second;
        CHECK(coef == doctest::Approx(expect).epsilon(1e-8));
    }
    const double intercept = aty[l] / ata[l * p + l];
    CHECK(std::abs(intercept) < 1e-8);
}

TEST_CASE("selective copy plants exactly m mutations and decodes back") {
    auto spec = default_copy_spec();
    Rng rng(21);
    auto d = gen_selective_copy(spec, rng, 100);
    const std::size_t T = spec.alphabet.size();
    for (std::size_t row = 0; row < 100; ++row) {
        // count non-zero-token positions in the input
        std::size_t nonzero = 0;
        std::vector<Mutation> from_input;
        for (std::size_t i = 0; i < spec.L; ++i) {
            const double* cell = d.inputs.data.data() + (row * spec.L + i) * (T + 1);
            double sum = 0;
            for (std::size_t a = 0; a <= T; ++a) sum += cell[a];
            CHECK(sum == 1.0);
            if (cell[0] == 1.0) continue;
            ++nonzero;
            for (std::size_t a = 1; a <= T; ++a)
                if (cell[a] == 1.0) from_input.push_back({i, int(a)});
        }
        auto decoded = decode_copy_target(d.head_labels[row], spec);
        CHECK(decoded == from_input);  // round-trip through the target encoding
        CHECK(nonzero == decoded.size());
        CHECK(nonzero >= 1);
        CHECK(nonzero <= 14);
        // Hamming distance from wild type equals the planted count
        for (const auto& mu : decoded)
            CHECK(spec.alphabet[std::size_t(mu.token - 1)] != spec.wild_type[mu.position]);
        CHECK(nonzero <= 28);
    }
}

TEST_CASE("selective copy with m forced to the maximum fills 14 positions") {
    auto spec = default_copy_spec();
    spec.m_min = 14;
    spec.m_max = 14;
    Rng rng(23);
    auto d = gen_selective_copy(spec, rng, 10);
    const std::size_t T = spec.alphabet.size();
    for (std::size_t row = 0; row < 10; ++row) {
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < spec.L; ++i)
            if (d.inputs.data[(row * spec.L + i) * (T + 1)] == 0.0) ++nonzero;
        CHECK(nonzero == 14);
    }
}

TEST_CASE("selective copy respects co-mutation patterns when budget allows") {
    auto spec = default_copy_spec();
    Rng rng(29);
    auto d = gen_selective_copy(spec, rng, 200);
    std::size_t pattern_hits = 0, pattern_complete = 0;
    for (std::size_t row = 0; row < 200; ++row) {
        auto muts = decode_copy_target(d.head_labels[row], spec);
        if (muts.size() < 2) continue;  // a 1-budget sample cannot complete a pair
        std::set<std::size_t> positions;
        for (const auto& mu : muts) positions.insert(mu.position);
        for (const auto& pattern : spec.comutation_patterns) {
            bool any = false, all = true;
            for (std::size_t p : pattern) {
                any = any || positions.count(p);
                all = all && positions.count(p);
            }
            if (any) {
                ++pattern_hits;
                if (all) ++pattern_complete;
            }
        }
    }
    CHECK(pattern_hits > 0);
    // groups are taken whole unless the remaining budget cut them short
    CHECK(double(pattern_complete) / double(pattern_hits) > 0.6);
}

TEST_CASE("selective copy validates its spec") {
    auto spec = default_copy_spec();
    spec.m_max = 20;
    Rng rng(31);
    CHECK_THROWS_AS(gen_selective_copy(spec, rng, 1), ConfigError);
    spec = default_copy_spec();
    spec.wild_type.pop_back();
    CHECK_THROWS_AS(gen_selective_copy(spec, rng, 1), ConfigError);
}

TEST_CASE("frequency task: single constant component") {
    FrequencySpec spec;
    spec.L = 16;
    spec.components = {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 3.0, 0.0}}};
    Rng rng(33);
    auto d = gen_frequency_task(spec, rng, 2, 1);
    for (std::size_t t = 0; t < 16; ++t) {
        CHECK(d.inputs.data[t] == 1.0);                    // composite == 1
        CHECK(d.targets.data[t] == 1.0);                   // composite target
        CHECK(d.targets.data[16 + t] == 1.0);              // component 1
        CHECK(d.targets.data[2 * 16 + t] == 0.0);          // silent components
    }
}

TEST_CASE("frequency task: composite equals the single active component") {
    FrequencySpec spec = default_frequency_spec(32);
    spec.amp_jitter = 0.4;  // jitter must not break the identity
    spec.phase_jitter = 1.0;
    spec.components[1].amp = 0.0;
    spec.components[2].amp = 0.0;
    spec.components[3].amp = 0.0;
    Rng rng(35);
    auto d = gen_frequency_task(spec, rng, 3, 1);
    for (std::size_t row = 0; row < 4; ++row)
        for (std::size_t t = 0; t < 32; ++t)
            CHECK(d.inputs.data[row * 32 + t] ==
                  doctest::Approx(d.targets.data[row * 5 * 32 + 32 + t]).epsilon(1e-12));
}

TEST_CASE("frequency task spectra peak at the configured bins") {
    auto spec = default_frequency_spec(64);
    Rng rng(37);
    auto d = gen_frequency_task(spec, rng, 8, 0);
    const std::size_t L = 64;
    const std::size_t bins[4] = {3, 7, 12, 19};
    for (std::size_t row = 0; row < 8; ++row) {
        for (std::size_t comp = 0; comp < 4; ++comp) {
            std::vector<double> sig(L);
            for (std::size_t t = 0; t < L; ++t)
                sig[t] = d.targets.data[row * 5 * L + (comp + 1) * L + t];
            auto spec_f = rfft<double>(std::span<const double>(sig));
            std::size_t peak = 0;
            for (std::size_t k = 1; k < spec_f.size(); ++k)
                if (std::abs(spec_f[k]) > std::abs(spec_f[peak])) peak = k;
            CHECK(peak == bins[comp]);
            // bin-aligned components are supported on their bin only
            for (std::size_t k = 0; k < spec_f.size(); ++k)
                if (k != bins[comp]) CHECK(std::abs(spec_f[k]) < 1e-9);
        }
        // the composite's 4 largest magnitudes sit at the component bins
        std::vector<double> sig(L);
        for (std::size_t t = 0; t < L; ++t) sig[t] = d.inputs.data[row * L + t];
        auto spec_f = rfft<double>(std::span<const double>(sig));
        std::vector<std::size_t> order(spec_f.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(spec_f[a]) > std::abs(spec_f[b]);
        });
        std::set<std::size_t> top(order.begin(), order.begin() + 4);
        for (std::size_t k : bins) CHECK(top.count(k) == 1);
    }
}

TEST_CASE("frequency task rejects duplicate frequencies") {
    FrequencySpec spec = default_frequency_spec(32);
    spec.components[1].omega = spec.components[0].omega;
    Rng rng(39);
    CHECK_THROWS_AS(gen_frequency_task(spec, rng, 1, 1), ValueError);
}

TEST_CASE("one-hot encoding of ACGT is the identity pattern") {
    auto mat = one_hot_encode("ACGT", kDnaAlphabet);
    REQUIRE(mat.shape == std::vector<std::size_t>{4, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(mat.data[i * 4 + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("stacked guide-target encoding uses 4+4 channel blocks") {
    auto mat = one_hot_encode_stacked("AG", "CT");
    REQUIRE(mat.shape == std::vector<std::size_t>{2, 8});
    CHECK(mat.data[0] == 1.0);      // guide A -> channel 0
    CHECK(mat.data[5] == 1.0);      // target C -> channel 5
    CHECK(mat.data[8 + 2] == 1.0);  // guide G -> channel 2
    CHECK(mat.data[8 + 7] == 1.0);  // target T -> channel 7
    double sum = 0;
    for (double v : mat.data) sum += v;
    CHECK(sum == 4.0);  // one per block per row
}

TEST_CASE("one-hot round-trips random protein strings") {
    Rng rng(41);
    const std::string alphabet = kProteinAlphabet;
    for (int trial = 0; trial < 20; ++trial) {
        std::string s(1 + rng.below(30), 'A');
        for (auto& c : s) c = alphabet[rng.below(alphabet.size())];
        CHECK(one_hot_decode(one_hot_encode(s, alphabet), alphabet) == s);
    }
}

TEST_CASE("one-hot rejects unknown tokens naming the position") {
    CHECK_THROWS_WITH_AS(one_hot_encode("ACXT", kDnaAlphabet),
                         doctest::Contains("position 2"), EncodingError);
}

TEST_CASE("csv loader honors an explicit split column") {
    const auto path = write_temp_csv("split.csv",
                                     "sequence,label,split\n"
                                     "ACGT,1.5,train\n"
                                     "CCGT,2.5,val\n"
                                     "GCGT,3.5,test\n");
    auto d = load_csv_dataset(path, {});
    REQUIRE(d.size() == 3);
    CHECK(d.split[0] == Split::Train);
    CHECK(d.split[1] == Split::Val);
    CHECK(d.split[2] == Split::Test);
    CHECK(d.targets.data[2] == 3.5);
    std::remove(path.c_str());
}

TEST_CASE("csv loader errors name the offending line") {
    const auto bad_label = write_temp_csv("badlabel.csv",
                                          "sequence,label\n"
                                          "ACGT,1.5\n"
                                          "CCGT,oops\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(bad_label, {}), doctest::Contains("line 3"), CsvError);
    std::remove(bad_label.c_str());

    const auto ragged = write_temp_csv("ragged.csv",
                                       "sequence,label\n"
                                       "ACGT,1.5,extra\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(ragged, {}), doctest::Contains("line 2"), CsvError);
    std::remove(ragged.c_str());

    const auto lengths = write_temp_csv("lengths.csv",
                                        "sequence,label\n"
                                        "ACGT,1\n"
                                        "ACG,2\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(lengths, {}), doctest::Contains("line 3"), CsvError);
    std::remove(lengths.c_str());
}

TEST_CASE("csv random split is deterministic for a fixed seed") {
    std::string body = "sequence,label\n";
    Rng rng(43);
    for (int i = 0; i < 40; ++i) {
        std::string s(8, 'A');
        for (auto& c : s) c = kDnaAlphabet[rng.below(4)];
        body += s + "," + std::to_string(rng.uniform()) + "\n";
    }
    const auto path = write_temp_csv("determinism.csv", body);
    CsvSchema schema;
    schema.train_frac = 0.8;
    schema.split_seed = 5;
    auto a = load_csv_dataset(path, schema);
    auto b = load_csv_dataset(path, schema);
    CHECK(a.split == b.split);
    std::size_t n_train = 0;
    for (auto s : a.split) n_train += (s == Split::Train);
    CHECK(n_train == 32);  // 0.8 * 40
    std::remove(path.c_str());
}

TEST_CASE("csv class labels are range-checked") {
    const auto path = write_temp_csv("class.csv",
                                     "sequence,label\n"
                                     "ACGT,0\n"
                                     "CCGT,1\n"
                                     "GGGT,2\n");
    CsvSchema schema;
    schema.label = CsvSchema::Label::Class;
    schema.n_classes = 2;
    CHECK_THROWS_WITH_AS(load_csv_dataset(path, schema), doctest::Contains("line 4"), CsvError);
    schema.n_classes = 3;
    auto d = load_csv_dataset(path, schema);
    CHECK(d.class_labels == std::vector<int>{0, 1, 2});
    CHECK(d.label_kind == LabelKind::SingleClass);
    std::remove(path.c_str());
}

TEST_CASE("stratified split keeps test rows in every stratum") {
    Rng rng(47);
    auto gen = gen_epistasis_dataset(8, 3, 24, rng);
    Rng split_rng(11);
    assign_split_stratified(gen.dataset, 0.8, split_rng, gen.dataset.orders);
    std::map<int, std::size_t> test_counts;
    for (std::size_t i = 0; i < gen.dataset.size(); ++i)
        if (gen.dataset.split[i] == Split::Test) ++test_counts[gen.dataset.orders[i]];
    for (int order = 1; order <= 3; ++order) {
        INFO("order ", order);
        CHECK(test_counts[order] >= 2);
    }
}
