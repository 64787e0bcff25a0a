#include "lyra/bench.hpp"

#include <algorithm>
#include <chrono>
#include <new>

#include "lyra/fft.hpp"

namespace lyra {

namespace {

template <class S>
BenchRow time_config(const LyraConfig& cfg, std::size_t L, std::size_t B, std::size_t reps,
                     std::size_t warmups, std::uint64_t seed) {
    BenchRow row;
    row.sequence_length = L;
    row.batch_size = B;
    row.reps = reps;
    try {
        Rng rng(seed);
        LyraModelT<S> model = build<S>(cfg, rng);
        TensorT<S> x({B, L, cfg.d_input});
        Rng data_rng(seed + 1);
        for (auto& v : x.data) v = S(data_rng.normal());
        Rng unused(0);

        auto once = [&] {
            TapeT<S> tape;
            tape.recording = false;
            auto y = lyra_forward(tape, model, x, unused, false);
            return y.val->data[0];  // keep the result alive
        };
        volatile S sink = 0;
        for (std::size_t i = 0; i < warmups; ++i) sink = sink + once();

        std::vector<double> ms(reps);
        for (std::size_t i = 0; i < reps; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            sink = sink + once();
            const auto t1 = std::chrono::steady_clock::now();
            ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        std::sort(ms.begin(), ms.end());
        row.median_ms = ms[reps / 2];
        row.iqr_ms = ms[(3 * reps) / 4] - ms[reps / 4];
    } catch (const std::bad_alloc&) {
        row.ok = false;
    }
    return row;
}

}  // namespace

std::vector<BenchRow> run_bench(const LyraConfig& cfg, const std::vector<std::size_t>& lengths,
                                const std::vector<std::size_t>& batch_sizes, std::size_t reps,
                                std::size_t warmups, const std::string& precision,
                                std::uint64_t seed) {
    if (reps < 5) throw ValueError("bench: at least 5 timed reps required, got " + std::to_string(reps));
    if (warmups < 2) throw ValueError("bench: at least 2 warmup reps required");
    if (lengths.empty() || batch_sizes.empty()) throw ValueError("bench: nothing to measure");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        if (!is_pow2(lengths[i]))
            throw ValueError("bench: lengths must be powers of two, got " +
                             std::to_string(lengths[i]));
        if (i > 0 && lengths[i] <= lengths[i - 1])
            throw ValueError("bench: lengths must be strictly increasing");
    }
    if (precision != "f32" && precision != "f64")
        throw ValueError("bench: precision must be f32 or f64");

    std::vector<BenchRow> rows;
    for (std::size_t B : batch_sizes)
        for (std::size_t L : lengths)
            rows.push_back(precision == "f32"
                               ? time_config<float>(cfg, L, B, reps, warmups, seed)
                               : time_config<double>(cfg, L, B, reps, warmups, seed));
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "sequence_length,batch_size,median_ms,iqr_ms,reps,status\n";
    for (const auto& r : rows) {
        out << r.sequence_length << "," << r.batch_size << ",";
        if (r.ok)
            out << r.median_ms << "," << r.iqr_ms;
        else
            out << ",";
        out << "," << r.reps << "," << (r.ok ? "ok" : "failed") << "\n";
    }
}

}  // namespace lyra
