#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "lyra/model.hpp"

namespace lyra {

struct BenchRow {
    std::size_t sequence_length = 0;
    std::size_t batch_size = 0;
    double median_ms = 0;
    double iqr_ms = 0;
    std::size_t reps = 0;
    bool ok = true;
};

// Times eval-mode forwards of the configured model at each (length, batch)
// pair: `warmups` untimed passes, then `reps` timed ones on the monotonic
// clock; reports median and interquartile range. Lengths must be strictly
// increasing powers of two; reps >= 5 and warmups >= 2 are enforced.
// An out-of-memory length is recorded as a failed row and the run continues.
std::vector<BenchRow> run_bench(const LyraConfig& cfg, const std::vector<std::size_t>& lengths,
                                const std::vector<std::size_t>& batch_sizes, std::size_t reps,
                                std::size_t warmups, const std::string& precision,
                                std::uint64_t seed);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace lyra
