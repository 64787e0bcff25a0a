#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "lyra/errors.hpp"

namespace lyra {

// Coefficient of determination 1 - SS_res / SS_tot.
inline double r2(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeError("r2: size mismatch");
    const std::size_t n = target.size();
    if (n < 2) throw MetricError("r2: need at least 2 samples");
    double mean = 0;
    for (double t : target) mean += t;
    mean /= double(n);
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ss_res += (pred[i] - target[i]) * (pred[i] - target[i]);
        ss_tot += (target[i] - mean) * (target[i] - mean);
    }
    if (ss_tot <= 0.0) throw MetricError("r2: zero target variance");
    return 1.0 - ss_res / ss_tot;
}

namespace detail {

// Average ranks (fractional on ties), 1-based.
inline std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * (double(i + 1) + double(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) throw MetricError("correlation: zero variance");
    return cov / std::sqrt(va * vb);
}

}  // namespace detail

// Spearman rank correlation with average-rank tie handling.
inline double spearman(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeError("spearman: size mismatch");
    if (pred.size() < 2) throw MetricError("spearman: need at least 2 samples");
    const auto rp = detail::average_ranks(pred);
    const auto rt = detail::average_ranks(target);
    return detail::pearson(rp, rt);
}

inline double accuracy(std::span<const int> pred, std::span<const int> target) {
    if (pred.size() != target.size()) throw ShapeError("accuracy: size mismatch");
    if (pred.empty()) throw MetricError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == target[i]) ++hits;
    return double(hits) / double(pred.size());
}

// Per-order R^2 over sample buckets. Buckets with fewer than 2 samples or
// zero target variance are absent from the result, not zero.
inline std::map<int, double> r2_by_order(std::span<const double> pred,
                                         std::span<const double> target,
                                         std::span<const int> orders) {
    if (pred.size() != target.size() || pred.size() != orders.size())
        throw ShapeError("r2_by_order: size mismatch");
    std::map<int, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < orders.size(); ++i) buckets[orders[i]].push_back(i);
    std::map<int, double> out;
    for (const auto& [order, rows] : buckets) {
        if (rows.size() < 2) continue;
        std::vector<double> p, t;
        p.reserve(rows.size());
        t.reserve(rows.size());
        for (auto i : rows) {
            p.push_back(pred[i]);
            t.push_back(target[i]);
        }
        try {
            out[order] = r2(p, t);
        } catch (const MetricError&) {
            // zero-variance bucket: absent
        }
    }
    return out;
}

}  // namespace lyra
