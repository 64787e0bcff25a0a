#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "lyra/errors.hpp"

namespace lyra {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace detail {

// Forward twiddles exp(-2*pi*i*j/n), j < n/2, shared across calls.
// Angles are always evaluated in double so the float path does not
// accumulate recurrence error.
template <class S>
std::shared_ptr<const std::vector<std::complex<S>>> twiddles(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::shared_ptr<const std::vector<std::complex<S>>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto table = std::make_shared<std::vector<std::complex<S>>>(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
        const double ang = -2.0 * std::numbers::pi * double(j) / double(n);
        (*table)[j] = std::complex<S>(S(std::cos(ang)), S(std::sin(ang)));
    }
    cache[n] = table;
    return table;
}

}  // namespace detail

// In-place iterative radix-2 transform. Forward computes
// X[k] = sum_t x[t] * exp(-2*pi*i*k*t/n); inverse includes the 1/n scale.
template <class S>
void fft_inplace(std::complex<S>* a, std::size_t n, bool inverse) {
    if (n == 0) throw ValueError("fft: invalid length 0");
    if (!is_pow2(n)) throw ValueError("fft: length must be a power of two, got " + std::to_string(n));
    if (n == 1) return;

    if (inverse) {
        for (std::size_t i = 0; i < n; ++i) a[i] = std::conj(a[i]);
    }

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const auto tw = detail::twiddles<S>(n);
    const std::complex<S>* w = tw->data();
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const std::complex<S> u = a[i + j];
                const std::complex<S> v = a[i + j + half] * w[j * stride];
                a[i + j] = u + v;
                a[i + j + half] = u - v;
            }
        }
    }

    if (inverse) {
        const S inv = S(1) / S(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = std::conj(a[i]) * inv;
    }
}

template <class S>
std::vector<std::complex<S>> fft(std::vector<std::complex<S>> a) {
    fft_inplace(a.data(), a.size(), false);
    return a;
}

template <class S>
std::vector<std::complex<S>> ifft(std::vector<std::complex<S>> a) {
    fft_inplace(a.data(), a.size(), true);
    return a;
}

// Real-input transform: pads or truncates x to length n and returns the
// n/2+1 non-redundant bins.
template <class S>
std::vector<std::complex<S>> rfft(std::span<const S> x, std::size_t n) {
    if (n == 0) throw ValueError("rfft: invalid length 0");
    if (!is_pow2(n)) throw ValueError("rfft: length must be a power of two, got " + std::to_string(n));
    std::vector<std::complex<S>> buf(n);
    const std::size_t m = std::min(n, x.size());
    for (std::size_t t = 0; t < m; ++t) buf[t] = std::complex<S>(x[t], S(0));
    fft_inplace(buf.data(), n, false);
    buf.resize(n / 2 + 1);
    return buf;
}

template <class S>
std::vector<std::complex<S>> rfft(std::span<const S> x) {
    return rfft<S>(x, x.size());
}

// Inverse of rfft for a given transform length n: rebuilds the conjugate-
// symmetric spectrum and returns the n real samples.
template <class S>
std::vector<S> irfft(std::span<const std::complex<S>> spec, std::size_t n) {
    if (n == 0) throw ValueError("irfft: invalid length 0");
    if (!is_pow2(n)) throw ValueError("irfft: length must be a power of two, got " + std::to_string(n));
    if (spec.size() != n / 2 + 1)
        throw ShapeError("irfft: expected " + std::to_string(n / 2 + 1) + " bins, got " +
                         std::to_string(spec.size()));
    std::vector<std::complex<S>> buf(n);
    for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = spec[k];
    for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = std::conj(spec[n - k]);
    fft_inplace(buf.data(), n, true);
    std::vector<S> out(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = buf[t].real();
    return out;
}

}  // namespace lyra
