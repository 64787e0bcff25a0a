#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lyra/errors.hpp"

namespace lyra {

// Dense row-major multidimensional array. The scalar type is a template
// parameter: double everywhere correctness matters, float on the benchmark
// path.
template <class S>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<S> data;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> sh)
        : shape(std::move(sh)), data(count(shape), S(0)) {}

    TensorT(std::vector<std::size_t> sh, std::vector<S> values)
        : shape(std::move(sh)), data(std::move(values)) {
        if (count(shape) != data.size())
            throw ShapeError("tensor data length does not match shape");
    }

    static std::size_t count(const std::vector<std::size_t>& sh) {
        std::size_t n = 1;
        for (auto e : sh) n *= e;
        return n;
    }

    static TensorT zeros(std::vector<std::size_t> sh) { return TensorT(std::move(sh)); }

    static TensorT full(std::vector<std::size_t> sh, S v) {
        TensorT t(std::move(sh));
        for (auto& x : t.data) x = v;
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    S& operator[](std::size_t i) { return data[i]; }
    const S& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    S max_abs() const {
        S m = 0;
        for (S v : data) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        for (S v : data) {
            if (!std::isfinite(double(v))) return false;
        }
        return true;
    }

    template <class T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
        return out;
    }
};

using Tensor = TensorT<double>;

inline std::string shape_str(const std::vector<std::size_t>& sh) {
    std::string s = "[";
    for (std::size_t i = 0; i < sh.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(sh[i]);
    }
    return s + "]";
}

}  // namespace lyra
