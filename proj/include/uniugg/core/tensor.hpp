#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "uniugg/core/errors.hpp"
#include "uniugg/core/rng.hpp"

namespace uniugg::core {

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

//Column-less, row-major dense value container. Autograd wraps it (see
// autograd.hpp); plain data such as images and pointmaps use it directly.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s, T fill = T(0))
        : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), fill) {}
    Tensor(std::vector<int64_t> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<int64_t>(v.size()) != shape_numel(shape))
            throw ValidationError("tensor data size does not match shape " + shape_str(shape));
    }

    static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0, double mean = 0.0) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = static_cast<T>(rng.normal(mean, stddev));
        return t;
    }
    static Tensor uniform(std::vector<int64_t> s, Rng& rng, double lo, double hi) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t ndim() const { return shape.size(); }

    T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    // 2D / 3D helpers; unchecked in release paths.
    T& at2(int64_t r, int64_t c) { return v[static_cast<size_t>(r * shape[1] + c)]; }
    const T& at2(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * shape[1] + c)]; }
    T& at3(int64_t a, int64_t b, int64_t c) {
        return v[static_cast<size_t>((a * shape[1] + b) * shape[2] + c)];
    }
    const T& at3(int64_t a, int64_t b, int64_t c) const {
        return v[static_cast<size_t>((a * shape[1] + b) * shape[2] + c)];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

}  // namespace uniugg::core
