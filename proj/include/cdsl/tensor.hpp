#ifndef CDSL_TENSOR_HPP
#define CDSL_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cdsl/common.hpp"
#include "cdsl/rng.hpp"

namespace cdsl {

struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape4&) const = default;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * static_cast<std::size_t>(h) * w;
    }

    bool same_spatial(const Shape4& o) const { return h == o.h && w == o.w; }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense rank-4 array (batch, channel, height, width), contiguous row-major.
// float for the training pipeline, double for gradient checking.
template <typename T>
struct Tensor4 {
    Shape4 shape;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n, int c, int h, int w) : shape{n, c, h, w}, data(shape.numel(), T(0)) {}
    explicit Tensor4(const Shape4& s) : shape(s), data(s.numel(), T(0)) {}

    int n() const { return shape.n; }
    int c() const { return shape.c; }
    int h() const { return shape.h; }
    int w() const { return shape.w; }
    std::size_t numel() const { return data.size(); }

    T* plane(int i, int j) {
        return data.data() + (static_cast<std::size_t>(i) * shape.c + j) *
                                 (static_cast<std::size_t>(shape.h) * shape.w);
    }
    const T* plane(int i, int j) const {
        return data.data() + (static_cast<std::size_t>(i) * shape.c + j) *
                                 (static_cast<std::size_t>(shape.h) * shape.w);
    }

    T& at(int i, int j, int y, int x) {
        return plane(i, j)[static_cast<std::size_t>(y) * shape.w + x];
    }
    T at(int i, int j, int y, int x) const {
        return plane(i, j)[static_cast<std::size_t>(y) * shape.w + x];
    }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    bool all_finite() const {
        for (const T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool operator==(const Tensor4&) const = default;
};

using TensorF = Tensor4<float>;
using TensorD = Tensor4<double>;

template <typename T>
void fill_normal(Tensor4<T>& t, Rng& rng, double stddev) {
    for (auto& v : t.data) v = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
void fill_uniform(Tensor4<T>& t, Rng& rng, double lo, double hi) {
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

} // namespace cdsl

#endif
