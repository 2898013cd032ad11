#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "firescar/grid.hpp"

namespace firescar::nn {

/// Dense NCHW tensor.
template <typename T>
struct Tensor {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T{})
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    [[nodiscard]] std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
    [[nodiscard]] T* sample(int i) { return data.data() + i * sample_size(); }
    [[nodiscard]] const T* sample(int i) const { return data.data() + i * sample_size(); }
    [[nodiscard]] T& at(int i, int ch, int y, int x) { return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }
    [[nodiscard]] const T& at(int i, int ch, int y, int x) const {
        return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    [[nodiscard]] bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    [[nodiscard]] std::string shape_string() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

template <typename T>
struct Parameter {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
};

}  // namespace firescar::nn
