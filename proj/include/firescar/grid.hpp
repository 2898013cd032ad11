#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace firescar {

/// Raised when a caller breaks a documented precondition (shape mismatch,
/// out-of-extent rectangle, wrong channel count, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an on-disk artifact cannot be parsed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pixel-space rectangle, half-open: rows [row, row + height), cols [col, col + width).
struct Rect {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;

    [[nodiscard]] bool empty() const { return height <= 0 || width <= 0; }
    [[nodiscard]] int last_row() const { return row + height - 1; }
    [[nodiscard]] int last_col() const { return col + width - 1; }
    [[nodiscard]] long long area() const { return static_cast<long long>(height) * width; }

    [[nodiscard]] bool contains(const Rect& other) const {
        return other.row >= row && other.col >= col && other.row + other.height <= row + height &&
               other.col + other.width <= col + width;
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Row-major 2-D grid.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : height_(height), width_(width),
          data_(static_cast<std::size_t>(height > 0 ? height : 0) * (width > 0 ? width : 0), fill) {
        if (height < 0 || width < 0) throw ContractViolation("Grid: negative dimensions");
    }
    Grid(int height, int width, std::vector<T> values) : height_(height), width_(width), data_(std::move(values)) {
        if (height < 0 || width < 0 || data_.size() != static_cast<std::size_t>(height) * width)
            throw ContractViolation("Grid: value count does not match dimensions");
    }

    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<T> values() { return data_; }
    [[nodiscard]] std::span<const T> values() const { return data_; }
    [[nodiscard]] const std::vector<T>& storage() const { return data_; }

    [[nodiscard]] bool same_shape(const Grid& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }
    template <typename U>
    [[nodiscard]] bool same_shape(const Grid<U>& other) const {
        return height_ == other.height() && width_ == other.width();
    }

    [[nodiscard]] Grid crop(const Rect& r) const {
        if (r.row < 0 || r.col < 0 || r.row + r.height > height_ || r.col + r.width > width_)
            throw ContractViolation("Grid::crop: rectangle outside grid");
        Grid out(r.height, r.width);
        for (int i = 0; i < r.height; ++i)
            for (int j = 0; j < r.width; ++j) out(i, j) = (*this)(r.row + i, r.col + j);
        return out;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width())
        throw ContractViolation(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                                std::to_string(b.width()) + ")");
}

using Mask = Grid<std::uint8_t>;

}  // namespace firescar
