// Building blocks of the segmentation network. Each layer caches what its
// backward pass needs from the most recent forward call.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "firescar/tensor.hpp"

namespace firescar::nn {

template <typename T>
class Conv2d {
public:
    Conv2d(int in_channels, int out_channels, int kernel, std::string name);

    void init(std::mt19937_64& rng);
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& grad_out);

    Parameter<T> weight;
    Parameter<T> bias;
    [[nodiscard]] int in_channels() const { return in_; }
    [[nodiscard]] int out_channels() const { return out_; }

private:
    void im2col(const T* x, int h, int w, T* col) const;
    void col2im(const T* col, int h, int w, T* x) const;

    int in_;
    int out_;
    int k_;
    Tensor<T> input_;
    std::vector<T> col_;
};

template <typename T>
class BatchNorm2d {
public:
    BatchNorm2d(int channels, std::string name);

    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& grad_out);

    Parameter<T> gamma;
    Parameter<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;

private:
    int channels_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

enum class ActivationKind { ReLU, LeakyReLU };

template <typename T>
class Activation {
public:
    explicit Activation(ActivationKind kind) : kind_(kind) {}
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& grad_out);

private:
    ActivationKind kind_;
    std::vector<std::uint8_t> positive_;
};

template <typename T>
class MaxPool2x2 {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& grad_out);

private:
    int in_h_ = 0;
    int in_w_ = 0;
    std::vector<std::uint32_t> argmax_;
};

/// 2x bilinear upsampling with corner-aligned sampling grid.
template <typename T>
class UpsampleBilinear2x {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& grad_out);

private:
    int in_h_ = 0;
    int in_w_ = 0;
};

/// Channel concatenation [a, b] and its inverse for gradients.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void split_channels(const Tensor<T>& g, int first_channels, Tensor<T>& ga, Tensor<T>& gb);

}  // namespace firescar::nn
