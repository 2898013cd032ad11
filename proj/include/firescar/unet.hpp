#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "firescar/kv.hpp"
#include "firescar/tensor.hpp"

namespace firescar::unet {

using nn::Parameter;
using nn::Tensor;

enum class Activation { ReLU, LeakyReLU };
enum class Normalization { None, Batch };

/// Encoder widths are f, 2f, 4f, ..., f * 2^(depth-1); the last (deepest)
/// level runs a single convolution instead of two.
struct UNetConfig {
    int in_channels = 16;
    int initial_filters = 128;
    int depth = 4;
    int input_size = 128;
    int output_channels = 1;
    Activation activation = Activation::ReLU;
    Normalization normalization = Normalization::None;

    [[nodiscard]] std::vector<int> encoder_widths() const;
    [[nodiscard]] int deepest_width() const { return initial_filters << (depth - 1); }
    void validate() const;

    [[nodiscard]] KeyValues to_key_values() const;
    static UNetConfig from_key_values(const KeyValues& kv);

    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class Mode { Train, Eval };

/// Trainable-parameter count of the network `config` describes.
std::size_t parameter_count(const UNetConfig& config);

/// Named view of a parameter or buffer, used for checkpoints.
template <typename T>
struct StateEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<T>* values;
};

template <typename T>
class UNet {
public:
    explicit UNet(const UNetConfig& config, std::uint64_t seed = 0);
    ~UNet();
    UNet(UNet&&) noexcept;
    UNet& operator=(UNet&&) noexcept;

    [[nodiscard]] const UNetConfig& config() const;

    /// Input N x in_channels x input_size x input_size; output N x 1 x input_size x input_size
    /// sigmoid probabilities.
    Tensor<T> forward(const Tensor<T>& x, Mode mode = Mode::Eval);

    /// Back-propagates dLoss/dProbability through the most recent forward pass,
    /// accumulating into every parameter's grad.
    void backward(const Tensor<T>& grad_probabilities);

    void zero_grad();
    std::vector<Parameter<T>*> parameters();
    [[nodiscard]] std::size_t parameter_count() const;

    /// Parameters plus persistent buffers (batch-norm running statistics).
    std::vector<StateEntry<T>> state();

    [[nodiscard]] std::vector<std::vector<T>> snapshot();
    void restore(const std::vector<std::vector<T>>& snapshot);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

extern template class UNet<float>;
extern template class UNet<double>;

// ---------------------------------------------------------------------------
// Checkpoints

/// Layout (little-endian):
///   "FSCK" | u32 version=1 | string config | string metadata | u32 dtype (1 = float32, 2 = float64)
///   | u32 entries | entries x { string name, u32 ndim, u32 dims[ndim], values }
/// where string = u32 length + bytes, and config/metadata are key=value text.
struct Checkpoint {
    UNetConfig config;
    KeyValues metadata;
    std::vector<std::pair<std::string, std::vector<double>>> tensors;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, UNet<T>& model, const KeyValues& metadata = {});

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `model`; throws ContractViolation when the
/// checkpoint was written for a different configuration.
template <typename T>
void load_checkpoint(UNet<T>& model, const Checkpoint& checkpoint);

}  // namespace firescar::unet
