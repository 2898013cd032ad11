#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "firescar/grid.hpp"
#include "firescar/raster.hpp"

namespace firescar::preprocess {

using raster::BandTile;
using raster::ScarLabel;

inline constexpr int kChannels = 2 * raster::kBandCount;
inline constexpr int kDefaultKnnK = 8;

using Warnings = std::vector<std::string>;

/// Model-ready sample: channels 0-7 post-fire, 8-15 pre-fire, channel-major.
struct TensorSample {
    int height = 0;
    int width = 0;
    std::vector<float> channels;
    Mask label;
    std::string record_id;
    std::string augmentation_tag = "identity";
    Rect content;  // pixels that came from imagery (the rest is zero padding)

    [[nodiscard]] std::span<float> channel(int c) {
        return {channels.data() + static_cast<std::size_t>(c) * height * width, static_cast<std::size_t>(height) * width};
    }
    [[nodiscard]] std::span<const float> channel(int c) const {
        return {channels.data() + static_cast<std::size_t>(c) * height * width, static_cast<std::size_t>(height) * width};
    }
    [[nodiscard]] float at(int c, int r, int col) const {
        return channels[(static_cast<std::size_t>(c) * height + r) * width + col];
    }
    [[nodiscard]] long long burned_pixels() const;
    [[nodiscard]] bool has_invalid() const;
};

// ---------------------------------------------------------------------------
// Outliers and gaps

/// Accepted value window of one band plus its dataset-level mean.
struct BandLimit {
    float lo = 0.0f;
    float hi = 1.0f;
    double dataset_mean = 0.0;
};

/// One limit per band, pooled over pre- and post-fire images.
struct BandLimits {
    std::array<BandLimit, raster::kBandCount> bands{};
};

/// Tukey fences [Q1 - k*IQR, Q3 + k*IQR] of each band over the whole
/// dataset, intersected with the valid range of the profile. Invalid and
/// zero-noise pixels are left out of the distribution.
BandLimits compute_band_limits(std::span<const BandTile> tiles, const raster::RangeProfile& profile = {},
                               double iqr_factor = 1.5);

/// Replaces finite values outside the band limit with the mean of the
/// in-limit pixels of that band in the same image.
BandTile impute_outliers(const BandTile& tile, const BandLimits& limits, Warnings* warnings = nullptr);

/// Pixels that knn_fill treats as missing in `band`: invalid values, plus
/// pixels whose six raw bands are all zero.
Mask missing_mask(const raster::BandStack& stack, int band);

/// Fills every missing pixel with the mean of its k nearest non-missing
/// pixels of the same band (Euclidean pixel distance, ties in raster order).
BandTile knn_fill(const BandTile& tile, int k = kDefaultKnnK, const BandLimits* fallback = nullptr,
                  Warnings* warnings = nullptr);

// ---------------------------------------------------------------------------
// Tensors

TensorSample concatenate(const BandTile& tile, const ScarLabel& label);

enum class NormMethod { Standardize, MinMax };

struct NormStats {
    NormMethod method = NormMethod::Standardize;
    std::array<double, kChannels> offset{};  // mean (standardize) or min (min-max)
    std::array<double, kChannels> scale{};   // std (standardize) or max - min (min-max)
};

/// Per-channel statistics over the content pixels of `samples`.
NormStats fit_norm_stats(std::span<const TensorSample> samples, NormMethod method = NormMethod::Standardize,
                         Warnings* warnings = nullptr);
TensorSample standardize(TensorSample sample, const NormStats& stats);
TensorSample unstandardize(TensorSample sample, const NormStats& stats);

/// Centers the sample in a size x size frame of zeros (odd pixel right/down).
TensorSample zero_pad(const TensorSample& sample, int size = 128);

// ---------------------------------------------------------------------------
// Augmentation

/// The eight symmetries of the square.
enum class Transform { Identity, FlipHorizontal, FlipVertical, Rotate90, Rotate180, Rotate270, Transpose, AntiTranspose };
inline constexpr int kTransformCount = 8;

std::string_view transform_name(Transform t);
TensorSample apply_transform(const TensorSample& sample, Transform t);

/// Original plus factor-1 distinct non-identity transforms, drawn without
/// replacement with the given seed.
std::vector<Transform> augmentation_plan(int factor, std::uint64_t seed);
std::vector<TensorSample> augment(const TensorSample& sample, int factor, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Persistence

/// Archive layout (little-endian):
///   "FSTS" | u32 version=1 | u32 count | u32 channels | u32 height | u32 width | u32 dtype (1 = float32)
///   count x { u32 len, record_id bytes, u32 len, tag bytes, i32 content row, col, height, width }
///   float32 payload [count][channels][height][width]
///   uint8 labels [count][height][width]
void write_archive(const std::filesystem::path& path, std::span<const TensorSample> samples);
std::vector<TensorSample> read_archive(const std::filesystem::path& path);

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_norm_stats(const std::filesystem::path& path);

void write_band_limits(const std::filesystem::path& path, const BandLimits& limits);
BandLimits read_band_limits(const std::filesystem::path& path);

}  // namespace firescar::preprocess
