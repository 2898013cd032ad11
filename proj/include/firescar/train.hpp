#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "firescar/dataset.hpp"
#include "firescar/kv.hpp"
#include "firescar/preprocess.hpp"
#include "firescar/unet.hpp"

namespace firescar::train {

using preprocess::TensorSample;

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr double kProbabilityClamp = 1e-7;

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    [[nodiscard]] long long total() const { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o) {
        tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
        return *this;
    }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const Mask& prediction, const Mask& label);
Confusion confusion(std::span<const float> probabilities, const Mask& label, double threshold = kDefaultThreshold);
Mask binarize(std::span<const float> probabilities, int height, int width, double threshold = kDefaultThreshold);

/// 2TP / (2TP + FP + FN).
std::optional<double> dice(long long tp, long long fp, long long fn);
/// FN / (TP + FN).
std::optional<double> omission(long long tp, long long fn);
/// FP / (TP + FN); exceeds 1 whenever FP > TP + FN.
std::optional<double> commission(long long fp, long long tp, long long fn);
/// FP / (TP + FP).
std::optional<double> conventional_commission(long long fp, long long tp);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
template <typename T>
double bce_loss(std::span<const T> probabilities, std::span<const std::uint8_t> labels);

/// d(bce_loss)/dp, zero where the clamp is active.
template <typename T>
void bce_gradient(std::span<const T> probabilities, std::span<const std::uint8_t> labels, std::span<T> grad);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 16;
    int epochs = 25;
    int initial_filters = 128;
    int augmentation_factor = 3;
    int depth = 4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double threshold = kDefaultThreshold;
    unet::Activation activation = unet::Activation::ReLU;
    unet::Normalization normalization = unet::Normalization::None;
    std::uint64_t seed = 0;

    void validate() const;
    [[nodiscard]] unet::UNetConfig model_config(int input_size) const;
    [[nodiscard]] KeyValues to_key_values() const;
    /// Overrides the fields named in `kv`; keys that are not training keys are ignored.
    void apply(const KeyValues& kv);
    static const std::vector<std::string>& keys();

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

template <typename T>
class Adam {
public:
    Adam(std::vector<nn::Parameter<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step();
    [[nodiscard]] long long steps() const { return t_; }

private:
    std::vector<nn::Parameter<T>*> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_dc = 0.0;  // mean over validation tiles with a defined DC; NaN when none
};

/// Index of the smallest finite value; the earliest wins ties.
std::size_t select_best_epoch(std::span<const double> val_loss);
std::size_t select_best_epoch(std::span<const EpochRecord> curves);

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    unet::UNet<float> model;  // weights of the best epoch
    std::vector<EpochRecord> curves;
    int best_epoch = 0;  // 1-based
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, std::span<const TensorSample> train_split,
                  std::span<const TensorSample> val_split, const EpochCallback& on_epoch = {});

void write_curves(const std::filesystem::path& path, std::span<const EpochRecord> curves, int best_epoch);
std::vector<EpochRecord> read_curves(const std::filesystem::path& path, int* best_epoch = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

/// Probabilities for each sample, computed in evaluation mode.
std::vector<std::vector<float>> predict(unet::UNet<float>& model, std::span<const TensorSample> samples,
                                        int batch_size = 8);

struct TileMetrics {
    std::string record_id;
    Confusion counts;
    std::optional<double> dc;
    std::optional<double> oe;
    std::optional<double> ce;
    std::optional<double> ce_conventional;
    bool ce_above_one = false;
    long long burned_pixels = 0;
    long long total_area = 0;  // imagery pixels inside the tile
};

struct MeanMetric {
    std::optional<double> value;
    int excluded = 0;  // tiles where the metric is undefined
};

struct Aggregate {
    MeanMetric mean_dc, mean_oe, mean_ce, mean_ce_conventional;
    std::optional<double> micro_dc, micro_oe, micro_ce, micro_ce_conventional;
    int ce_above_one = 0;
    int tiles = 0;
};

struct MetricsReport {
    std::vector<TileMetrics> tiles;
    Aggregate aggregate;
    std::vector<EpochRecord> curves;
    int best_epoch = 0;
};

TileMetrics tile_metrics(std::string record_id, const Confusion& counts, long long total_area);
Aggregate aggregate(std::span<const TileMetrics> tiles);

MetricsReport evaluate(unet::UNet<float>& model, std::span<const TensorSample> test_split,
                       double threshold = kDefaultThreshold, int batch_size = 8);

void write_tile_metrics(const std::filesystem::path& path, const MetricsReport& report);
/// Reads the per-tile table back; metrics are recomputed from the counts.
std::vector<TileMetrics> read_tile_metrics(const std::filesystem::path& path);
void write_summary_json(const std::filesystem::path& path, const MetricsReport& report, const KeyValues& context = {});

// ---------------------------------------------------------------------------
// Diagnostics

struct BandDcRow {
    std::string record_id;
    double dc = 0.0;
    std::array<double, raster::kBandCount> pre_mean{};
    std::array<double, raster::kBandCount> post_mean{};
};

struct BandDcAnalysis {
    std::vector<BandDcRow> rows;
    int excluded_no_burned = 0;
    int excluded_undefined_dc = 0;
    double dc_q1 = 0.0;
    double dc_q3 = 0.0;
    /// Mean over tiles with DC >= Q3 minus mean over tiles with DC <= Q1.
    std::array<double, raster::kBandCount> pre_delta{};
    std::array<double, raster::kBandCount> post_delta{};
};

/// `samples` hold band values in physical units (not standardized), matched to
/// report tiles by record_id.
BandDcAnalysis band_dc_analysis(std::span<const TensorSample> samples, const MetricsReport& report);

struct AreaDcRow {
    std::string record_id;
    double burned_fraction = 0.0;
    long long burned_pixels = 0;
    long long total_area = 0;
    double dc = 0.0;
};

struct AreaDcAnalysis {
    std::vector<AreaDcRow> rows;
    int excluded = 0;
    double spearman_fraction_dc = 0.0;
    double spearman_area_dc = 0.0;
};

AreaDcAnalysis area_dc_analysis(const MetricsReport& report, dataset::Variant variant);

void write_band_dc(const std::filesystem::path& path, const BandDcAnalysis& analysis);
void write_area_dc(const std::filesystem::path& path, const AreaDcAnalysis& analysis);

}  // namespace firescar::train
