#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "firescar/dataset.hpp"
#include "firescar/hpo.hpp"
#include "firescar/preprocess.hpp"
#include "firescar/synth.hpp"
#include "firescar/train.hpp"

namespace firescar::pipeline {

namespace fs = std::filesystem;

/// A stage ran before the stage that produces its inputs.
class MissingArtifact : public std::runtime_error {
public:
    MissingArtifact(const fs::path& path, std::string_view producer);
    fs::path path;
};

struct RunConfig {
    fs::path raw_dir = "raw";
    fs::path work_dir = "work";
    fs::path out_dir = "out";
    std::optional<dataset::Variant> variant;
    std::uint64_t seed = 0;
    int workers = 1;
    int knn_k = preprocess::kDefaultKnnK;
    double iqr_factor = 1.5;
    preprocess::NormMethod norm = preprocess::NormMethod::Standardize;
    dataset::SplitOptions split;
    train::TrainConfig train;
    synth::SynthSpec synth;
    fs::path grid_file;  // empty: the built-in paper grid

    /// Keys: raw_dir work_dir out_dir variant seed workers knn_k iqr_factor norm
    /// strata train_fraction val_fraction min_records_per_region grid, every
    /// training key, and synth.<field>. Unknown keys are rejected.
    static RunConfig from_key_values(const KeyValues& kv);
    [[nodiscard]] KeyValues to_key_values() const;

    [[nodiscard]] dataset::Variant require_variant(std::string_view stage) const;
    [[nodiscard]] fs::path variant_dir(dataset::Variant v) const { return work_dir / dataset::variant_name(v); }
};

using Log = std::function<void(const std::string&)>;

/// Runs fn(0..n-1) on up to `workers` threads; the first exception is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

struct SynthSummary {
    int tiles = 0;
    double mean_burned_fraction = 0.0;
};
SynthSummary run_synth(const RunConfig& config, const Log& log = {});

struct Rejection {
    std::string record_id;
    std::string reason;
};

struct BuildSummary {
    int records = 0;
    int accepted = 0;
    std::vector<Rejection> rejections;
    std::map<std::string, std::map<std::string, int>> counts;  // region -> split -> rows
    double mean_burned_fraction = 0.0;
    int components_removed = 0;
    std::vector<std::string> warnings;
};
BuildSummary build_dataset(const RunConfig& config, const Log& log = {});

struct PreprocessSummary {
    std::map<std::string, int> samples;  // split -> count
    std::vector<std::string> warnings;
};
PreprocessSummary run_preprocess(const RunConfig& config, const Log& log = {});

struct TrainSummary {
    int best_epoch = 0;
    train::EpochRecord best;
    std::size_t parameters = 0;
};
TrainSummary run_train(const RunConfig& config, const Log& log = {});

train::MetricsReport run_evaluate(const RunConfig& config, const Log& log = {});

std::vector<hpo::RowResult> run_hpo(const RunConfig& config, const Log& log = {});

/// Writes plots and text tables to out_dir; returns the files written.
std::vector<fs::path> run_report(const RunConfig& config, const Log& log = {});

}  // namespace firescar::pipeline
