#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firescar/train.hpp"

namespace firescar::hpo {

using train::TrainConfig;

struct GridRow {
    std::string name;
    std::string configuration;
    TrainConfig config;
    KeyValues overrides;  // fields set on top of the baseline (all fields for the baseline row)
};

/// rows[0] is the baseline; every other row changes exactly one field of it.
struct HpoGrid {
    std::vector<GridRow> rows;

    [[nodiscard]] const GridRow& baseline() const;
    void validate() const;
};

/// Names of the TrainConfig fields whose values differ.
std::vector<std::string> differing_fields(const TrainConfig& a, const TrainConfig& b);

/// Baseline (lr 1e-4, batch 16, 128 filters, augmentation 2, 25 epochs) plus
/// the filter, learning-rate and batch-size variations.
HpoGrid default_paper_grid();

/// One row per line: `Name | Configuration | key=value key=value ...`. The
/// first row is the baseline and is applied on top of `defaults`; later rows
/// are applied on top of the baseline. Blank lines and '#' comments are skipped.
HpoGrid parse_grid(std::string_view text, const TrainConfig& defaults = {});
HpoGrid read_grid(const std::filesystem::path& path, const TrainConfig& defaults = {});
std::string format_grid(const HpoGrid& grid);

struct RunOutcome {
    double val_dc = 0.0;
    double val_loss = 0.0;
    int best_epoch = 0;
};

using Trainer = std::function<RunOutcome(const TrainConfig&)>;

/// Trainer that runs train::train on the given splits and reports the best epoch.
Trainer make_trainer(std::span<const train::TensorSample> train_split, std::span<const train::TensorSample> val_split);

struct RowResult {
    std::size_t row = 0;
    std::string name;
    std::string configuration;
    std::optional<RunOutcome> outcome;  // empty when the run failed
    std::string error;
    int rank = 0;  // 1 = best
    bool winner = false;
};

/// Trains every row with the baseline's seed, ranks by Val DC descending
/// (earlier row wins ties, failed rows last). Rows run on up to `workers` threads.
std::vector<RowResult> run_grid(const HpoGrid& grid, const Trainer& trainer, int workers = 1);

/// Orders results by rank and assigns rank/winner; exposed for testing.
void rank_results(std::vector<RowResult>& results);

/// Text table with columns Name, Configuration, Val DC in grid order.
std::string format_results_table(std::span<const RowResult> results);
void write_results(const std::filesystem::path& path, std::span<const RowResult> results);

}  // namespace firescar::hpo
