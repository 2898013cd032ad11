#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "firescar/grid.hpp"
#include "firescar/raster.hpp"

namespace firescar::dataset {

using raster::FireRecord;
using raster::Region;
using raster::ScarLabel;

inline constexpr int kTileSize = 128;
inline constexpr double kSecondaryScarDistanceM = 500.0;

enum class Variant { AS, F128 };
std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view s);

struct Padding {
    int top = 0;
    int bottom = 0;
    int left = 0;
    int right = 0;
    friend bool operator==(const Padding&, const Padding&) = default;
};

/// Splits `total` into (before, after) with the odd pixel going after.
inline std::pair<int, int> centered_split(int total) { return {total / 2, total - total / 2}; }

struct CropSpec {
    Variant variant = Variant::AS;
    Rect crop_rect;
    Padding pad_needed;  // AS only: zeros to add downstream to reach 128x128
};

struct CropOutcome {
    std::optional<CropSpec> crop;
    std::string rejection;  // "oversize" when the scar cannot fit the tile
    [[nodiscard]] bool accepted() const { return crop.has_value(); }
};

/// True when the bbox is strictly smaller than the tile on both axes.
bool fits_tile(const Rect& bbox);

/// Crop geometry for one record in a raster of `extent` (row/col 0, height x width).
/// F128 centers a 128x128 window on the scar bbox, shifting it inward at the
/// raster edge; AS returns the bbox itself along with the padding it needs.
CropOutcome make_crop(const FireRecord& record, Variant variant, const Rect& extent);

struct FilterResult {
    ScarLabel label;
    int components = 0;
    int removed = 0;
    bool empty_input = false;  // label had no burned pixels; returned unchanged
};

/// Zeroes 8-connected components whose closest pixel lies more than
/// `max_distance_m` from the central component (the one nearest the tile
/// center; ties go to the larger, then the first in raster order).
FilterResult filter_distant_components(const ScarLabel& label, double pixel_size_m,
                                       double max_distance_m = kSecondaryScarDistanceM);

/// 8-connected component labels (0 = background, 1..n in raster order of first pixel).
Grid<int> label_components(const Mask& mask, int* count = nullptr);

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct ManifestRow {
    std::string record_id;
    Region region = Region::Synthetic;
    Variant variant = Variant::AS;
    Split split = Split::Train;
    int stratum = 0;
    long long burned_pixel_count = 0;
    double burned_fraction = 0.0;
    Rect crop_rect;
    Padding pad;
};

struct DatasetManifest {
    std::vector<ManifestRow> rows;
    std::vector<std::string> warnings;

    [[nodiscard]] std::vector<const ManifestRow*> in_split(Split s) const;
};

struct SplitOptions {
    int strata = 5;
    double train_fraction = 0.7;
    double val_fraction = 0.2;
    int min_records_per_region = 10;
};

/// Size-stratified 70/20/10 assignment, run independently per region.
/// Rows come back in input order; geometry fields are left for the caller.
DatasetManifest stratified_split(const std::vector<FireRecord>& records, std::uint64_t seed,
                                 const SplitOptions& options = {});

/// Mean over rows of burned pixels / crop pixels, per variant present.
std::map<Variant, double> dataset_balance(const DatasetManifest& manifest,
                                          const std::map<std::string, ScarLabel>& labels);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Fire-record table (record_id, region, fire_date, centroid_x, centroid_y).
void write_fire_records(const std::filesystem::path& path, const std::vector<FireRecord>& records);
std::vector<FireRecord> read_fire_records(const std::filesystem::path& path);

}  // namespace firescar::dataset
