#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "firescar/kv.hpp"
#include "firescar/raster.hpp"

namespace firescar::synth {

using raster::BandTile;
using raster::FireRecord;
using raster::ScarLabel;

inline constexpr int kLandCoverClasses = 4;

/// Surface reflectance of blue, green, red, NIR, SWIR1, SWIR2.
using Spectrum = std::array<float, raster::kRawBandCount>;

std::array<Spectrum, kLandCoverClasses> default_spectra();

struct SynthSpec {
    int tiles = 50;
    int height = 128;
    int width = 128;
    double burned_fraction = 0.33;   // target share of scar pixels per tile
    double fraction_jitter = 0.0;    // per-tile target drawn from burned_fraction * (1 +/- jitter)
    int margin = 4;                  // border rows/cols the scar never touches
    double scar_roughness = 0.6;     // weight of smoothed noise against the central bump
    double severity = 1.0;           // 0 leaves post == pre
    double noise = 0.01;             // additive reflectance noise (standard deviation)
    double land_cover_scale = 12.0;  // smoothing length of the land-cover field, pixels
    std::array<Spectrum, kLandCoverClasses> spectra = default_spectra();
    double pixel_size_m = 30.0;
    std::uint64_t seed = 0;

    void validate() const;
    /// Overrides of the scalar fields (tiles, height, ..., seed); unknown keys are ignored.
    void apply(const KeyValues& kv);
    [[nodiscard]] KeyValues to_key_values() const;
};

struct Corpus {
    std::vector<BandTile> tiles;
    std::vector<ScarLabel> labels;
    std::vector<FireRecord> records;
    std::vector<Grid<std::uint8_t>> land_cover;
};

/// Same spec and seed give a bit-identical corpus.
Corpus generate(const SynthSpec& spec);

struct DefectRates {
    double out_of_range = 0.0;  // per pixel and band
    double invalid = 0.0;       // per pixel and band
    double zero = 0.0;          // per pixel: all raw bands 0, indices invalid
};

enum class DefectKind { OutOfRange, Invalid, Zero };

struct Defect {
    std::size_t tile = 0;
    raster::ImageKind image = raster::ImageKind::Pre;
    int row = 0;
    int col = 0;
    int band = -1;  // -1 for whole-pixel defects
    DefectKind kind = DefectKind::OutOfRange;
};

struct DefectLog {
    std::vector<Defect> defects;
    /// True when (tile, image, row, col, band) was touched by any defect.
    [[nodiscard]] bool touched(std::size_t tile, raster::ImageKind image, int row, int col, int band) const;
    [[nodiscard]] long long count(DefectKind kind) const;

    std::vector<Mask> band_bits;  // [tile * 2 + image]: bit b set when band b was touched
};

std::vector<BandTile> inject_defects(std::span<const BandTile> tiles, const DefectRates& rates, std::uint64_t seed,
                                     DefectLog* log = nullptr);

/// Writes <dir>/fires.tsv and <dir>/tiles/<id>_{pre,post,mask}.tif.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace firescar::synth
