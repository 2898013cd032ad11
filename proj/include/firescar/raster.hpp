#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "firescar/grid.hpp"

namespace firescar::raster {

inline constexpr int kBandCount = 8;
inline constexpr int kRawBandCount = 6;

/// Fixed channel order of every pre/post stack.
enum class Band : int { Blue = 0, Green, Red, Nir, Swir1, Swir2, Ndvi, Nbr };

std::string_view band_name(int band);

template <std::floating_point T>
constexpr T invalid_value() {
    return std::numeric_limits<T>::quiet_NaN();
}

template <std::floating_point T>
constexpr bool is_invalid(T v) {
    return std::isnan(v);
}

using BandStack = std::array<Grid<float>, kBandCount>;

struct MapPoint {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const MapPoint&, const MapPoint&) = default;
};

/// Per-fire raster pair. Invariant: all 16 grids share one shape.
struct BandTile {
    BandStack pre;
    BandStack post;
    double pixel_size_m = 30.0;
    MapPoint origin;  // top-left corner, map units
    std::string record_id;

    [[nodiscard]] int height() const { return pre[0].height(); }
    [[nodiscard]] int width() const { return pre[0].width(); }
    [[nodiscard]] bool well_formed() const;
    [[nodiscard]] BandTile crop(const Rect& r) const;
};

struct ScarLabel {
    Mask mask;
    [[nodiscard]] int height() const { return mask.height(); }
    [[nodiscard]] int width() const { return mask.width(); }
    [[nodiscard]] long long burned_pixels() const;
    /// Tight bounding box of burned pixels; empty Rect when nothing is burned.
    [[nodiscard]] Rect bounding_box() const;
};

/// Throws ContractViolation unless every value is 0 or 1.
void check_binary(const Mask& mask);

enum class Region { Valparaiso, Biobio, Synthetic };
std::string_view region_name(Region r);
Region parse_region(std::string_view s);

struct FireRecord {
    std::string record_id;
    Region region = Region::Synthetic;
    std::chrono::year_month_day fire_date{};
    MapPoint centroid;
    Rect scar_bbox;
    long long burned_pixel_count = 0;
};

std::string format_date(const std::chrono::year_month_day& d);
std::chrono::year_month_day parse_date(std::string_view s);

// ---------------------------------------------------------------------------
// Spectral indices

/// (a - b) / (a + b), invalid where the denominator vanishes.
template <std::floating_point T>
Grid<T> normalized_difference(const Grid<T>& a, const Grid<T>& b, const char* what) {
    require_same_shape(a, b, what);
    Grid<T> out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T sum = a[i] + b[i];
        out[i] = sum == T{0} ? invalid_value<T>() : (a[i] - b[i]) / sum;
    }
    return out;
}

template <std::floating_point T>
Grid<T> compute_ndvi(const Grid<T>& nir, const Grid<T>& red) {
    return normalized_difference(nir, red, "compute_ndvi");
}

template <std::floating_point T>
Grid<T> compute_nbr(const Grid<T>& nir, const Grid<T>& swir2) {
    return normalized_difference(nir, swir2, "compute_nbr");
}

/// How NBR inputs to compute_rdnbr are encoded.
enum class NbrEncoding {
    Thousandths,  // NBR x 1000, used as-is
    Unit,         // NBR in [-1, 1], multiplied by 1000 first
};

inline constexpr double kRdnbrEpsilon = 0.001;

/// RdNBR = (pre - post) / sqrt(|pre| / 1000), both operands in thousandths.
/// |pre| is floored at kRdnbrEpsilon under the square root.
template <std::floating_point T>
Grid<T> compute_rdnbr(const Grid<T>& nbr_pre, const Grid<T>& nbr_post, NbrEncoding encoding = NbrEncoding::Thousandths) {
    require_same_shape(nbr_pre, nbr_post, "compute_rdnbr");
    const T scale = encoding == NbrEncoding::Unit ? T{1000} : T{1};
    Grid<T> out(nbr_pre.height(), nbr_pre.width());
    for (std::size_t i = 0; i < nbr_pre.size(); ++i) {
        const T pre = nbr_pre[i] * scale;
        const T post = nbr_post[i] * scale;
        const T mag = std::max(std::abs(pre), static_cast<T>(kRdnbrEpsilon));
        out[i] = (pre - post) / std::sqrt(mag / T{1000});
    }
    return out;
}

/// Recompute NDVI and NBR channels of a stack from its raw bands.
void fill_indices(BandStack& stack);

// ---------------------------------------------------------------------------
// Validity

struct RangeProfile {
    float reflectance_lo = 0.0f;
    float reflectance_hi = 1.0f;
    float index_lo = -1.0f;
    float index_hi = 1.0f;

    [[nodiscard]] float lo(int band) const { return band < kRawBandCount ? reflectance_lo : index_lo; }
    [[nodiscard]] float hi(int band) const { return band < kRawBandCount ? reflectance_hi : index_hi; }
};

enum class ImageKind { Pre, Post };
enum class ViolationKind { OutOfRange, Invalid, ZeroNoise };

std::string_view image_kind_name(ImageKind k);
std::string_view violation_kind_name(ViolationKind k);

struct BandViolation {
    ImageKind image = ImageKind::Pre;
    int band = 0;
    ViolationKind kind = ViolationKind::OutOfRange;
    long long count = 0;
    friend bool operator==(const BandViolation&, const BandViolation&) = default;
};

/// A pixel is zero-noise when all six raw bands are exactly zero.
Mask zero_noise_mask(const BandStack& stack);

/// Per-band counts of out-of-range, invalid and zero-noise pixels. Only
/// nonzero counts are reported.
std::vector<BandViolation> validate_band_ranges(const BandTile& tile, const RangeProfile& profile = {});

}  // namespace firescar::raster
