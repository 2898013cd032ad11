#include "firescar/raster.hpp"

#include <algorithm>
#include <cstdio>

namespace firescar::raster {

namespace {
constexpr std::array<std::string_view, kBandCount> kBandNames = {"blue", "green", "red",   "nir",
                                                                 "swir1", "swir2", "ndvi", "nbr"};
}

std::string_view band_name(int band) {
    if (band < 0 || band >= kBandCount) throw ContractViolation("band index out of range");
    return kBandNames[band];
}

bool BandTile::well_formed() const {
    const int h = pre[0].height();
    const int w = pre[0].width();
    for (int b = 0; b < kBandCount; ++b) {
        if (pre[b].height() != h || pre[b].width() != w) return false;
        if (post[b].height() != h || post[b].width() != w) return false;
    }
    return true;
}

BandTile BandTile::crop(const Rect& r) const {
    BandTile out;
    for (int b = 0; b < kBandCount; ++b) {
        out.pre[b] = pre[b].crop(r);
        out.post[b] = post[b].crop(r);
    }
    out.pixel_size_m = pixel_size_m;
    out.origin = {origin.x + r.col * pixel_size_m, origin.y - r.row * pixel_size_m};
    out.record_id = record_id;
    return out;
}

long long ScarLabel::burned_pixels() const {
    long long n = 0;
    for (auto v : mask.values()) n += v != 0;
    return n;
}

Rect ScarLabel::bounding_box() const {
    int r0 = mask.height(), c0 = mask.width(), r1 = -1, c1 = -1;
    for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c)
            if (mask(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) return {};
    return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

void check_binary(const Mask& mask) {
    for (auto v : mask.values())
        if (v > 1) throw ContractViolation("scar mask values must be 0 or 1");
}

std::string_view region_name(Region r) {
    switch (r) {
        case Region::Valparaiso: return "Valparaiso";
        case Region::Biobio: return "Biobio";
        case Region::Synthetic: return "Synthetic";
    }
    return "?";
}

Region parse_region(std::string_view s) {
    if (s == "Valparaiso") return Region::Valparaiso;
    if (s == "Biobio" || s == "BioBio" || s == "Biobío") return Region::Biobio;
    if (s == "Synthetic") return Region::Synthetic;
    throw FormatError("unknown region '" + std::string(s) + "'");
}

std::string format_date(const std::chrono::year_month_day& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

std::chrono::year_month_day parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(std::string(s).c_str(), "%d-%u-%u", &y, &m, &d) != 3)
        throw FormatError("bad date '" + std::string(s) + "', expected YYYY-MM-DD");
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw FormatError("invalid calendar date '" + std::string(s) + "'");
    return ymd;
}

void fill_indices(BandStack& stack) {
    const auto nir = static_cast<int>(Band::Nir);
    stack[static_cast<int>(Band::Ndvi)] = compute_ndvi(stack[nir], stack[static_cast<int>(Band::Red)]);
    stack[static_cast<int>(Band::Nbr)] = compute_nbr(stack[nir], stack[static_cast<int>(Band::Swir2)]);
}

std::string_view image_kind_name(ImageKind k) { return k == ImageKind::Pre ? "pre" : "post"; }

std::string_view violation_kind_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::OutOfRange: return "out_of_range";
        case ViolationKind::Invalid: return "invalid";
        case ViolationKind::ZeroNoise: return "zero_noise";
    }
    return "?";
}

Mask zero_noise_mask(const BandStack& stack) {
    Mask out(stack[0].height(), stack[0].width(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool all_zero = true;
        for (int b = 0; b < kRawBandCount && all_zero; ++b) all_zero = stack[b][i] == 0.0f;
        out[i] = all_zero;
    }
    return out;
}

std::vector<BandViolation> validate_band_ranges(const BandTile& tile, const RangeProfile& profile) {
    if (!tile.well_formed()) throw ContractViolation("validate_band_ranges: malformed tile");
    std::vector<BandViolation> out;
    for (auto kind : {ImageKind::Pre, ImageKind::Post}) {
        const BandStack& stack = kind == ImageKind::Pre ? tile.pre : tile.post;
        const Mask zero = zero_noise_mask(stack);
        long long zero_count = 0;
        for (auto v : zero.values()) zero_count += v;
        for (int b = 0; b < kBandCount; ++b) {
            long long invalid = 0, off = 0;
            const float lo = profile.lo(b), hi = profile.hi(b);
            for (float v : stack[b].values()) {
                if (is_invalid(v))
                    ++invalid;
                else if (v < lo || v > hi)
                    ++off;
            }
            if (off) out.push_back({kind, b, ViolationKind::OutOfRange, off});
            if (invalid) out.push_back({kind, b, ViolationKind::Invalid, invalid});
            if (zero_count && b < kRawBandCount) out.push_back({kind, b, ViolationKind::ZeroNoise, zero_count});
        }
    }
    return out;
}

}  // namespace firescar::raster
