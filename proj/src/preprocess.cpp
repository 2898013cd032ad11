#include "firescar/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "firescar/kv.hpp"

namespace firescar::preprocess {

using raster::BandStack;
using raster::kBandCount;
using raster::kRawBandCount;

long long TensorSample::burned_pixels() const {
    long long n = 0;
    for (auto v : label.values()) n += v != 0;
    return n;
}

bool TensorSample::has_invalid() const {
    return std::any_of(channels.begin(), channels.end(), [](float v) { return !std::isfinite(v); });
}

namespace {

// q-th linear-interpolation quantile; reorders `v`.
double quantile_inplace(std::vector<float>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

const BandStack& stack_of(const BandTile& t, int image) { return image == 0 ? t.pre : t.post; }
BandStack& stack_of(BandTile& t, int image) { return image == 0 ? t.pre : t.post; }

}  // namespace

BandLimits compute_band_limits(std::span<const BandTile> tiles, const raster::RangeProfile& profile, double iqr_factor) {
    BandLimits limits;
    std::vector<Mask> zero;
    zero.reserve(tiles.size() * 2);
    for (const auto& t : tiles)
        for (int image = 0; image < 2; ++image) zero.push_back(raster::zero_noise_mask(stack_of(t, image)));

    for (int b = 0; b < kBandCount; ++b) {
        std::vector<float> values;
        for (std::size_t t = 0; t < tiles.size(); ++t)
            for (int image = 0; image < 2; ++image) {
                const auto& grid = stack_of(tiles[t], image)[b];
                const Mask& z = zero[t * 2 + image];
                for (std::size_t i = 0; i < grid.size(); ++i)
                    if (!raster::is_invalid(grid[i]) && !z[i]) values.push_back(grid[i]);
            }
        BandLimit& lim = limits.bands[b];
        lim.lo = profile.lo(b);
        lim.hi = profile.hi(b);
        if (values.empty()) continue;
        const double q1 = quantile_inplace(values, 0.25);
        const double q3 = quantile_inplace(values, 0.75);
        const double iqr = q3 - q1;
        lim.lo = std::max(lim.lo, static_cast<float>(q1 - iqr_factor * iqr));
        lim.hi = std::min(lim.hi, static_cast<float>(q3 + iqr_factor * iqr));
        double sum = 0;
        long long n = 0;
        for (float v : values)
            if (v >= lim.lo && v <= lim.hi) {
                sum += v;
                ++n;
            }
        lim.dataset_mean = n ? sum / static_cast<double>(n) : 0.0;
    }
    return limits;
}

BandTile impute_outliers(const BandTile& tile, const BandLimits& limits, Warnings* warnings) {
    if (!tile.well_formed()) throw ContractViolation("impute_outliers: malformed tile");
    BandTile out = tile;
    for (int image = 0; image < 2; ++image) {
        const BandStack& src = stack_of(tile, image);
        BandStack& dst = stack_of(out, image);
        const Mask zero = raster::zero_noise_mask(src);
        for (int b = 0; b < kBandCount; ++b) {
            const BandLimit& lim = limits.bands[b];
            const auto& grid = src[b];
            double sum = 0;
            long long in_range = 0, outliers = 0;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const float v = grid[i];
                if (raster::is_invalid(v) || zero[i]) continue;
                if (v >= lim.lo && v <= lim.hi) {
                    sum += v;
                    ++in_range;
                } else {
                    ++outliers;
                }
            }
            if (!outliers) continue;
            double replacement = in_range ? sum / static_cast<double>(in_range) : lim.dataset_mean;
            if (!in_range && warnings)
                warnings->push_back(tile.record_id + ": " + std::string(raster::image_kind_name(
                                                              image == 0 ? raster::ImageKind::Pre : raster::ImageKind::Post)) +
                                    " band " + std::string(raster::band_name(b)) +
                                    " has no in-range pixels; using dataset mean");
            const auto fill = static_cast<float>(replacement);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const float v = grid[i];
                if (raster::is_invalid(v) || zero[i]) continue;
                if (v < lim.lo || v > lim.hi) dst[b][i] = fill;
            }
        }
    }
    return out;
}

Mask missing_mask(const BandStack& stack, int band) {
    Mask m = raster::zero_noise_mask(stack);
    const auto& grid = stack[band];
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = m[i] || raster::is_invalid(grid[i]);
    return m;
}

namespace {

struct Neighbor {
    long long d2;
    int r;
    int c;
    bool operator<(const Neighbor& o) const {
        if (d2 != o.d2) return d2 < o.d2;
        if (r != o.r) return r < o.r;
        return c < o.c;
    }
};

float knn_mean(const Grid<float>& grid, const Mask& missing, int r0, int c0, int k, std::vector<Neighbor>& best) {
    best.clear();
    const int h = grid.height(), w = grid.width();
    const int max_radius = std::max(h, w);
    auto consider = [&](int r, int c) {
        if (r < 0 || c < 0 || r >= h || c >= w || missing(r, c)) return;
        const long long dr = r - r0, dc = c - c0;
        Neighbor n{dr * dr + dc * dc, r, c};
        if (static_cast<int>(best.size()) == k && !(n < best.back())) return;
        best.insert(std::upper_bound(best.begin(), best.end(), n), n);
        if (static_cast<int>(best.size()) > k) best.pop_back();
    };
    for (int radius = 1; radius <= max_radius; ++radius) {
        for (int c = c0 - radius; c <= c0 + radius; ++c) {
            consider(r0 - radius, c);
            consider(r0 + radius, c);
        }
        for (int r = r0 - radius + 1; r <= r0 + radius - 1; ++r) {
            consider(r, c0 - radius);
            consider(r, c0 + radius);
        }
        // Anything not yet visited is at least radius + 1 away.
        const long long next = static_cast<long long>(radius + 1) * (radius + 1);
        if (static_cast<int>(best.size()) == k && best.back().d2 < next) break;
    }
    double sum = 0;
    for (const auto& n : best) sum += grid(n.r, n.c);
    return static_cast<float>(sum / static_cast<double>(best.size()));
}

}  // namespace

BandTile knn_fill(const BandTile& tile, int k, const BandLimits* fallback, Warnings* warnings) {
    if (k < 1) throw ContractViolation("knn_fill: k must be >= 1");
    if (!tile.well_formed()) throw ContractViolation("knn_fill: malformed tile");
    BandTile out = tile;
    std::vector<Neighbor> best;
    best.reserve(k + 1);
    for (int image = 0; image < 2; ++image) {
        const BandStack& src = stack_of(tile, image);
        BandStack& dst = stack_of(out, image);
        for (int b = 0; b < kBandCount; ++b) {
            const Mask missing = missing_mask(src, b);
            const auto n_missing = std::count(missing.values().begin(), missing.values().end(), 1);
            if (n_missing == 0) continue;
            if (n_missing == static_cast<long long>(missing.size())) {
                const float fill = fallback ? static_cast<float>(fallback->bands[b].dataset_mean) : 0.0f;
                if (warnings)
                    warnings->push_back(tile.record_id + ": band " + std::string(raster::band_name(b)) +
                                        " fully missing; filled with dataset mean");
                std::fill(dst[b].values().begin(), dst[b].values().end(), fill);
                continue;
            }
            for (int r = 0; r < missing.height(); ++r)
                for (int c = 0; c < missing.width(); ++c)
                    if (missing(r, c)) dst[b](r, c) = knn_mean(src[b], missing, r, c, k, best);
        }
    }
    return out;
}

TensorSample concatenate(const BandTile& tile, const ScarLabel& label) {
    if (!tile.well_formed()) throw ContractViolation("concatenate: malformed tile");
    require_same_shape(tile.pre[0], label.mask, "concatenate");
    TensorSample s;
    s.height = tile.height();
    s.width = tile.width();
    s.record_id = tile.record_id;
    s.label = label.mask;
    s.content = {0, 0, s.height, s.width};
    s.channels.resize(static_cast<std::size_t>(kChannels) * s.height * s.width);
    for (int b = 0; b < kBandCount; ++b) {
        std::copy(tile.post[b].values().begin(), tile.post[b].values().end(), s.channel(b).begin());
        std::copy(tile.pre[b].values().begin(), tile.pre[b].values().end(), s.channel(kBandCount + b).begin());
    }
    return s;
}

namespace {

template <typename F>
void for_content(const TensorSample& s, int c, F&& f) {
    const auto ch = s.channel(c);
    for (int r = s.content.row; r < s.content.row + s.content.height; ++r)
        for (int col = s.content.col; col < s.content.col + s.content.width; ++col)
            f(ch[static_cast<std::size_t>(r) * s.width + col]);
}

}  // namespace

NormStats fit_norm_stats(std::span<const TensorSample> samples, NormMethod method, Warnings* warnings) {
    if (samples.empty()) throw ContractViolation("fit_norm_stats: no samples");
    NormStats stats;
    stats.method = method;
    for (int c = 0; c < kChannels; ++c) {
        if (method == NormMethod::MinMax) {
            double lo = INFINITY, hi = -INFINITY;
            for (const auto& s : samples)
                for_content(s, c, [&](float v) {
                    lo = std::min(lo, double(v));
                    hi = std::max(hi, double(v));
                });
            stats.offset[c] = lo;
            stats.scale[c] = hi - lo;
        } else {
            double sum = 0;
            long long n = 0;
            for (const auto& s : samples)
                for_content(s, c, [&](float v) {
                    sum += v;
                    ++n;
                });
            const double mean = sum / static_cast<double>(n);
            double ss = 0;
            for (const auto& s : samples)
                for_content(s, c, [&](float v) { ss += (v - mean) * (v - mean); });
            stats.offset[c] = mean;
            stats.scale[c] = std::sqrt(ss / static_cast<double>(n));
        }
        if (!(stats.scale[c] > 0.0) || !std::isfinite(stats.scale[c])) {
            if (warnings) warnings->push_back("channel " + std::to_string(c) + " has zero spread; scale set to 1");
            stats.scale[c] = 1.0;
        }
    }
    return stats;
}

TensorSample standardize(TensorSample sample, const NormStats& stats) {
    for (int c = 0; c < kChannels; ++c) {
        auto ch = sample.channel(c);
        const double off = stats.offset[c], sc = stats.scale[c];
        const Rect& k = sample.content;
        for (int r = k.row; r < k.row + k.height; ++r)
            for (int col = k.col; col < k.col + k.width; ++col) {
                float& v = ch[static_cast<std::size_t>(r) * sample.width + col];
                v = static_cast<float>((v - off) / sc);
            }
    }
    return sample;
}

TensorSample unstandardize(TensorSample sample, const NormStats& stats) {
    for (int c = 0; c < kChannels; ++c) {
        auto ch = sample.channel(c);
        const double off = stats.offset[c], sc = stats.scale[c];
        const Rect& k = sample.content;
        for (int r = k.row; r < k.row + k.height; ++r)
            for (int col = k.col; col < k.col + k.width; ++col) {
                float& v = ch[static_cast<std::size_t>(r) * sample.width + col];
                v = static_cast<float>(v * sc + off);
            }
    }
    return sample;
}

TensorSample zero_pad(const TensorSample& sample, int size) {
    if (sample.height > size || sample.width > size)
        throw ContractViolation("zero_pad: " + std::to_string(sample.height) + "x" + std::to_string(sample.width) +
                                " does not fit in " + std::to_string(size));
    const int top = (size - sample.height) / 2;
    const int left = (size - sample.width) / 2;
    TensorSample out;
    out.height = size;
    out.width = size;
    out.record_id = sample.record_id;
    out.augmentation_tag = sample.augmentation_tag;
    out.content = {sample.content.row + top, sample.content.col + left, sample.content.height, sample.content.width};
    out.channels.assign(static_cast<std::size_t>(kChannels) * size * size, 0.0f);
    out.label = Mask(size, size, 0);
    for (int c = 0; c < kChannels; ++c) {
        const auto src = sample.channel(c);
        auto dst = out.channel(c);
        for (int r = 0; r < sample.height; ++r)
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r) * sample.width, sample.width,
                        dst.begin() + static_cast<std::ptrdiff_t>(r + top) * size + left);
    }
    for (int r = 0; r < sample.height; ++r)
        for (int c = 0; c < sample.width; ++c) out.label(r + top, c + left) = sample.label(r, c);
    return out;
}

std::string_view transform_name(Transform t) {
    switch (t) {
        case Transform::Identity: return "identity";
        case Transform::FlipHorizontal: return "flip_h";
        case Transform::FlipVertical: return "flip_v";
        case Transform::Rotate90: return "rot90";
        case Transform::Rotate180: return "rot180";
        case Transform::Rotate270: return "rot270";
        case Transform::Transpose: return "transpose";
        case Transform::AntiTranspose: return "antitranspose";
    }
    return "?";
}

namespace {

bool swaps_axes(Transform t) {
    return t == Transform::Rotate90 || t == Transform::Rotate270 || t == Transform::Transpose ||
           t == Transform::AntiTranspose;
}

// Where input pixel (r, c) lands; out_h/out_w are the output dimensions.
std::pair<int, int> forward_map(Transform t, int r, int c, int h, int w) {
    switch (t) {
        case Transform::Identity: return {r, c};
        case Transform::FlipHorizontal: return {r, w - 1 - c};
        case Transform::FlipVertical: return {h - 1 - r, c};
        case Transform::Rotate90: return {w - 1 - c, r};
        case Transform::Rotate180: return {h - 1 - r, w - 1 - c};
        case Transform::Rotate270: return {c, h - 1 - r};
        case Transform::Transpose: return {c, r};
        case Transform::AntiTranspose: return {w - 1 - c, h - 1 - r};
    }
    return {r, c};
}

}  // namespace

TensorSample apply_transform(const TensorSample& sample, Transform t) {
    const int h = sample.height, w = sample.width;
    const bool swap = swaps_axes(t);
    TensorSample out;
    out.height = swap ? w : h;
    out.width = swap ? h : w;
    out.record_id = sample.record_id;
    out.augmentation_tag = std::string(transform_name(t));
    out.channels.resize(sample.channels.size());
    out.label = Mask(out.height, out.width, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const auto [orow, ocol] = forward_map(t, r, c, h, w);
            const std::size_t src = static_cast<std::size_t>(r) * w + c;
            const std::size_t dst = static_cast<std::size_t>(orow) * out.width + ocol;
            for (int ch = 0; ch < kChannels; ++ch)
                out.channels[static_cast<std::size_t>(ch) * h * w + dst] = sample.channels[static_cast<std::size_t>(ch) * h * w + src];
            out.label[dst] = sample.label[src];
        }
    const Rect& k = sample.content;
    auto [r0, c0] = forward_map(t, k.row, k.col, h, w);
    auto [r1, c1] = forward_map(t, k.last_row(), k.last_col(), h, w);
    out.content = {std::min(r0, r1), std::min(c0, c1), std::abs(r1 - r0) + 1, std::abs(c1 - c0) + 1};
    return out;
}

std::vector<Transform> augmentation_plan(int factor, std::uint64_t seed) {
    if (factor < 1 || factor > kTransformCount)
        throw ContractViolation("augment: factor must be in [1, " + std::to_string(kTransformCount) + "], got " +
                                std::to_string(factor));
    std::vector<Transform> pool;
    for (int t = 1; t < kTransformCount; ++t) pool.push_back(static_cast<Transform>(t));
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<Transform> plan{Transform::Identity};
    plan.insert(plan.end(), pool.begin(), pool.begin() + (factor - 1));
    return plan;
}

std::vector<TensorSample> augment(const TensorSample& sample, int factor, std::uint64_t seed) {
    std::vector<TensorSample> out;
    for (Transform t : augmentation_plan(factor, seed))
        out.push_back(t == Transform::Identity ? sample : apply_transform(sample, t));
    return out;
}

namespace {
constexpr char kArchiveMagic[4] = {'F', 'S', 'T', 'S'};
constexpr std::uint32_t kArchiveVersion = 1;
constexpr std::uint32_t kDtypeFloat32 = 1;
}  // namespace

void write_archive(const std::filesystem::path& path, std::span<const TensorSample> samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write archive '" + path.string() + "'");
    const int h = samples.empty() ? 0 : samples[0].height;
    const int w = samples.empty() ? 0 : samples[0].width;
    for (const auto& s : samples) {
        if (s.height != h || s.width != w) throw ContractViolation("write_archive: samples differ in size");
        if (s.channels.size() != static_cast<std::size_t>(kChannels) * h * w)
            throw ContractViolation("write_archive: sample " + s.record_id + " is not 16-channel");
    }
    out.write(kArchiveMagic, 4);
    io::put<std::uint32_t>(out, kArchiveVersion);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
    io::put<std::uint32_t>(out, kChannels);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    io::put<std::uint32_t>(out, kDtypeFloat32);
    for (const auto& s : samples) {
        io::put_string(out, s.record_id);
        io::put_string(out, s.augmentation_tag);
        for (int v : {s.content.row, s.content.col, s.content.height, s.content.width}) io::put<std::int32_t>(out, v);
    }
    for (const auto& s : samples) io::put_array(out, s.channels.data(), s.channels.size());
    for (const auto& s : samples) io::put_array(out, s.label.values().data(), s.label.size());
    if (!out) throw std::runtime_error("write failed for archive '" + path.string() + "'");
}

std::vector<TensorSample> read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open archive '" + path.string() + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kArchiveMagic, 4) != 0)
        throw FormatError("'" + path.string() + "' is not a tensor archive");
    if (io::get<std::uint32_t>(in, "version") != kArchiveVersion) throw FormatError("unsupported archive version");
    const auto count = io::get<std::uint32_t>(in, "count");
    const auto channels = io::get<std::uint32_t>(in, "channels");
    const auto h = io::get<std::uint32_t>(in, "height");
    const auto w = io::get<std::uint32_t>(in, "width");
    if (io::get<std::uint32_t>(in, "dtype") != kDtypeFloat32) throw FormatError("unsupported archive dtype");
    if (channels != kChannels) throw FormatError("archive channel count is not 16");
    std::vector<TensorSample> samples(count);
    for (auto& s : samples) {
        s.height = static_cast<int>(h);
        s.width = static_cast<int>(w);
        s.record_id = io::get_string(in, "record_id");
        s.augmentation_tag = io::get_string(in, "augmentation_tag");
        s.content.row = io::get<std::int32_t>(in, "content");
        s.content.col = io::get<std::int32_t>(in, "content");
        s.content.height = io::get<std::int32_t>(in, "content");
        s.content.width = io::get<std::int32_t>(in, "content");
    }
    for (auto& s : samples) {
        s.channels.resize(static_cast<std::size_t>(channels) * h * w);
        io::get_array(in, s.channels.data(), s.channels.size(), "payload");
    }
    for (auto& s : samples) {
        s.label = Mask(static_cast<int>(h), static_cast<int>(w));
        io::get_array(in, s.label.values().data(), s.label.size(), "labels");
    }
    return samples;
}

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
    KeyValues kv;
    kv["method"] = stats.method == NormMethod::Standardize ? "standardize" : "minmax";
    kv["channels"] = std::to_string(kChannels);
    for (int c = 0; c < kChannels; ++c) {
        const auto idx = (c < 10 ? "0" : "") + std::to_string(c);
        kv["offset." + idx] = format_double(stats.offset[c]);
        kv["scale." + idx] = format_double(stats.scale[c]);
    }
    write_key_values(path, kv, "per-channel normalization (channels 00-07 post-fire, 08-15 pre-fire)");
}

NormStats read_norm_stats(const std::filesystem::path& path) {
    const KeyValues kv = read_key_values(path);
    NormStats stats;
    const auto& method = kv_string(kv, "method");
    if (method == "standardize")
        stats.method = NormMethod::Standardize;
    else if (method == "minmax")
        stats.method = NormMethod::MinMax;
    else
        throw FormatError("unknown normalization method '" + method + "'");
    if (kv_int(kv, "channels") != kChannels) throw FormatError("norm stats channel count is not 16");
    for (int c = 0; c < kChannels; ++c) {
        const auto idx = (c < 10 ? "0" : "") + std::to_string(c);
        stats.offset[c] = kv_double(kv, "offset." + idx);
        stats.scale[c] = kv_double(kv, "scale." + idx);
    }
    return stats;
}

void write_band_limits(const std::filesystem::path& path, const BandLimits& limits) {
    KeyValues kv;
    for (int b = 0; b < kBandCount; ++b) {
        const std::string name(raster::band_name(b));
        kv[name + ".lo"] = format_double(limits.bands[b].lo);
        kv[name + ".hi"] = format_double(limits.bands[b].hi);
        kv[name + ".dataset_mean"] = format_double(limits.bands[b].dataset_mean);
    }
    write_key_values(path, kv, "dataset-level outlier limits per band");
}

BandLimits read_band_limits(const std::filesystem::path& path) {
    const KeyValues kv = read_key_values(path);
    BandLimits limits;
    for (int b = 0; b < kBandCount; ++b) {
        const std::string name(raster::band_name(b));
        limits.bands[b].lo = static_cast<float>(kv_double(kv, name + ".lo"));
        limits.bands[b].hi = static_cast<float>(kv_double(kv, name + ".hi"));
        limits.bands[b].dataset_mean = kv_double(kv, name + ".dataset_mean");
    }
    return limits;
}

}  // namespace firescar::preprocess
