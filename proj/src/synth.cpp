#include "firescar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "firescar/dataset.hpp"
#include "firescar/geotiff.hpp"

namespace firescar::synth {

using raster::kRawBandCount;

// Burn response at full severity: NIR falls by a fraction, SWIR2 rises.
constexpr double kNirDrop = 0.3;
constexpr double kSwir2Rise = 0.07;

std::array<Spectrum, kLandCoverClasses> default_spectra() {
    return {{
        {0.025f, 0.050f, 0.030f, 0.460f, 0.160f, 0.070f},  // forest
        {0.035f, 0.065f, 0.045f, 0.400f, 0.190f, 0.090f},  // shrubland
        {0.070f, 0.100f, 0.100f, 0.260f, 0.280f, 0.190f},  // grassland
        {0.090f, 0.120f, 0.130f, 0.200f, 0.310f, 0.230f},  // bare / built
    }};
}

void SynthSpec::validate() const {
    auto fail = [](const std::string& m) { throw ContractViolation("SynthSpec: " + m); };
    if (tiles < 1) fail("tiles must be positive");
    if (height < 8 || width < 8) fail("raster must be at least 8x8");
    if (margin < 0 || 2 * margin >= std::min(height, width)) fail("margin leaves no room for a scar");
    if (!(burned_fraction > 0.0 && burned_fraction < 1.0)) fail("burned_fraction must be in (0, 1)");
    if (!(fraction_jitter >= 0.0 && fraction_jitter < 1.0)) fail("fraction_jitter must be in [0, 1)");
    const double inner = static_cast<double>(height - 2 * margin) * (width - 2 * margin);
    if (burned_fraction * (1.0 + fraction_jitter) * height * width > inner)
        fail("burned_fraction does not fit inside the margin");
    if (!(severity >= 0.0)) fail("severity must be non-negative");
    if (!(noise >= 0.0)) fail("noise must be non-negative");
    if (!(land_cover_scale > 0.0)) fail("land_cover_scale must be positive");
    if (!(pixel_size_m > 0.0)) fail("pixel_size_m must be positive");
}

void SynthSpec::apply(const KeyValues& kv) {
    auto num = [&](const char* k, auto& field) {
        if (!kv.count(k)) return;
        using F = std::decay_t<decltype(field)>;
        if constexpr (std::is_floating_point_v<F>)
            field = kv_double(kv, k);
        else
            field = static_cast<F>(kv_int(kv, k));
    };
    num("tiles", tiles);
    num("height", height);
    num("width", width);
    num("burned_fraction", burned_fraction);
    num("fraction_jitter", fraction_jitter);
    num("margin", margin);
    num("scar_roughness", scar_roughness);
    num("severity", severity);
    num("noise", noise);
    num("land_cover_scale", land_cover_scale);
    num("pixel_size_m", pixel_size_m);
    num("seed", seed);
}

KeyValues SynthSpec::to_key_values() const {
    return {{"tiles", std::to_string(tiles)},
            {"height", std::to_string(height)},
            {"width", std::to_string(width)},
            {"burned_fraction", format_double(burned_fraction)},
            {"fraction_jitter", format_double(fraction_jitter)},
            {"margin", std::to_string(margin)},
            {"scar_roughness", format_double(scar_roughness)},
            {"severity", format_double(severity)},
            {"noise", format_double(noise)},
            {"land_cover_scale", format_double(land_cover_scale)},
            {"pixel_size_m", format_double(pixel_size_m)},
            {"seed", std::to_string(seed)}};
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void box_blur(std::vector<double>& f, int h, int w, int r) {
    std::vector<double> tmp(f.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            int n = 0;
            for (int d = -r; d <= r; ++d) {
                const int xx = std::clamp(x + d, 0, w - 1);
                s += f[static_cast<std::size_t>(y) * w + xx];
                ++n;
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s / n;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            int n = 0;
            for (int d = -r; d <= r; ++d) {
                const int yy = std::clamp(y + d, 0, h - 1);
                s += tmp[static_cast<std::size_t>(yy) * w + x];
                ++n;
            }
            f[static_cast<std::size_t>(y) * w + x] = s / n;
        }
}

/// Zero-mean, unit-variance random field with correlation length ~scale.
std::vector<double> smooth_field(int h, int w, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    std::vector<double> f(static_cast<std::size_t>(h) * w);
    for (auto& v : f) v = normal(rng);
    const int r = std::max(1, static_cast<int>(std::lround(scale / 2.0)));
    for (int pass = 0; pass < 3; ++pass) box_blur(f, h, w, r);
    const double m = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    double ss = 0;
    for (auto& v : f) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(f.size()));
    for (auto& v : f) v = sd > 0 ? (v - m) / sd : 0.0;
    return f;
}

struct TileOutput {
    BandTile tile;
    ScarLabel label;
    FireRecord record;
    Grid<std::uint8_t> cover;
};

TileOutput generate_tile(const SynthSpec& spec, int index) {
    const int h = spec.height, w = spec.width;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::mt19937_64 rng(mix(spec.seed ^ mix(static_cast<std::uint64_t>(index) + 1)));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal;

    TileOutput out;
    auto& tile = out.tile;
    char id[32];
    std::snprintf(id, sizeof id, "SYN-%04d", index + 1);
    tile.record_id = id;
    tile.pixel_size_m = spec.pixel_size_m;
    tile.origin = {250000.0 + 10000.0 * (index % 50), 6350000.0 - 10000.0 * (index / 50)};

    // Land cover: argmax of one smoothed field per class.
    std::vector<std::vector<double>> fields;
    for (int k = 0; k < kLandCoverClasses; ++k) fields.push_back(smooth_field(h, w, spec.land_cover_scale, rng));
    out.cover = Grid<std::uint8_t>(h, w, 0);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        for (int k = 1; k < kLandCoverClasses; ++k)
            if (fields[k][i] > fields[best][i]) best = k;
        out.cover[i] = static_cast<std::uint8_t>(best);
    }

    for (int b = 0; b < raster::kBandCount; ++b) {
        tile.pre[b] = Grid<float>(h, w, 0.0f);
        tile.post[b] = Grid<float>(h, w, 0.0f);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = spec.spectra[out.cover[i]];
        for (int b = 0; b < kRawBandCount; ++b)
            tile.pre[b][i] = static_cast<float>(std::clamp(s[b] + spec.noise * std::clamp(normal(rng), -2.5, 2.5), 0.0, 1.0));
    }

    // Scar: the top-k pixels of a central bump plus smoothed noise, inside the margin.
    const double target = spec.burned_fraction * (1.0 + spec.fraction_jitter * (2.0 * uniform(rng) - 1.0));
    const auto k = static_cast<std::size_t>(std::clamp<long long>(std::llround(target * static_cast<double>(n)), 1,
                                                                 static_cast<long long>(n)));
    const double cy = (h - 1) / 2.0 + (uniform(rng) - 0.5) * h / 8.0;
    const double cx = (w - 1) / 2.0 + (uniform(rng) - 0.5) * w / 8.0;
    const double sigma = std::sqrt(target * h * w / M_PI);
    const auto rough = smooth_field(h, w, std::max(2.0, sigma / 3.0), rng);
    std::vector<std::pair<double, std::size_t>> score;
    score.reserve(n);
    for (int r = spec.margin; r < h - spec.margin; ++r)
        for (int c = spec.margin; c < w - spec.margin; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            const double d2 = ((r - cy) * (r - cy) + (c - cx) * (c - cx)) / (2.0 * sigma * sigma);
            score.emplace_back(std::exp(-d2) + spec.scar_roughness * 0.25 * rough[i], i);
        }
    std::partial_sort(score.begin(), score.begin() + static_cast<std::ptrdiff_t>(k), score.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    out.label.mask = Mask(h, w, 0);
    for (std::size_t j = 0; j < k; ++j) out.label.mask[score[j].second] = 1;

    // Post-fire image: pre-fire copy, burned where the scar is.
    const auto patchy = smooth_field(h, w, 4.0, rng);
    for (int b = 0; b < kRawBandCount; ++b) tile.post[b] = tile.pre[b];
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.label.mask[i]) continue;
        const double s = spec.severity * std::clamp(0.75 + 0.15 * patchy[i], 0.4, 1.0);
        auto band = [&](raster::Band b) -> float& { return tile.post[static_cast<int>(b)][i]; };
        auto set = [](float& v, double x) { v = static_cast<float>(std::clamp(x, 0.0, 1.0)); };
        set(band(raster::Band::Nir), band(raster::Band::Nir) * (1.0 - kNirDrop * s));
        set(band(raster::Band::Swir2), band(raster::Band::Swir2) + kSwir2Rise * s);
    }
    raster::fill_indices(tile.pre);
    raster::fill_indices(tile.post);

    auto& rec = out.record;
    rec.record_id = tile.record_id;
    rec.region = raster::Region::Synthetic;
    using namespace std::chrono;
    rec.fire_date = year_month_day{sys_days{year{2017} / January / 1} + days{index}};
    rec.scar_bbox = out.label.bounding_box();
    rec.burned_pixel_count = out.label.burned_pixels();
    double sr = 0, sc = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (out.label.mask(r, c)) sr += r, sc += c;
    const double kk = static_cast<double>(rec.burned_pixel_count);
    rec.centroid = {tile.origin.x + (sc / kk + 0.5) * spec.pixel_size_m, tile.origin.y - (sr / kk + 0.5) * spec.pixel_size_m};
    return out;
}

}  // namespace

Corpus generate(const SynthSpec& spec) {
    spec.validate();
    Corpus c;
    for (int i = 0; i < spec.tiles; ++i) {
        auto t = generate_tile(spec, i);
        c.tiles.push_back(std::move(t.tile));
        c.labels.push_back(std::move(t.label));
        c.records.push_back(std::move(t.record));
        c.land_cover.push_back(std::move(t.cover));
    }
    return c;
}

bool DefectLog::touched(std::size_t tile, raster::ImageKind image, int row, int col, int band) const {
    const std::size_t k = tile * 2 + (image == raster::ImageKind::Post ? 1 : 0);
    if (k >= band_bits.size()) return false;
    return (band_bits[k](row, col) >> band) & 1u;
}

long long DefectLog::count(DefectKind kind) const {
    return std::count_if(defects.begin(), defects.end(), [&](const Defect& d) { return d.kind == kind; });
}

std::vector<BandTile> inject_defects(std::span<const BandTile> tiles, const DefectRates& rates, std::uint64_t seed,
                                     DefectLog* log) {
    for (double r : {rates.out_of_range, rates.invalid, rates.zero})
        if (!(r >= 0.0 && r < 1.0)) throw ContractViolation("inject_defects: rates must be in [0, 1)");
    std::vector<BandTile> out(tiles.begin(), tiles.end());
    if (log) {
        log->defects.clear();
        log->band_bits.clear();
    }
    std::mt19937_64 rng(mix(seed));
    std::bernoulli_distribution oor(rates.out_of_range), inv(rates.invalid), zero(rates.zero);
    std::uniform_real_distribution<float> high(1.2f, 3.0f), low(-2.0f, -1.2f);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t t = 0; t < out.size(); ++t) {
        for (auto image : {raster::ImageKind::Pre, raster::ImageKind::Post}) {
            auto& stack = image == raster::ImageKind::Pre ? out[t].pre : out[t].post;
            const int h = out[t].height(), w = out[t].width();
            Mask bits(h, w, 0);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    for (int b = 0; b < raster::kBandCount; ++b) {
                        if (oor(rng)) {
                            stack[b](r, c) = coin(rng) ? high(rng) : low(rng);
                            bits(r, c) |= static_cast<std::uint8_t>(1u << b);
                            if (log) log->defects.push_back({t, image, r, c, b, DefectKind::OutOfRange});
                        }
                        if (inv(rng)) {
                            stack[b](r, c) = raster::invalid_value<float>();
                            bits(r, c) |= static_cast<std::uint8_t>(1u << b);
                            if (log) log->defects.push_back({t, image, r, c, b, DefectKind::Invalid});
                        }
                    }
                    if (zero(rng)) {
                        for (int b = 0; b < kRawBandCount; ++b) stack[b](r, c) = 0.0f;
                        for (int b = kRawBandCount; b < raster::kBandCount; ++b)
                            stack[b](r, c) = raster::invalid_value<float>();
                        bits(r, c) = 0xFF;
                        if (log) log->defects.push_back({t, image, r, c, -1, DefectKind::Zero});
                    }
                }
            if (log) log->band_bits.push_back(std::move(bits));
        }
    }
    return out;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    const auto tiles_dir = dir / "tiles";
    std::filesystem::create_directories(tiles_dir);
    for (std::size_t i = 0; i < corpus.tiles.size(); ++i) {
        const auto& t = corpus.tiles[i];
        raster::save_tile(t, tiles_dir / (t.record_id + "_pre.tif"), tiles_dir / (t.record_id + "_post.tif"));
        raster::write_mask_geotiff(tiles_dir / (t.record_id + "_mask.tif"), corpus.labels[i].mask,
                                   raster::tile_georeference(t));
    }
    dataset::write_fire_records(dir / "fires.tsv", corpus.records);
}

}  // namespace firescar::synth
