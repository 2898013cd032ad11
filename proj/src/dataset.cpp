#include "firescar/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace firescar::dataset {

std::string_view variant_name(Variant v) { return v == Variant::AS ? "AS" : "128"; }

Variant parse_variant(std::string_view s) {
    if (s == "AS" || s == "as" || s == "AllSizes") return Variant::AS;
    if (s == "128" || s == "F128" || s == "f128") return Variant::F128;
    throw ContractViolation("unknown variant '" + std::string(s) + "' (expected AS or 128)");
}

bool fits_tile(const Rect& bbox) { return bbox.height < kTileSize && bbox.width < kTileSize; }

namespace {

int place_window(int bbox_start, int bbox_len, int extent_start, int extent_len) {
    const int before = centered_split(kTileSize - bbox_len).first;
    int start = bbox_start - before;
    start = std::max(start, extent_start);
    start = std::min(start, extent_start + extent_len - kTileSize);
    return start;
}

}  // namespace

CropOutcome make_crop(const FireRecord& record, Variant variant, const Rect& extent) {
    const Rect& bbox = record.scar_bbox;
    if (bbox.empty()) throw ContractViolation("make_crop: empty scar bbox for record " + record.record_id);
    if (!extent.contains(bbox)) throw ContractViolation("make_crop: scar bbox outside source extent for " + record.record_id);

    CropOutcome out;
    if (variant == Variant::F128) {
        if (!fits_tile(bbox)) {
            out.rejection = "oversize";
            return out;
        }
        if (extent.height < kTileSize || extent.width < kTileSize)
            throw ContractViolation("make_crop: source extent smaller than 128x128 for " + record.record_id);
        CropSpec spec;
        spec.variant = Variant::F128;
        spec.crop_rect = {place_window(bbox.row, bbox.height, extent.row, extent.height),
                          place_window(bbox.col, bbox.width, extent.col, extent.width), kTileSize, kTileSize};
        out.crop = spec;
        return out;
    }

    if (bbox.height > kTileSize || bbox.width > kTileSize) {
        out.rejection = "oversize";
        return out;
    }
    CropSpec spec;
    spec.variant = Variant::AS;
    spec.crop_rect = bbox;
    const auto [top, bottom] = centered_split(kTileSize - bbox.height);
    const auto [left, right] = centered_split(kTileSize - bbox.width);
    spec.pad_needed = {top, bottom, left, right};
    out.crop = spec;
    return out;
}

Grid<int> label_components(const Mask& mask, int* count) {
    Grid<int> labels(mask.height(), mask.width(), 0);
    int next = 0;
    std::deque<std::pair<int, int>> queue;
    for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask(r, c) || labels(r, c)) continue;
            ++next;
            labels(r, c) = next;
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                auto [y, x] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || nx < 0 || ny >= mask.height() || nx >= mask.width()) continue;
                        if (mask(ny, nx) && !labels(ny, nx)) {
                            labels(ny, nx) = next;
                            queue.emplace_back(ny, nx);
                        }
                    }
            }
        }
    if (count) *count = next;
    return labels;
}

namespace {

constexpr double kFar = 1e20;

// Exact 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                           std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    auto intersect = [&](int q, int p) {
        return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
    };
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double diff = q - v[k];
        d[q] = diff * diff + f[v[k]];
    }
}

// Squared Euclidean distance (in pixels) from every pixel to the nearest source pixel.
Grid<double> squared_distance_to(const Grid<int>& labels, int source) {
    const int h = labels.height(), w = labels.width();
    Grid<double> dist(h, w);
    const int n = std::max(h, w);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    f.resize(w);
    d.resize(w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) f[c] = labels(r, c) == source ? 0.0 : kFar;
        distance_transform_1d(f, d, v, z);
        for (int c = 0; c < w; ++c) dist(r, c) = d[c];
    }
    f.resize(h);
    d.resize(h);
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) f[r] = dist(r, c);
        distance_transform_1d(f, d, v, z);
        for (int r = 0; r < h; ++r) dist(r, c) = d[r];
    }
    return dist;
}

}  // namespace

FilterResult filter_distant_components(const ScarLabel& label, double pixel_size_m, double max_distance_m) {
    FilterResult out;
    out.label = label;
    int count = 0;
    const Grid<int> labels = label_components(label.mask, &count);
    out.components = count;
    if (count == 0) {
        out.empty_input = true;
        return out;
    }
    if (count == 1) return out;

    const double cy = (label.height() - 1) / 2.0;
    const double cx = (label.width() - 1) / 2.0;
    std::vector<double> center_dist(count + 1, std::numeric_limits<double>::infinity());
    std::vector<long long> area(count + 1, 0);
    for (int r = 0; r < labels.height(); ++r)
        for (int c = 0; c < labels.width(); ++c)
            if (const int id = labels(r, c)) {
                ++area[id];
                const double dy = r - cy, dx = c - cx;
                center_dist[id] = std::min(center_dist[id], dy * dy + dx * dx);
            }
    int central = 1;
    for (int id = 2; id <= count; ++id) {
        if (center_dist[id] < center_dist[central] ||
            (center_dist[id] == center_dist[central] && area[id] > area[central]))
            central = id;
    }

    const Grid<double> dist = squared_distance_to(labels, central);
    std::vector<double> gap(count + 1, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (const int id = labels[i]) gap[id] = std::min(gap[id], dist[i]);

    std::vector<bool> drop(count + 1, false);
    for (int id = 1; id <= count; ++id) {
        if (id == central) continue;
        if (std::sqrt(gap[id]) * pixel_size_m > max_distance_m) {
            drop[id] = true;
            ++out.removed;
        }
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (drop[labels[i]]) out.label.mask[i] = 0;
    return out;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw FormatError("unknown split '" + std::string(s) + "'");
}

std::vector<const ManifestRow*> DatasetManifest::in_split(Split s) const {
    std::vector<const ManifestRow*> out;
    for (const auto& row : rows)
        if (row.split == s) out.push_back(&row);
    return out;
}

DatasetManifest stratified_split(const std::vector<FireRecord>& records, std::uint64_t seed, const SplitOptions& options) {
    if (options.strata < 1) throw ContractViolation("stratified_split: strata must be >= 1");
    const std::array<double, 3> fractions = {options.train_fraction, options.val_fraction,
                                             1.0 - options.train_fraction - options.val_fraction};
    if (fractions[2] < 0.0) throw ContractViolation("stratified_split: fractions exceed 1");

    DatasetManifest manifest;
    manifest.rows.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        manifest.rows[i].record_id = records[i].record_id;
        manifest.rows[i].region = records[i].region;
        manifest.rows[i].burned_pixel_count = records[i].burned_pixel_count;
    }

    for (Region region : {Region::Valparaiso, Region::Biobio, Region::Synthetic}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].region == region) members.push_back(i);
        if (members.empty()) continue;
        if (static_cast<int>(members.size()) < options.min_records_per_region)
            manifest.warnings.push_back("region " + std::string(raster::region_name(region)) + " has only " +
                                        std::to_string(members.size()) + " records");

        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            if (records[a].burned_pixel_count != records[b].burned_pixel_count)
                return records[a].burned_pixel_count < records[b].burned_pixel_count;
            return records[a].record_id < records[b].record_id;
        });
        const std::size_t n = members.size();
        std::vector<std::vector<std::size_t>> strata(options.strata);
        for (std::size_t rank = 0; rank < n; ++rank) {
            const int s = static_cast<int>(rank * options.strata / n);
            strata[s].push_back(members[rank]);
            manifest.rows[members[rank]].stratum = s;
        }

        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(region) + 1)));
        std::array<double, 3> target{};
        std::array<long long, 3> assigned{};
        for (auto& stratum : strata) {
            if (stratum.empty()) continue;
            std::shuffle(stratum.begin(), stratum.end(), rng);
            const long long size = static_cast<long long>(stratum.size());
            std::array<long long, 3> count{};
            long long used = 0;
            for (int s = 0; s < 3; ++s) {
                target[s] += fractions[s] * size;
                count[s] = static_cast<long long>(std::floor(fractions[s] * size + 1e-9));
                used += count[s];
            }
            // Remaining records go, at most one per split, to the splits furthest behind their running target.
            std::array<int, 3> order = {0, 1, 2};
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return target[a] - (assigned[a] + count[a]) > target[b] - (assigned[b] + count[b]);
            });
            for (long long extra = size - used, k = 0; extra > 0; --extra, ++k) ++count[order[k]];
            std::size_t pos = 0;
            for (int s = 0; s < 3; ++s) {
                assigned[s] += count[s];
                for (long long j = 0; j < count[s]; ++j) manifest.rows[stratum[pos++]].split = static_cast<Split>(s);
            }
        }
        if (n >= 3) {
            for (int s = 1; s < 3; ++s) {
                if (assigned[s] > 0) continue;
                int donor = 0;
                for (int d = 1; d < 3; ++d)
                    if (assigned[d] - target[d] > assigned[donor] - target[donor]) donor = d;
                for (const auto& stratum : strata) {
                    const auto it = std::find_if(stratum.begin(), stratum.end(), [&](std::size_t i) {
                        return manifest.rows[i].split == static_cast<Split>(donor);
                    });
                    if (it == stratum.end()) continue;
                    manifest.rows[*it].split = static_cast<Split>(s);
                    --assigned[donor];
                    ++assigned[s];
                    break;
                }
            }
        }
    }
    return manifest;
}

std::map<Variant, double> dataset_balance(const DatasetManifest& manifest, const std::map<std::string, ScarLabel>& labels) {
    std::map<Variant, double> sum;
    std::map<Variant, long long> n;
    for (const auto& row : manifest.rows) {
        auto it = labels.find(row.record_id);
        if (it == labels.end()) throw ContractViolation("dataset_balance: no label for record " + row.record_id);
        const Mask& mask = it->second.mask;
        const bool precropped = mask.height() == row.crop_rect.height && mask.width() == row.crop_rect.width;
        const Rect r = precropped ? Rect{0, 0, mask.height(), mask.width()} : row.crop_rect;
        if (r.empty()) throw ContractViolation("dataset_balance: empty crop for record " + row.record_id);
        long long burned = 0;
        for (int i = 0; i < r.height; ++i)
            for (int j = 0; j < r.width; ++j) burned += mask(r.row + i, r.col + j) != 0;
        sum[row.variant] += static_cast<double>(burned) / static_cast<double>(r.area());
        ++n[row.variant];
    }
    std::map<Variant, double> out;
    for (auto& [v, s] : sum) out[v] = s / static_cast<double>(n[v]);
    return out;
}

namespace {

constexpr const char* kManifestHeader =
    "record_id\tregion\tvariant\tsplit\tstratum\tburned_pixel_count\tburned_fraction\tcrop_row\tcrop_col\tcrop_"
    "height\tcrop_width\tpad_top\tpad_bottom\tpad_left\tpad_right";

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t')) out.push_back(field);
    if (!line.empty() && line.back() == '\t') out.emplace_back();
    return out;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
    out << kManifestHeader << '\n';
    char frac[32];
    for (const auto& r : manifest.rows) {
        std::snprintf(frac, sizeof frac, "%.6f", r.burned_fraction);
        out << r.record_id << '\t' << raster::region_name(r.region) << '\t' << variant_name(r.variant) << '\t'
            << split_name(r.split) << '\t' << r.stratum << '\t' << r.burned_pixel_count << '\t' << frac << '\t'
            << r.crop_rect.row << '\t' << r.crop_rect.col << '\t' << r.crop_rect.height << '\t' << r.crop_rect.width
            << '\t' << r.pad.top << '\t' << r.pad.bottom << '\t' << r.pad.left << '\t' << r.pad.right << '\n';
    }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kManifestHeader)
        throw FormatError("manifest '" + path.string() + "' has an unexpected header");
    DatasetManifest m;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != 15) throw FormatError("manifest line " + std::to_string(lineno) + ": expected 15 fields");
        try {
            ManifestRow r;
            r.record_id = f[0];
            r.region = raster::parse_region(f[1]);
            r.variant = parse_variant(f[2]);
            r.split = parse_split(f[3]);
            r.stratum = std::stoi(f[4]);
            r.burned_pixel_count = std::stoll(f[5]);
            r.burned_fraction = std::stod(f[6]);
            r.crop_rect = {std::stoi(f[7]), std::stoi(f[8]), std::stoi(f[9]), std::stoi(f[10])};
            r.pad = {std::stoi(f[11]), std::stoi(f[12]), std::stoi(f[13]), std::stoi(f[14])};
            m.rows.push_back(std::move(r));
        } catch (const std::logic_error& e) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return m;
}

void write_fire_records(const std::filesystem::path& path, const std::vector<FireRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write fire records '" + path.string() + "'");
    out << "record_id\tregion\tfire_date\tcentroid_x\tcentroid_y\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%.3f\t%.3f", r.centroid.x, r.centroid.y);
        out << r.record_id << '\t' << raster::region_name(r.region) << '\t' << raster::format_date(r.fire_date) << '\t'
            << buf << '\n';
    }
}

std::vector<FireRecord> read_fire_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open fire records '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("record_id\tregion\tfire_date", 0) != 0)
        throw FormatError("fire records '" + path.string() + "' has an unexpected header");
    std::vector<FireRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() < 5) throw FormatError("fire records line " + std::to_string(lineno) + ": expected 5 fields");
        FireRecord r;
        r.record_id = f[0];
        r.region = raster::parse_region(f[1]);
        r.fire_date = raster::parse_date(f[2]);
        try {
            r.centroid = {std::stod(f[3]), std::stod(f[4])};
        } catch (const std::logic_error&) {
            throw FormatError("fire records line " + std::to_string(lineno) + ": bad centroid");
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace firescar::dataset
