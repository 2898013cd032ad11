#include <doctest.h>

#include <map>
#include <random>

#include "firescar/dataset.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace firescar;
using namespace firescar::dataset;

namespace {

FireRecord with_bbox(Rect r) {
    FireRecord f;
    f.record_id = "R";
    f.scar_bbox = r;
    return f;
}

const Rect kLarge{0, 0, 1000, 1000};

std::vector<FireRecord> random_records(std::mt19937_64& rng, int n, Region region, const std::string& prefix) {
    std::uniform_int_distribution<long long> size(1, 5000);
    std::vector<FireRecord> out;
    for (int i = 0; i < n; ++i) {
        FireRecord r;
        r.record_id = prefix + std::to_string(i);
        r.region = region;
        r.burned_pixel_count = size(rng);
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("AS crop pads a 40x60 scar to 128") {
    const auto out = make_crop(with_bbox({10, 20, 40, 60}), Variant::AS, kLarge);
    REQUIRE(out.accepted());
    CHECK(out.crop->crop_rect == Rect{10, 20, 40, 60});
    CHECK(out.crop->pad_needed == Padding{44, 44, 34, 34});
}

TEST_CASE("odd padding goes after") {
    const auto out = make_crop(with_bbox({0, 0, 41, 61}), Variant::AS, kLarge);
    CHECK(out.crop->pad_needed == Padding{43, 44, 33, 34});
}

TEST_CASE("F128 window centred on the scar") {
    const auto out = make_crop(with_bbox({90, 90, 20, 20}), Variant::F128, kLarge);
    REQUIRE(out.accepted());
    const auto& r = out.crop->crop_rect;
    CHECK(r.row == 36);
    CHECK(r.col == 36);
    CHECK(r.last_row() == 163);
    CHECK(r.last_col() == 163);
}

TEST_CASE("F128 window shifts inward at the raster edge") {
    const Rect extent{0, 0, 200, 300};
    auto r = make_crop(with_bbox({2, 290, 5, 5}), Variant::F128, extent).crop->crop_rect;
    CHECK(r == Rect{0, 172, 128, 128});
    r = make_crop(with_bbox({195, 0, 5, 5}), Variant::F128, extent).crop->crop_rect;
    CHECK(r == Rect{72, 0, 128, 128});
}

TEST_CASE("oversize scars are rejected") {
    CHECK(make_crop(with_bbox({0, 0, 128, 1}), Variant::F128, kLarge).rejection == "oversize");
    CHECK(make_crop(with_bbox({0, 0, 127, 127}), Variant::F128, kLarge).accepted());
    CHECK(make_crop(with_bbox({0, 0, 129, 3}), Variant::AS, kLarge).rejection == "oversize");
    CHECK_THROWS_AS(make_crop(with_bbox({}), Variant::AS, kLarge), ContractViolation);
}

TEST_CASE("F128 crop contains the AS crop") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(1, 127), ext(128, 400);
    for (int i = 0; i < 300; ++i) {
        const Rect extent{0, 0, ext(rng), ext(rng)};
        const int h = len(rng), w = len(rng);
        const Rect bbox{std::uniform_int_distribution<int>(0, extent.height - h)(rng),
                        std::uniform_int_distribution<int>(0, extent.width - w)(rng), h, w};
        const auto as = make_crop(with_bbox(bbox), Variant::AS, extent);
        const auto f = make_crop(with_bbox(bbox), Variant::F128, extent);
        REQUIRE(f.accepted());
        CHECK(f.crop->crop_rect.contains(as.crop->crop_rect));
        CHECK(extent.contains(f.crop->crop_rect));
    }
}

TEST_CASE("distant components are removed, near ones kept") {
    ScarLabel l{Mask(100, 100)};
    for (int r = 45; r < 55; ++r)
        for (int c = 45; c < 55; ++c) l.mask(r, c) = 1;
    l.mask(45, 70) = 1;  // 16 px = 480 m away
    l.mask(45, 72) = 1;  // 18 px = 540 m away
    const auto out = filter_distant_components(l, 30.0);
    CHECK(out.components == 3);
    CHECK(out.removed == 1);
    CHECK(out.label.mask(45, 70) == 1);
    CHECK(out.label.mask(45, 72) == 0);
    CHECK(out.label.burned_pixels() == 101);
}

TEST_CASE("diagonal neighbours form one component") {
    Mask m(4, 4);
    m(0, 0) = m(1, 1) = m(2, 2) = 1;
    int n = 0;
    label_components(m, &n);
    CHECK(n == 1);
}

TEST_CASE("empty label passes through") {
    const auto out = filter_distant_components(ScarLabel{Mask(8, 8)}, 30.0);
    CHECK(out.empty_input);
    CHECK(out.label.burned_pixels() == 0);
}

TEST_CASE("filter matches the pairwise oracle") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 40; ++i) {
        const Mask m = oracle::multi_component_mask(rng, 48);
        CHECK(filter_distant_components(ScarLabel{m}, 30.0, 500.0).label.mask == oracle::filter(m, 30.0, 500.0));
    }
}

TEST_CASE("stratified split is 70/20/10 per region and stratum") {
    std::mt19937_64 rng(1);
    auto records = random_records(rng, 50, Region::Valparaiso, "V");
    const auto more = random_records(rng, 37, Region::Biobio, "B");
    records.insert(records.end(), more.begin(), more.end());
    const auto m = stratified_split(records, 9);
    REQUIRE(m.rows.size() == records.size());
    std::map<std::pair<Region, int>, std::array<int, 3>> counts;
    for (const auto& row : m.rows) ++counts[{row.region, row.stratum}][static_cast<int>(row.split)];
    for (const auto& [key, c] : counts) {
        const double n = c[0] + c[1] + c[2];
        CHECK(std::abs(c[0] - 0.7 * n) <= 1.0);
        CHECK(std::abs(c[1] - 0.2 * n) <= 1.0);
        CHECK(std::abs(c[2] - 0.1 * n) <= 1.0);
    }
    const auto again = stratified_split(records, 9);
    for (std::size_t i = 0; i < m.rows.size(); ++i) CHECK(again.rows[i].split == m.rows[i].split);
}

TEST_CASE("small region warns") {
    std::mt19937_64 rng(2);
    const auto m = stratified_split(random_records(rng, 4, Region::Biobio, "B"), 1);
    CHECK(m.warnings.size() == 1);
}

TEST_CASE("manifest and fire records round trip") {
    const auto dir = testing_support::scratch_dir("manifest");
    std::mt19937_64 rng(4);
    auto records = random_records(rng, 12, Region::Synthetic, "S");
    for (auto& r : records) {
        r.fire_date = raster::parse_date("2017-02-03");
        r.centroid = {250000.5, 6350000.25};
    }
    auto m = stratified_split(records, 3);
    for (auto& row : m.rows) {
        row.crop_rect = {1, 2, 30, 40};
        row.pad = {49, 49, 44, 44};
        row.burned_fraction = 0.125;
    }
    write_manifest(dir / "m.tsv", m);
    const auto back = read_manifest(dir / "m.tsv");
    REQUIRE(back.rows.size() == m.rows.size());
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        CHECK(back.rows[i].record_id == m.rows[i].record_id);
        CHECK(back.rows[i].split == m.rows[i].split);
        CHECK(back.rows[i].crop_rect == m.rows[i].crop_rect);
        CHECK(back.rows[i].pad == m.rows[i].pad);
        CHECK(back.rows[i].burned_fraction == m.rows[i].burned_fraction);
    }
    write_fire_records(dir / "f.tsv", records);
    const auto fr = read_fire_records(dir / "f.tsv");
    REQUIRE(fr.size() == records.size());
    CHECK(fr[3].record_id == records[3].record_id);
    CHECK(fr[3].centroid == records[3].centroid);
    CHECK(fr[3].fire_date == records[3].fire_date);
    std::filesystem::remove_all(dir);
}
