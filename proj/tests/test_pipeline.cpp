#include <doctest.h>

#include <fstream>
#include <sstream>

#include "firescar/geotiff.hpp"
#include "firescar/pipeline.hpp"
#include "support.hpp"

using namespace firescar;
using namespace firescar::pipeline;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig config_in(const fs::path& dir, const std::string& variant, int tiles) {
    return RunConfig::from_key_values({{"raw_dir", (dir / "raw").string()},
                                       {"work_dir", (dir / "work").string()},
                                       {"out_dir", (dir / "out").string()},
                                       {"variant", variant},
                                       {"seed", "5"},
                                       {"synth.tiles", std::to_string(tiles)}});
}

}  // namespace

TEST_CASE("run config keys") {
    const auto c = RunConfig::from_key_values({{"variant", "128"},
                                               {"seed", "7"},
                                               {"initial_filters", "8"},
                                               {"synth.burned_fraction", "0.034"},
                                               {"knn_k", "4"}});
    CHECK(c.variant == dataset::Variant::F128);
    CHECK(c.train.initial_filters == 8);
    CHECK(c.train.seed == 7);
    CHECK(c.synth.seed == 7);
    CHECK(c.synth.burned_fraction == 0.034);
    CHECK(c.knn_k == 4);
    CHECK(RunConfig::from_key_values(c.to_key_values()).to_key_values() == c.to_key_values());
    CHECK_THROWS_AS(RunConfig::from_key_values({{"bogus", "1"}}), FormatError);
    CHECK_THROWS_AS(RunConfig::from_key_values({{"synth.bogus", "1"}}), FormatError);
    CHECK_THROWS_AS((void)RunConfig{}.require_variant("train"), ContractViolation);
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 3, [&](std::size_t i) { hits[i]++; });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 100);
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }),
                    std::runtime_error);
}

TEST_CASE("stages report the missing upstream artifact") {
    const auto dir = testing_support::scratch_dir("missing");
    const auto c = config_in(dir, "AS", 4);
    CHECK_THROWS_AS(build_dataset(c), MissingArtifact);
    CHECK_THROWS_AS(run_preprocess(c), MissingArtifact);
    CHECK_THROWS_AS(run_train(c), MissingArtifact);
    try {
        run_evaluate(c);
        FAIL("expected MissingArtifact");
    } catch (const MissingArtifact& e) {
        CHECK(e.path.filename() == "model.ckpt");
        CHECK(std::string(e.what()).find("missing upstream artifact") != std::string::npos);
    }
    CHECK_THROWS_AS(run_report(c), MissingArtifact);
    fs::remove_all(dir);
}

TEST_CASE("50-tile corpus builds a 50-row manifest deterministically") {
    const auto dir = testing_support::scratch_dir("build");
    const auto c = config_in(dir, "AS", 50);
    CHECK(run_synth(c).tiles == 50);
    const auto s = build_dataset(c);
    CHECK(s.accepted == 50);
    CHECK(s.rejections.empty());
    const auto m = dataset::read_manifest(c.variant_dir(dataset::Variant::AS) / "manifest.tsv");
    REQUIRE(m.rows.size() == 50);
    CHECK(m.in_split(dataset::Split::Train).size() == 35);
    CHECK(m.in_split(dataset::Split::Val).size() == 10);
    CHECK(m.in_split(dataset::Split::Test).size() == 5);
    const auto first = slurp(c.variant_dir(dataset::Variant::AS) / "manifest.tsv");
    build_dataset(c);
    CHECK(slurp(c.variant_dir(dataset::Variant::AS) / "manifest.tsv") == first);

    const auto p = run_preprocess(c);
    CHECK(p.samples.at("train") == 35);
    const auto train = preprocess::read_archive(c.variant_dir(dataset::Variant::AS) / "train.fsts");
    REQUIRE(train.size() == 35);
    CHECK(train[0].height == 128);
    CHECK_FALSE(train[0].has_invalid());
    fs::remove_all(dir);
}

TEST_CASE("oversize scar is rejected for F128") {
    const auto dir = testing_support::scratch_dir("oversize");
    auto c = config_in(dir, "128", 10);
    c.synth.height = c.synth.width = 160;
    c.synth.burned_fraction = 0.15;
    run_synth(c);
    const auto fires = dataset::read_fire_records(c.raw_dir / "fires.tsv");
    const auto mask_path = c.raw_dir / "tiles" / (fires[0].record_id + "_mask.tif");
    const auto tile = raster::load_tile(c.raw_dir / "tiles" / (fires[0].record_id + "_pre.tif"),
                                        c.raw_dir / "tiles" / (fires[0].record_id + "_post.tif"), fires[0].record_id);
    Mask wide(160, 160);
    for (int r = 76; r < 84; ++r)
        for (int col = 10; col < 150; ++col) wide(r, col) = 1;
    raster::write_mask_geotiff(mask_path, wide, raster::tile_georeference(tile));
    const auto s = build_dataset(c);
    CHECK(s.accepted == 9);
    REQUIRE(s.rejections.size() == 1);
    CHECK(s.rejections[0].record_id == fires[0].record_id);
    CHECK(s.rejections[0].reason == "oversize");
    const auto m = dataset::read_manifest(c.variant_dir(dataset::Variant::F128) / "manifest.tsv");
    CHECK(m.rows.size() == 9);
    for (const auto& row : m.rows) CHECK(row.crop_rect.height == 128);
    fs::remove_all(dir);
}
