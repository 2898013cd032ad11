#include <doctest.h>

#include <cmath>
#include <random>

#include "firescar/stats.hpp"
#include "firescar/synth.hpp"
#include "firescar/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace firescar;
using namespace firescar::train;
using firescar::stats::quantile_sorted;
using firescar::stats::spearman;

namespace {

std::vector<TensorSample> synthetic_split(int tiles, int size, std::uint64_t seed, const std::string& prefix) {
    synth::SynthSpec spec;
    spec.tiles = tiles;
    spec.height = spec.width = size;
    spec.seed = seed;
    const auto c = synth::generate(spec);
    std::vector<TensorSample> out;
    for (std::size_t i = 0; i < c.tiles.size(); ++i) {
        auto s = preprocess::concatenate(c.tiles[i], c.labels[i]);
        s.record_id = prefix + s.record_id;
        for (auto& v : s.channels) v = (v - 0.15f) * 8.0f;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("confusion counts") {
    Mask ones(4, 4, 1), zeros(4, 4, 0);
    CHECK(confusion(ones, zeros) == Confusion{0, 16, 0, 0});
    std::mt19937_64 rng(1);
    const auto m = testing_support::random_mask(rng, 16, 16, 0.5);
    const auto c = confusion(m, m);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK_THROWS_AS(confusion(Mask(2, 2), Mask(2, 3)), ContractViolation);
}

TEST_CASE("confusion matches the pixel-loop oracle") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 500; ++i) {
        const auto p = testing_support::random_mask(rng, 16, 16, 0.4);
        const auto l = testing_support::random_mask(rng, 16, 16, 0.3);
        const auto c = confusion(p, l);
        const auto o = oracle::confusion(p, l);
        CHECK(c == Confusion{o.tp, o.fp, o.fn, o.tn});
    }
}

TEST_CASE("thresholded probabilities") {
    const std::vector<float> p{0.49f, 0.5f, 0.51f, 0.9f};
    Mask l(2, 2);
    l[1] = 1;
    const auto c = confusion(p, l, 0.5);
    CHECK(c == Confusion{1, 2, 0, 1});
    CHECK(binarize(p, 2, 2, 0.5)[0] == 0);
}

TEST_CASE("metric hand values") {
    CHECK(*dice(50, 5, 5) == doctest::Approx(100.0 / 110.0));
    CHECK(*dice(50, 5, 5) == doctest::Approx(0.909).epsilon(1e-3));
    CHECK(*omission(50, 5) == doctest::Approx(5.0 / 55.0));
    CHECK(*omission(50, 5) == doctest::Approx(0.1).epsilon(0.1));
    CHECK(*commission(5, 50, 5) == doctest::Approx(5.0 / 55.0));
    CHECK(*conventional_commission(5, 50) == doctest::Approx(5.0 / 55.0));
    CHECK(*dice(10, 0, 0) == 1.0);
    CHECK(*omission(10, 0) == 0.0);
    CHECK(*commission(0, 10, 0) == 0.0);
    CHECK_FALSE(dice(0, 0, 0).has_value());
    CHECK_FALSE(omission(0, 0).has_value());
    CHECK_FALSE(commission(3, 0, 0).has_value());
    CHECK(*commission(30, 10, 5) > 1.0);
    CHECK_THROWS_AS(dice(-1, 0, 0), ContractViolation);
}

TEST_CASE("bce") {
    const std::vector<float> half(64, 0.5f);
    std::vector<std::uint8_t> y(64, 0);
    for (int i = 0; i < 64; i += 3) y[i] = 1;
    CHECK(bce_loss<float>(half, y) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    std::vector<float> perfect(64);
    for (int i = 0; i < 64; ++i) perfect[i] = y[i];
    CHECK(bce_loss<float>(perfect, y) < 1e-6);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.001, 0.999);
    std::vector<double> p(64);
    for (auto& v : p) v = u(rng);
    double ref = 0;
    for (int i = 0; i < 64; ++i) ref -= y[i] ? std::log(p[i]) : std::log(1 - p[i]);
    CHECK(std::abs(bce_loss<double>(p, y) - ref / 64) < 1e-9);

    std::vector<double> g(64);
    bce_gradient<double>(p, y, g);
    for (int i = 0; i < 64; ++i) {
        const double e = 1e-7;
        auto q = p;
        q[i] += e;
        const double up = bce_loss<double>(q, y);
        q[i] -= 2 * e;
        const double down = bce_loss<double>(q, y);
        CHECK(g[i] == doctest::Approx((up - down) / (2 * e)).epsilon(1e-5));
    }
}

TEST_CASE("best epoch is the first minimum of the validation loss") {
    const std::vector<double> v{0.5, 0.3, 0.2, 0.2, 0.4};
    CHECK(select_best_epoch(v) == 2);
    const std::vector<double> nan{std::nan(""), 0.9, std::nan("")};
    CHECK(select_best_epoch(nan) == 1);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> c(25);
        for (auto& x : c) x = u(rng);
        CHECK(select_best_epoch(c) == static_cast<std::size_t>(std::min_element(c.begin(), c.end()) - c.begin()));
    }
}

TEST_CASE("train config keys round trip") {
    TrainConfig c;
    c.learning_rate = 3e-4;
    c.initial_filters = 32;
    c.activation = unet::Activation::LeakyReLU;
    TrainConfig d;
    d.apply(c.to_key_values());
    CHECK(d == c);
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ContractViolation);
}

TEST_CASE("splits must be non-empty and disjoint") {
    auto a = synthetic_split(2, 24, 1, "a");
    TrainConfig c;
    c.initial_filters = 2;
    c.epochs = 1;
    c.augmentation_factor = 1;
    CHECK_THROWS_AS(train::train(c, a, {}), ContractViolation);
    CHECK_THROWS_AS(train::train(c, a, a), ContractViolation);
}

TEST_CASE("training loss decreases on a small synthetic set") {
    const auto tr = synthetic_split(30, 64, 5, "t");
    const auto va = synthetic_split(6, 64, 6, "v");
    TrainConfig c;
    c.initial_filters = 8;
    c.epochs = 5;
    c.batch_size = 8;
    c.augmentation_factor = 1;
    c.learning_rate = 1e-3;
    c.seed = 2;
    std::vector<EpochRecord> seen;
    auto r = train::train(c, tr, va, [&](const EpochRecord& e) { seen.push_back(e); });
    REQUIRE(r.curves.size() == 5);
    CHECK(seen.size() == 5);
    int rises = 0;
    for (int e = 1; e < 3; ++e) rises += r.curves[e].train_loss >= r.curves[e - 1].train_loss;
    CHECK(rises <= 1);
    std::vector<double> vl;
    for (const auto& e : r.curves) vl.push_back(e.val_loss);
    CHECK(r.best_epoch == static_cast<int>(select_best_epoch(vl)) + 1);

    const auto again = train::train(c, tr, va);
    CHECK(again.curves[4].train_loss == r.curves[4].train_loss);

    const auto report = evaluate(r.model, va);
    CHECK(report.tiles.size() == va.size());
    CHECK(report.aggregate.tiles == static_cast<int>(va.size()));
}

TEST_CASE("aggregate excludes undefined metrics") {
    std::vector<TileMetrics> t{tile_metrics("a", {50, 5, 5, 40}, 100), tile_metrics("b", {0, 3, 0, 97}, 100),
                               tile_metrics("c", {10, 40, 5, 45}, 100)};
    const auto a = aggregate(t);
    CHECK(a.tiles == 3);
    CHECK(a.mean_oe.excluded == 1);
    CHECK(a.mean_ce.excluded == 1);
    CHECK(a.mean_dc.excluded == 0);
    CHECK(*a.mean_oe.value == doctest::Approx((5.0 / 55 + 5.0 / 15) / 2));
    CHECK(a.ce_above_one == 1);
    CHECK(t[2].ce_above_one);
    CHECK(*a.micro_dc == doctest::Approx(2.0 * 60 / (2 * 60 + 48 + 10)));
}

TEST_CASE("tile metrics file round trip") {
    const auto dir = testing_support::scratch_dir("metrics");
    MetricsReport r;
    r.tiles = {tile_metrics("a", {50, 5, 5, 40}, 100), tile_metrics("b", {0, 3, 0, 97}, 64)};
    r.aggregate = aggregate(r.tiles);
    write_tile_metrics(dir / "m.tsv", r);
    const auto back = read_tile_metrics(dir / "m.tsv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].counts == r.tiles[0].counts);
    CHECK(back[1].total_area == 64);
    CHECK_FALSE(back[1].oe.has_value());
    write_summary_json(dir / "s.json", r);
    CHECK(std::filesystem::file_size(dir / "s.json") > 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("curves file round trip") {
    const auto dir = testing_support::scratch_dir("curves");
    std::vector<EpochRecord> c{{1, 0.5, 0.4, 0.7}, {2, 0.3, 0.35, std::nan("")}};
    write_curves(dir / "c.tsv", c, 2);
    int best = 0;
    const auto back = read_curves(dir / "c.tsv", &best);
    CHECK(best == 2);
    REQUIRE(back.size() == 2);
    CHECK(back[0].val_dc == 0.7);
    CHECK(std::isnan(back[1].val_dc));
    std::filesystem::remove_all(dir);
}

TEST_CASE("quantiles and rank correlation") {
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75));
    CHECK(quantile_sorted(v, 0.75) == doctest::Approx(3.25));
    const std::vector<double> x{1, 2, 3, 4, 5}, y{10, 20, 30, 40, 50}, z{5, 4, 3, 2, 1};
    CHECK(spearman(x, y) == doctest::Approx(1.0));
    CHECK(spearman(x, z) == doctest::Approx(-1.0));
}

TEST_CASE("band and area diagnostics") {
    auto samples = synthetic_split(8, 32, 9, "");
    MetricsReport r;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const long long burned = samples[i].burned_pixels();
        r.tiles.push_back(tile_metrics(samples[i].record_id, {burned - static_cast<long long>(i), static_cast<long long>(i), static_cast<long long>(i), 1024 - burned - static_cast<long long>(i)}, 1024));
    }
    r.aggregate = aggregate(r.tiles);
    const auto b = band_dc_analysis(samples, r);
    CHECK(b.rows.size() == samples.size());
    CHECK(b.dc_q1 <= b.dc_q3);
    const auto a = area_dc_analysis(r, dataset::Variant::F128);
    CHECK(a.rows.size() == samples.size());
    for (const auto& row : a.rows) CHECK(row.total_area == 16384);
    CHECK(std::abs(a.spearman_fraction_dc) <= 1.0);
}
