#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "firescar/preprocess.hpp"
#include "firescar/synth.hpp"
#include "support.hpp"

using namespace firescar;
using namespace firescar::preprocess;
using raster::Band;

namespace {

BandTile flat_tile(int h, int w, float v) {
    BandTile t;
    t.record_id = "flat";
    for (auto* s : {&t.pre, &t.post})
        for (auto& g : *s) g = Grid<float>(h, w, v);
    return t;
}

TensorSample random_sample(std::mt19937_64& rng, int h, int w) {
    std::uniform_real_distribution<float> u(0, 1);
    TensorSample s;
    s.height = h;
    s.width = w;
    s.record_id = "rand";
    s.content = {0, 0, h, w};
    s.channels.resize(static_cast<std::size_t>(kChannels) * h * w);
    for (auto& v : s.channels) v = u(rng);
    s.label = testing_support::random_mask(rng, h, w, 0.3);
    return s;
}

bool same(const TensorSample& a, const TensorSample& b) {
    return a.height == b.height && a.width == b.width && a.channels == b.channels && a.label == b.label;
}

}  // namespace

TEST_CASE("outlier replaced by the in-limit mean") {
    auto t = flat_tile(10, 10, 0.1f);
    t.pre[int(Band::Red)](9, 9) = 9.0f;
    const std::vector<BandTile> tiles{t};
    const auto limits = compute_band_limits(tiles);
    Warnings w;
    const auto out = impute_outliers(t, limits, &w);
    CHECK(out.pre[int(Band::Red)](9, 9) == doctest::Approx(0.1f));
    CHECK(out.pre[int(Band::Red)](0, 0) == 0.1f);
}

TEST_CASE("band limits are Tukey fences clipped to the valid range") {
    BandTile t = flat_tile(1, 8, 0.0f);
    const float v[8] = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f};
    for (auto* s : {&t.pre, &t.post})
        for (int c = 0; c < 8; ++c) (*s)[int(Band::Blue)](0, c) = v[c];
    const std::vector<BandTile> tiles{t};
    const auto l = compute_band_limits(tiles).bands[int(Band::Blue)];
    CHECK(l.lo == 0.0f);
    CHECK(l.hi == 1.0f);
    CHECK(l.dataset_mean == doctest::Approx(0.45));
}

TEST_CASE("knn fill averages the k nearest valid pixels") {
    auto t = flat_tile(3, 3, 0.9f);
    auto& g = t.post[int(Band::Nir)];
    g(0, 1) = 0.1f;
    g(1, 0) = 0.2f;
    g(1, 2) = 0.3f;
    g(2, 1) = 0.4f;
    g(1, 1) = raster::invalid_value<float>();
    const auto out = knn_fill(t, 4);
    CHECK(out.post[int(Band::Nir)](1, 1) == doctest::Approx(0.25f));
    CHECK(out.post[int(Band::Nir)](0, 0) == 0.9f);
}

TEST_CASE("zero-noise pixels are filled in every band") {
    auto t = flat_tile(5, 5, 0.2f);
    for (int b = 0; b < raster::kRawBandCount; ++b) t.pre[b](2, 2) = 0.0f;
    t.pre[int(Band::Ndvi)](2, 2) = raster::invalid_value<float>();
    t.pre[int(Band::Nbr)](2, 2) = raster::invalid_value<float>();
    CHECK(missing_mask(t.pre, int(Band::Blue))(2, 2) == 1);
    const auto out = knn_fill(t, 8);
    for (int b = 0; b < raster::kBandCount; ++b) CHECK(out.pre[b](2, 2) == doctest::Approx(0.2f));
}

TEST_CASE("standardize example") {
    NormStats st;
    st.offset.fill(0.4);
    st.scale.fill(0.2);
    TensorSample s;
    s.height = s.width = 1;
    s.content = {0, 0, 1, 1};
    s.channels.assign(kChannels, 0.6f);
    s.label = Mask(1, 1);
    const auto z = standardize(s, st);
    CHECK(z.channels[0] == doctest::Approx(1.0));
    CHECK(unstandardize(z, st).channels[5] == doctest::Approx(0.6));
}

TEST_CASE("standardized training split has zero mean and unit variance") {
    std::mt19937_64 rng(8);
    std::vector<TensorSample> train;
    for (int i = 0; i < 5; ++i) train.push_back(random_sample(rng, 9 + i, 7));
    const auto st = fit_norm_stats(train);
    for (auto& s : train) s = zero_pad(standardize(s, st), 32);
    for (int c = 0; c < kChannels; ++c) {
        double sum = 0, sq = 0, n = 0;
        for (const auto& s : train)
            for (int r = s.content.row; r < s.content.row + s.content.height; ++r)
                for (int col = s.content.col; col < s.content.col + s.content.width; ++col) {
                    const double v = s.at(c, r, col);
                    sum += v, sq += v * v, ++n;
                }
        const double mu = sum / n;
        CHECK(std::abs(mu) < 1e-6);
        CHECK(std::abs(std::sqrt(sq / n - mu * mu) - 1.0) < 1e-6);
    }
}

TEST_CASE("zero pad centres the content") {
    std::mt19937_64 rng(9);
    const auto s = random_sample(rng, 40, 60);
    const auto p = zero_pad(s, 128);
    CHECK(p.height == 128);
    CHECK(p.content == Rect{44, 34, 40, 60});
    CHECK(p.at(3, 44, 34) == s.at(3, 0, 0));
    CHECK(p.at(15, 83, 93) == s.at(15, 39, 59));
    CHECK(p.at(0, 43, 34) == 0.0f);
    CHECK(p.at(0, 44, 94) == 0.0f);
    CHECK(p.label(44 + 5, 34 + 7) == s.label(5, 7));
    CHECK(p.burned_pixels() == s.burned_pixels());
    CHECK_THROWS_AS(zero_pad(random_sample(rng, 130, 4), 128), ContractViolation);
}

TEST_CASE("transforms are symmetries applied to imagery and label alike") {
    std::mt19937_64 rng(10);
    const auto s = random_sample(rng, 6, 6);
    for (int k = 0; k < kTransformCount; ++k) {
        const auto t = static_cast<Transform>(k);
        const auto a = apply_transform(s, t);
        CHECK(a.burned_pixels() == s.burned_pixels());
        std::multiset<float> before(s.channels.begin(), s.channels.end()), after(a.channels.begin(), a.channels.end());
        CHECK(before == after);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c)
                for (int ch = 0; ch < kChannels; ch += 5) {
                    bool found = false;
                    for (int r2 = 0; r2 < 6 && !found; ++r2)
                        for (int c2 = 0; c2 < 6 && !found; ++c2)
                            found = a.at(ch, r2, c2) == s.at(ch, r, c) && a.label(r2, c2) == s.label(r, c);
                    CHECK(found);
                }
    }
    auto r = s;
    for (int i = 0; i < 4; ++i) r = apply_transform(r, Transform::Rotate90);
    CHECK(same(r, s));
    CHECK(same(apply_transform(apply_transform(s, Transform::Transpose), Transform::Transpose), s));
    CHECK(same(apply_transform(apply_transform(s, Transform::Rotate90), Transform::Rotate270), s));
    const auto rot = apply_transform(s, Transform::Rotate90);
    CHECK(same(apply_transform(s, Transform::Rotate180), apply_transform(rot, Transform::Rotate90)));
}

TEST_CASE("augmentation plan") {
    CHECK(augmentation_plan(1, 4) == std::vector<Transform>{Transform::Identity});
    const auto p = augmentation_plan(8, 4);
    CHECK(std::set<Transform>(p.begin(), p.end()).size() == 8);
    CHECK(p.front() == Transform::Identity);
    CHECK(augmentation_plan(3, 4) == augmentation_plan(3, 4));
    CHECK_THROWS_AS(augmentation_plan(9, 4), ContractViolation);
    std::mt19937_64 rng(12);
    const auto s = random_sample(rng, 5, 5);
    const auto out = augment(s, 3, 77);
    REQUIRE(out.size() == 3);
    CHECK(same(out[0], s));
}

TEST_CASE("archive round trip") {
    const auto dir = testing_support::scratch_dir("archive");
    std::mt19937_64 rng(13);
    std::vector<TensorSample> v;
    for (int i = 0; i < 3; ++i) {
        auto s = zero_pad(random_sample(rng, 10 + i, 12), 16);
        s.record_id = "S" + std::to_string(i);
        v.push_back(s);
    }
    write_archive(dir / "a.fsts", v);
    const auto back = read_archive(dir / "a.fsts");
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(same(back[i], v[i]));
        CHECK(back[i].record_id == v[i].record_id);
        CHECK(back[i].content == v[i].content);
    }
    NormStats st;
    st.offset.fill(0.125);
    st.scale.fill(0.3);
    write_norm_stats(dir / "n.txt", st);
    CHECK(read_norm_stats(dir / "n.txt").scale == st.scale);
    std::filesystem::remove_all(dir);
}

TEST_CASE("defect repair leaves clean pixels untouched") {
    synth::SynthSpec spec;
    spec.tiles = 4;
    spec.height = spec.width = 48;
    spec.seed = 21;
    const auto corpus = synth::generate(spec);
    synth::DefectLog log;
    const auto dirty = synth::inject_defects(corpus.tiles, {0.01, 0.01, 0.01}, 5, &log);
    const auto limits = compute_band_limits(dirty);
    for (std::size_t i = 0; i < dirty.size(); ++i) {
        const auto fixed = knn_fill(impute_outliers(dirty[i], limits), 8, &limits);
        const auto s = concatenate(fixed, corpus.labels[i]);
        CHECK_FALSE(s.has_invalid());
        for (int img = 0; img < 2; ++img) {
            const auto& src = img == 0 ? corpus.tiles[i].pre : corpus.tiles[i].post;
            const auto& out = img == 0 ? fixed.pre : fixed.post;
            const auto& bits = log.band_bits[i * 2 + img];
            for (int b = 0; b < raster::kBandCount; ++b)
                for (std::size_t p = 0; p < src[b].size(); ++p)
                    if (!(bits[p] >> b & 1)) CHECK(out[b][p] == src[b][p]);
        }
    }
}
