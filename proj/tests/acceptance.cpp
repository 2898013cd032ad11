#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "firescar/dataset.hpp"
#include "firescar/hpo.hpp"
#include "firescar/pipeline.hpp"
#include "firescar/preprocess.hpp"
#include "firescar/raster.hpp"
#include "firescar/synth.hpp"
#include "firescar/train.hpp"
#include "firescar/unet.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace firescar;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... A>
std::string fmt(const char* f, A... v) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, v...);
    return buf;
}

Outcome metric_oracle() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    long long mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto p = testing_support::random_mask(rng, 16, 16, density(rng));
        const auto l = testing_support::random_mask(rng, 16, 16, density(rng));
        const auto c = train::confusion(p, l);
        const auto r = oracle::confusion(p, l);
        if (c.tp != r.tp || c.fp != r.fp || c.fn != r.fn || c.tn != r.tn) ++mismatches;
        auto same = [](std::optional<double> got, long long num, long long den) {
            return den == 0 ? !got.has_value() : got.has_value() && *got == static_cast<double>(num) / den;
        };
        if (!same(train::dice(c.tp, c.fp, c.fn), 2 * r.tp, 2 * r.tp + r.fp + r.fn)) ++mismatches;
        if (!same(train::omission(c.tp, c.fn), r.fn, r.tp + r.fn)) ++mismatches;
        if (!same(train::commission(c.fp, c.tp, c.fn), r.fp, r.tp + r.fn)) ++mismatches;
    }
    const double s = seconds_since(t0);
    o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
    o.require(s < 30.0, "runtime " + fmt("%.1f s", s));
    o.detail = "10000 pairs, " + std::to_string(mismatches) + " mismatches, " + fmt("%.2f s", s) +
               (o.detail.empty() ? "" : " (" + o.detail + ")");
    return o;
}

Outcome formula_checks() {
    Outcome o;
    auto one = [](double v) { return Grid<double>(1, 1, v); };
    const double tol = 1e-9;
    const std::vector<std::pair<std::string, double>> got = {
        {"ndvi(0.6,0.2)=0.5", raster::compute_ndvi(one(0.6), one(0.2))[0] - 0.5},
        {"nbr(0.45,0.15)=0.5", raster::compute_nbr(one(0.45), one(0.15))[0] - 0.5},
        {"nbr(0.1,0.3)=-0.5", raster::compute_nbr(one(0.1), one(0.3))[0] + 0.5},
        {"rdnbr(1000,0)=1000", raster::compute_rdnbr(one(1000), one(0))[0] - 1000},
        {"rdnbr(250,-250)=1000", raster::compute_rdnbr(one(250), one(-250))[0] - 1000},
    };
    double worst = 0;
    for (const auto& [name, err] : got) {
        worst = std::max(worst, std::abs(err));
        o.require(std::abs(err) <= tol, name + fmt(" off by %.3g", err));
    }
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> u(-1000, 1000);
    int nonzero = 0;
    for (int i = 0; i < 1000; ++i) {
        const double x = u(rng);
        if (raster::compute_rdnbr(one(x), one(x))[0] != 0.0) ++nonzero;
    }
    o.require(nonzero == 0, std::to_string(nonzero) + " nonzero RdNBR(x,x)");
    o.detail = fmt("max hand-value error %.2g", worst) + ", RdNBR(x,x)=0 for 1000 x" +
               (o.detail.empty() ? "" : " (" + o.detail + ")");
    return o;
}

Outcome geometry() {
    Outcome o;
    raster::FireRecord rec;
    rec.scar_bbox = {200, 300, 40, 60};
    const Rect extent{0, 0, 1000, 1000};
    const auto as = dataset::make_crop(rec, dataset::Variant::AS, extent);
    o.require(as.accepted() && as.crop->pad_needed == dataset::Padding{44, 44, 34, 34}, "AS padding");

    preprocess::TensorSample s;
    s.height = 40, s.width = 60;
    s.content = {0, 0, 40, 60};
    s.channels.assign(static_cast<std::size_t>(preprocess::kChannels) * 40 * 60, 1.0f);
    s.label = Mask(40, 60, 1);
    const auto p = preprocess::zero_pad(s, 128);
    o.require(p.content == Rect{44, 34, 40, 60}, "content rect");
    long long inside = 0, outside_nonzero = 0;
    for (int r = 0; r < 128; ++r)
        for (int c = 0; c < 128; ++c) {
            const bool in = r >= 44 && r <= 83 && c >= 34 && c <= 93;
            for (int ch = 0; ch < preprocess::kChannels; ++ch) {
                if (in) inside += p.at(ch, r, c) == 1.0f;
                else outside_nonzero += p.at(ch, r, c) != 0.0f;
            }
            if (!in && p.label(r, c)) ++outside_nonzero;
        }
    o.require(inside == 40LL * 60 * preprocess::kChannels && outside_nonzero == 0, "zero_pad block rows 44-83 cols 34-93");

    std::mt19937_64 rng(103);
    std::uniform_int_distribution<int> len(1, 127), ext(128, 600);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const Rect e{0, 0, ext(rng), ext(rng)};
        const int h = len(rng), w = len(rng);
        rec.scar_bbox = {std::uniform_int_distribution<int>(0, e.height - h)(rng),
                         std::uniform_int_distribution<int>(0, e.width - w)(rng), h, w};
        const auto a = dataset::make_crop(rec, dataset::Variant::AS, e);
        const auto f = dataset::make_crop(rec, dataset::Variant::F128, e);
        if (!a.accepted() || !f.accepted() || !f.crop->crop_rect.contains(a.crop->crop_rect) ||
            !e.contains(f.crop->crop_rect))
            ++bad;
    }
    o.require(bad == 0, std::to_string(bad) + " F128 crops not containing AS");
    o.detail = "pad (44,44,34,34), block rows 44-83 cols 34-93, F128 contains AS for 1000 records" +
               (o.detail.empty() ? "" : " (" + o.detail + ")");
    return o;
}

Outcome distance_filter() {
    Outcome o;
    std::mt19937_64 rng(104);
    int mismatches = 0, removed = 0;
    for (int i = 0; i < 200; ++i) {
        const Mask m = oracle::multi_component_mask(rng, 64);
        const auto got = dataset::filter_distant_components(raster::ScarLabel{m}, 30.0);
        removed += got.removed;
        if (got.label.mask != oracle::filter(m, 30.0, 500.0)) ++mismatches;
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
    o.require(removed > 0, "no component was ever removed");
    o.detail = "200 masks, " + std::to_string(mismatches) + " mismatches, " + std::to_string(removed) +
               " components removed";
    return o;
}

Outcome preprocessing() {
    Outcome o;
    synth::SynthSpec spec;
    spec.tiles = 20;
    spec.seed = 105;
    const auto corpus = synth::generate(spec);
    synth::DefectLog log;
    const auto dirty = synth::inject_defects(corpus.tiles, {0.01, 0.01, 0.01}, 106, &log);
    const auto limits = preprocess::compute_band_limits(dirty);
    long long invalid = 0, changed_clean = 0, clean = 0;
    std::vector<preprocess::TensorSample> samples;
    for (std::size_t i = 0; i < dirty.size(); ++i) {
        const auto fixed = preprocess::knn_fill(preprocess::impute_outliers(dirty[i], limits), 8, &limits);
        for (int img = 0; img < 2; ++img) {
            const auto& src = img == 0 ? corpus.tiles[i].pre : corpus.tiles[i].post;
            const auto& out = img == 0 ? fixed.pre : fixed.post;
            const auto& bits = log.band_bits[i * 2 + img];
            for (int b = 0; b < raster::kBandCount; ++b)
                for (std::size_t p = 0; p < src[b].size(); ++p) {
                    invalid += !std::isfinite(out[b][p]) || out[b][p] < limits.bands[b].lo || out[b][p] > limits.bands[b].hi;
                    if (bits[p] >> b & 1) continue;
                    ++clean;
                    changed_clean += std::memcmp(&out[b][p], &src[b][p], sizeof(float)) != 0;
                }
        }
        samples.push_back(preprocess::concatenate(fixed, corpus.labels[i]));
    }
    o.require(invalid == 0, std::to_string(invalid) + " invalid values remain");
    o.require(changed_clean == 0, std::to_string(changed_clean) + " clean values changed");

    const auto split = dataset::stratified_split(corpus.records, 107);
    std::vector<preprocess::TensorSample> train;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (split.rows[i].split == dataset::Split::Train) train.push_back(samples[i]);
    const auto stats = preprocess::fit_norm_stats(train);
    for (auto& s : train) s = preprocess::zero_pad(preprocess::standardize(std::move(s), stats), 128);
    double worst_mu = 0, worst_sd = 0;
    for (int c = 0; c < preprocess::kChannels; ++c) {
        double sum = 0, n = 0;
        for (const auto& s : train)
            for (int r = s.content.row; r <= s.content.last_row(); ++r)
                for (int col = s.content.col; col <= s.content.last_col(); ++col) sum += s.at(c, r, col), ++n;
        const double mu = sum / n;
        double sq = 0;
        for (const auto& s : train)
            for (int r = s.content.row; r <= s.content.last_row(); ++r)
                for (int col = s.content.col; col <= s.content.last_col(); ++col) sq += (s.at(c, r, col) - mu) * (s.at(c, r, col) - mu);
        worst_mu = std::max(worst_mu, std::abs(mu));
        worst_sd = std::max(worst_sd, std::abs(std::sqrt(sq / n) - 1.0));
    }
    o.require(worst_mu < 1e-6, fmt("|mu| %.3g", worst_mu));
    o.require(worst_sd < 1e-6, fmt("|sigma-1| %.3g", worst_sd));
    o.detail = std::to_string(log.defects.size()) + " defects, " + std::to_string(invalid) + " invalid left, " +
               std::to_string(changed_clean) + "/" + std::to_string(clean) + " clean values changed" +
               fmt(", max |mu| %.2g", worst_mu) + fmt(", max |sigma-1| %.2g", worst_sd);
    return o;
}

Outcome architecture() {
    Outcome o;
    const auto t0 = Clock::now();
    for (int f : {8, 32, 128, 160}) {
        unet::UNetConfig c;
        c.initial_filters = f;
        o.require(c.deepest_width() == 8 * f && c.encoder_widths().back() == 8 * f, "deepest width for f=" + std::to_string(f));
    }
    unet::UNetConfig c8;
    c8.initial_filters = 8;
    unet::UNet<float> model(c8, 1);
    nn::Tensor<float> x(1, 16, 128, 128, 0.5f);
    const auto y = model.forward(x);
    o.require(y.n == 1 && y.c == 1 && y.h == 128 && y.w == 128, "forward shape " + y.shape_string());

    unet::UNetConfig c4;
    c4.initial_filters = 4;
    c4.input_size = 16;
    const auto g = gradcheck::run(c4, 2, 108, 4);
    o.require(g.worst_relative < 1e-3, fmt("gradient relative error %.3g", g.worst_relative));
    const double s = seconds_since(t0);
    o.require(s < 120, fmt("runtime %.1f s", s));
    o.detail = "widths 8f ok, output " + y.shape_string() + ", " + std::to_string(g.checked) + " gradients" +
               fmt(" worst rel %.2g", g.worst_relative) + fmt(", %.1f s", s);
    return o;
}

struct E2E {
    double dc = NAN;
    double seconds = 0;
    int tiles = 0;
    int best_epoch = 0;
    double burned_fraction = 0;
};

E2E end_to_end_run(double burned_fraction, const std::string& tag) {
    const auto dir = testing_support::scratch_dir("e2e_" + tag);
    const auto t0 = Clock::now();
    auto config = pipeline::RunConfig::from_key_values({{"raw_dir", (dir / "raw").string()},
                                                        {"work_dir", (dir / "work").string()},
                                                        {"out_dir", (dir / "out").string()},
                                                        {"variant", "128"},
                                                        {"seed", "7"},
                                                        {"initial_filters", "8"},
                                                        {"epochs", "10"},
                                                        {"batch_size", "8"},
                                                        {"learning_rate", "0.001"},
                                                        {"synth.tiles", "120"},
                                                        {"synth.burned_fraction", std::to_string(burned_fraction)}});
    auto log = [&](const std::string& m) {
        std::printf("    [%s %4.0fs] %s\n", tag.c_str(), seconds_since(t0), m.c_str());
        std::fflush(stdout);
    };
    pipeline::run_synth(config, log);
    const auto build = pipeline::build_dataset(config, {});
    pipeline::run_preprocess(config, {});
    const auto trained = pipeline::run_train(config, log);
    const auto report = pipeline::run_evaluate(config, log);
    E2E r;
    r.dc = report.aggregate.mean_dc.value.value_or(NAN);
    r.tiles = report.aggregate.tiles;
    r.best_epoch = trained.best_epoch;
    r.burned_fraction = build.mean_burned_fraction;
    r.seconds = seconds_since(t0);
    std::filesystem::remove_all(dir);
    return r;
}

Outcome end_to_end() {
    Outcome o;
    const auto balanced = end_to_end_run(0.33, "33%");
    const auto sparse = end_to_end_run(0.034, "3.4%");
    o.require(balanced.dc >= 0.80, fmt("balanced DC %.4f < 0.80", balanced.dc));
    o.require(balanced.seconds < 1200, fmt("balanced run %.0f s", balanced.seconds));
    o.require(sparse.seconds < 1200, fmt("sparse run %.0f s", sparse.seconds));
    o.require(sparse.dc <= balanced.dc + 0.02, fmt("sparse DC %.4f above balanced + 0.02", sparse.dc));
    o.detail = fmt("burned %.3f: test DC %.4f", balanced.burned_fraction, balanced.dc) + " on " +
               std::to_string(balanced.tiles) + " tiles" + fmt(" in %.0f s", balanced.seconds) +
               fmt("; burned %.3f: test DC %.4f", sparse.burned_fraction, sparse.dc) + fmt(" in %.0f s", sparse.seconds) +
               (o.detail.empty() ? "" : " (" + o.detail + ")");
    return o;
}

Outcome split_proportions() {
    Outcome o;
    std::mt19937_64 rng(109);
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<raster::FireRecord> records;
        for (auto region : {raster::Region::Valparaiso, raster::Region::Biobio}) {
            const int n = std::uniform_int_distribution<int>(20, 400)(rng);
            for (int i = 0; i < n; ++i) {
                raster::FireRecord r;
                r.record_id = std::string(raster::region_name(region)) + std::to_string(i);
                r.region = region;
                r.burned_pixel_count = std::uniform_int_distribution<long long>(1, 10000)(rng);
                records.push_back(r);
            }
        }
        const auto m = dataset::stratified_split(records, static_cast<std::uint64_t>(trial));
        std::map<std::pair<int, int>, std::array<int, 3>> counts;
        for (const auto& row : m.rows) ++counts[{static_cast<int>(row.region), row.stratum}][static_cast<int>(row.split)];
        for (const auto& [key, c] : counts) {
            const double n = c[0] + c[1] + c[2];
            if (std::abs(c[0] - 0.7 * n) > 1 || std::abs(c[1] - 0.2 * n) > 1 || std::abs(c[2] - 0.1 * n) > 1) ++violations;
        }
    }
    o.require(violations == 0, std::to_string(violations) + " strata off by more than 1");
    o.detail = "100 trials, " + std::to_string(violations) + " strata outside +/-1";
    return o;
}

Outcome hpo_harness() {
    Outcome o;
    const auto grid = hpo::default_paper_grid();
    o.require(grid.rows.size() == 7, std::to_string(grid.rows.size()) + " rows");
    const std::vector<std::pair<std::string, std::string>> expected = {
        {"Baseline performance", "Base HPO"}, {"Filters", "32/256"},   {"Filters", "160/1280"},
        {"Learning rate", "1e-5"},           {"Learning rate", "1e-3"}, {"Batch size", "10"},
        {"Batch size", "24"}};
    for (std::size_t i = 0; i < std::min(grid.rows.size(), expected.size()); ++i)
        o.require(grid.rows[i].name == expected[i].first && grid.rows[i].configuration == expected[i].second,
                  "row " + std::to_string(i) + " is " + grid.rows[i].name + " / " + grid.rows[i].configuration);

    synth::SynthSpec spec;
    spec.tiles = 8;
    spec.height = spec.width = 32;
    spec.seed = 110;
    const auto c = synth::generate(spec);
    std::vector<preprocess::TensorSample> tr, va;
    for (std::size_t i = 0; i < c.tiles.size(); ++i)
        (i < 6 ? tr : va).push_back(preprocess::concatenate(c.tiles[i], c.labels[i]));
    const auto desk = hpo::parse_grid("Base | f4 | initial_filters=4 epochs=2 batch_size=2 augmentation_factor=1 learning_rate=0.001\n"
                                      "Learning rate | 1e-2 | learning_rate=0.01\n");
    const auto a = hpo::run_grid(desk, hpo::make_trainer(tr, va));
    const auto b = hpo::run_grid(desk, hpo::make_trainer(tr, va));
    const auto ta = hpo::format_results_table(a), tb = hpo::format_results_table(b);
    o.require(ta == tb, "tables differ between runs");
    bool ranked = a.size() == 2 && a[0].rank == 1 && a[1].rank == 2 && a[0].winner && !a[1].winner;
    for (const auto& r : a) ranked = ranked && r.outcome.has_value();
    o.require(ranked, "ranking incomplete");
    o.detail = "7 rows match; desk grid winner '" + (a.empty() ? std::string("?") : a[0].name + " " + a[0].configuration) +
               "', identical tables on rerun" + (o.detail.empty() ? "" : " (" + o.detail + ")");
    return o;
}

Outcome best_epoch() {
    Outcome o;
    std::mt19937_64 rng(111);
    int wrong = 0;
    for (int i = 0; i < 50; ++i) {
        const int n = std::uniform_int_distribution<int>(1, 40)(rng);
        std::vector<train::EpochRecord> curves;
        std::vector<double> vl;
        double level = 1.0;
        for (int e = 0; e < n; ++e) {
            level *= std::uniform_real_distribution<double>(0.8, 1.15)(rng);
            curves.push_back({e + 1, level * 1.1, level, 0.5});
            vl.push_back(level);
        }
        const auto argmin = static_cast<std::size_t>(std::min_element(vl.begin(), vl.end()) - vl.begin());
        if (train::select_best_epoch(curves) != argmin || train::select_best_epoch(vl) != argmin) ++wrong;
    }
    o.require(wrong == 0, std::to_string(wrong) + " wrong");
    o.detail = "50 curves, " + std::to_string(wrong) + " wrong";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric-oracle", metric_oracle},   {"index-formulas", formula_checks}, {"crop-geometry", geometry},
        {"distance-filter", distance_filter}, {"preprocessing", preprocessing}, {"architecture", architecture},
        {"end-to-end", end_to_end},         {"split-proportions", split_proportions}, {"hpo-harness", hpo_harness},
        {"best-epoch", best_epoch},
    };
    const std::string only = argc > 1 ? argv[1] : "";
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && only != name) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
