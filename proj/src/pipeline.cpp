#include "firescar/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "firescar/geotiff.hpp"
#include "firescar/plot.hpp"

namespace firescar::pipeline {

using dataset::Split;
using dataset::Variant;

MissingArtifact::MissingArtifact(const fs::path& p, std::string_view producer)
    : std::runtime_error("missing upstream artifact: " + p.string() + " (produced by `firescar " +
                         std::string(producer) + "`)"),
      path(p) {}

namespace {

void require_file(const fs::path& p, std::string_view producer) {
    if (!fs::exists(p)) throw MissingArtifact(p, producer);
}

void say(const Log& log, const std::string& msg) {
    if (log) log(msg);
}

const std::set<std::string>& run_keys() {
    static const std::set<std::string> k = {"raw_dir", "work_dir",       "out_dir",      "variant",
                                            "seed",    "workers",        "knn_k",        "iqr_factor",
                                            "norm",    "strata",         "train_fraction", "val_fraction",
                                            "min_records_per_region",    "grid"};
    return k;
}

}  // namespace

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
    RunConfig c;
    KeyValues train_kv, synth_kv;
    const auto& tk = train::TrainConfig::keys();
    const auto synth_known = synth::SynthSpec{}.to_key_values();
    for (const auto& [k, v] : kv) {
        if (k.rfind("synth.", 0) == 0) {
            const auto field = k.substr(6);
            if (!synth_known.count(field)) throw FormatError("unknown synth key '" + k + "'");
            synth_kv[field] = v;
        } else if (std::find(tk.begin(), tk.end(), k) != tk.end()) {
            if (k != "seed") train_kv[k] = v;
        } else if (!run_keys().count(k)) {
            throw FormatError("unknown configuration key '" + k + "'");
        }
    }
    if (kv.count("raw_dir")) c.raw_dir = kv.at("raw_dir");
    if (kv.count("work_dir")) c.work_dir = kv.at("work_dir");
    if (kv.count("out_dir")) c.out_dir = kv.at("out_dir");
    if (kv.count("variant")) c.variant = dataset::parse_variant(kv.at("variant"));
    if (kv.count("seed")) c.seed = static_cast<std::uint64_t>(kv_int(kv, "seed"));
    if (kv.count("workers")) c.workers = static_cast<int>(kv_int(kv, "workers"));
    if (kv.count("knn_k")) c.knn_k = static_cast<int>(kv_int(kv, "knn_k"));
    if (kv.count("iqr_factor")) c.iqr_factor = kv_double(kv, "iqr_factor");
    if (kv.count("norm")) {
        const auto& n = kv.at("norm");
        if (n == "standardize")
            c.norm = preprocess::NormMethod::Standardize;
        else if (n == "minmax")
            c.norm = preprocess::NormMethod::MinMax;
        else
            throw FormatError("norm must be standardize or minmax, got '" + n + "'");
    }
    if (kv.count("strata")) c.split.strata = static_cast<int>(kv_int(kv, "strata"));
    if (kv.count("train_fraction")) c.split.train_fraction = kv_double(kv, "train_fraction");
    if (kv.count("val_fraction")) c.split.val_fraction = kv_double(kv, "val_fraction");
    if (kv.count("min_records_per_region"))
        c.split.min_records_per_region = static_cast<int>(kv_int(kv, "min_records_per_region"));
    if (kv.count("grid")) c.grid_file = kv.at("grid");
    c.train.apply(train_kv);
    c.train.seed = c.seed;
    c.synth.seed = c.seed;
    c.synth.apply(synth_kv);
    if (c.workers < 1) throw ContractViolation("workers must be at least 1");
    if (c.knn_k < 1) throw ContractViolation("knn_k must be at least 1");
    return c;
}

KeyValues RunConfig::to_key_values() const {
    KeyValues kv = train.to_key_values();
    kv["raw_dir"] = raw_dir.string();
    kv["work_dir"] = work_dir.string();
    kv["out_dir"] = out_dir.string();
    if (variant) kv["variant"] = std::string(dataset::variant_name(*variant));
    kv["seed"] = std::to_string(seed);
    kv["workers"] = std::to_string(workers);
    kv["knn_k"] = std::to_string(knn_k);
    kv["iqr_factor"] = format_double(iqr_factor);
    kv["norm"] = norm == preprocess::NormMethod::Standardize ? "standardize" : "minmax";
    kv["strata"] = std::to_string(split.strata);
    kv["train_fraction"] = format_double(split.train_fraction);
    kv["val_fraction"] = format_double(split.val_fraction);
    kv["min_records_per_region"] = std::to_string(split.min_records_per_region);
    if (!grid_file.empty()) kv["grid"] = grid_file.string();
    for (const auto& [k, v] : synth.to_key_values()) kv["synth." + k] = v;
    return kv;
}

Variant RunConfig::require_variant(std::string_view stage) const {
    if (!variant) throw ContractViolation(std::string(stage) + " needs a dataset variant (AS or 128)");
    return *variant;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const auto threads = static_cast<std::size_t>(std::clamp<long long>(workers, 1, static_cast<long long>(std::max<std::size_t>(n, 1))));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// synth

SynthSummary run_synth(const RunConfig& config, const Log& log) {
    const auto corpus = synth::generate(config.synth);
    synth::write_corpus(config.raw_dir, corpus);
    SynthSummary s;
    s.tiles = static_cast<int>(corpus.tiles.size());
    for (std::size_t i = 0; i < corpus.labels.size(); ++i)
        s.mean_burned_fraction += static_cast<double>(corpus.labels[i].burned_pixels()) /
                                  static_cast<double>(corpus.labels[i].mask.size());
    s.mean_burned_fraction /= s.tiles;
    say(log, "synth: wrote " + std::to_string(s.tiles) + " tiles to " + config.raw_dir.string());
    return s;
}

// ---------------------------------------------------------------------------
// build-dataset

namespace {

struct RawPaths {
    fs::path pre, post, mask;
};

RawPaths raw_paths(const fs::path& dir, const std::string& id) {
    return {dir / (id + "_pre.tif"), dir / (id + "_post.tif"), dir / (id + "_mask.tif")};
}

}  // namespace

BuildSummary build_dataset(const RunConfig& config, const Log& log) {
    const Variant variant = config.require_variant("build-dataset");
    const auto fires = config.raw_dir / "fires.tsv";
    require_file(fires, "synth");
    auto records = dataset::read_fire_records(fires);
    const auto tiles_dir = config.raw_dir / "tiles";
    BuildSummary summary;
    summary.records = static_cast<int>(records.size());

    struct Item {
        raster::BandTile tile;
        raster::ScarLabel label;
        std::optional<dataset::CropSpec> crop;
        std::string rejection;
        int removed = 0;
    };
    std::vector<Item> items(records.size());
    for (const auto& r : records) {
        const auto p = raw_paths(tiles_dir, r.record_id);
        for (const auto& f : {p.pre, p.post, p.mask}) require_file(f, "synth");
    }
    parallel_for(records.size(), config.workers, [&](std::size_t i) {
        auto& rec = records[i];
        auto& it = items[i];
        const auto p = raw_paths(tiles_dir, rec.record_id);
        it.tile = raster::load_tile(p.pre, p.post, rec.record_id);
        raster::ScarLabel raw{raster::read_mask_geotiff(p.mask)};
        if (raw.height() != it.tile.height() || raw.width() != it.tile.width())
            throw FormatError("mask of " + rec.record_id + " does not match its imagery");
        const auto filtered = dataset::filter_distant_components(raw, it.tile.pixel_size_m);
        it.label = filtered.label;
        it.removed = filtered.removed;
        rec.scar_bbox = it.label.bounding_box();
        rec.burned_pixel_count = it.label.burned_pixels();
        if (rec.burned_pixel_count == 0) {
            it.rejection = "empty scar";
            return;
        }
        const Rect extent{0, 0, it.tile.height(), it.tile.width()};
        const bool full_size = extent.height >= dataset::kTileSize && extent.width >= dataset::kTileSize;
        std::optional<dataset::CropOutcome> f128;
        if (variant == Variant::F128 || full_size) {
            f128 = dataset::make_crop(rec, Variant::F128, extent);
            if (!f128->accepted()) {
                it.rejection = f128->rejection;
                return;
            }
        }
        const auto chosen = variant == Variant::F128 ? *f128 : dataset::make_crop(rec, Variant::AS, extent);
        if (!chosen.accepted())
            it.rejection = chosen.rejection;
        else
            it.crop = chosen.crop;
    });

    std::vector<raster::FireRecord> accepted;
    std::vector<std::size_t> accepted_index;
    for (std::size_t i = 0; i < records.size(); ++i) {
        summary.components_removed += items[i].removed;
        if (items[i].crop) {
            accepted.push_back(records[i]);
            accepted_index.push_back(i);
        } else {
            summary.rejections.push_back({records[i].record_id, items[i].rejection});
        }
    }
    summary.accepted = static_cast<int>(accepted.size());
    auto manifest = dataset::stratified_split(accepted, config.seed, config.split);
    summary.warnings = manifest.warnings;

    const auto vdir = config.variant_dir(variant);
    const auto crops = vdir / "crops";
    fs::create_directories(crops);
    for (std::size_t k = 0; k < manifest.rows.size(); ++k) {
        auto& row = manifest.rows[k];
        const auto& item = items[accepted_index[k]];
        row.variant = variant;
        row.crop_rect = item.crop->crop_rect;
        row.pad = item.crop->pad_needed;
        row.burned_fraction = static_cast<double>(row.burned_pixel_count) / static_cast<double>(row.crop_rect.area());
    }
    parallel_for(manifest.rows.size(), config.workers, [&](std::size_t j) {
        const auto& row = manifest.rows[j];
        const auto& item = items[accepted_index[j]];
        const auto tile = item.tile.crop(row.crop_rect);
        const auto p = raw_paths(crops, row.record_id);
        raster::save_tile(tile, p.pre, p.post);
        raster::write_mask_geotiff(p.mask, item.label.mask.crop(row.crop_rect), raster::tile_georeference(tile));
    });
    dataset::write_manifest(vdir / "manifest.tsv", manifest);
    {
        std::ofstream rej(vdir / "rejections.tsv");
        rej << "record_id\treason\n";
        for (const auto& r : summary.rejections) rej << r.record_id << '\t' << r.reason << '\n';
    }
    double frac = 0.0;
    for (const auto& row : manifest.rows) {
        frac += row.burned_fraction;
        ++summary.counts[std::string(raster::region_name(row.region))][std::string(dataset::split_name(row.split))];
    }
    summary.mean_burned_fraction = manifest.rows.empty() ? 0.0 : frac / static_cast<double>(manifest.rows.size());

    std::ostringstream msg;
    msg << "build-dataset " << dataset::variant_name(variant) << ": " << manifest.rows.size() << " of "
        << summary.records << " records kept (" << std::fixed << std::setprecision(1)
        << (summary.records ? 100.0 * static_cast<double>(manifest.rows.size()) / summary.records : 0.0)
        << "%), " << summary.rejections.size() << " rejected, " << summary.components_removed
        << " distant components removed, mean burned fraction " << std::setprecision(4)
        << summary.mean_burned_fraction;
    say(log, msg.str());
    for (const auto& [region, splits] : summary.counts) {
        std::ostringstream line;
        line << "  " << region << ":";
        for (const auto& [s, n] : splits) line << ' ' << s << '=' << n;
        say(log, line.str());
    }
    for (const auto& r : summary.rejections) say(log, "  rejected " + r.record_id + ": " + r.reason);
    for (const auto& w : summary.warnings) say(log, "  warning: " + w);
    return summary;
}

// ---------------------------------------------------------------------------
// preprocess

namespace {

fs::path archive_path(const fs::path& vdir, Split s) { return vdir / (std::string(dataset::split_name(s)) + ".fsts"); }

}  // namespace

PreprocessSummary run_preprocess(const RunConfig& config, const Log& log) {
    const Variant variant = config.require_variant("preprocess");
    const auto vdir = config.variant_dir(variant);
    const auto manifest_path = vdir / "manifest.tsv";
    require_file(manifest_path, "build-dataset");
    const auto manifest = dataset::read_manifest(manifest_path);
    const auto crops = vdir / "crops";

    PreprocessSummary summary;
    const std::size_t n = manifest.rows.size();
    std::vector<raster::BandTile> tiles(n);
    std::vector<raster::ScarLabel> labels(n);
    for (const auto& row : manifest.rows) {
        const auto p = raw_paths(crops, row.record_id);
        for (const auto& f : {p.pre, p.post, p.mask}) require_file(f, "build-dataset");
    }
    parallel_for(n, config.workers, [&](std::size_t i) {
        const auto p = raw_paths(crops, manifest.rows[i].record_id);
        tiles[i] = raster::load_tile(p.pre, p.post, manifest.rows[i].record_id);
        labels[i].mask = raster::read_mask_geotiff(p.mask);
    });

    const auto limits = preprocess::compute_band_limits(tiles, raster::RangeProfile{}, config.iqr_factor);
    std::vector<preprocess::TensorSample> samples(n);
    std::vector<preprocess::Warnings> warnings(n);
    parallel_for(n, config.workers, [&](std::size_t i) {
        auto t = preprocess::impute_outliers(tiles[i], limits, &warnings[i]);
        t = preprocess::knn_fill(t, config.knn_k, &limits, &warnings[i]);
        samples[i] = preprocess::concatenate(t, labels[i]);
        if (samples[i].has_invalid()) throw ContractViolation("preprocess: invalid values remain in " + t.record_id);
    });
    for (auto& w : warnings) summary.warnings.insert(summary.warnings.end(), w.begin(), w.end());

    std::vector<preprocess::TensorSample> train_samples;
    for (std::size_t i = 0; i < n; ++i)
        if (manifest.rows[i].split == Split::Train) train_samples.push_back(samples[i]);
    if (train_samples.empty()) throw ContractViolation("preprocess: the training split is empty");
    const auto stats = preprocess::fit_norm_stats(train_samples, config.norm, &summary.warnings);
    train_samples.clear();

    std::map<Split, std::vector<preprocess::TensorSample>> by_split;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = preprocess::zero_pad(preprocess::standardize(std::move(samples[i]), stats), dataset::kTileSize);
        by_split[manifest.rows[i].split].push_back(std::move(s));
    }
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
        preprocess::write_archive(archive_path(vdir, s), by_split[s]);
        summary.samples[std::string(dataset::split_name(s))] = static_cast<int>(by_split[s].size());
    }
    preprocess::write_norm_stats(vdir / "norm_stats.txt", stats);
    preprocess::write_band_limits(vdir / "band_limits.txt", limits);
    {
        std::ofstream w(vdir / "preprocess_warnings.txt");
        for (const auto& m : summary.warnings) w << m << '\n';
    }
    std::ostringstream msg;
    msg << "preprocess " << dataset::variant_name(variant) << ":";
    for (const auto& [s, c] : summary.samples) msg << ' ' << s << '=' << c;
    msg << ", " << summary.warnings.size() << " warnings";
    say(log, msg.str());
    return summary;
}

// ---------------------------------------------------------------------------
// train / evaluate

namespace {

std::vector<preprocess::TensorSample> load_split(const fs::path& vdir, Split s) {
    const auto p = archive_path(vdir, s);
    require_file(p, "preprocess");
    return preprocess::read_archive(p);
}

std::string fmt(double v, int precision = 4) {
    if (!std::isfinite(v)) return "NA";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

std::string fmt(const std::optional<double>& v, int precision = 4) { return v ? fmt(*v, precision) : "NA"; }

}  // namespace

TrainSummary run_train(const RunConfig& config, const Log& log) {
    const Variant variant = config.require_variant("train");
    const auto vdir = config.variant_dir(variant);
    const auto train_split = load_split(vdir, Split::Train);
    const auto val_split = load_split(vdir, Split::Val);
    const auto run_log = vdir / "run.log";
    {
        std::ofstream rl(run_log);
        rl << format_key_values(config.train.to_key_values());
    }
    auto result = train::train(config.train, train_split, val_split, [&](const train::EpochRecord& r) {
        std::ostringstream line;
        line << "epoch " << r.epoch << " train_loss " << fmt(r.train_loss) << " val_loss " << fmt(r.val_loss)
             << " val_dc " << fmt(r.val_dc);
        std::ofstream(run_log, std::ios::app) << line.str() << '\n';
        say(log, line.str());
    });
    const auto& best = result.curves.at(static_cast<std::size_t>(result.best_epoch - 1));
    KeyValues meta = config.train.to_key_values();
    meta["variant"] = std::string(dataset::variant_name(variant));
    meta["best_epoch"] = std::to_string(result.best_epoch);
    meta["best_train_loss"] = format_double(best.train_loss);
    meta["best_val_loss"] = format_double(best.val_loss);
    meta["best_val_dc"] = std::isfinite(best.val_dc) ? format_double(best.val_dc) : "NA";
    unet::save_checkpoint(vdir / "model.ckpt", result.model, meta);
    train::write_curves(vdir / "curves.tsv", result.curves, result.best_epoch);
    say(log, "train " + std::string(dataset::variant_name(variant)) + ": best epoch " + std::to_string(result.best_epoch) +
                 ", val_loss " + fmt(best.val_loss) + ", val_dc " + fmt(best.val_dc));
    return {result.best_epoch, best, result.model.parameter_count()};
}

namespace {

unet::UNet<float> load_model(const fs::path& vdir, Variant variant) {
    const auto path = vdir / "model.ckpt";
    require_file(path, "train");
    const auto ckpt = unet::read_checkpoint(path);
    const auto it = ckpt.metadata.find("variant");
    if (it != ckpt.metadata.end() && it->second != dataset::variant_name(variant))
        throw ContractViolation("checkpoint " + path.string() + " was trained on variant " + it->second +
                                ", not " + std::string(dataset::variant_name(variant)));
    unet::UNet<float> model(ckpt.config);
    unet::load_checkpoint(model, ckpt);
    return model;
}

std::vector<preprocess::TensorSample> physical_units(std::vector<preprocess::TensorSample> samples,
                                                     const fs::path& vdir) {
    const auto stats_path = vdir / "norm_stats.txt";
    require_file(stats_path, "preprocess");
    const auto stats = preprocess::read_norm_stats(stats_path);
    for (auto& s : samples) s = preprocess::unstandardize(std::move(s), stats);
    return samples;
}

}  // namespace

train::MetricsReport run_evaluate(const RunConfig& config, const Log& log) {
    const Variant variant = config.require_variant("evaluate");
    const auto vdir = config.variant_dir(variant);
    auto model = load_model(vdir, variant);
    const auto test = load_split(vdir, Split::Test);
    auto report = train::evaluate(model, test, config.train.threshold);
    if (fs::exists(vdir / "curves.tsv")) report.curves = train::read_curves(vdir / "curves.tsv", &report.best_epoch);
    train::write_tile_metrics(vdir / "metrics_tiles.tsv", report);
    train::write_summary_json(vdir / "metrics_summary.json", report,
                              {{"variant", std::string(dataset::variant_name(variant))},
                               {"threshold", format_double(config.train.threshold)}});
    const auto physical = physical_units(test, vdir);
    train::write_band_dc(vdir / "band_dc.tsv", train::band_dc_analysis(physical, report));
    train::write_area_dc(vdir / "area_dc.tsv", train::area_dc_analysis(report, variant));
    const auto& a = report.aggregate;
    say(log, "evaluate " + std::string(dataset::variant_name(variant)) + ": " + std::to_string(a.tiles) +
                 " tiles, DC " + fmt(a.mean_dc.value) + " (micro " + fmt(a.micro_dc) + "), OE " + fmt(a.mean_oe.value) +
                 ", CE " + fmt(a.mean_ce.value) + ", CE>1 on " + std::to_string(a.ce_above_one) + " tiles");
    return report;
}

// ---------------------------------------------------------------------------
// hpo

std::vector<hpo::RowResult> run_hpo(const RunConfig& config, const Log& log) {
    const Variant variant = config.require_variant("hpo");
    const auto vdir = config.variant_dir(variant);
    if (!config.grid_file.empty()) require_file(config.grid_file, "(grid file)");
    auto grid = config.grid_file.empty() ? hpo::default_paper_grid() : hpo::read_grid(config.grid_file, config.train);
    for (auto& row : grid.rows) row.config.seed = config.seed;
    const auto train_split = load_split(vdir, Split::Train);
    const auto val_split = load_split(vdir, Split::Val);
    auto results = hpo::run_grid(grid, hpo::make_trainer(train_split, val_split), config.workers);
    hpo::write_results(vdir / "hpo_results.tsv", results);
    const auto table = hpo::format_results_table(results);
    std::ofstream(vdir / "hpo_table.txt") << table;
    say(log, "hpo " + std::string(dataset::variant_name(variant)) + ":\n" + table);
    return results;
}

// ---------------------------------------------------------------------------
// report

std::vector<fs::path> run_report(const RunConfig& config, const Log& log) {
    std::vector<Variant> variants;
    if (config.variant) {
        variants.push_back(*config.variant);
    } else {
        for (Variant v : {Variant::AS, Variant::F128})
            if (fs::exists(config.variant_dir(v) / "metrics_tiles.tsv")) variants.push_back(v);
    }
    if (variants.empty()) throw MissingArtifact(config.work_dir / "<variant>" / "metrics_tiles.tsv", "evaluate");
    fs::create_directories(config.out_dir);
    std::vector<fs::path> written;
    auto emit_svg = [&](const fs::path& p, const plot::Figure& f) {
        plot::write_svg(p, f);
        written.push_back(p);
    };

    std::ostringstream summary;
    summary << "Model\tBest epoch\tTrain loss\tVal loss\tVal DC\tTest DC\tTest DC (micro)\tCE\tOE\tCE (conventional)\n";
    for (Variant v : variants) {
        const std::string name(dataset::variant_name(v));
        const auto vdir = config.variant_dir(v);
        const auto curves_path = vdir / "curves.tsv";
        const auto tiles_path = vdir / "metrics_tiles.tsv";
        require_file(curves_path, "train");
        require_file(tiles_path, "evaluate");
        int best_epoch = 0;
        const auto curves = train::read_curves(curves_path, &best_epoch);
        train::MetricsReport report;
        report.tiles = train::read_tile_metrics(tiles_path);
        report.aggregate = train::aggregate(report.tiles);
        report.curves = curves;
        report.best_epoch = best_epoch;

        plot::Series tl{"train loss", {}, {}}, vl{"val loss", {}, {}}, vd{"val DC", {}, {}};
        for (const auto& r : curves) {
            tl.x.push_back(r.epoch), tl.y.push_back(r.train_loss);
            vl.x.push_back(r.epoch), vl.y.push_back(r.val_loss);
            vd.x.push_back(r.epoch), vd.y.push_back(r.val_dc);
        }
        emit_svg(config.out_dir / (name + "_loss_curves.svg"), {name + " training and validation loss", "epoch", "BCE", {tl, vl}});
        emit_svg(config.out_dir / (name + "_val_dc.svg"), {name + " validation DC", "epoch", "DC", {vd}});

        const auto area = train::area_dc_analysis(report, v);
        plot::Series ad{"tiles", {}, {}, false};
        for (const auto& r : area.rows) ad.x.push_back(r.burned_fraction), ad.y.push_back(r.dc);
        emit_svg(config.out_dir / (name + "_area_dc.svg"),
                 {name + " burned fraction vs DC (Spearman " + fmt(area.spearman_fraction_dc, 3) + ")", "burned fraction",
                  "DC", {ad}});
        if (v == Variant::AS) {
            plot::Series td{"tiles", {}, {}, false};
            for (const auto& r : area.rows) td.x.push_back(static_cast<double>(r.total_area)), td.y.push_back(r.dc);
            emit_svg(config.out_dir / (name + "_total_area_dc.svg"),
                     {name + " total area vs DC (Spearman " + fmt(area.spearman_area_dc, 3) + ")", "total area (px)",
                      "DC", {td}});
        }

        const auto test = physical_units(load_split(vdir, Split::Test), vdir);
        const auto bands = train::band_dc_analysis(test, report);
        for (int b = 0; b < raster::kBandCount; ++b) {
            plot::Series pre{"pre-fire", {}, {}, false}, post{"post-fire", {}, {}, false};
            for (const auto& r : bands.rows) {
                pre.x.push_back(r.pre_mean[b]), pre.y.push_back(r.dc);
                post.x.push_back(r.post_mean[b]), post.y.push_back(r.dc);
            }
            const std::string band(raster::band_name(b));
            emit_svg(config.out_dir / (name + "_band_dc_" + band + ".svg"),
                     {name + " mean burned " + band + " vs DC", band, "DC", {pre, post}});
        }

        const auto& a = report.aggregate;
        const auto& b = curves.at(static_cast<std::size_t>(std::max(best_epoch, 1) - 1));
        summary << name << '\t' << best_epoch << '\t' << fmt(b.train_loss) << '\t' << fmt(b.val_loss) << '\t'
                << fmt(b.val_dc, 3) << '\t' << fmt(a.mean_dc.value, 3) << '\t' << fmt(a.micro_dc, 3) << '\t'
                << fmt(a.mean_ce.value, 4) << '\t' << fmt(a.mean_oe.value, 4) << '\t'
                << fmt(a.mean_ce_conventional.value, 4) << '\n';

        std::ostringstream tiles;
        tiles << "Tile\tDC\tOE\tCE\tCE (conventional)\tCE>1\n";
        for (const auto& t : report.tiles)
            tiles << t.record_id << '\t' << fmt(t.dc, 2) << '\t' << fmt(t.oe, 2) << '\t' << fmt(t.ce, 2) << '\t'
                  << fmt(t.ce_conventional, 2) << '\t' << (t.ce_above_one ? "yes" : "") << '\n';
        const auto tiles_txt = config.out_dir / (name + "_test_metrics.txt");
        std::ofstream(tiles_txt) << tiles.str();
        written.push_back(tiles_txt);

        const auto hpo_table = vdir / "hpo_table.txt";
        if (fs::exists(hpo_table)) {
            const auto dst = config.out_dir / (name + "_hpo_table.txt");
            fs::copy_file(hpo_table, dst, fs::copy_options::overwrite_existing);
            written.push_back(dst);
        }
    }
    const auto summary_txt = config.out_dir / "summary_table.txt";
    std::ofstream(summary_txt) << summary.str();
    written.push_back(summary_txt);
    say(log, summary.str());
    say(log, "report: wrote " + std::to_string(written.size()) + " files to " + config.out_dir.string());
    return written;
}

}  // namespace firescar::pipeline
