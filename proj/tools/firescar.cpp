#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "firescar/pipeline.hpp"

namespace fp = firescar::pipeline;

namespace {

struct Options {
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::string> variant, raw_dir, work_dir, out_dir, grid;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool quiet = false;
};

fp::RunConfig resolve(const Options& o) {
    firescar::KeyValues kv;
    if (!o.config_file.empty()) {
        if (!std::filesystem::exists(o.config_file)) throw fp::MissingArtifact(o.config_file, "(config file)");
        kv = firescar::read_key_values(o.config_file);
    }
    if (const char* env = std::getenv("FIRESCAR_WORKDIR"); env && *env) kv["work_dir"] = env;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw firescar::FormatError("--set expects key=value, got '" + s + "'");
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (o.variant) kv["variant"] = *o.variant;
    if (o.raw_dir) kv["raw_dir"] = *o.raw_dir;
    if (o.work_dir) kv["work_dir"] = *o.work_dir;
    if (o.out_dir) kv["out_dir"] = *o.out_dir;
    if (o.grid) kv["grid"] = *o.grid;
    if (o.seed) kv["seed"] = std::to_string(*o.seed);
    if (o.workers) kv["workers"] = std::to_string(*o.workers);
    return fp::RunConfig::from_key_values(kv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Burned-area mapping pipeline: synthetic corpora, dataset building, U-Net training and evaluation"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config_file, "key=value configuration file");
    app.add_option("--set", o.sets, "override one configuration key (key=value); repeatable");
    app.add_option("--variant", o.variant, "dataset variant: AS or 128");
    app.add_option("--seed", o.seed, "seed for splits, training and synthesis");
    app.add_option("--workers", o.workers, "worker threads");
    app.add_option("--raw", o.raw_dir, "raw corpus directory");
    app.add_option("--work", o.work_dir, "work directory (default: $FIRESCAR_WORKDIR or ./work)");
    app.add_option("--out", o.out_dir, "report output directory");
    app.add_option("--grid", o.grid, "HPO grid file");
    app.add_flag("-q,--quiet", o.quiet, "suppress progress output");

    struct Stage {
        const char* name;
        const char* help;
        std::function<void(const fp::RunConfig&, const fp::Log&)> run;
    };
    const std::vector<Stage> stages = {
        {"synth", "generate a synthetic corpus into the raw directory",
         [](const auto& c, const auto& l) { fp::run_synth(c, l); }},
        {"build-dataset", "filter scars, crop tiles and split records",
         [](const auto& c, const auto& l) { fp::build_dataset(c, l); }},
        {"preprocess", "impute, fill, standardize and pad into tensor archives",
         [](const auto& c, const auto& l) { fp::run_preprocess(c, l); }},
        {"train", "train the U-Net and keep the best epoch",
         [](const auto& c, const auto& l) { fp::run_train(c, l); }},
        {"evaluate", "score the checkpoint on the test split",
         [](const auto& c, const auto& l) { fp::run_evaluate(c, l); }},
        {"hpo", "run the hyperparameter grid",
         [](const auto& c, const auto& l) { fp::run_hpo(c, l); }},
        {"report", "write plots and result tables",
         [](const auto& c, const auto& l) { fp::run_report(c, l); }},
    };
    std::vector<CLI::App*> subs;
    for (const auto& s : stages) subs.push_back(app.add_subcommand(s.name, s.help)->fallthrough());

    CLI11_PARSE(app, argc, argv);

    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        try {
            const auto config = resolve(o);
            fp::Log log;
            if (!o.quiet) log = [](const std::string& m) { std::cout << m << '\n' << std::flush; };
            stages[i].run(config, log);
            return 0;
        } catch (const fp::MissingArtifact& e) {
            std::cerr << "firescar " << stages[i].name << ": error: " << e.what() << '\n';
            return 3;
        } catch (const std::exception& e) {
            std::cerr << "firescar " << stages[i].name << ": error: " << e.what() << '\n';
            return 2;
        }
    }
    return 1;
}
