#include "firescar/hpo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace firescar::hpo {

const GridRow& HpoGrid::baseline() const {
    if (rows.empty()) throw ContractViolation("HpoGrid: grid is empty");
    return rows.front();
}

std::vector<std::string> differing_fields(const TrainConfig& a, const TrainConfig& b) {
    const auto ka = a.to_key_values();
    const auto kb = b.to_key_values();
    std::vector<std::string> out;
    for (const auto& [k, v] : ka)
        if (kb.at(k) != v) out.push_back(k);
    return out;
}

void HpoGrid::validate() const {
    const auto& base = baseline();
    base.config.validate();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        rows[i].config.validate();
        const auto diff = differing_fields(base.config, rows[i].config);
        if (diff.size() != 1) {
            std::string fields;
            for (const auto& f : diff) fields += (fields.empty() ? "" : ", ") + f;
            throw ContractViolation("HPO row " + std::to_string(i) + " (" + rows[i].name + " " + rows[i].configuration +
                                    ") must change exactly one baseline field, changes " +
                                    std::to_string(diff.size()) + (fields.empty() ? "" : ": " + fields));
        }
    }
}

namespace {

GridRow variation(const GridRow& base, std::string name, std::string configuration, KeyValues overrides) {
    GridRow r{std::move(name), std::move(configuration), base.config, std::move(overrides)};
    r.config.apply(r.overrides);
    return r;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

HpoGrid default_paper_grid() {
    HpoGrid g;
    KeyValues base_kv = {{"learning_rate", "1e-4"},
                         {"batch_size", "16"},
                         {"epochs", "25"},
                         {"initial_filters", "128"},
                         {"augmentation_factor", "2"}};
    GridRow base{"Baseline performance", "Base HPO", TrainConfig{}, base_kv};
    base.config.apply(base_kv);
    g.rows.push_back(base);
    g.rows.push_back(variation(base, "Filters", "32/256", {{"initial_filters", "32"}}));
    g.rows.push_back(variation(base, "Filters", "160/1280", {{"initial_filters", "160"}}));
    g.rows.push_back(variation(base, "Learning rate", "1e-5", {{"learning_rate", "1e-5"}}));
    g.rows.push_back(variation(base, "Learning rate", "1e-3", {{"learning_rate", "1e-3"}}));
    g.rows.push_back(variation(base, "Batch size", "10", {{"batch_size", "10"}}));
    g.rows.push_back(variation(base, "Batch size", "24", {{"batch_size", "24"}}));
    g.validate();
    return g;
}

HpoGrid parse_grid(std::string_view text, const TrainConfig& defaults) {
    HpoGrid g;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto p1 = t.find('|');
        const auto p2 = p1 == std::string::npos ? p1 : t.find('|', p1 + 1);
        if (p2 == std::string::npos)
            throw FormatError("grid line " + std::to_string(lineno) + ": expected 'Name | Configuration | key=value ...'");
        GridRow row;
        row.name = trim(std::string_view(t).substr(0, p1));
        row.configuration = trim(std::string_view(t).substr(p1 + 1, p2 - p1 - 1));
        if (row.name.empty()) throw FormatError("grid line " + std::to_string(lineno) + ": empty name");
        std::istringstream fields(t.substr(p2 + 1));
        std::string tok;
        while (fields >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0)
                throw FormatError("grid line " + std::to_string(lineno) + ": malformed field '" + tok + "'");
            const auto key = tok.substr(0, eq);
            const auto& known = TrainConfig::keys();
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw FormatError("grid line " + std::to_string(lineno) + ": unknown training key '" + key + "'");
            row.overrides[key] = tok.substr(eq + 1);
        }
        row.config = g.rows.empty() ? defaults : g.rows.front().config;
        row.config.apply(row.overrides);
        g.rows.push_back(std::move(row));
    }
    if (g.rows.empty()) throw FormatError("grid has no rows");
    g.validate();
    return g;
}

HpoGrid read_grid(const std::filesystem::path& path, const TrainConfig& defaults) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open grid file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_grid(ss.str(), defaults);
}

std::string format_grid(const HpoGrid& grid) {
    std::ostringstream out;
    for (const auto& r : grid.rows) {
        out << r.name << " | " << r.configuration << " |";
        for (const auto& [k, v] : r.overrides) out << ' ' << k << '=' << v;
        out << '\n';
    }
    return out.str();
}

Trainer make_trainer(std::span<const train::TensorSample> train_split, std::span<const train::TensorSample> val_split) {
    return [train_split, val_split](const TrainConfig& config) {
        auto result = train::train(config, train_split, val_split);
        const auto& best = result.curves.at(static_cast<std::size_t>(result.best_epoch - 1));
        return RunOutcome{best.val_dc, best.val_loss, result.best_epoch};
    };
}

void rank_results(std::vector<RowResult>& results) {
    auto valid = [](const RowResult& r) { return r.outcome && std::isfinite(r.outcome->val_dc); };
    std::vector<std::size_t> order(results.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = results[a];
        const auto& rb = results[b];
        if (valid(ra) != valid(rb)) return valid(ra);
        if (valid(ra) && ra.outcome->val_dc != rb.outcome->val_dc) return ra.outcome->val_dc > rb.outcome->val_dc;
        return ra.row < rb.row;
    });
    std::vector<RowResult> sorted;
    for (std::size_t k = 0; k < order.size(); ++k) {
        sorted.push_back(results[order[k]]);
        sorted.back().rank = static_cast<int>(k) + 1;
        sorted.back().winner = k == 0 && valid(sorted.back());
    }
    results = std::move(sorted);
}

std::vector<RowResult> run_grid(const HpoGrid& grid, const Trainer& trainer, int workers) {
    grid.validate();
    const auto seed = grid.baseline().config.seed;
    std::vector<RowResult> results(grid.rows.size());
    auto run_row = [&](std::size_t i) {
        const auto& row = grid.rows[i];
        RowResult r{i, row.name, row.configuration, std::nullopt, {}, 0, false};
        auto config = row.config;
        config.seed = seed;
        try {
            r.outcome = trainer(config);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        results[i] = std::move(r);
    };
    const int n_threads = std::clamp(workers, 1, static_cast<int>(grid.rows.size()));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < grid.rows.size(); ++i) run_row(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next++) < grid.rows.size();) run_row(i);
            });
        for (auto& th : pool) th.join();
    }
    rank_results(results);
    return results;
}

namespace {
std::string dc_text(const RowResult& r) {
    if (!r.outcome) return "failed";
    if (!std::isfinite(r.outcome->val_dc)) return "NA";
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << r.outcome->val_dc;
    return s.str();
}
}  // namespace

std::string format_results_table(std::span<const RowResult> results) {
    std::vector<const RowResult*> rows;
    for (const auto& r : results) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->row < b->row; });
    std::size_t wn = 4, wc = 13;
    for (auto* r : rows) wn = std::max(wn, r->name.size()), wc = std::max(wc, r->configuration.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(wn)) << "Name" << "  " << std::setw(static_cast<int>(wc))
        << "Configuration" << "  Val DC\n";
    for (auto* r : rows)
        out << std::setw(static_cast<int>(wn)) << r->name << "  " << std::setw(static_cast<int>(wc)) << r->configuration
            << "  " << dc_text(*r) << (r->winner ? "  *" : "") << '\n';
    return out.str();
}

void write_results(const std::filesystem::path& path, std::span<const RowResult> results) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "rank\trow\tname\tconfiguration\tval_dc\tval_loss\tbest_epoch\tstatus\twinner\n";
    for (const auto& r : results) {
        out << r.rank << '\t' << r.row << '\t' << r.name << '\t' << r.configuration << '\t';
        if (r.outcome)
            out << (std::isfinite(r.outcome->val_dc) ? format_double(r.outcome->val_dc) : "NA") << '\t'
                << format_double(r.outcome->val_loss) << '\t' << r.outcome->best_epoch << "\tok";
        else
        {
            auto msg = r.error;
            std::replace_if(msg.begin(), msg.end(), [](char c) { return c == '\t' || c == '\n'; }, ' ');
            out << "NA\tNA\tNA\tfailed: " << msg;
        }
        out << '\t' << (r.winner ? 1 : 0) << '\n';
    }
}

}  // namespace firescar::hpo
