#include "firescar/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "firescar/stats.hpp"

namespace firescar::train {

using preprocess::kChannels;

Confusion confusion(const Mask& prediction, const Mask& label) {
    require_same_shape(prediction, label, "confusion");
    Confusion c;
    const auto p = prediction.values();
    const auto y = label.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pi = p[i] != 0;
        const bool yi = y[i] != 0;
        c.tp += pi && yi;
        c.fp += pi && !yi;
        c.fn += !pi && yi;
        c.tn += !pi && !yi;
    }
    return c;
}

Mask binarize(std::span<const float> probabilities, int height, int width, double threshold) {
    if (probabilities.size() != static_cast<std::size_t>(height) * width)
        throw ContractViolation("binarize: " + std::to_string(probabilities.size()) + " probabilities for a " +
                                std::to_string(height) + "x" + std::to_string(width) + " mask");
    Mask m(height, width, 0);
    for (std::size_t i = 0; i < probabilities.size(); ++i) m[i] = probabilities[i] >= threshold ? 1 : 0;
    return m;
}

Confusion confusion(std::span<const float> probabilities, const Mask& label, double threshold) {
    if (probabilities.size() != label.size())
        throw ContractViolation("confusion: prediction has " + std::to_string(probabilities.size()) +
                                " pixels, label has " + std::to_string(label.size()));
    return confusion(binarize(probabilities, label.height(), label.width(), threshold), label);
}

namespace {
void require_counts(std::initializer_list<long long> counts) {
    for (long long c : counts)
        if (c < 0) throw ContractViolation("metric counts must be non-negative");
}
std::optional<double> ratio(long long num, long long den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

std::optional<double> dice(long long tp, long long fp, long long fn) {
    require_counts({tp, fp, fn});
    return ratio(2 * tp, 2 * tp + fp + fn);
}

std::optional<double> omission(long long tp, long long fn) {
    require_counts({tp, fn});
    return ratio(fn, tp + fn);
}

std::optional<double> commission(long long fp, long long tp, long long fn) {
    require_counts({fp, tp, fn});
    return ratio(fp, tp + fn);
}

std::optional<double> conventional_commission(long long fp, long long tp) {
    require_counts({fp, tp});
    return ratio(fp, tp + fp);
}

template <typename T>
double bce_loss(std::span<const T> probabilities, std::span<const std::uint8_t> labels) {
    if (probabilities.size() != labels.size()) throw ContractViolation("bce_loss: size mismatch");
    if (probabilities.empty()) throw ContractViolation("bce_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = std::clamp(static_cast<double>(probabilities[i]), kProbabilityClamp, 1.0 - kProbabilityClamp);
        sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / static_cast<double>(probabilities.size());
}

template <typename T>
void bce_gradient(std::span<const T> probabilities, std::span<const std::uint8_t> labels, std::span<T> grad) {
    if (probabilities.size() != labels.size() || grad.size() != labels.size())
        throw ContractViolation("bce_gradient: size mismatch");
    const double m = static_cast<double>(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = probabilities[i];
        if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) {
            grad[i] = T{0};
            continue;
        }
        grad[i] = static_cast<T>((labels[i] ? -1.0 / p : 1.0 / (1.0 - p)) / m);
    }
}

template double bce_loss<float>(std::span<const float>, std::span<const std::uint8_t>);
template double bce_loss<double>(std::span<const double>, std::span<const std::uint8_t>);
template void bce_gradient<float>(std::span<const float>, std::span<const std::uint8_t>, std::span<float>);
template void bce_gradient<double>(std::span<const double>, std::span<const std::uint8_t>, std::span<double>);

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ContractViolation("TrainConfig: " + what); };
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
    if (batch_size < 1) fail("batch_size must be positive");
    if (epochs < 1) fail("epochs must be positive");
    if (initial_filters < 1) fail("initial_filters must be positive");
    if (augmentation_factor < 1 || augmentation_factor > preprocess::kTransformCount)
        fail("augmentation_factor must be in [1, 8]");
    if (depth < 2) fail("depth must be at least 2");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must be in [0, 1)");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must be in (0, 1)");
}

unet::UNetConfig TrainConfig::model_config(int input_size) const {
    unet::UNetConfig c;
    c.initial_filters = initial_filters;
    c.depth = depth;
    c.input_size = input_size;
    c.activation = activation;
    c.normalization = normalization;
    c.validate();
    return c;
}

const std::vector<std::string>& TrainConfig::keys() {
    static const std::vector<std::string> k = {
        "learning_rate", "batch_size", "epochs",    "initial_filters", "augmentation_factor", "depth",        "beta1",
        "beta2",         "epsilon",    "threshold", "activation",      "normalization",       "seed"};
    return k;
}

KeyValues TrainConfig::to_key_values() const {
    return {{"learning_rate", format_double(learning_rate)},
            {"batch_size", std::to_string(batch_size)},
            {"epochs", std::to_string(epochs)},
            {"initial_filters", std::to_string(initial_filters)},
            {"augmentation_factor", std::to_string(augmentation_factor)},
            {"depth", std::to_string(depth)},
            {"beta1", format_double(beta1)},
            {"beta2", format_double(beta2)},
            {"epsilon", format_double(epsilon)},
            {"threshold", format_double(threshold)},
            {"activation", activation == unet::Activation::ReLU ? "relu" : "leaky_relu"},
            {"normalization", normalization == unet::Normalization::None ? "none" : "batch"},
            {"seed", std::to_string(seed)}};
}

void TrainConfig::apply(const KeyValues& kv) {
    auto has = [&](const char* k) { return kv.count(k) != 0; };
    if (has("learning_rate")) learning_rate = kv_double(kv, "learning_rate");
    if (has("batch_size")) batch_size = static_cast<int>(kv_int(kv, "batch_size"));
    if (has("epochs")) epochs = static_cast<int>(kv_int(kv, "epochs"));
    if (has("initial_filters")) initial_filters = static_cast<int>(kv_int(kv, "initial_filters"));
    if (has("augmentation_factor")) augmentation_factor = static_cast<int>(kv_int(kv, "augmentation_factor"));
    if (has("depth")) depth = static_cast<int>(kv_int(kv, "depth"));
    if (has("beta1")) beta1 = kv_double(kv, "beta1");
    if (has("beta2")) beta2 = kv_double(kv, "beta2");
    if (has("epsilon")) epsilon = kv_double(kv, "epsilon");
    if (has("threshold")) threshold = kv_double(kv, "threshold");
    if (has("seed")) seed = static_cast<std::uint64_t>(kv_int(kv, "seed"));
    if (has("activation")) {
        const auto& a = kv_string(kv, "activation");
        if (a == "relu")
            activation = unet::Activation::ReLU;
        else if (a == "leaky_relu")
            activation = unet::Activation::LeakyReLU;
        else
            throw FormatError("activation must be relu or leaky_relu, got '" + a + "'");
    }
    if (has("normalization")) {
        const auto& n = kv_string(kv, "normalization");
        if (n == "none")
            normalization = unet::Normalization::None;
        else if (n == "batch")
            normalization = unet::Normalization::Batch;
        else
            throw FormatError("normalization must be none or batch, got '" + n + "'");
    }
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(std::vector<nn::Parameter<T>*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
        m_.emplace_back(p->value.size(), T{});
        v_.emplace_back(p->value.size(), T{});
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step = static_cast<T>(lr_ / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& value = params_[k]->value;
        const auto& grad = params_[k]->grad;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const T g = grad[i];
            m[i] = b1 * m[i] + (T{1} - b1) * g;
            v[i] = b2 * v[i] + (T{1} - b2) * g * g;
            value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

template class Adam<float>;
template class Adam<double>;

std::size_t select_best_epoch(std::span<const double> val_loss) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < val_loss.size(); ++i) {
        if (!std::isfinite(val_loss[i])) continue;
        if (!best || val_loss[i] < val_loss[*best]) best = i;
    }
    if (!best) throw ContractViolation("select_best_epoch: no finite validation loss");
    return *best;
}

std::size_t select_best_epoch(std::span<const EpochRecord> curves) {
    std::vector<double> v;
    for (const auto& r : curves) v.push_back(r.val_loss);
    return select_best_epoch(v);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_samples(std::span<const TensorSample> samples, const char* what, int size) {
    for (const auto& s : samples) {
        if (s.height != size || s.width != size)
            throw ContractViolation(std::string(what) + ": sample " + s.record_id + " is " + std::to_string(s.height) +
                                    "x" + std::to_string(s.width) + ", expected " + std::to_string(size) + "x" +
                                    std::to_string(size));
        if (s.channels.size() != static_cast<std::size_t>(kChannels) * size * size)
            throw ContractViolation(std::string(what) + ": sample " + s.record_id + " is not 16-channel");
        if (s.label.height() != size || s.label.width() != size)
            throw ContractViolation(std::string(what) + ": label of " + s.record_id + " does not match the sample");
    }
}

void load_batch(const TensorSample& s, nn::Tensor<float>& x, std::vector<std::uint8_t>& y, int slot) {
    std::copy(s.channels.begin(), s.channels.end(), x.sample(slot));
    const auto lv = s.label.values();
    std::copy(lv.begin(), lv.end(), y.begin() + static_cast<std::ptrdiff_t>(slot) * lv.size());
}

struct Evaluation {
    double loss = 0.0;
    double macro_dc = 0.0;
};

Evaluation score(unet::UNet<float>& model, std::span<const TensorSample> samples, double threshold, int batch) {
    const auto probs = predict(model, samples, batch);
    double loss = 0.0;
    double dc_sum = 0.0;
    int dc_n = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        loss += bce_loss<float>(probs[i], samples[i].label.values());
        const auto c = confusion(probs[i], samples[i].label, threshold);
        if (auto d = dice(c.tp, c.fp, c.fn)) {
            dc_sum += *d;
            ++dc_n;
        }
    }
    return {loss / static_cast<double>(samples.size()),
            dc_n ? dc_sum / dc_n : std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace

std::vector<std::vector<float>> predict(unet::UNet<float>& model, std::span<const TensorSample> samples, int batch_size) {
    const int size = model.config().input_size;
    check_samples(samples, "predict", size);
    if (batch_size < 1) throw ContractViolation("predict: batch_size must be positive");
    std::vector<std::vector<float>> out;
    out.reserve(samples.size());
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const int b = static_cast<int>(std::min<std::size_t>(batch_size, samples.size() - start));
        nn::Tensor<float> x(b, kChannels, size, size);
        for (int i = 0; i < b; ++i) std::copy(samples[start + i].channels.begin(), samples[start + i].channels.end(), x.sample(i));
        const auto p = model.forward(x, unet::Mode::Eval);
        for (int i = 0; i < b; ++i) out.emplace_back(p.sample(i), p.sample(i) + plane);
    }
    return out;
}

TrainResult train(const TrainConfig& config, std::span<const TensorSample> train_split,
                  std::span<const TensorSample> val_split, const EpochCallback& on_epoch) {
    config.validate();
    if (train_split.empty()) throw ContractViolation("train: training split is empty");
    if (val_split.empty()) throw ContractViolation("train: validation split is empty");
    std::set<std::string> train_ids;
    for (const auto& s : train_split) train_ids.insert(s.record_id);
    for (const auto& s : val_split)
        if (train_ids.count(s.record_id))
            throw ContractViolation("train: record " + s.record_id + " appears in both training and validation splits");
    const int size = train_split[0].height;
    check_samples(train_split, "train", size);
    check_samples(val_split, "train", size);

    unet::UNet<float> model(config.model_config(size), config.seed);
    Adam<float> optimizer(model.parameters(), config.learning_rate, config.beta1, config.beta2, config.epsilon);

    struct Item {
        std::size_t index;
        preprocess::Transform transform;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < train_split.size(); ++i)
        for (auto t : preprocess::augmentation_plan(config.augmentation_factor,
                                                    config.seed + 0x9e3779b97f4a7c15ULL * (i + 1)))
            items.push_back({i, t});

    std::mt19937_64 rng(config.seed ^ 0xd1b54a32d192ed03ULL);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    std::vector<EpochRecord> curves;
    std::vector<std::vector<float>> best;
    std::optional<double> best_loss;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(items.begin(), items.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
            const int b = static_cast<int>(std::min<std::size_t>(config.batch_size, items.size() - start));
            nn::Tensor<float> x(b, kChannels, size, size);
            std::vector<std::uint8_t> y(b * plane);
            for (int i = 0; i < b; ++i) {
                const auto& item = items[start + i];
                const auto& sample = train_split[item.index];
                if (item.transform == preprocess::Transform::Identity)
                    load_batch(sample, x, y, i);
                else
                    load_batch(preprocess::apply_transform(sample, item.transform), x, y, i);
            }
            model.zero_grad();
            const auto p = model.forward(x, unet::Mode::Train);
            const double loss = bce_loss<float>(p.data, y);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << start / config.batch_size
                    << " (learning_rate=" << config.learning_rate << ")";
                throw TrainingDiverged(msg.str());
            }
            nn::Tensor<float> g(p.n, p.c, p.h, p.w);
            bce_gradient<float>(p.data, y, g.data);
            model.backward(g);
            optimizer.step();
            loss_sum += loss * b;
            seen += b;
        }
        const auto val = score(model, val_split, config.threshold, config.batch_size);
        if (!std::isfinite(val.loss))
            throw TrainingDiverged("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val.loss, val.macro_dc};
        curves.push_back(rec);
        if (!best_loss || val.loss < *best_loss) {
            best_loss = val.loss;
            best_epoch = epoch;
            best = model.snapshot();
        }
        if (on_epoch) on_epoch(rec);
    }
    model.restore(best);
    return {std::move(model), std::move(curves), best_epoch};
}

void write_curves(const std::filesystem::path& path, std::span<const EpochRecord> curves, int best_epoch) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "epoch\ttrain_loss\tval_loss\tval_dc\tbest\n";
    for (const auto& r : curves)
        out << r.epoch << '\t' << format_double(r.train_loss) << '\t' << format_double(r.val_loss) << '\t'
            << (std::isfinite(r.val_dc) ? format_double(r.val_dc) : "NA") << '\t' << (r.epoch == best_epoch ? 1 : 0)
            << '\n';
}

std::vector<EpochRecord> read_curves(const std::filesystem::path& path, int* best_epoch) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != "epoch\ttrain_loss\tval_loss\tval_dc\tbest")
        throw FormatError("'" + path.string() + "' is not a curves file");
    std::vector<EpochRecord> out;
    int best = 0;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        EpochRecord r;
        std::string dc;
        int flag = 0;
        if (!(ss >> r.epoch >> r.train_loss >> r.val_loss >> dc >> flag))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed curve row");
        r.val_dc = dc == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(dc);
        if (flag) best = r.epoch;
        out.push_back(r);
    }
    if (best_epoch) *best_epoch = best;
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

TileMetrics tile_metrics(std::string record_id, const Confusion& c, long long total_area) {
    TileMetrics t;
    t.record_id = std::move(record_id);
    t.counts = c;
    t.dc = dice(c.tp, c.fp, c.fn);
    t.oe = omission(c.tp, c.fn);
    t.ce = commission(c.fp, c.tp, c.fn);
    t.ce_conventional = conventional_commission(c.fp, c.tp);
    t.ce_above_one = t.ce && *t.ce > 1.0;
    t.burned_pixels = c.tp + c.fn;
    t.total_area = total_area;
    return t;
}

Aggregate aggregate(std::span<const TileMetrics> tiles) {
    Aggregate a;
    a.tiles = static_cast<int>(tiles.size());
    auto mean_of = [&](auto get) {
        MeanMetric m;
        double sum = 0.0;
        int n = 0;
        for (const auto& t : tiles) {
            if (auto v = get(t)) {
                sum += *v;
                ++n;
            } else {
                ++m.excluded;
            }
        }
        if (n) m.value = sum / n;
        return m;
    };
    a.mean_dc = mean_of([](const TileMetrics& t) { return t.dc; });
    a.mean_oe = mean_of([](const TileMetrics& t) { return t.oe; });
    a.mean_ce = mean_of([](const TileMetrics& t) { return t.ce; });
    a.mean_ce_conventional = mean_of([](const TileMetrics& t) { return t.ce_conventional; });
    Confusion total;
    for (const auto& t : tiles) {
        total += t.counts;
        a.ce_above_one += t.ce_above_one;
    }
    a.micro_dc = dice(total.tp, total.fp, total.fn);
    a.micro_oe = omission(total.tp, total.fn);
    a.micro_ce = commission(total.fp, total.tp, total.fn);
    a.micro_ce_conventional = conventional_commission(total.fp, total.tp);
    return a;
}

MetricsReport evaluate(unet::UNet<float>& model, std::span<const TensorSample> test_split, double threshold,
                       int batch_size) {
    MetricsReport report;
    const auto probs = predict(model, test_split, batch_size);
    for (std::size_t i = 0; i < test_split.size(); ++i) {
        const auto& s = test_split[i];
        report.tiles.push_back(tile_metrics(s.record_id, confusion(probs[i], s.label, threshold), s.content.area()));
    }
    report.aggregate = aggregate(report.tiles);
    return report;
}

namespace {
std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }
nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
}  // namespace

void write_tile_metrics(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "record_id\tTP\tFP\tFN\tTN\tDC\tOE\tCE\tCE_conventional\tCE_above_one\tburned_pixels\ttotal_area\n";
    for (const auto& t : report.tiles)
        out << t.record_id << '\t' << t.counts.tp << '\t' << t.counts.fp << '\t' << t.counts.fn << '\t' << t.counts.tn
            << '\t' << opt_str(t.dc) << '\t' << opt_str(t.oe) << '\t' << opt_str(t.ce) << '\t'
            << opt_str(t.ce_conventional) << '\t' << (t.ce_above_one ? 1 : 0) << '\t' << t.burned_pixels << '\t'
            << t.total_area << '\n';
}

std::vector<TileMetrics> read_tile_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("record_id\tTP\tFP\tFN\tTN\t", 0) != 0)
        throw FormatError("'" + path.string() + "' is not a tile metrics table");
    std::vector<TileMetrics> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, skip;
        Confusion c;
        if (!std::getline(ss, id, '\t') || !(ss >> c.tp >> c.fp >> c.fn >> c.tn))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        long long burned = 0, area = 0;
        for (int k = 0; k < 5; ++k) ss >> skip;
        if (!(ss >> burned >> area)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        out.push_back(tile_metrics(id, c, area));
    }
    return out;
}

void write_summary_json(const std::filesystem::path& path, const MetricsReport& report, const KeyValues& context) {
    const auto& a = report.aggregate;
    auto mean = [](const MeanMetric& m) { return nlohmann::json{{"value", opt_json(m.value)}, {"excluded", m.excluded}}; };
    nlohmann::json j;
    j["tiles"] = a.tiles;
    j["macro"] = {{"DC", mean(a.mean_dc)},
                  {"OE", mean(a.mean_oe)},
                  {"CE", mean(a.mean_ce)},
                  {"CE_conventional", mean(a.mean_ce_conventional)}};
    j["micro"] = {{"DC", opt_json(a.micro_dc)},
                  {"OE", opt_json(a.micro_oe)},
                  {"CE", opt_json(a.micro_ce)},
                  {"CE_conventional", opt_json(a.micro_ce_conventional)}};
    j["ce_above_one"] = a.ce_above_one;
    if (report.best_epoch > 0) j["best_epoch"] = report.best_epoch;
    if (!report.curves.empty()) {
        const auto& b = report.curves[std::min<std::size_t>(report.best_epoch ? report.best_epoch - 1 : 0,
                                                            report.curves.size() - 1)];
        j["best_train_loss"] = b.train_loss;
        j["best_val_loss"] = b.val_loss;
        j["best_val_dc"] = std::isfinite(b.val_dc) ? nlohmann::json(b.val_dc) : nlohmann::json(nullptr);
    }
    j["context"] = context;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Diagnostics

BandDcAnalysis band_dc_analysis(std::span<const TensorSample> samples, const MetricsReport& report) {
    std::map<std::string, const TensorSample*> by_id;
    for (const auto& s : samples) by_id[s.record_id] = &s;
    BandDcAnalysis out;
    for (const auto& t : report.tiles) {
        const auto it = by_id.find(t.record_id);
        if (it == by_id.end()) throw ContractViolation("band_dc_analysis: no sample for tile " + t.record_id);
        const auto& s = *it->second;
        if (s.burned_pixels() == 0) {
            ++out.excluded_no_burned;
            continue;
        }
        if (!t.dc) {
            ++out.excluded_undefined_dc;
            continue;
        }
        BandDcRow row{t.record_id, *t.dc, {}, {}};
        const auto lv = s.label.values();
        for (int b = 0; b < raster::kBandCount; ++b) {
            const auto post = s.channel(b);
            const auto pre = s.channel(b + raster::kBandCount);
            double sp = 0.0, sq = 0.0;
            long long n = 0;
            for (std::size_t i = 0; i < lv.size(); ++i)
                if (lv[i]) {
                    sq += post[i];
                    sp += pre[i];
                    ++n;
                }
            row.pre_mean[b] = sp / static_cast<double>(n);
            row.post_mean[b] = sq / static_cast<double>(n);
        }
        out.rows.push_back(row);
    }
    if (out.rows.empty()) return out;
    std::vector<double> dcs;
    for (const auto& r : out.rows) dcs.push_back(r.dc);
    std::sort(dcs.begin(), dcs.end());
    out.dc_q1 = stats::quantile_sorted(dcs, 0.25);
    out.dc_q3 = stats::quantile_sorted(dcs, 0.75);
    for (int b = 0; b < raster::kBandCount; ++b) {
        double hp = 0, hq = 0, lp = 0, lq = 0;
        int hn = 0, ln = 0;
        for (const auto& r : out.rows) {
            if (r.dc >= out.dc_q3) hp += r.pre_mean[b], hq += r.post_mean[b], ++hn;
            if (r.dc <= out.dc_q1) lp += r.pre_mean[b], lq += r.post_mean[b], ++ln;
        }
        out.pre_delta[b] = hp / hn - lp / ln;
        out.post_delta[b] = hq / hn - lq / ln;
    }
    return out;
}

AreaDcAnalysis area_dc_analysis(const MetricsReport& report, dataset::Variant variant) {
    AreaDcAnalysis out;
    std::vector<double> fraction, area, dc;
    for (const auto& t : report.tiles) {
        if (!t.dc) {
            ++out.excluded;
            continue;
        }
        const long long total = variant == dataset::Variant::F128
                                    ? static_cast<long long>(dataset::kTileSize) * dataset::kTileSize
                                    : t.total_area;
        AreaDcRow row{t.record_id, total ? static_cast<double>(t.burned_pixels) / static_cast<double>(total) : 0.0,
                      t.burned_pixels, total, *t.dc};
        out.rows.push_back(row);
        fraction.push_back(row.burned_fraction);
        area.push_back(static_cast<double>(row.total_area));
        dc.push_back(row.dc);
    }
    out.spearman_fraction_dc = stats::spearman(fraction, dc);
    out.spearman_area_dc = stats::spearman(area, dc);
    return out;
}

void write_band_dc(const std::filesystem::path& path, const BandDcAnalysis& a) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "record_id\tDC";
    for (const char* img : {"pre", "post"})
        for (int b = 0; b < raster::kBandCount; ++b) out << '\t' << img << '_' << raster::band_name(b);
    out << '\n';
    for (const auto& r : a.rows) {
        out << r.record_id << '\t' << format_double(r.dc);
        for (double v : r.pre_mean) out << '\t' << format_double(v);
        for (double v : r.post_mean) out << '\t' << format_double(v);
        out << '\n';
    }
    out << "#quartile_delta\t" << format_double(a.dc_q3) << '-' << format_double(a.dc_q1);
    for (double v : a.pre_delta) out << '\t' << format_double(v);
    for (double v : a.post_delta) out << '\t' << format_double(v);
    out << "\n#excluded_no_burned\t" << a.excluded_no_burned << "\n#excluded_undefined_dc\t" << a.excluded_undefined_dc
        << '\n';
}

void write_area_dc(const std::filesystem::path& path, const AreaDcAnalysis& a) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "record_id\tburned_fraction\tburned_pixels\ttotal_area\tDC\n";
    for (const auto& r : a.rows)
        out << r.record_id << '\t' << format_double(r.burned_fraction) << '\t' << r.burned_pixels << '\t' << r.total_area
            << '\t' << format_double(r.dc) << '\n';
    out << "#spearman_fraction_dc\t" << format_double(a.spearman_fraction_dc) << "\n#spearman_area_dc\t"
        << format_double(a.spearman_area_dc) << "\n#excluded\t" << a.excluded << '\n';
}

}  // namespace firescar::train
