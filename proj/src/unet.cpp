#include "firescar/unet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>

#include "binary_io.hpp"
#include "layers.hpp"

namespace firescar::unet {

std::vector<int> UNetConfig::encoder_widths() const {
    std::vector<int> w;
    for (int i = 0; i < depth; ++i) w.push_back(initial_filters << i);
    return w;
}

void UNetConfig::validate() const {
    if (in_channels < 1) throw ContractViolation("UNetConfig: in_channels must be >= 1");
    if (initial_filters < 1) throw ContractViolation("UNetConfig: initial_filters must be >= 1");
    if (depth < 2 || depth > 8) throw ContractViolation("UNetConfig: depth must be in [2, 8]");
    if (output_channels < 1) throw ContractViolation("UNetConfig: output_channels must be >= 1");
    const int stride = 1 << (depth - 1);
    if (input_size < stride || input_size % stride != 0)
        throw ContractViolation("UNetConfig: input_size " + std::to_string(input_size) + " is not divisible by " +
                                std::to_string(stride) + " (2^(depth-1))");
}

KeyValues UNetConfig::to_key_values() const {
    return {{"in_channels", std::to_string(in_channels)},
            {"initial_filters", std::to_string(initial_filters)},
            {"depth", std::to_string(depth)},
            {"input_size", std::to_string(input_size)},
            {"output_channels", std::to_string(output_channels)},
            {"activation", activation == Activation::ReLU ? "relu" : "leaky_relu"},
            {"normalization", normalization == Normalization::None ? "none" : "batch"}};
}

UNetConfig UNetConfig::from_key_values(const KeyValues& kv) {
    UNetConfig c;
    c.in_channels = static_cast<int>(kv_int(kv, "in_channels"));
    c.initial_filters = static_cast<int>(kv_int(kv, "initial_filters"));
    c.depth = static_cast<int>(kv_int(kv, "depth"));
    c.input_size = static_cast<int>(kv_int(kv, "input_size"));
    c.output_channels = static_cast<int>(kv_int(kv, "output_channels"));
    const auto& act = kv_string(kv, "activation");
    if (act == "relu")
        c.activation = Activation::ReLU;
    else if (act == "leaky_relu")
        c.activation = Activation::LeakyReLU;
    else
        throw FormatError("unknown activation '" + act + "'");
    const auto& norm = kv_string(kv, "normalization");
    if (norm == "none")
        c.normalization = Normalization::None;
    else if (norm == "batch")
        c.normalization = Normalization::Batch;
    else
        throw FormatError("unknown normalization '" + norm + "'");
    c.validate();
    return c;
}

namespace {

struct ConvPlan {
    std::string name;
    int in;
    int out;
    int kernel;
    bool activated;
};

/// Every convolution of the network in forward order, grouped by block.
std::vector<std::vector<ConvPlan>> plan_blocks(const UNetConfig& c) {
    c.validate();
    const auto widths = c.encoder_widths();
    std::vector<std::vector<ConvPlan>> blocks;
    int in = c.in_channels;
    for (int i = 0; i + 1 < c.depth; ++i) {
        const auto p = "enc" + std::to_string(i);
        blocks.push_back({{p + ".conv0", in, widths[i], 3, true}, {p + ".conv1", widths[i], widths[i], 3, true}});
        in = widths[i];
    }
    blocks.push_back({{"bottom.conv0", in, widths.back(), 3, true}});
    int below = widths.back();
    for (int i = c.depth - 2; i >= 0; --i) {
        const auto p = "dec" + std::to_string(i);
        blocks.push_back(
            {{p + ".conv0", below + widths[i], widths[i], 3, true}, {p + ".conv1", widths[i], widths[i], 3, true}});
        below = widths[i];
    }
    blocks.push_back({{"head", widths[0], c.output_channels, 1, false}});
    return blocks;
}

}  // namespace

std::size_t parameter_count(const UNetConfig& config) {
    std::size_t n = 0;
    for (const auto& block : plan_blocks(config))
        for (const auto& conv : block) {
            n += static_cast<std::size_t>(conv.in) * conv.out * conv.kernel * conv.kernel + conv.out;
            if (conv.activated && config.normalization == Normalization::Batch) n += 2 * static_cast<std::size_t>(conv.out);
        }
    return n;
}

template <typename T>
struct ConvUnit {
    nn::Conv2d<T> conv;
    std::optional<nn::BatchNorm2d<T>> bn;
    std::optional<nn::Activation<T>> act;

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> y = conv.forward(x);
        if (bn) y = bn->forward(y, training);
        if (act) y = act->forward(y);
        return y;
    }
    Tensor<T> backward(Tensor<T> g) {
        if (act) g = act->backward(g);
        if (bn) g = bn->backward(g);
        return conv.backward(g);
    }
};

template <typename T>
struct Block {
    std::vector<ConvUnit<T>> units;

    Tensor<T> forward(Tensor<T> x, bool training) {
        for (auto& u : units) x = u.forward(x, training);
        return x;
    }
    Tensor<T> backward(Tensor<T> g) {
        for (auto it = units.rbegin(); it != units.rend(); ++it) g = it->backward(std::move(g));
        return g;
    }
};

template <typename T>
struct UNet<T>::Impl {
    UNetConfig config;
    std::vector<Block<T>> encoders;  // depth - 1 double-conv blocks
    std::vector<nn::MaxPool2x2<T>> pools;
    Block<T> bottom;
    std::vector<Block<T>> decoders;  // decoders[k] runs at encoder level depth-2-k
    std::vector<nn::UpsampleBilinear2x<T>> ups;
    Block<T> head;
    std::vector<int> skip_channels;
    Tensor<T> probabilities;

    explicit Impl(const UNetConfig& c, std::uint64_t seed) : config(c) {
        std::mt19937_64 rng(seed);
        const auto act = c.activation == Activation::ReLU ? nn::ActivationKind::ReLU : nn::ActivationKind::LeakyReLU;
        auto make_block = [&](const std::vector<ConvPlan>& plans) {
            Block<T> b;
            for (const auto& p : plans) {
                ConvUnit<T> u{nn::Conv2d<T>(p.in, p.out, p.kernel, p.name), std::nullopt, std::nullopt};
                u.conv.init(rng);
                if (p.activated) {
                    if (c.normalization == Normalization::Batch) u.bn.emplace(p.out, p.name + ".bn");
                    u.act.emplace(act);
                }
                b.units.push_back(std::move(u));
            }
            return b;
        };
        const auto blocks = plan_blocks(c);
        std::size_t k = 0;
        for (int i = 0; i + 1 < c.depth; ++i) {
            encoders.push_back(make_block(blocks[k++]));
            pools.emplace_back();
            skip_channels.push_back(c.initial_filters << i);
        }
        bottom = make_block(blocks[k++]);
        for (int i = 0; i + 1 < c.depth; ++i) {
            decoders.push_back(make_block(blocks[k++]));
            ups.emplace_back();
        }
        head = make_block(blocks[k++]);
    }

    template <typename F>
    void for_each_unit(F&& f) {
        for (auto& b : encoders)
            for (auto& u : b.units) f(u);
        for (auto& u : bottom.units) f(u);
        for (auto& b : decoders)
            for (auto& u : b.units) f(u);
        for (auto& u : head.units) f(u);
    }
};

template <typename T>
UNet<T>::UNet(const UNetConfig& config, std::uint64_t seed) : impl_(std::make_unique<Impl>(config, seed)) {}

template <typename T>
UNet<T>::~UNet() = default;
template <typename T>
UNet<T>::UNet(UNet&&) noexcept = default;
template <typename T>
UNet<T>& UNet<T>::operator=(UNet&&) noexcept = default;

template <typename T>
const UNetConfig& UNet<T>::config() const {
    return impl_->config;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, Mode mode) {
    const auto& c = impl_->config;
    if (x.c != c.in_channels)
        throw ContractViolation("UNet::forward: expected " + std::to_string(c.in_channels) + " channels, got " +
                                std::to_string(x.c));
    if (x.h != c.input_size || x.w != c.input_size)
        throw ContractViolation("UNet::forward: expected " + std::to_string(c.input_size) + "x" +
                                std::to_string(c.input_size) + " input, got " + x.shape_string());
    const bool training = mode == Mode::Train;
    auto& m = *impl_;
    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (std::size_t i = 0; i < m.encoders.size(); ++i) {
        skips.push_back(m.encoders[i].forward(std::move(h), training));
        h = m.pools[i].forward(skips.back());
    }
    h = m.bottom.forward(std::move(h), training);
    for (std::size_t k = 0; k < m.decoders.size(); ++k) {
        const std::size_t level = m.encoders.size() - 1 - k;
        Tensor<T> up = m.ups[k].forward(h);
        h = m.decoders[k].forward(nn::concat_channels(skips[level], up), training);
    }
    Tensor<T> logits = m.head.forward(std::move(h), training);
    for (auto& v : logits.data) v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
    m.probabilities = logits;
    return logits;
}

template <typename T>
void UNet<T>::backward(const Tensor<T>& grad_probabilities) {
    auto& m = *impl_;
    if (!grad_probabilities.same_shape(m.probabilities))
        throw ContractViolation("UNet::backward: gradient does not match the last forward output");
    Tensor<T> g = grad_probabilities;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        const T p = m.probabilities.data[i];
        g.data[i] *= p * (T{1} - p);
    }
    g = m.head.backward(std::move(g));
    std::vector<Tensor<T>> skip_grads(m.encoders.size());
    for (std::size_t k = m.decoders.size(); k-- > 0;) {
        const std::size_t level = m.encoders.size() - 1 - k;
        Tensor<T> gc = m.decoders[k].backward(std::move(g));
        Tensor<T> gup;
        nn::split_channels(gc, m.skip_channels[level], skip_grads[level], gup);
        g = m.ups[k].backward(gup);
    }
    g = m.bottom.backward(std::move(g));
    for (std::size_t i = m.encoders.size(); i-- > 0;) {
        g = m.pools[i].backward(g);
        for (std::size_t q = 0; q < g.data.size(); ++q) g.data[q] += skip_grads[i].data[q];
        g = m.encoders[i].backward(std::move(g));
    }
}

template <typename T>
std::vector<Parameter<T>*> UNet<T>::parameters() {
    std::vector<Parameter<T>*> out;
    impl_->for_each_unit([&](ConvUnit<T>& u) {
        out.push_back(&u.conv.weight);
        out.push_back(&u.conv.bias);
        if (u.bn) {
            out.push_back(&u.bn->gamma);
            out.push_back(&u.bn->beta);
        }
    });
    return out;
}

template <typename T>
void UNet<T>::zero_grad() {
    for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), T{});
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
    return unet::parameter_count(impl_->config);
}

template <typename T>
std::vector<StateEntry<T>> UNet<T>::state() {
    std::vector<StateEntry<T>> out;
    impl_->for_each_unit([&](ConvUnit<T>& u) {
        out.push_back({u.conv.weight.name, u.conv.weight.shape, &u.conv.weight.value});
        out.push_back({u.conv.bias.name, u.conv.bias.shape, &u.conv.bias.value});
        if (u.bn) {
            const int ch = static_cast<int>(u.bn->running_mean.size());
            out.push_back({u.bn->gamma.name, u.bn->gamma.shape, &u.bn->gamma.value});
            out.push_back({u.bn->beta.name, u.bn->beta.shape, &u.bn->beta.value});
            const auto base = u.bn->gamma.name.substr(0, u.bn->gamma.name.size() - std::string(".gamma").size());
            out.push_back({base + ".running_mean", {ch}, &u.bn->running_mean});
            out.push_back({base + ".running_var", {ch}, &u.bn->running_var});
        }
    });
    return out;
}

template <typename T>
std::vector<std::vector<T>> UNet<T>::snapshot() {
    std::vector<std::vector<T>> out;
    for (auto& e : state()) out.push_back(*e.values);
    return out;
}

template <typename T>
void UNet<T>::restore(const std::vector<std::vector<T>>& snap) {
    auto entries = state();
    if (snap.size() != entries.size()) throw ContractViolation("UNet::restore: snapshot from a different architecture");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (snap[i].size() != entries[i].values->size())
            throw ContractViolation("UNet::restore: size mismatch for " + entries[i].name);
        *entries[i].values = snap[i];
    }
}

template class UNet<float>;
template class UNet<double>;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kCheckpointMagic[4] = {'F', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, UNet<T>& model, const KeyValues& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
    out.write(kCheckpointMagic, 4);
    io::put<std::uint32_t>(out, kCheckpointVersion);
    io::put_string(out, format_key_values(model.config().to_key_values()));
    io::put_string(out, format_key_values(metadata));
    io::put<std::uint32_t>(out, sizeof(T) == 4 ? 1u : 2u);
    const auto entries = model.state();
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        io::put_string(out, e.name);
        io::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (int d : e.shape) io::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        io::put_array(out, e.values->data(), e.values->size());
    }
    if (!out) throw std::runtime_error("write failed for checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("'" + path.string() + "' is not a checkpoint");
    if (io::get<std::uint32_t>(in, "version") != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    Checkpoint ck;
    ck.config = UNetConfig::from_key_values(parse_key_values(io::get_string(in, "config"), "checkpoint config"));
    ck.metadata = parse_key_values(io::get_string(in, "metadata"), "checkpoint metadata");
    const auto dtype = io::get<std::uint32_t>(in, "dtype");
    if (dtype != 1 && dtype != 2) throw FormatError("unsupported checkpoint dtype");
    const auto count = io::get<std::uint32_t>(in, "entry count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = io::get_string(in, "entry name");
        const auto ndim = io::get<std::uint32_t>(in, "ndim");
        if (ndim > 8) throw FormatError("implausible tensor rank in checkpoint");
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) n *= io::get<std::uint32_t>(in, "dim");
        std::vector<double> values(n);
        if (dtype == 1) {
            std::vector<float> f(n);
            io::get_array(in, f.data(), n, name.c_str());
            std::copy(f.begin(), f.end(), values.begin());
        } else {
            io::get_array(in, values.data(), n, name.c_str());
        }
        ck.tensors.emplace_back(std::move(name), std::move(values));
    }
    return ck;
}

template <typename T>
void load_checkpoint(UNet<T>& model, const Checkpoint& ck) {
    if (!(ck.config == model.config()))
        throw ContractViolation("checkpoint config (initial_filters=" + std::to_string(ck.config.initial_filters) +
                                ", depth=" + std::to_string(ck.config.depth) + ") does not match the model");
    auto entries = model.state();
    if (entries.size() != ck.tensors.size()) throw ContractViolation("checkpoint tensor count does not match the model");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, values] = ck.tensors[i];
        if (name != entries[i].name || values.size() != entries[i].values->size())
            throw ContractViolation("checkpoint tensor '" + name + "' does not match model tensor '" + entries[i].name + "'");
        std::transform(values.begin(), values.end(), entries[i].values->begin(), [](double v) { return static_cast<T>(v); });
    }
}

template void save_checkpoint(const std::filesystem::path&, UNet<float>&, const KeyValues&);
template void save_checkpoint(const std::filesystem::path&, UNet<double>&, const KeyValues&);
template void load_checkpoint(UNet<float>&, const Checkpoint&);
template void load_checkpoint(UNet<double>&, const Checkpoint&);

}  // namespace firescar::unet
