#include "hypertrain/hypernet.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/idx.hpp"

#include <bit>
#include <cmath>
#include <fstream>

namespace hypertrain {

std::string to_string(HypernetArch arch)
{
    switch (arch) {
    case HypernetArch::linear:
        return "linear";
    case HypernetArch::factorized:
        return "factorized";
    case HypernetArch::mlp:
        return "mlp";
    }
    return "?";
}

HypernetArch parse_hypernet_arch(const std::string& text)
{
    if (text == "linear")
        return HypernetArch::linear;
    if (text == "factorized")
        return HypernetArch::factorized;
    if (text == "mlp")
        return HypernetArch::mlp;
    throw ConfigError("unknown hypernetwork architecture '" + text + "'");
}

void HypernetSpec::validate() const
{
    if (in_dim == 0 || out_dim == 0)
        throw DomainError("hypernetwork dimensions must be at least 1");
    if (arch != HypernetArch::linear && hidden == 0)
        throw DomainError(to_string(arch) + " hypernetwork needs a hidden width of at least 1");
}

ModelSpec HypernetSpec::as_model() const
{
    validate();
    switch (arch) {
    case HypernetArch::linear:
        return ModelSpec{{in_dim, out_dim}, Activation::identity};
    case HypernetArch::factorized:
        return ModelSpec{{in_dim, hidden, out_dim}, Activation::identity};
    case HypernetArch::mlp:
        return ModelSpec{{in_dim, hidden, out_dim}, Activation::relu};
    }
    throw DomainError("unknown hypernetwork architecture");
}

std::string HypernetSpec::describe() const
{
    std::string out = to_string(arch);
    if (arch != HypernetArch::linear)
        out += "(" + std::to_string(hidden) + ")";
    return out + " " + std::to_string(in_dim) + "->" + std::to_string(out_dim);
}

std::size_t param_count(const HypernetSpec& spec)
{
    spec.validate();
    if (spec.arch == HypernetArch::linear)
        return spec.in_dim * spec.out_dim + spec.out_dim;
    return spec.in_dim * spec.hidden + spec.hidden + spec.hidden * spec.out_dim + spec.out_dim;
}

HypernetParams::HypernetParams(HypernetSpec spec, Tensor flat) : spec_(spec), flat_(std::move(flat))
{
    const std::size_t expected = param_count(spec_);
    if (flat_.rank() != 1 || flat_.size() != expected)
        throw ShapeError("hypernetwork " + spec_.describe() + " needs " + std::to_string(expected) +
                         " parameters, got shape " + shape_string(flat_.shape()));
}

HypernetParams HypernetParams::init(const HypernetSpec& spec, std::uint64_t seed, double gain)
{
    if (!std::isfinite(gain) || gain < 0.0)
        throw ConfigError("hypernetwork init gain must be finite and non-negative, got " + std::to_string(gain));
    Rng rng(seed);
    ElementaryWeights w = ElementaryWeights::random(spec.as_model(), rng);
    Tensor flat = w.flat();
    if (gain != 1.0)
        for (auto& v : flat.data())
            v *= gain; // biases are zero, so this scales only the weight matrices
    return HypernetParams(spec, std::move(flat));
}

Var emit(const HypernetSpec& spec, const Var& phi, const Var& lambda)
{
    if (lambda.size() != spec.in_dim)
        throw ShapeError("hypernetwork " + spec.describe() + " takes " + std::to_string(spec.in_dim) +
                         " hyperparameters, got " + std::to_string(lambda.size()));
    Var row = reshape(lambda, Shape{1, spec.in_dim});
    Var out = forward(spec.as_model(), phi, row);
    return reshape(out, Shape{spec.out_dim});
}

ElementaryWeights emit(const HypernetParams& params, const HyperPoint& point, const ModelSpec& model)
{
    if (param_count(model) != params.spec().out_dim)
        throw ShapeError("hypernetwork emits " + std::to_string(params.spec().out_dim) + " weights but model " +
                         model.describe() + " has " + std::to_string(param_count(model)));
    Var w = emit(params.spec(), Var::constant(params.flat()), Var::constant(point.lambda));
    return ElementaryWeights(model, w.value());
}

namespace {

constexpr char kMagic[4] = {'H', 'T', 'H', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8 * 4;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t offset, std::size_t n)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
        v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

} // namespace

std::vector<std::uint8_t> serialize(const HypernetParams& params)
{
    const HypernetSpec& s = params.spec();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.reserve(kHeaderSize + 8 * params.flat().size());
    put_le(out, kVersion, 4);
    put_le(out, static_cast<std::uint32_t>(s.arch), 4);
    put_le(out, s.in_dim, 8);
    put_le(out, s.hidden, 8);
    put_le(out, s.out_dim, 8);
    put_le(out, params.flat().size(), 8);
    for (double v : params.flat().data())
        put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
}

HypernetParams deserialize_hypernet(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < kHeaderSize)
        throw FormatError("hypernetwork checkpoint header truncated", bytes.size());
    if (!std::equal(kMagic, kMagic + 4, bytes.begin()))
        throw FormatError("not a hypernetwork checkpoint", 0);
    if (get_le(bytes, 4, 4) != kVersion)
        throw FormatError("unsupported checkpoint version", 4);
    const auto arch = get_le(bytes, 8, 4);
    if (arch > 2)
        throw FormatError("unknown hypernetwork architecture tag", 8);
    HypernetSpec spec;
    spec.arch = static_cast<HypernetArch>(arch);
    spec.in_dim = get_le(bytes, 12, 8);
    spec.hidden = get_le(bytes, 20, 8);
    spec.out_dim = get_le(bytes, 28, 8);
    const std::size_t count = get_le(bytes, 36, 8);
    if (bytes.size() != kHeaderSize + 8 * count)
        throw FormatError("checkpoint length does not match parameter count", std::min(bytes.size(), kHeaderSize));
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i)
        values[i] = std::bit_cast<double>(get_le(bytes, kHeaderSize + 8 * i, 8));
    return HypernetParams(spec, Tensor::vector(std::move(values)));
}

void save_hypernet(const std::string& path, const HypernetParams& params)
{
    const auto bytes = serialize(params);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

HypernetParams load_hypernet(const std::string& path) { return deserialize_hypernet(idx::read_bytes(path)); }

namespace {

constexpr char kWeightsMagic[4] = {'H', 'T', 'E', 'W'};

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

std::vector<std::uint8_t> serialize(const ElementaryWeights& weights)
{
    const auto& sizes = weights.spec().layer_sizes;
    std::vector<std::uint8_t> out(kWeightsMagic, kWeightsMagic + 4);
    put_le(out, kVersion, 4);
    put_le(out, sizes.size(), 8);
    for (std::size_t s : sizes)
        put_le(out, s, 8);
    put_le(out, weights.flat().size(), 8);
    for (double v : weights.flat().data())
        put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
}

ElementaryWeights deserialize_weights(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 16)
        throw FormatError("weights checkpoint header truncated", bytes.size());
    if (!std::equal(kWeightsMagic, kWeightsMagic + 4, bytes.begin()))
        throw FormatError("not a weights checkpoint", 0);
    if (get_le(bytes, 4, 4) != kVersion)
        throw FormatError("unsupported checkpoint version", 4);
    const std::size_t layers = get_le(bytes, 8, 8);
    if (layers < 2 || layers > (bytes.size() - 16) / 8)
        throw FormatError("implausible layer count", 8);
    ModelSpec spec;
    for (std::size_t l = 0; l < layers; ++l)
        spec.layer_sizes.push_back(get_le(bytes, 16 + 8 * l, 8));
    const std::size_t at = 16 + 8 * layers;
    if (bytes.size() < at + 8)
        throw FormatError("weights checkpoint header truncated", bytes.size());
    const std::size_t count = get_le(bytes, at, 8);
    if (bytes.size() != at + 8 + 8 * count)
        throw FormatError("checkpoint length does not match parameter count", at);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i)
        values[i] = std::bit_cast<double>(get_le(bytes, at + 8 + 8 * i, 8));
    try {
        spec.validate();
        return ElementaryWeights(spec, Tensor::vector(std::move(values)));
    } catch (const Error& e) {
        throw FormatError(std::string("inconsistent weights checkpoint: ") + e.what(), at);
    }
}

void save_weights(const std::string& path, const ElementaryWeights& weights) { write_bytes(path, serialize(weights)); }

ElementaryWeights load_weights(const std::string& path) { return deserialize_weights(idx::read_bytes(path)); }

} // namespace hypertrain
