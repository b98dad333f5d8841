#pragma once

// Hypernetworks: maps from hyperparameters lambda to flat elementary weights.
//
//   linear         w = lambda W + b
//   factorized(k)  w = (lambda W1 + b1) W2 + b2     (linear bottleneck of width k)
//   mlp(h)         w = relu(lambda W1 + b1) W2 + b2
//
// Parameters are flattened with the same per-layer layout as elementary
// models (weight matrix row-major, then bias).

#include "hypertrain/model.hpp"
#include "hypertrain/tape.hpp"
#include "hypertrain/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hypertrain {

enum class HypernetArch { linear, factorized, mlp };

std::string to_string(HypernetArch arch);
HypernetArch parse_hypernet_arch(const std::string& text);

struct HypernetSpec {
    HypernetArch arch = HypernetArch::linear;
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    /// Bottleneck width (factorized) or hidden width (mlp); unused for linear.
    std::size_t hidden = 0;

    static HypernetSpec linear(std::size_t in, std::size_t out) { return {HypernetArch::linear, in, out, 0}; }
    static HypernetSpec factorized(std::size_t in, std::size_t k, std::size_t out)
    {
        return {HypernetArch::factorized, in, out, k};
    }
    static HypernetSpec mlp(std::size_t in, std::size_t h, std::size_t out) { return {HypernetArch::mlp, in, out, h}; }

    void validate() const;
    /// The equivalent dense stack used for evaluation.
    ModelSpec as_model() const;
    std::string describe() const;

    friend bool operator==(const HypernetSpec&, const HypernetSpec&) = default;
};

std::size_t param_count(const HypernetSpec& spec);

/// A hyperparameter vector in log-regularization space.
struct HyperPoint {
    Tensor lambda;

    static HyperPoint filled(std::size_t dim, double value) { return {Tensor::filled(Shape{dim}, value)}; }
    std::size_t dim() const { return lambda.size(); }
};

class HypernetParams {
public:
    HypernetParams() = default;
    HypernetParams(HypernetSpec spec, Tensor flat);

    /// Weights ~ gain * U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases; deterministic per seed.
    static HypernetParams init(const HypernetSpec& spec, std::uint64_t seed, double gain = 1.0);

    const HypernetSpec& spec() const { return spec_; }
    const Tensor& flat() const { return flat_; }
    Tensor& flat() { return flat_; }

private:
    HypernetSpec spec_;
    Tensor flat_;
};

/// Differentiable emission: flat elementary weights [out_dim].
Var emit(const HypernetSpec& spec, const Var& phi, const Var& lambda);

ElementaryWeights emit(const HypernetParams& params, const HyperPoint& point, const ModelSpec& model);

// Checkpoint format, little-endian:
//   "HTHN" | u32 version=1 | u32 arch | u64 in_dim | u64 hidden | u64 out_dim | u64 count | f64[count]
std::vector<std::uint8_t> serialize(const HypernetParams& params);
HypernetParams deserialize_hypernet(const std::vector<std::uint8_t>& bytes);
void save_hypernet(const std::string& path, const HypernetParams& params);
HypernetParams load_hypernet(const std::string& path);

// Elementary weights, little-endian:
//   "HTEW" | u32 version=1 | u64 layers | u64 sizes[layers] | u64 count | f64[count]
std::vector<std::uint8_t> serialize(const ElementaryWeights& weights);
ElementaryWeights deserialize_weights(const std::vector<std::uint8_t>& bytes);
void save_weights(const std::string& path, const ElementaryWeights& weights);
ElementaryWeights load_weights(const std::string& path);

} // namespace hypertrain
