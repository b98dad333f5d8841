#pragma once

// Elementary models and their losses.
//
// Weights of a model live in one flat vector. Per layer, in order: the weight
// matrix [n_in x n_out] row-major, then the bias [n_out]. Predictions are
// y = h W + b with ReLU between hidden layers and identity on the output.

#include "hypertrain/data.hpp"
#include "hypertrain/rng.hpp"
#include "hypertrain/tape.hpp"
#include "hypertrain/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace hypertrain {

enum class Activation { relu, identity };

struct ModelSpec {
    std::vector<std::size_t> layer_sizes;
    Activation hidden_activation = Activation::relu;

    static ModelSpec linear(std::size_t inputs, std::size_t outputs) { return {{inputs, outputs}}; }

    /// Throws DomainError unless there are at least two layers, all non-empty.
    void validate() const;
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::string describe() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Sum over consecutive layer pairs of n_in * n_out + n_out.
std::size_t param_count(const ModelSpec& spec);

class ElementaryWeights {
public:
    ElementaryWeights() = default;
    ElementaryWeights(ModelSpec spec, Tensor flat);

    static ElementaryWeights zeros(const ModelSpec& spec);
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
    static ElementaryWeights random(const ModelSpec& spec, Rng& rng);

    const ModelSpec& spec() const { return spec_; }
    const Tensor& flat() const { return flat_; }

private:
    ModelSpec spec_;
    Tensor flat_;
};

enum class RegMode { scalar, per_weight };

std::string to_string(RegMode mode);
RegMode parse_reg_mode(const std::string& text);

/// L2 penalty sum_i exp(lambda_i) * w_i^2 over all weights and biases. In
/// scalar mode a single lambda is shared by every weight.
struct RegSpec {
    RegMode mode = RegMode::scalar;

    std::size_t hyper_dim(const ModelSpec& model) const;
};

// Differentiable forms. `flat` holds the model weights; `lambda` the hyperparameters.

Var forward(const ModelSpec& spec, const Var& flat, const Var& x);
/// Mean over the batch and outputs of (y - t)^2.
Var pred_loss(const ModelSpec& spec, const Var& flat, const Batch& batch);
Var reg_loss(const RegSpec& reg, const Var& flat, const Var& lambda);
Var train_loss(const ModelSpec& spec, const RegSpec& reg, const Var& flat, const Var& lambda, const Batch& batch);

// Plain evaluation.

Tensor forward(const ElementaryWeights& w, const Tensor& x);
double pred_loss(const ElementaryWeights& w, const Batch& batch);
double reg_loss(const ElementaryWeights& w, const Tensor& lambda, const RegSpec& reg);
double train_loss(const ElementaryWeights& w, const Tensor& lambda, const RegSpec& reg, const Batch& batch);
/// Fraction of rows whose argmax prediction matches the argmax target.
double accuracy(const ElementaryWeights& w, const Batch& batch);

} // namespace hypertrain
