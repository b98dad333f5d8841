#include "hypertrain/model.hpp"

#include "hypertrain/errors.hpp"

#include <cmath>

namespace hypertrain {

void ModelSpec::validate() const
{
    if (layer_sizes.size() < 2)
        throw DomainError("model needs at least an input and an output layer");
    for (std::size_t s : layer_sizes)
        if (s == 0)
            throw DomainError("model layer sizes must be at least 1");
}

std::string ModelSpec::describe() const
{
    std::string out;
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
        if (i)
            out += "-";
        out += std::to_string(layer_sizes[i]);
    }
    return out;
}

std::size_t param_count(const ModelSpec& spec)
{
    spec.validate();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l)
        total += spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1];
    return total;
}

ElementaryWeights::ElementaryWeights(ModelSpec spec, Tensor flat) : spec_(std::move(spec)), flat_(std::move(flat))
{
    const std::size_t expected = param_count(spec_);
    if (flat_.rank() != 1 || flat_.size() != expected)
        throw ShapeError("model " + spec_.describe() + " needs " + std::to_string(expected) +
                         " weights, got shape " + shape_string(flat_.shape()));
}

ElementaryWeights ElementaryWeights::zeros(const ModelSpec& spec)
{
    return ElementaryWeights(spec, Tensor(Shape{param_count(spec)}));
}

ElementaryWeights ElementaryWeights::random(const ModelSpec& spec, Rng& rng)
{
    Tensor flat(Shape{param_count(spec)});
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t n_in = spec.layer_sizes[l], n_out = spec.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < n_in * n_out; ++i)
            flat[offset + i] = dist(rng);
        offset += n_in * n_out + n_out;
    }
    return ElementaryWeights(spec, std::move(flat));
}

std::string to_string(RegMode mode) { return mode == RegMode::scalar ? "scalar" : "per-weight"; }

RegMode parse_reg_mode(const std::string& text)
{
    if (text == "scalar")
        return RegMode::scalar;
    if (text == "per-weight" || text == "per_weight" || text == "perweight")
        return RegMode::per_weight;
    throw ConfigError("unknown regularization mode '" + text + "'");
}

std::size_t RegSpec::hyper_dim(const ModelSpec& model) const
{
    return mode == RegMode::scalar ? 1 : param_count(model);
}

Var forward(const ModelSpec& spec, const Var& flat, const Var& x)
{
    spec.validate();
    if (flat.size() != param_count(spec))
        throw ShapeError("model " + spec.describe() + " expects " + std::to_string(param_count(spec)) +
                         " weights, got " + std::to_string(flat.size()));
    if (x.value().rank() != 2 || x.shape()[1] != spec.input_size())
        throw ShapeError("model " + spec.describe() + " expects input [batch x " +
                         std::to_string(spec.input_size()) + "], got " + shape_string(x.shape()));

    const std::size_t batch = x.shape()[0];
    const Var ones = Var::constant(Tensor::filled(Shape{batch, 1}, 1.0));
    Var h = x;
    std::size_t offset = 0;
    const std::size_t layers = spec.layer_sizes.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t n_in = spec.layer_sizes[l], n_out = spec.layer_sizes[l + 1];
        Var weight = slice(flat, offset, Shape{n_in, n_out});
        offset += n_in * n_out;
        Var bias = slice(flat, offset, Shape{1, n_out});
        offset += n_out;
        h = matmul(h, weight) + matmul(ones, bias);
        if (l + 1 < layers && spec.hidden_activation == Activation::relu)
            h = relu(h);
    }
    return h;
}

Var pred_loss(const ModelSpec& spec, const Var& flat, const Batch& batch)
{
    if (batch.x.empty() || batch.rows() == 0)
        throw DomainError("prediction loss of an empty batch");
    if (batch.t.rank() != 2 || batch.t.rows() != batch.rows() || batch.t.cols() != spec.output_size())
        throw ShapeError("targets " + shape_string(batch.t.shape()) + " do not match model output " +
                         std::to_string(spec.output_size()) + " for " + std::to_string(batch.rows()) + " rows");
    Var y = forward(spec, flat, Var::constant(batch.x));
    return mean(square(y - Var::constant(batch.t)));
}

Var reg_loss(const RegSpec& reg, const Var& flat, const Var& lambda)
{
    const std::size_t expected = reg.mode == RegMode::scalar ? 1 : flat.size();
    if (lambda.size() != expected)
        throw ShapeError(to_string(reg.mode) + " regularization needs " + std::to_string(expected) +
                         " hyperparameters, got " + std::to_string(lambda.size()));
    if (reg.mode == RegMode::scalar)
        return sum(exp(lambda) * square(flat));
    return sum(exp(reshape(lambda, flat.shape())) * square(flat));
}

Var train_loss(const ModelSpec& spec, const RegSpec& reg, const Var& flat, const Var& lambda, const Batch& batch)
{
    return pred_loss(spec, flat, batch) + reg_loss(reg, flat, lambda);
}

Tensor forward(const ElementaryWeights& w, const Tensor& x)
{
    return forward(w.spec(), Var::constant(w.flat()), Var::constant(x)).value();
}

double pred_loss(const ElementaryWeights& w, const Batch& batch)
{
    return pred_loss(w.spec(), Var::constant(w.flat()), batch).value().item();
}

double reg_loss(const ElementaryWeights& w, const Tensor& lambda, const RegSpec& reg)
{
    return reg_loss(reg, Var::constant(w.flat()), Var::constant(lambda)).value().item();
}

double train_loss(const ElementaryWeights& w, const Tensor& lambda, const RegSpec& reg, const Batch& batch)
{
    return train_loss(w.spec(), reg, Var::constant(w.flat()), Var::constant(lambda), batch).value().item();
}

double accuracy(const ElementaryWeights& w, const Batch& batch)
{
    const Tensor y = forward(w, batch.x);
    const std::size_t n = y.rows(), k = y.cols();
    if (n == 0)
        throw DomainError("accuracy of an empty batch");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best_y = 0, best_t = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (y.at(r, c) > y.at(r, best_y))
                best_y = c;
            if (batch.t.at(r, c) > batch.t.at(r, best_t))
                best_t = c;
        }
        correct += best_y == best_t;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

} // namespace hypertrain
