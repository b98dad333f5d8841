#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every operation whose inputs include a tape Var. Vars built
// with Var::constant() carry no node and never receive gradients; operations
// on constants alone are evaluated eagerly without recording anything, so the
// same model code serves both differentiable and plain evaluation.
//
// Broadcasting is limited to equal shapes and single-element operands.

#include "hypertrain/tensor.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace hypertrain {

class Tape;

class Var {
public:
    Var() = default;

    static Var constant(Tensor value);

    const Tensor& value() const { return *value_; }
    const Shape& shape() const { return value_->shape(); }
    std::size_t size() const { return value_->size(); }

    bool is_constant() const noexcept { return tape_ == nullptr; }
    std::optional<std::size_t> node_id() const;
    const Tape* tape() const noexcept { return tape_; }

private:
    friend class Tape;
    Var(std::shared_ptr<const Tensor> value, Tape* tape, std::size_t node)
        : value_(std::move(value)), tape_(tape), node_(node) {}

    std::shared_ptr<const Tensor> value_;
    Tape* tape_ = nullptr;
    std::size_t node_ = 0;
};

/// Result of Tape::backward: d(loss)/d(node) for every node reached.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

    bool contains(std::size_t node_id) const;
    const Tensor& at(std::size_t node_id) const;
    /// Gradient for a Var; zeros if the loss does not depend on it.
    Tensor of(const Var& v) const;

private:
    std::vector<std::optional<Tensor>> grads_;
};

class Tape {
public:
    /// Accumulates the contribution of an upstream gradient into each parent.
    /// Pointers are null for parents that are constants.
    using BackwardRule = std::function<void(const Tensor& grad, std::span<Tensor* const> parent_grads)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// New differentiable leaf.
    Var variable(Tensor value);

    /// Records a derived value. Parents that are constants are allowed; at
    /// least one parent must belong to this tape.
    Var record(Tensor value, const std::vector<Var>& parents, BackwardRule rule);

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradients of a scalar loss with respect to every node it depends on.
    Gradients backward(const Var& loss) const;

private:
    struct Node {
        std::shared_ptr<const Tensor> value;
        std::vector<std::optional<std::size_t>> parents;
        BackwardRule rule;
    };
    std::vector<Node> nodes_;
};

// Operations. Each returns a constant when every input is a constant.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var relu(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var scale(const Var& a, double factor);
Var reshape(const Var& a, Shape shape);
/// Contiguous run of `shape_size(shape)` elements of the flattened input, starting at offset.
Var slice(const Var& a, std::size_t offset, Shape shape);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

enum class ElementwiseOp { add, sub, mul, relu, exp, square };

/// Dispatches an elementwise op by tag; unary ops take one argument.
Var elementwise(ElementwiseOp op, std::span<const Var> args);

} // namespace hypertrain
