#include "hypertrain/tape.hpp"

#include "hypertrain/errors.hpp"

#include <cmath>

namespace hypertrain {

Var Var::constant(Tensor value)
{
    return Var(std::make_shared<const Tensor>(std::move(value)), nullptr, 0);
}

std::optional<std::size_t> Var::node_id() const
{
    if (tape_ == nullptr)
        return std::nullopt;
    return node_;
}

bool Gradients::contains(std::size_t node_id) const
{
    return node_id < grads_.size() && grads_[node_id].has_value();
}

const Tensor& Gradients::at(std::size_t node_id) const
{
    if (!contains(node_id))
        throw TapeError("no gradient recorded for node " + std::to_string(node_id));
    return *grads_[node_id];
}

Tensor Gradients::of(const Var& v) const
{
    auto id = v.node_id();
    if (id && contains(*id))
        return *grads_[*id];
    return Tensor(v.shape());
}

Var Tape::variable(Tensor value)
{
    auto ptr = std::make_shared<const Tensor>(std::move(value));
    nodes_.push_back(Node{ptr, {}, {}});
    return Var(std::move(ptr), this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardRule rule)
{
    Node node;
    node.value = std::make_shared<const Tensor>(std::move(value));
    node.rule = std::move(rule);
    node.parents.reserve(parents.size());
    for (const Var& p : parents) {
        if (p.tape_ == nullptr) {
            node.parents.push_back(std::nullopt);
        } else if (p.tape_ != this) {
            throw TapeError("operation mixes Vars from different tapes");
        } else {
            node.parents.push_back(p.node_);
        }
    }
    auto ptr = node.value;
    nodes_.push_back(std::move(node));
    return Var(std::move(ptr), this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const
{
    if (loss.tape_ != this)
        throw TapeError(loss.tape_ == nullptr ? "backward on a constant loss"
                                              : "backward on a Var from another tape");
    if (loss.size() != 1)
        throw TapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[loss.node_] = Tensor::filled(loss.shape(), 1.0);

    std::vector<Tensor*> parent_ptrs;
    for (std::size_t i = loss.node_ + 1; i-- > 0;) {
        if (!grads[i])
            continue;
        const Node& node = nodes_[i];
        if (!node.rule)
            continue;
        parent_ptrs.assign(node.parents.size(), nullptr);
        for (std::size_t k = 0; k < node.parents.size(); ++k) {
            if (!node.parents[k])
                continue;
            std::size_t pid = *node.parents[k];
            if (!grads[pid])
                grads[pid] = Tensor(nodes_[pid].value->shape());
            parent_ptrs[k] = &*grads[pid];
        }
        node.rule(*grads[i], parent_ptrs);
    }
    return Gradients(std::move(grads));
}

namespace {

Tape* common_tape(std::initializer_list<const Var*> args)
{
    Tape* found = nullptr;
    for (const Var* v : args) {
        Tape* t = const_cast<Tape*>(v->tape());
        if (t == nullptr)
            continue;
        if (found != nullptr && found != t)
            throw TapeError("operation mixes Vars from different tapes");
        found = t;
    }
    return found;
}

Var finish(Tape* tape, Tensor value, std::vector<Var> parents, Tape::BackwardRule rule)
{
    if (tape == nullptr)
        return Var::constant(std::move(value));
    return tape->record(std::move(value), parents, std::move(rule));
}

enum class Broadcast { same, scalar_b, scalar_a };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() == b.shape())
        return Broadcast::same;
    if (b.size() == 1)
        return Broadcast::scalar_b;
    if (a.size() == 1)
        return Broadcast::scalar_a;
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
}

template <class F>
Tensor binary_forward(const Tensor& a, const Tensor& b, Broadcast kind, F f)
{
    switch (kind) {
    case Broadcast::same: {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = f(a[i], b[i]);
        return out;
    }
    case Broadcast::scalar_b: {
        Tensor out(a.shape());
        const double s = b[0];
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = f(a[i], s);
        return out;
    }
    case Broadcast::scalar_a: {
        Tensor out(b.shape());
        const double s = a[0];
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = f(s, b[i]);
        return out;
    }
    }
    return {};
}

// Adds `g * coef[i]` into `target`, reducing over the broadcast dimension when
// the target is the single-element side.
void accumulate_scaled(Tensor& target, const Tensor& g, const Tensor* coef, bool target_is_scalar,
                       double sign)
{
    if (target_is_scalar) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            acc += g[i] * (coef ? (coef->size() == 1 ? (*coef)[0] : (*coef)[i]) : 1.0);
        target[0] += sign * acc;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        target[i] += sign * g[i] * (coef ? (coef->size() == 1 ? (*coef)[0] : (*coef)[i]) : 1.0);
}

} // namespace

Var matmul(const Var& a, const Var& b)
{
    Tape* tape = common_tape({&a, &b});
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
        throw ShapeError("matmul: incompatible shapes " + shape_string(A.shape()) + " and " +
                         shape_string(B.shape()));
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C(Shape{m, n});
    const double* pa = A.data().data();
    const double* pb = B.data().data();
    double* pc = C.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            if (aip == 0.0)
                continue;
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += aip * brow[j];
        }
    }
    return finish(tape, std::move(C), {a, b}, [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> pg) {
        const double* pgv = g.data().data();
        if (pg[0]) {
            // dA = G * B^T
            const double* pbv = b.value().data().data();
            double* da = pg[0]->data().data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = pgv + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = pbv + p * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += grow[j] * brow[j];
                    da[i * k + p] += acc;
                }
            }
        }
        if (pg[1]) {
            // dB = A^T * G
            const double* pav = a.value().data().data();
            double* db = pg[1]->data().data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = pgv + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = pav[i * k + p];
                    if (aip == 0.0)
                        continue;
                    double* drow = db + p * n;
                    for (std::size_t j = 0; j < n; ++j)
                        drow[j] += aip * grow[j];
                }
            }
        }
    });
}

Var add(const Var& a, const Var& b)
{
    Tape* tape = common_tape({&a, &b});
    const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
    return finish(tape, std::move(out), {a, b}, [kind](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0])
            accumulate_scaled(*pg[0], g, nullptr, kind == Broadcast::scalar_a, 1.0);
        if (pg[1])
            accumulate_scaled(*pg[1], g, nullptr, kind == Broadcast::scalar_b, 1.0);
    });
}

Var sub(const Var& a, const Var& b)
{
    Tape* tape = common_tape({&a, &b});
    const Broadcast kind = broadcast_kind(a.value(), b.value(), "sub");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
    return finish(tape, std::move(out), {a, b}, [kind](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0])
            accumulate_scaled(*pg[0], g, nullptr, kind == Broadcast::scalar_a, 1.0);
        if (pg[1])
            accumulate_scaled(*pg[1], g, nullptr, kind == Broadcast::scalar_b, -1.0);
    });
}

Var mul(const Var& a, const Var& b)
{
    Tape* tape = common_tape({&a, &b});
    const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
    return finish(tape, std::move(out), {a, b}, [a, b, kind](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0])
            accumulate_scaled(*pg[0], g, &b.value(), kind == Broadcast::scalar_a, 1.0);
        if (pg[1])
            accumulate_scaled(*pg[1], g, &a.value(), kind == Broadcast::scalar_b, 1.0);
    });
}

// relu'(0) is taken to be 0.
Var relu(const Var& a)
{
    Tape* tape = common_tape({&a});
    Tensor out(a.shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return finish(tape, std::move(out), {a}, [a](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        const Tensor& x = a.value();
        Tensor& d = *pg[0];
        for (std::size_t i = 0; i < d.size(); ++i)
            if (x[i] > 0.0)
                d[i] += g[i];
    });
}

Var exp(const Var& a)
{
    Tape* tape = common_tape({&a});
    Tensor out(a.shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::exp(x[i]);
    auto result = std::make_shared<Tensor>(out);
    return finish(tape, std::move(out), {a}, [result](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        Tensor& d = *pg[0];
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] += g[i] * (*result)[i];
    });
}

Var square(const Var& a)
{
    Tape* tape = common_tape({&a});
    Tensor out(a.shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x[i] * x[i];
    return finish(tape, std::move(out), {a}, [a](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        const Tensor& x = a.value();
        Tensor& d = *pg[0];
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] += 2.0 * x[i] * g[i];
    });
}

Var sum(const Var& a)
{
    if (a.size() == 0)
        throw DomainError("sum of an empty tensor");
    Tape* tape = common_tape({&a});
    double acc = 0.0;
    for (double v : a.value().data())
        acc += v;
    return finish(tape, Tensor::scalar(acc), {a}, [](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        const double gv = g[0];
        for (double& d : pg[0]->data())
            d += gv;
    });
}

Var mean(const Var& a)
{
    if (a.size() == 0)
        throw DomainError("mean of an empty tensor");
    Tape* tape = common_tape({&a});
    const double n = static_cast<double>(a.size());
    double acc = 0.0;
    for (double v : a.value().data())
        acc += v;
    return finish(tape, Tensor::scalar(acc / n), {a}, [n](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        const double gv = g[0] / n;
        for (double& d : pg[0]->data())
            d += gv;
    });
}

Var scale(const Var& a, double factor)
{
    Tape* tape = common_tape({&a});
    Tensor out(a.shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = factor * x[i];
    return finish(tape, std::move(out), {a}, [factor](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        Tensor& d = *pg[0];
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] += factor * g[i];
    });
}

Var reshape(const Var& a, Shape shape)
{
    Tape* tape = common_tape({&a});
    Tensor out = a.value().reshaped(std::move(shape));
    return finish(tape, std::move(out), {a}, [](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        Tensor& d = *pg[0];
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] += g[i];
    });
}

Var slice(const Var& a, std::size_t offset, Shape shape)
{
    const std::size_t count = shape_size(shape);
    if (offset + count > a.size())
        throw ShapeError("slice of " + std::to_string(count) + " elements at offset " + std::to_string(offset) +
                         " exceeds tensor of size " + std::to_string(a.size()));
    Tape* tape = common_tape({&a});
    const auto src = a.value().data().subspan(offset, count);
    Tensor out(std::move(shape), std::vector<double>(src.begin(), src.end()));
    return finish(tape, std::move(out), {a}, [offset](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0])
            return;
        Tensor& d = *pg[0];
        for (std::size_t i = 0; i < g.size(); ++i)
            d[offset + i] += g[i];
    });
}

Var elementwise(ElementwiseOp op, std::span<const Var> args)
{
    const bool binary = op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul;
    if (args.size() != (binary ? 2u : 1u))
        throw ShapeError("elementwise: wrong number of arguments");
    switch (op) {
    case ElementwiseOp::add:
        return add(args[0], args[1]);
    case ElementwiseOp::sub:
        return sub(args[0], args[1]);
    case ElementwiseOp::mul:
        return mul(args[0], args[1]);
    case ElementwiseOp::relu:
        return relu(args[0]);
    case ElementwiseOp::exp:
        return exp(args[0]);
    case ElementwiseOp::square:
        return square(args[0]);
    }
    throw ShapeError("elementwise: unknown op");
}

} // namespace hypertrain
