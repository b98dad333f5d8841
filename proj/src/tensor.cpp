#include "hypertrain/tensor.hpp"

#include "hypertrain/errors.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace hypertrain {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor() : shape_{0} {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_size(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values)
{
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
{
    return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::filled(Shape shape, double value)
{
    Tensor out(std::move(shape));
    std::fill(out.data_.begin(), out.data_.end(), value);
    return out;
}

std::size_t Tensor::rows() const
{
    if (rank() != 2)
        throw ShapeError("expected a matrix, got shape " + shape_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const
{
    if (rank() != 2)
        throw ShapeError("expected a matrix, got shape " + shape_string(shape_));
    return shape_[1];
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept
{
    for (double v : data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

double Tensor::squared_norm() const noexcept
{
    double acc = 0.0;
    for (double v : data_)
        acc += v * v;
    return acc;
}

double Tensor::norm() const noexcept { return std::sqrt(squared_norm()); }

} // namespace hypertrain
