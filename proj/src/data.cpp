#include "hypertrain/data.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/idx.hpp"

#include <algorithm>
#include <numeric>

namespace hypertrain {

std::string to_string(Split split)
{
    switch (split) {
    case Split::train:
        return "train";
    case Split::valid:
        return "valid";
    case Split::test:
        return "test";
    }
    return "?";
}

Dataset::Dataset(Tensor x_, Tensor t_, Split split_) : x(std::move(x_)), t(std::move(t_)), split(split_)
{
    if (x.rank() != 2 || t.rank() != 2)
        throw ShapeError("dataset needs matrices, got " + shape_string(x.shape()) + " and " +
                         shape_string(t.shape()));
    if (x.rows() != t.rows())
        throw ShapeError("dataset inputs have " + std::to_string(x.rows()) + " rows but targets have " +
                         std::to_string(t.rows()));
    if (!x.all_finite() || !t.all_finite())
        throw DomainError("dataset contains non-finite values");
}

Dataset Dataset::rows_range(std::size_t begin, std::size_t end, Split tag) const
{
    if (begin > end || end > rows())
        throw DomainError("row range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside " +
                          std::to_string(rows()) + " rows");
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return select(idx, tag);
}

Dataset Dataset::select(const std::vector<std::size_t>& indices, Split tag) const
{
    const std::size_t d = input_dim(), k = target_dim();
    std::vector<double> xs, ts;
    xs.reserve(indices.size() * d);
    ts.reserve(indices.size() * k);
    for (std::size_t r : indices) {
        if (r >= rows())
            throw DomainError("row index " + std::to_string(r) + " out of range");
        auto xr = x.data().subspan(r * d, d);
        auto tr = t.data().subspan(r * k, k);
        xs.insert(xs.end(), xr.begin(), xr.end());
        ts.insert(ts.end(), tr.begin(), tr.end());
    }
    return Dataset(Tensor::matrix(indices.size(), d, std::move(xs)), Tensor::matrix(indices.size(), k, std::move(ts)),
                   tag);
}

Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed)
{
    if (n > data.rows())
        throw DomainError("cannot subsample " + std::to_string(n) + " rows from " + std::to_string(data.rows()));
    std::vector<std::size_t> idx(data.rows());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return data.select(idx, data.split);
}

Splits split_dataset(const Dataset& pool, const SplitSizes& sizes, std::uint64_t seed)
{
    const std::size_t need = sizes.train + sizes.valid + sizes.test;
    if (sizes.train == 0 || sizes.valid == 0)
        throw DomainError("train and valid splits need at least one row");
    if (need > pool.rows())
        throw DomainError("splits need " + std::to_string(need) + " rows but the pool has " +
                          std::to_string(pool.rows()));
    const Dataset shuffled = subsample(pool, need, seed);
    Splits out;
    out.test = sizes.test > 0 ? shuffled.rows_range(0, sizes.test, Split::test) : Dataset();
    out.valid = shuffled.rows_range(sizes.test, sizes.test + sizes.valid, Split::valid);
    out.train = shuffled.rows_range(sizes.test + sizes.valid, need, Split::train);
    return out;
}

std::vector<std::size_t> minibatch_indices(std::size_t rows, std::size_t size, Rng& rng)
{
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), 0);
    if (size >= rows)
        return idx;
    for (std::size_t i = 0; i < size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, rows - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(size);
    return idx;
}

Batch minibatch(const Dataset& data, std::size_t size, Rng& rng)
{
    if (size == 0)
        throw DomainError("minibatch size must be at least 1");
    if (size >= data.rows())
        return data.batch();
    Dataset picked = data.select(minibatch_indices(data.rows(), size, rng), data.split);
    return Batch{std::move(picked.x), std::move(picked.t)};
}

Tensor one_hot(const std::vector<std::uint8_t>& labels, std::size_t classes)
{
    Tensor out(Shape{labels.size(), classes});
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= classes)
            throw DomainError("label " + std::to_string(labels[r]) + " outside " + std::to_string(classes) +
                              " classes");
        out.at(r, labels[r]) = 1.0;
    }
    return out;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, Split split)
{
    const auto image_bytes = idx::read_bytes(images_path);
    const idx::Array images = idx::parse(image_bytes);
    if (images.magic() != idx::kMnistImagesMagic)
        throw FormatError("'" + images_path + "' is not an IDX image file (magic " + std::to_string(images.magic()) +
                              ")",
                          0);
    const auto label_bytes = idx::read_bytes(labels_path);
    const idx::Array labels = idx::parse(label_bytes);
    if (labels.magic() != idx::kMnistLabelsMagic)
        throw FormatError("'" + labels_path + "' is not an IDX label file (magic " + std::to_string(labels.magic()) +
                              ")",
                          0);
    const std::size_t n = images.dims[0];
    if (labels.dims[0] != n)
        throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                              std::to_string(labels.dims[0]),
                          4);
    const std::size_t d = std::size_t{images.dims[1]} * images.dims[2];
    std::vector<double> pixels(images.values.size());
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = images.values[i] / 255.0;

    constexpr std::size_t header = 8;  // magic + one dimension
    std::vector<std::uint8_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = labels.values[i];
        if (v > 9)
            throw FormatError("label " + std::to_string(static_cast<int>(v)) + " exceeds 9", header + i);
        classes[i] = static_cast<std::uint8_t>(v);
    }
    return Dataset(Tensor::matrix(n, d, std::move(pixels)), one_hot(classes, 10), split);
}

} // namespace hypertrain
