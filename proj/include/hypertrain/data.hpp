#pragma once

#include "hypertrain/rng.hpp"
#include "hypertrain/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace hypertrain {

enum class Split { train, valid, test };

std::string to_string(Split split);

/// Inputs x [n x d] and targets t [n x k].
struct Batch {
    Tensor x;
    Tensor t;

    std::size_t rows() const { return x.rank() == 2 ? x.rows() : 0; }
};

struct Dataset {
    Tensor x;
    Tensor t;
    Split split = Split::train;

    Dataset() = default;
    /// Validates matching row counts and finite values.
    Dataset(Tensor x, Tensor t, Split split);

    std::size_t rows() const { return x.rows(); }
    std::size_t input_dim() const { return x.cols(); }
    std::size_t target_dim() const { return t.cols(); }

    Batch batch() const { return Batch{x, t}; }
    /// Rows [begin, end) as a new dataset with the given split tag.
    Dataset rows_range(std::size_t begin, std::size_t end, Split tag) const;
    Dataset select(const std::vector<std::size_t>& indices, Split tag) const;
};

/// Deterministic sample of n rows without replacement.
Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed);

struct SplitSizes {
    std::size_t train = 10;
    std::size_t valid = 1000;
    std::size_t test = 1000;
};

struct Splits {
    Dataset train;
    Dataset valid;
    Dataset test;
};

/// Disjoint splits from one pool: a seeded permutation assigns the first rows
/// to test, the next to valid and the next to train. Test may be empty.
Splits split_dataset(const Dataset& pool, const SplitSizes& sizes, std::uint64_t seed);

/// Uniform minibatch: distinct rows within a batch, independent across calls.
/// A size of at least the row count returns the whole dataset in order.
Batch minibatch(const Dataset& data, std::size_t size, Rng& rng);

/// Row indices for one minibatch draw; exposed for sampling tests.
std::vector<std::size_t> minibatch_indices(std::size_t rows, std::size_t size, Rng& rng);

/// One-hot rows of width `classes` for integer labels.
Tensor one_hot(const std::vector<std::uint8_t>& labels, std::size_t classes);

/// Images of width 28x28 (or any shape) flattened to rows, bytes scaled to [0, 1].
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, Split split = Split::train);

} // namespace hypertrain
