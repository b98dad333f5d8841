#pragma once

// Gaussian-process regression with an RBF kernel
//     k(a, b) = s2 * exp(-|a - b|^2 / (2 l^2))
// on standardized inputs and a zero prior mean (the sklearn default without
// target normalization).

#include "hypertrain/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hypertrain {

struct GpHyper {
    double length_scale = 1.0;
    double signal_variance = 1.0;
    double noise_variance = 1e-10;
};

enum class GpHyperopt { fixed, mle };

struct GpOptions {
    GpHyperopt hyperopt = GpHyperopt::fixed;
    /// Starting point for fixed fits and the first MLE start.
    GpHyper hyper{};
    /// Standardize each input dimension over the training points.
    bool standardize = true;
    /// Which hyperparameters MLE adjusts besides the length scale; the others
    /// stay at `hyper`. Both off matches sklearn's bare RBF kernel.
    bool mle_signal = true;
    bool mle_noise = true;
    std::size_t mle_starts = 5;
    std::size_t mle_iters = 300;
    std::uint64_t seed = 0;
};

struct GpModel {
    Tensor inputs;        ///< [n x d], standardized
    Tensor targets;       ///< [n]
    Tensor input_mean;    ///< [d]
    Tensor input_scale;   ///< [d]
    GpHyper hyper;
    double jitter = 0.0;  ///< added to the diagonal beyond the noise variance
    Tensor cholesky;      ///< lower factor of K + (noise + jitter) I, [n x n]
    Tensor alpha;         ///< (K + (noise + jitter) I)^{-1} y
    double log_marginal_likelihood = 0.0;
};

struct GpPrediction {
    double mean = 0.0;
    double variance = 0.0; ///< includes the noise variance
};

/// Fits on rows of `inputs` [n x d] with one target each. Requires n >= 2 and
/// distinct rows. Throws NumericError if the kernel matrix cannot be factored
/// even with jitter up to 1e-6 of its diagonal.
GpModel gp_fit(const Tensor& inputs, const std::vector<double>& targets, const GpOptions& options = {});

GpPrediction gp_predict(const GpModel& gp, const Tensor& point);

/// Log marginal likelihood of targets under the kernel on already standardized inputs.
double gp_log_marginal_likelihood(const Tensor& inputs, const std::vector<double>& targets, const GpHyper& hyper);

} // namespace hypertrain
