#pragma once

// Synthetic ridge-regression problems with an analytic best response.
//
// The training loss of a linear model under mean squared error is
//     (1/(n k)) sum ||Z theta - t||^2 + sum_i exp(lambda_i) theta_i^2
// where Z = [X 1]. Setting the gradient to zero gives, per output column c,
//     (Z^T Z + n k diag(exp(lambda_c))) theta_c = Z^T t_c,
// i.e. the classical sum-form ridge system with the penalty scaled by n k.

#include "hypertrain/data.hpp"
#include "hypertrain/model.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hypertrain {

struct RidgeConfig {
    std::size_t features = 20;
    std::size_t n_train = 15;
    std::size_t n_valid = 100;
    std::size_t n_test = 100;
    /// Largest per-direction second moment s^2/n of the training design.
    double feature_scale = 200.0;
    /// Ratio between the largest and smallest nonzero s^2/n.
    double spectrum_ratio = 3.0;
    /// Standard deviation of the true weights.
    double weight_scale = 0.025;
    double noise = 0.75;
};

struct RidgeProblem {
    Dataset train;
    Dataset valid;
    Dataset test;

    ModelSpec model() const { return ModelSpec::linear(train.input_dim(), train.target_dim()); }
};

/// Training inputs have a controlled spectrum and zero column means; training
/// targets are centered. Validation and test inputs share the training second
/// moment. Deterministic per seed.
RidgeProblem make_ridge_problem(const RidgeConfig& config, std::uint64_t seed);

/// Sum-form ridge solution theta [p x k] of (A^T A + diag(penalty)) theta_c = A^T t_c.
/// `penalty` holds one value, one per row of theta, or one per entry (row-major).
Tensor ridge_solve(const Tensor& design, const Tensor& targets, const Tensor& penalty);

/// Exact minimizer of the training loss of a linear model on `train` at lambda
/// (one value, or one per weight). Throws NumericError if the system is not
/// numerically positive definite.
ElementaryWeights ridge_best_response(const Dataset& train, const Tensor& lambda);

/// d w*/d lambda for scalar lambda by implicit differentiation:
/// -(Z^T Z + n k e^lambda I)^{-1} n k e^lambda w*.
Tensor ridge_best_response_derivative(const Dataset& train, double lambda);

struct GridOptimum {
    double lambda = 0.0;
    double loss = 0.0;
};

/// Validation loss of the best response at each scalar lambda.
std::vector<double> ridge_validation_curve(const RidgeProblem& problem, const std::vector<double>& lambdas);

/// Dense-grid minimizer of the validation loss over [lo, hi].
GridOptimum ridge_validation_optimum(const RidgeProblem& problem, double lo = -10.0, double hi = 10.0,
                                     std::size_t points = 4001);

std::vector<double> linspace(double lo, double hi, std::size_t points);

} // namespace hypertrain
