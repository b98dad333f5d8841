#include "hypertrain/gp.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hypertrain {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr double log_min = -11.512925464970229; // log(1e-5)
constexpr double log_max = 11.512925464970229;
constexpr double log_noise_min = -23.025850929940457; // log(1e-10)

Matrix squared_distances(const Tensor& x)
{
    const std::size_t n = x.rows(), d = x.cols();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = x.at(i, c) - x.at(j, c);
                s += diff * diff;
            }
            out(i, j) = out(j, i) = s;
        }
    }
    return out;
}

Matrix rbf(const Matrix& dist2, const GpHyper& h)
{
    return h.signal_variance * (-dist2.array() / (2.0 * h.length_scale * h.length_scale)).exp().matrix();
}

struct Factor {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

Factor factor(const Matrix& kernel, double noise)
{
    const double diag = kernel.diagonal().mean() + noise;
    for (double rel : {0.0, 1e-12, 1e-10, 1e-8, 1e-6}) {
        Matrix k = kernel;
        const double jitter = rel * diag;
        k.diagonal().array() += noise + jitter;
        Eigen::LLT<Matrix> llt(k);
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0)
            return Factor{std::move(llt), jitter};
    }
    throw NumericError("GP kernel matrix is not positive definite even with jitter 1e-6 of its diagonal");
}

double lml(const Factor& f, const Vector& y)
{
    const Vector alpha = f.llt.solve(y);
    const double log_det = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

struct Evaluation {
    double value = -std::numeric_limits<double>::infinity();
    Vector grad = Vector::Zero(3);
};

// Evidence and its gradient in theta = (log l, log s2, log noise):
// d lml / d theta = 0.5 tr((a a^T - K^{-1}) dK/dtheta).
Evaluation evaluate_lml(const Matrix& dist2, const Vector& y, const Vector& theta)
{
    const GpHyper h{std::exp(theta(0)), std::exp(theta(1)), std::exp(theta(2))};
    const Matrix k = rbf(dist2, h);
    Evaluation out;
    Factor f;
    try {
        f = factor(k, h.noise_variance);
    } catch (const NumericError&) {
        return out;
    }
    if (f.jitter != 0.0)
        return out; // only exact factorizations are compared
    const Vector a = f.llt.solve(y);
    const auto n = y.size();
    const Matrix inner = a * a.transpose() - f.llt.solve(Matrix::Identity(n, n));
    out.value = lml(f, y);
    out.grad(0) = 0.5 * inner.cwiseProduct(k.cwiseProduct(dist2)).sum() / (h.length_scale * h.length_scale);
    out.grad(1) = 0.5 * inner.cwiseProduct(k).sum();
    out.grad(2) = 0.5 * inner.trace() * h.noise_variance;
    if (!out.grad.allFinite())
        out.value = -std::numeric_limits<double>::infinity();
    return out;
}

Vector clamp_theta(Vector theta)
{
    theta(0) = std::clamp(theta(0), log_min, log_max);
    theta(1) = std::clamp(theta(1), log_min, log_max);
    theta(2) = std::clamp(theta(2), log_noise_min, log_max);
    return theta;
}

// Multi-start projected gradient ascent with backtracking; returns the best hyper found.
GpHyper maximize_lml(const Matrix& dist2, const Vector& y, const GpOptions& options)
{
    Rng rng = make_rng(options.seed, "gp-mle");
    std::uniform_real_distribution<double> wide(std::log(1e-2), std::log(1e2));
    std::uniform_real_distribution<double> noisy(std::log(1e-8), std::log(1e-2));
    Vector best_theta(3);
    best_theta << std::log(options.hyper.length_scale), std::log(options.hyper.signal_variance),
        std::log(std::max(options.hyper.noise_variance, 1e-10));
    best_theta = clamp_theta(best_theta);
    double best_value = evaluate_lml(dist2, y, best_theta).value;
    auto mask = [&](Vector g) {
        if (!options.mle_signal)
            g(1) = 0.0;
        if (!options.mle_noise)
            g(2) = 0.0;
        return g;
    };

    for (std::size_t start = 0; start < std::max<std::size_t>(1, options.mle_starts); ++start) {
        Vector theta = best_theta;
        if (start > 0) {
            theta(0) = wide(rng);
            const double s = wide(rng), n = noisy(rng);
            if (options.mle_signal)
                theta(1) = s;
            if (options.mle_noise)
                theta(2) = n;
        }
        Evaluation current = evaluate_lml(dist2, y, theta);
        current.grad = mask(current.grad);
        if (!std::isfinite(current.value))
            continue;
        double step = 0.1;
        for (std::size_t it = 0; it < options.mle_iters; ++it) {
            bool moved = false;
            while (step > 1e-12) {
                const Vector next = clamp_theta(theta + step * current.grad);
                Evaluation trial = evaluate_lml(dist2, y, next);
                if (trial.value > current.value) {
                    moved = (next - theta).norm() > 1e-12;
                    theta = next;
                    current = trial;
                    current.grad = mask(current.grad);
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if (!moved)
                break;
        }
        if (current.value > best_value) {
            best_value = current.value;
            best_theta = theta;
        }
    }
    // hyperparameters held fixed come back bit-exact rather than through exp(log(.))
    return GpHyper{std::exp(best_theta(0)),
                   options.mle_signal ? std::exp(best_theta(1)) : options.hyper.signal_variance,
                   options.mle_noise ? std::exp(best_theta(2)) : options.hyper.noise_variance};
}

} // namespace

double gp_log_marginal_likelihood(const Tensor& inputs, const std::vector<double>& targets, const GpHyper& hyper)
{
    const Matrix k = rbf(squared_distances(inputs), hyper);
    return lml(factor(k, hyper.noise_variance), to_vector(targets));
}

GpModel gp_fit(const Tensor& inputs, const std::vector<double>& targets, const GpOptions& options)
{
    if (inputs.rank() != 2 || inputs.rows() < 2)
        throw DomainError("GP fit needs at least two input rows");
    if (targets.size() != inputs.rows())
        throw ShapeError("GP fit has " + std::to_string(inputs.rows()) + " inputs but " +
                         std::to_string(targets.size()) + " targets");
    if (!inputs.all_finite())
        throw DomainError("GP inputs must be finite");
    for (double t : targets)
        if (!std::isfinite(t))
            throw DomainError("GP targets must be finite");
    if (!(options.hyper.length_scale > 0.0) || !(options.hyper.signal_variance > 0.0) ||
        !(options.hyper.noise_variance >= 0.0))
        throw ConfigError("GP length scale and signal variance must be positive, noise non-negative");

    const std::size_t n = inputs.rows(), d = inputs.cols();
    GpModel gp;
    gp.input_mean = Tensor(Shape{d});
    gp.input_scale = Tensor::filled(Shape{d}, 1.0);
    if (options.standardize) {
        for (std::size_t c = 0; c < d; ++c) {
            double mean = 0.0, var = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                mean += inputs.at(r, c);
            mean /= static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r)
                var += (inputs.at(r, c) - mean) * (inputs.at(r, c) - mean);
            var /= static_cast<double>(n);
            gp.input_mean[c] = mean;
            gp.input_scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
    }
    gp.inputs = Tensor(Shape{n, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c)
            gp.inputs.at(r, c) = (inputs.at(r, c) - gp.input_mean[c]) / gp.input_scale[c];
    gp.targets = Tensor::vector(targets);

    const Matrix dist2 = squared_distances(gp.inputs);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (dist2(i, j) == 0.0)
                throw DomainError("GP inputs " + std::to_string(j) + " and " + std::to_string(i) + " coincide");

    const Vector y = to_vector(targets);
    gp.hyper = options.hyperopt == GpHyperopt::mle ? maximize_lml(dist2, y, options) : options.hyper;
    const Factor f = factor(rbf(dist2, gp.hyper), gp.hyper.noise_variance);
    gp.jitter = f.jitter;
    gp.log_marginal_likelihood = lml(f, y);
    const Matrix l = f.llt.matrixL();
    gp.cholesky = Tensor(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            gp.cholesky.at(i, j) = l(i, j);
    const Vector alpha = f.llt.solve(y);
    gp.alpha = Tensor(Shape{n});
    for (std::size_t i = 0; i < n; ++i)
        gp.alpha[i] = alpha(i);
    return gp;
}

GpPrediction gp_predict(const GpModel& gp, const Tensor& point)
{
    const std::size_t n = gp.inputs.rows(), d = gp.inputs.cols();
    if (point.size() != d)
        throw ShapeError("GP prediction point has " + std::to_string(point.size()) + " entries, model expects " +
                         std::to_string(d));
    Vector kstar(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = (point[c] - gp.input_mean[c]) / gp.input_scale[c] - gp.inputs.at(i, c);
            s += diff * diff;
        }
        kstar(i) = gp.hyper.signal_variance * std::exp(-s / (2.0 * gp.hyper.length_scale * gp.hyper.length_scale));
    }
    GpPrediction out;
    out.mean = kstar.dot(Eigen::Map<const Vector>(gp.alpha.data().data(), static_cast<Eigen::Index>(n)));
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            l(i, j) = gp.cholesky.at(i, j);
    const Vector v = l.triangularView<Eigen::Lower>().solve(kstar);
    out.variance = gp.hyper.signal_variance + gp.hyper.noise_variance - v.squaredNorm();
    return out;
}

} // namespace hypertrain
