#include "hypertrain/ridge.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/rng.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace hypertrain {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_eigen(const Tensor& m)
{
    return Eigen::Map<const RowMatrix>(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                                       static_cast<Eigen::Index>(m.cols()));
}

Tensor to_tensor(const Matrix& m)
{
    Tensor out(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    Eigen::Map<RowMatrix>(out.data().data(), m.rows(), m.cols()) = m;
    return out;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    // row-major fill keeps the draw order independent of Eigen's storage
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            out(r, c) = normal(rng);
    return out;
}

// Z = [X 1]
Matrix augmented(const Tensor& x)
{
    Matrix z(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()) + 1);
    z.leftCols(z.cols() - 1) = to_eigen(x);
    z.col(z.cols() - 1).setOnes();
    return z;
}

Eigen::LLT<Matrix> factor(const Matrix& system)
{
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success)
        throw NumericError("ridge system is not positive definite");
    const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
    const double ratio = diag.minCoeff() / diag.maxCoeff();
    if (!(ratio > 1e-7))
        throw NumericError("ridge system is ill-conditioned (Cholesky diagonal ratio " + std::to_string(ratio) + ")");
    return llt;
}

} // namespace

std::vector<double> linspace(double lo, double hi, std::size_t points)
{
    std::vector<double> out(points);
    for (std::size_t i = 0; i < points; ++i)
        out[i] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    return out;
}

RidgeProblem make_ridge_problem(const RidgeConfig& config, std::uint64_t seed)
{
    if (config.features == 0 || config.n_train < 2 || config.n_valid == 0 || config.n_test == 0)
        throw DomainError("ridge problem needs features >= 1, n_train >= 2 and non-empty validation/test sets");
    if (!(config.feature_scale > 0.0) || !(config.spectrum_ratio >= 1.0))
        throw DomainError("ridge feature_scale must be positive and spectrum_ratio at least 1");
    Rng rng(seed);
    const auto d = static_cast<Eigen::Index>(config.features);
    const auto n = static_cast<Eigen::Index>(config.n_train);

    Vector w_true = config.weight_scale * gaussian(d, 1, rng);

    Matrix raw = gaussian(n, d, rng);
    raw.rowwise() -= raw.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(raw, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::Index rank = std::min(n - 1, d);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector second_moment(rank);
    for (Eigen::Index i = 0; i < rank; ++i)
        second_moment(i) = config.feature_scale * std::pow(config.spectrum_ratio, -unit(rng));
    const Matrix u = svd.matrixU().leftCols(rank);
    const Matrix v = svd.matrixV().leftCols(rank);
    const Matrix x_train =
        u * (static_cast<double>(n) * second_moment.array()).sqrt().matrix().asDiagonal() * v.transpose();

    std::normal_distribution<double> noise(0.0, config.noise);
    Vector t_train = x_train * w_true;
    for (Eigen::Index i = 0; i < n; ++i)
        t_train(i) += noise(rng);
    t_train.array() -= t_train.mean();

    // Held-out rows x = v diag(sqrt(s^2/n)) g, g ~ N(0, I): same second moment as the training rows.
    const Matrix loading = second_moment.array().sqrt().matrix().asDiagonal() * v.transpose();
    auto held_out = [&](std::size_t rows, Split split) {
        const Matrix x = gaussian(static_cast<Eigen::Index>(rows), rank, rng) * loading;
        Vector t = x * w_true;
        for (Eigen::Index i = 0; i < t.size(); ++i)
            t(i) += noise(rng);
        return Dataset(to_tensor(x), to_tensor(t), split);
    };
    RidgeProblem problem;
    problem.train = Dataset(to_tensor(x_train), to_tensor(t_train), Split::train);
    problem.valid = held_out(config.n_valid, Split::valid);
    problem.test = held_out(config.n_test, Split::test);
    return problem;
}

Tensor ridge_solve(const Tensor& design, const Tensor& targets, const Tensor& penalty)
{
    const std::size_t n = design.rows(), p = design.cols(), k = targets.cols();
    if (targets.rows() != n)
        throw ShapeError("ridge design has " + std::to_string(n) + " rows but targets have " +
                         std::to_string(targets.rows()));
    if (penalty.size() != 1 && penalty.size() != p && penalty.size() != p * k)
        throw ShapeError("ridge penalty needs 1, " + std::to_string(p) + " or " + std::to_string(p * k) +
                         " entries, got " + std::to_string(penalty.size()));
    const Matrix a = to_eigen(design);
    const Matrix gram = a.transpose() * a;
    const Matrix rhs = a.transpose() * to_eigen(targets);

    Tensor out(Shape{p, k});
    for (std::size_t c = 0; c < k; ++c) {
        Matrix system = gram;
        for (std::size_t i = 0; i < p; ++i) {
            const double pen = penalty.size() == 1 ? penalty[0] : penalty.size() == p ? penalty[i] : penalty[i * k + c];
            system(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += pen;
        }
        const Vector theta = factor(system).solve(rhs.col(static_cast<Eigen::Index>(c)));
        for (std::size_t i = 0; i < p; ++i)
            out.at(i, c) = theta(static_cast<Eigen::Index>(i));
    }
    return out;
}

ElementaryWeights ridge_best_response(const Dataset& train, const Tensor& lambda)
{
    const ModelSpec spec = ModelSpec::linear(train.input_dim(), train.target_dim());
    const std::size_t count = param_count(spec);
    if (lambda.size() != 1 && lambda.size() != count)
        throw ShapeError("ridge best response needs 1 or " + std::to_string(count) + " hyperparameters, got " +
                         std::to_string(lambda.size()));
    // mean-form loss: the sum-form penalty is n k exp(lambda)
    const double scale = static_cast<double>(train.rows() * train.target_dim());
    Tensor penalty(Shape{lambda.size()});
    for (std::size_t i = 0; i < lambda.size(); ++i)
        penalty[i] = scale * std::exp(lambda[i]);
    // [X 1] parameters [(d+1) x k] row-major coincide with the flat weight layout
    const Tensor theta = ridge_solve(to_tensor(augmented(train.x)), train.t, penalty);
    return ElementaryWeights(spec, theta.reshaped(Shape{count}));
}

Tensor ridge_best_response_derivative(const Dataset& train, double lambda)
{
    const std::size_t d = train.input_dim(), k = train.target_dim(), n = train.rows();
    const Tensor w = ridge_best_response(train, Tensor::vector({lambda})).flat();
    const Matrix z = augmented(train.x);
    const double penalty = static_cast<double>(n * k) * std::exp(lambda);
    Matrix system = z.transpose() * z;
    system.diagonal().array() += penalty;
    const auto llt = factor(system);
    Tensor out(Shape{w.size()});
    for (std::size_t c = 0; c < k; ++c) {
        Vector theta(static_cast<Eigen::Index>(d + 1));
        for (std::size_t i = 0; i <= d; ++i)
            theta(static_cast<Eigen::Index>(i)) = w[i * k + c];
        const Vector dtheta = -llt.solve(penalty * theta);
        for (std::size_t i = 0; i <= d; ++i)
            out[i * k + c] = dtheta(static_cast<Eigen::Index>(i));
    }
    return out;
}

std::vector<double> ridge_validation_curve(const RidgeProblem& problem, const std::vector<double>& lambdas)
{
    std::vector<double> out;
    out.reserve(lambdas.size());
    const Batch valid = problem.valid.batch();
    for (double lam : lambdas)
        out.push_back(pred_loss(ridge_best_response(problem.train, Tensor::vector({lam})), valid));
    return out;
}

GridOptimum ridge_validation_optimum(const RidgeProblem& problem, double lo, double hi, std::size_t points)
{
    const auto grid = linspace(lo, hi, points);
    const auto losses = ridge_validation_curve(problem, grid);
    GridOptimum best{grid[0], losses[0]};
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (losses[i] < best.loss)
            best = {grid[i], losses[i]};
    return best;
}

} // namespace hypertrain
