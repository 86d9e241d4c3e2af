#include "casii/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "casii/error.hpp"

namespace casii::linalg {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(rows_ * cols_ == data_.size(), "matrix data length does not match its shape");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            fail(Errc::invalid_argument, "non-finite matrix entry at flat index " + std::to_string(i));
        }
    }
}

Matrix Matrix::from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    Eigen::Map<RowMajorMatrix>(data.data(), m.rows(), m.cols()) = m;
    return Matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(data));
}

std::vector<double> Matrix::column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

namespace {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

// One Jacobi rotation zeroing a(p, q). Rotations are applied to both sides of
// `a` and accumulated into the columns of `v`.
void rotate(Eigen::MatrixXd& a, Eigen::MatrixXd& v, Eigen::Index p, Eigen::Index q) {
    const double apq = a(p, q);
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;

    const Eigen::Index n = a.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = c * akp - s * akq;
        a(k, q) = s * akp + c * akq;
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const double apk = a(p, k);
        const double aqk = a(q, k);
        a(p, k) = c * apk - s * aqk;
        a(q, k) = s * apk + c * aqk;
    }
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
    }
}

}  // namespace

EigenResult symmetric_eigen(const Eigen::Ref<const Eigen::MatrixXd>& symmetric, int max_sweeps) {
    require(symmetric.rows() == symmetric.cols() && symmetric.rows() >= 1,
            "symmetric_eigen needs a non-empty square matrix");
    const Eigen::Index n = symmetric.rows();
    Eigen::MatrixXd a = symmetric;
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Off-diagonal entries below the diagonals' resolution are
                // dropped rather than rotated.
                const double scaled = 100.0 * std::abs(apq);
                if (std::abs(a(p, p)) + scaled == std::abs(a(p, p)) &&
                    std::abs(a(q, q)) + scaled == std::abs(a(q, q))) {
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    continue;
                }
                rotate(a, v, p, q);
                rotated = true;
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        fail(Errc::no_convergence, "Jacobi eigen solver did not converge within " + std::to_string(max_sweeps) +
                                       " sweeps on a " + shape_string(n, n) + " matrix");
    }

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(Eigen::Index(i), Eigen::Index(i)) > a(Eigen::Index(j), Eigen::Index(j)); });

    EigenResult out;
    out.eigenvalues.resize(order.size());
    Matrix vectors(order.size(), order.size());
    for (std::size_t h = 0; h < order.size(); ++h) {
        const auto src = static_cast<Eigen::Index>(order[h]);
        out.eigenvalues[h] = a(src, src);
        for (Eigen::Index j = 0; j < n; ++j) vectors(h, static_cast<std::size_t>(j)) = v(j, src);
    }
    out.eigenvectors = std::move(vectors);
    return out;
}

EigenResult gram_eigen(const Matrix& a, int max_sweeps) {
    require(a.cols() >= 1 && a.rows() >= 1, "gram_eigen needs a non-empty matrix");
    const Eigen::MatrixXd gram = a.view().transpose() * a.view();
    EigenResult out;
    try {
        out = symmetric_eigen(gram, max_sweeps);
    } catch (const Error& e) {
        if (e.code() != Errc::no_convergence) throw;
        fail(Errc::no_convergence, std::string(e.what()) + " (Gram of a " +
                                       shape_string(Eigen::Index(a.rows()), Eigen::Index(a.cols())) + " input)");
    }
    for (double& lambda : out.eigenvalues) lambda = std::max(lambda, 0.0);
    return out;
}

std::size_t numerical_rank(std::span<const double> eigenvalues, std::size_t n, double epsilon) {
    if (eigenvalues.empty()) return 0;
    const double largest = *std::max_element(eigenvalues.begin(), eigenvalues.end());
    if (largest <= 0.0) return 0;
    const double tol = largest * static_cast<double>(n) * epsilon;
    return static_cast<std::size_t>(
        std::count_if(eigenvalues.begin(), eigenvalues.end(), [tol](double l) { return l > tol; }));
}

LeadingEigen leading_gram_eigen(const Matrix& a, double epsilon) {
    require(a.cols() >= 1 && a.rows() >= 1, "leading_gram_eigen needs a non-empty matrix");
    const std::size_t n_for_tol = std::max(a.rows(), a.cols());

    if (a.cols() <= a.rows()) {
        EigenResult full = gram_eigen(a);
        const std::size_t k = numerical_rank(full.eigenvalues, n_for_tol, epsilon);
        LeadingEigen out;
        out.rank = k;
        out.eigen.eigenvalues.assign(full.eigenvalues.begin(), full.eigenvalues.begin() + std::ptrdiff_t(k));
        out.eigen.eigenvectors = Matrix::from_eigen(full.eigenvectors.view().topRows(Eigen::Index(k)));
        return out;
    }

    const Eigen::MatrixXd outer = a.view() * a.view().transpose();
    EigenResult left = symmetric_eigen(outer);
    for (double& lambda : left.eigenvalues) lambda = std::max(lambda, 0.0);
    const std::size_t k = numerical_rank(left.eigenvalues, n_for_tol, epsilon);

    Eigen::MatrixXd right(Eigen::Index(k), Eigen::Index(a.cols()));
    for (std::size_t h = 0; h < k; ++h) {
        const Eigen::VectorXd u = left.eigenvectors.view().row(Eigen::Index(h)).transpose();
        Eigen::VectorXd vh = a.view().transpose() * u;
        vh /= vh.norm();
        right.row(Eigen::Index(h)) = vh.transpose();
    }
    LeadingEigen out;
    out.rank = k;
    out.eigen.eigenvalues.assign(left.eigenvalues.begin(), left.eigenvalues.begin() + std::ptrdiff_t(k));
    out.eigen.eigenvectors = Matrix::from_eigen(right);
    return out;
}

std::vector<double> leverage_scores(const EigenResult& v, std::size_t k) {
    if (k == 0) fail(Errc::numerical, "zero-rank bag");
    require(k <= v.eigenvectors.rows(), "leverage rank exceeds the number of eigenvectors");
    const std::size_t n = v.eigenvectors.cols();
    std::vector<double> scores(n, 0.0);
    for (std::size_t h = 0; h < k; ++h) {
        for (std::size_t j = 0; j < n; ++j) {
            const double x = v.eigenvectors(h, j);
            scores[j] += x * x;
        }
    }
    for (double& s : scores) s /= static_cast<double>(k);
    return scores;
}

NormalizedColumns normalize_columns(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    NormalizedColumns out;
    out.norms = m.colwise().norm().transpose();
    out.unit.resize(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (!(out.norms(j) > 0.0)) {
            fail(Errc::numerical, "cannot normalize zero column " + std::to_string(j));
        }
        out.unit.col(j) = m.col(j) / out.norms(j);
    }
    return out;
}

Matrix l2_normalize_columns(const Matrix& m) {
    const Eigen::MatrixXd dense = m.view();
    return Matrix::from_eigen(normalize_columns(dense).unit);
}

std::vector<double> softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax of an empty vector");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace casii::linalg
