#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace casii::linalg {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major matrix of finite doubles. Bags and key matrices use the
/// "one instance per column" convention, so a D×n matrix holds n embeddings.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    /// Throws Errc::invalid_argument when rows*cols != data.size() or any
    /// entry is NaN/Inf.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> values() const noexcept { return data_; }
    std::vector<double> column(std::size_t c) const;

    Eigen::Map<const RowMajorMatrix> view() const {
        return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
    }
    Eigen::Map<RowMajorMatrix> view() {
        return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Eigenpairs of a symmetric PSD matrix. eigenvalues are sorted descending and
/// row h of `eigenvectors` is the unit eigenvector belonging to eigenvalues[h].
struct EigenResult {
    std::vector<double> eigenvalues;
    Matrix eigenvectors;
};

inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Throws
/// Errc::no_convergence after `max_sweeps` sweeps.
EigenResult symmetric_eigen(const Eigen::Ref<const Eigen::MatrixXd>& symmetric,
                            int max_sweeps = kJacobiMaxSweeps);

/// Full eigendecomposition of AᵀA (n×n for an m×n input). Eigenvalues are
/// clamped at zero.
EigenResult gram_eigen(const Matrix& a, int max_sweeps = kJacobiMaxSweeps);

/// Number of eigenvalues above max_eigenvalue * n * epsilon.
std::size_t numerical_rank(std::span<const double> eigenvalues, std::size_t n,
                           double epsilon = std::numeric_limits<double>::epsilon());

/// Leading eigenpairs of AᵀA restricted to its numerical rank. Goes through
/// AAᵀ and maps u -> Aᵀu / sqrt(lambda) when A has more columns than rows, so
/// the Jacobi sweep always runs on the smaller Gram matrix. The result has
/// exactly `rank` rows.
struct LeadingEigen {
    EigenResult eigen;
    std::size_t rank = 0;
};
LeadingEigen leading_gram_eigen(const Matrix& a,
                                double epsilon = std::numeric_limits<double>::epsilon());

/// s_j = (1/k) * sum_{h<k} V(h, j)^2. Throws on k == 0 ("zero-rank bag").
std::vector<double> leverage_scores(const EigenResult& v, std::size_t k);

/// Columns scaled to unit L2 norm, together with the original norms.
struct NormalizedColumns {
    Eigen::MatrixXd unit;
    Eigen::VectorXd norms;
};
NormalizedColumns normalize_columns(const Eigen::Ref<const Eigen::MatrixXd>& m);

Matrix l2_normalize_columns(const Matrix& m);

std::vector<double> softmax(std::span<const double> logits);

double sigmoid(double x) noexcept;

/// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept;

}  // namespace casii::linalg
