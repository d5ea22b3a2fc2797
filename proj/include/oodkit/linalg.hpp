#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace ood {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> storage() noexcept { return data_; }
  std::span<const double> storage() const noexcept { return data_; }

  Matrix transpose() const;
  double max_abs() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
/// y = m x
Vector matvec(const Matrix& m, std::span<const double> x);
/// y = mᵀ x
Vector matvec_transposed(const Matrix& m, std::span<const double> x);
/// xᵀ m x
double quadratic_form(const Matrix& m, std::span<const double> x);

Vector mean_vector(std::span<const Vector> rows);

/// Pooled within-class covariance (1/M normalization):
/// (1/M) Σ_i (h_i − μ_{y_i})(h_i − μ_{y_i})ᵀ.
Matrix shared_covariance(std::span<const Vector> rows, std::span<const int> labels,
                         std::span<const Vector> means);

/// Symmetry check with tolerance rel_tol · max|m_ij|.
bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Eigenvector signs are
/// fixed so that the largest-magnitude component of each column is positive.
EigenDecomposition sym_eig(const Matrix& m, int max_sweeps = 100);

inline constexpr double kDefaultPinvRelTol = 1e-10;

/// Moore–Penrose inverse of a symmetric PSD matrix through its eigenbasis.
/// Eigenvalues below rel_tol · λ_max (including negative round-off) are
/// treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = kDefaultPinvRelTol);

Vector l2_normalize(std::span<const double> v);

using Point2 = std::array<double, 2>;

/// Projects centered rows onto their top two principal axes.
std::vector<Point2> pca_project_2d(std::span<const Vector> rows);

}  // namespace ood
