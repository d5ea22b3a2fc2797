#include "oodkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "oodkit/error.hpp"

namespace ood {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(Errc::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

Matrix symmetrized(const Matrix& m) {
  Matrix s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(Errc::ShapeMismatch, "matrix storage has " + std::to_string(data_.size()) +
                                         " entries, expected " + std::to_string(rows_ * cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::max_abs() const noexcept {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  require_same_dim(a.cols(), b.rows(), "matrix product");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vector matvec(const Matrix& m, std::span<const double> x) {
  require_same_dim(m.cols(), x.size(), "matvec");
  Vector y(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
  return y;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
  require_same_dim(m.rows(), x.size(), "matvec_transposed");
  Vector y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

double quadratic_form(const Matrix& m, std::span<const double> x) {
  return dot(x, matvec(m, x));
}

Vector mean_vector(std::span<const Vector> rows) {
  if (rows.empty()) throw Error(Errc::EmptyInput, "mean of zero vectors");
  const std::size_t d = rows.front().size();
  Vector mean(d, 0.0);
  for (const auto& r : rows) {
    require_same_dim(r.size(), d, "mean_vector");
    for (std::size_t k = 0; k < d; ++k) mean[k] += r[k];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& x : mean) x *= inv;
  return mean;
}

Matrix shared_covariance(std::span<const Vector> rows, std::span<const int> labels,
                         std::span<const Vector> means) {
  if (rows.empty()) throw Error(Errc::EmptyInput, "covariance of zero rows");
  require_same_dim(rows.size(), labels.size(), "rows vs labels");
  const std::size_t d = rows.front().size();
  for (const auto& mu : means) require_same_dim(mu.size(), d, "class mean");

  Matrix cov(d, d);
  Vector diff(d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= means.size()) {
      throw Error(Errc::MissingClassMean, "no mean for label " + std::to_string(y));
    }
    require_same_dim(rows[i].size(), d, "covariance row");
    const Vector& mu = means[static_cast<std::size_t>(y)];
    for (std::size_t k = 0; k < d; ++k) diff[k] = rows[i][k] - mu[k];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov(a, b) += diff[a] * diff[b];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) *= inv;
      cov(b, a) = cov(a, b);
    }
  return cov;
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (!m.square()) return false;
  const double tol = rel_tol * m.max_abs();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

EigenDecomposition sym_eig(const Matrix& m, int max_sweeps) {
  if (!m.square()) throw Error(Errc::NotSymmetric, "matrix is not square");
  if (!is_symmetric(m)) throw Error(Errc::NotSymmetric, "matrix is not symmetric");

  const std::size_t n = m.rows();
  Matrix a = symmetrized(m);
  Matrix v = Matrix::identity(n);

  double frob = 0.0;
  for (double x : a.storage()) frob += x * x;
  frob = std::sqrt(frob);

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    off = std::sqrt(off);
    if (off == 0.0 || off <= 1e-18 * frob) {
      converged = true;
      break;
    }

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Negligible against both diagonal entries: drop instead of rotating.
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
            std::abs(a(q, q)) + g == std::abs(a(q, q))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }

        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = a(p, r) = arp - s * (arq + arp * tau);
          a(r, q) = a(q, r) = arq + s * (arp - arq * tau);
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + vrp * tau);
          v(r, q) = vrq + s * (vrp - vrq * tau);
        }
      }
    }
  }
  if (!converged) {
    throw Error(Errc::NoConvergence,
                "Jacobi eigensolver exceeded " + std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.values[k] = a(src, src);
    std::size_t arg = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, src)) > std::abs(v(arg, src))) arg = r;
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
  }
  return out;
}

Matrix pseudo_inverse(const Matrix& m, double rel_tol) {
  const EigenDecomposition eig = sym_eig(m);
  const std::size_t n = m.rows();
  Matrix pinv(n, n);
  if (n == 0 || eig.values.front() <= 0.0) return pinv;

  const double cutoff = rel_tol * eig.values.front();
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = eig.values[k];
    if (lambda <= 0.0 || lambda < cutoff) continue;
    const double inv = 1.0 / lambda;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = eig.vectors(i, k) * inv;
      for (std::size_t j = i; j < n; ++j) pinv(i, j) += vi * eig.vectors(j, k);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) pinv(i, j) = pinv(j, i);
  return pinv;
}

Vector l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (!(n > 0.0)) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

std::vector<Point2> pca_project_2d(std::span<const Vector> rows) {
  if (rows.size() < 3) throw Error(Errc::EmptyInput, "PCA projection needs at least 3 rows");
  const Vector center = mean_vector(rows);
  const std::size_t d = center.size();

  Matrix cov(d, d);
  for (const auto& r : rows) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = r[a] - center[a];
      for (std::size_t b = a; b < d; ++b) cov(a, b) += da * (r[b] - center[b]);
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) *= inv;
      cov(b, a) = cov(a, b);
    }

  const EigenDecomposition eig = sym_eig(cov);
  std::vector<Point2> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    Point2 p{0.0, 0.0};
    for (std::size_t axis = 0; axis < std::min<std::size_t>(2, d); ++axis) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (r[k] - center[k]) * eig.vectors(k, axis);
      p[axis] = s;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace ood
