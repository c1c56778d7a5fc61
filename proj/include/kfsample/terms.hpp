#pragma once

// Redundancy and information-preservation terms over a keyframe set, and the
// numerical machinery behind them: non-uniform finite differences of the
// descriptors along the path, a cyclic Jacobi eigensolver for the Gram matrix
// of that Jacobian, and the eigen-basis descriptor transform.
//
// Both terms normalize by (N - 1), the number of consecutive pairs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "kfsample/core.hpp"
#include "kfsample/error.hpp"

namespace kfs {

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  std::span<const double> data() const noexcept { return data_; }

  double frobenius() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double descriptor_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("descriptor dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  return descriptor_distance(a.values(), b.values());
}

/// 1 / (1 + distance); in (0, 1], equal to 1 only for identical descriptors.
inline double descriptor_similarity(std::span<const double> a, std::span<const double> b) {
  return 1.0 / (1.0 + descriptor_distance(a, b));
}

inline double descriptor_similarity(const Descriptor& a, const Descriptor& b) {
  return descriptor_similarity(a.values(), b.values());
}

/// Mean similarity of consecutive rows.
inline double redundancy(const DescriptorMatrix& d) {
  if (d.rows() < 2) throw InvalidArgument("redundancy undefined for fewer than two keyframes");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < d.rows(); ++i) sum += descriptor_similarity(d.row(i), d.row(i + 1));
  return sum / static_cast<double>(d.rows() - 1);
}

inline double redundancy(std::span<const Keyframe> set) {
  if (set.size() < 2) throw InvalidArgument("redundancy undefined for fewer than two keyframes");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < set.size(); ++i) {
    sum += descriptor_similarity(set[i].descriptor, set[i + 1].descriptor);
  }
  return sum / static_cast<double>(set.size() - 1);
}

/// Derivative of every descriptor component with respect to path length.
///
/// Returns an M x N matrix (component m, node n). Interior nodes use the
/// three-point second-order stencil for non-uniform spacing; the two end
/// nodes use first-order one-sided differences. The arc-length grid must be
/// strictly increasing.
inline Matrix numerical_jacobian(const DescriptorMatrix& descriptors, std::span<const double> arclength) {
  const std::size_t n = descriptors.rows();
  const std::size_t m = descriptors.cols();
  if (n < 2) throw InvalidArgument("numerical jacobian needs at least two nodes");
  if (arclength.size() != n) throw InvalidArgument("arclength length differs from descriptor rows");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(arclength[i] > arclength[i - 1])) throw InvalidArgument("arclength must be strictly increasing");
  }

  Matrix jac(m, n);
  {
    const double h = arclength[1] - arclength[0];
    for (std::size_t c = 0; c < m; ++c) jac(c, 0) = (descriptors(1, c) - descriptors(0, c)) / h;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h1 = arclength[i] - arclength[i - 1];
    const double h2 = arclength[i + 1] - arclength[i];
    const double w_prev = -h2 / (h1 * (h1 + h2));
    const double w_mid = (h2 - h1) / (h1 * h2);
    const double w_next = h1 / (h2 * (h1 + h2));
    for (std::size_t c = 0; c < m; ++c) {
      jac(c, i) = w_prev * descriptors(i - 1, c) + w_mid * descriptors(i, c) + w_next * descriptors(i + 1, c);
    }
  }
  {
    const double h = arclength[n - 1] - arclength[n - 2];
    for (std::size_t c = 0; c < m; ++c) {
      jac(c, n - 1) = (descriptors(n - 1, c) - descriptors(n - 2, c)) / h;
    }
  }
  return jac;
}

/// JᵀJ for an M x N Jacobian: the N x N node-by-node covariance estimate.
inline Matrix gram(const Matrix& jac) {
  const std::size_t n = jac.cols();
  Matrix g(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < jac.rows(); ++r) s += jac(r, a) * jac(r, b);
      g(a, b) = s;
      g(b, a) = s;
    }
  }
  return g;
}

struct EigenDecomposition {
  std::vector<double> values;  ///< descending
  Matrix vectors;              ///< column k is the eigenvector of values[k]
};

inline constexpr double kEigenClamp = 1e-10;

struct JacobiOptions {
  double tolerance = 1e-12;  ///< relative to the Frobenius norm of the input
  int max_sweeps = 100;
  /// Eigenvalues with magnitude at or below this fraction of the Frobenius
  /// norm are rounding noise and become exactly zero. The Jacobian Gram
  /// matrix always has such a direction (difference stencils annihilate
  /// constants), and its square root would otherwise leak ~1e-8 into π.
  double zero_threshold = 1e-12;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as (A + Aᵀ)/2. Eigenvalues come out descending
/// (stable for ties) and each eigenvector is signed so that its first
/// component with magnitude above 1e-9 is positive. Eigenvalues in
/// (-1e-10, 0), and those within zero_threshold·‖A‖_F of zero, are set to zero.
inline EigenDecomposition eigendecompose(const Matrix& input, const JacobiOptions& opts = {}) {
  if (input.rows() != input.cols()) throw InvalidArgument("eigendecompose needs a square matrix");
  const std::size_t n = input.rows();
  for (double v : input.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("matrix has non-finite entries");
  }

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const double scale = a.frobenius();
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  // One more sweep after the tolerance is met: convergence is quadratic, so
  // this takes the off-diagonal mass to rounding level and the eigenvectors
  // to full precision.
  bool polished = false;
  for (int sweep = 0; sweep < opts.max_sweeps && scale > 0.0; ++sweep) {
    if (off_norm() <= opts.tolerance * scale) {
      if (polished) break;
      polished = true;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return a(l, l) > a(r, r); });

  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    double lambda = a(src, src);
    if (std::abs(lambda) <= opts.zero_threshold * scale) lambda = 0.0;
    if (lambda < 0.0 && lambda > -kEigenClamp) lambda = 0.0;
    out.values[k] = lambda;
    double sign = 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (std::abs(v(r, src)) > 1e-9) {
        sign = v(r, src) > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
  }
  return out;
}

/// D' = sqrt(Λ) · V · D, with Λ, V (N x N) left-multiplying the N x M
/// descriptors. Row k of V is eigenvector k, so row k of D' is the window's
/// descriptors projected on the k-th principal direction and scaled by
/// sqrt(λ_k). Directions with λ = 0 contribute zero rows, which keeps D'
/// independent of how a repeated zero eigenvalue's basis was chosen.
inline DescriptorMatrix transform_descriptors(const DescriptorMatrix& d, const EigenDecomposition& eig) {
  const std::size_t n = d.rows();
  if (eig.values.size() != n || eig.vectors.rows() != n || eig.vectors.cols() != n) {
    throw InvalidArgument("eigendecomposition shape does not match descriptor rows");
  }
  DescriptorMatrix out(n, d.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double root = std::sqrt(std::max(eig.values[i], 0.0));
    auto dst = out.row(i);
    if (root == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = root * eig.vectors(j, i);
      auto src = d.row(j);
      for (std::size_t c = 0; c < d.cols(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

/// Negative mean distance between consecutive rows of the transformed
/// descriptors. Always <= 0.
inline double preservation(std::span<const Pose> poses, const DescriptorMatrix& d) {
  if (d.rows() < 2) throw InvalidArgument("preservation undefined for fewer than two keyframes");
  if (poses.size() != d.rows()) throw InvalidArgument("pose count differs from descriptor rows");
  const auto s = cumulative_arclength(poses);
  const auto eig = eigendecompose(gram(numerical_jacobian(d, s)));
  const auto transformed = transform_descriptors(d, eig);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < transformed.rows(); ++i) {
    sum += descriptor_distance(transformed.row(i), transformed.row(i + 1));
  }
  return -sum / static_cast<double>(d.rows() - 1);
}

inline double preservation(std::span<const Keyframe> set) {
  if (set.size() < 2) throw InvalidArgument("preservation undefined for fewer than two keyframes");
  std::vector<Pose> poses;
  std::vector<Descriptor> descs;
  poses.reserve(set.size());
  descs.reserve(set.size());
  for (const auto& k : set) {
    poses.push_back(k.pose);
    descs.push_back(k.descriptor);
  }
  return preservation(poses, DescriptorMatrix::from_rows(descs));
}

struct ObjectiveParams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("alpha and beta must be positive");
  }
};

/// (ρ + α) / (π − β) from precomputed terms.
inline double objective_value(double rho, double pi, const ObjectiveParams& params) {
  return (rho + params.alpha) / (pi - params.beta);
}

inline double objective(std::span<const Pose> poses, const DescriptorMatrix& d, const ObjectiveParams& params) {
  params.validate();
  return objective_value(redundancy(d), preservation(poses, d), params);
}

inline double objective(std::span<const Keyframe> set, const ObjectiveParams& params) {
  params.validate();
  return objective_value(redundancy(set), preservation(set), params);
}

}  // namespace kfs
