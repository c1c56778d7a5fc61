#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kfsample/terms.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kfs;
using kfs::fixtures::at;

namespace {

DescriptorMatrix rows(std::initializer_list<std::vector<double>> r) {
  std::vector<Descriptor> d;
  for (const auto& v : r) d.emplace_back(v);
  return DescriptorMatrix::from_rows(d);
}

Matrix random_psd(Rng& rng, std::size_t n, std::size_t rank) {
  Matrix b(rank, n);
  for (std::size_t r = 0; r < rank; ++r)
    for (std::size_t c = 0; c < n; ++c) b(r, c) = rng.uniform(-1, 1);
  return gram(b);
}

}  // namespace

TEST(Redundancy, Examples) {
  EXPECT_DOUBLE_EQ(redundancy(rows({{1, 2}, {1, 2}, {1, 2}})), 1.0);
  EXPECT_DOUBLE_EQ(redundancy(rows({{0, 0}, {3, 4}})), 1.0 / 6.0);
  // pairs at distance 1 and 3
  EXPECT_DOUBLE_EQ(redundancy(rows({{0}, {1}, {4}})), (0.5 + 0.25) / 2.0);
}

TEST(Redundancy, NeedsTwo) { EXPECT_THROW(redundancy(rows({{1}})), InvalidArgument); }

TEST(Redundancy, BoundedAndMatchesOracle) {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    const auto w = fixtures::random_window(rng, 2 + rng.below(12), 1 + rng.below(20));
    const double r = redundancy(std::span<const Keyframe>(w));
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0);
    EXPECT_NEAR(r, oracle::ref_redundancy(oracle::to_eigen(w)), 1e-12);
  }
}

TEST(Jacobian, AffineDescriptorsExact) {
  // d(s) = a + b s on a non-uniform grid: every node, including the ends, is exact.
  const std::vector<double> s{0.0, 0.4, 1.5, 1.6, 3.0, 4.25};
  const std::vector<double> a{1.0, -2.0, 0.5}, b{0.3, -1.7, 2.0};
  DescriptorMatrix d(s.size(), 3);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) d(i, c) = a[c] + b[c] * s[i];
  const auto j = numerical_jacobian(d, s);
  ASSERT_EQ(j.rows(), 3u);
  ASSERT_EQ(j.cols(), s.size());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(j(c, i), b[c], 1e-9);
}

TEST(Jacobian, QuadraticExactAtInteriorNodes) {
  const std::vector<double> s{0.0, 0.5, 2.0, 2.2, 3.0};
  DescriptorMatrix d(s.size(), 1);
  for (std::size_t i = 0; i < s.size(); ++i) d(i, 0) = s[i] * s[i];
  const auto j = numerical_jacobian(d, s);
  for (std::size_t i = 1; i + 1 < s.size(); ++i) EXPECT_NEAR(j(0, i), 2 * s[i], 1e-12);
  // one-sided ends are secants
  EXPECT_NEAR(j(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(j(0, 4), (9.0 - 4.84) / 0.8, 1e-12);
}

TEST(Jacobian, MatchesLagrangeOracle) {
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    const auto w = fixtures::random_window(rng, 2 + rng.below(12), 1 + rng.below(8));
    const auto pos = oracle::positions_of(w);
    const auto s = oracle::ref_arclength(pos);
    const auto ref = oracle::ref_gradient(oracle::to_eigen(w), s);
    std::vector<Descriptor> descs;
    for (const auto& k : w) descs.push_back(k.descriptor);
    const auto j = numerical_jacobian(DescriptorMatrix::from_rows(descs), s);
    for (std::size_t c = 0; c < j.rows(); ++c)
      for (std::size_t i = 0; i < j.cols(); ++i)
        EXPECT_NEAR(j(c, i), ref(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)),
                    1e-9 * (1.0 + std::abs(j(c, i))));
  }
}

TEST(Jacobian, SecondOrderConvergenceOnInteriorNodes) {
  // Smoothly non-uniform grid s = L (t + 0.1 sin 2πt), f(s) = sin(1.3 s).
  const double len = 4.0;
  auto max_err = [&](std::size_t n) {
    std::vector<double> s(n);
    DescriptorMatrix d(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(n - 1);
      s[i] = len * (t + 0.1 * std::sin(2 * std::numbers::pi * t));
      d(i, 0) = std::sin(1.3 * s[i]);
    }
    const auto j = numerical_jacobian(d, s);
    double e = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) e = std::max(e, std::abs(j(0, i) - 1.3 * std::cos(1.3 * s[i])));
    return e;
  };
  for (std::size_t n : {41u, 81u, 161u}) {
    const double order = std::log2(max_err(n) / max_err(2 * n - 1));
    EXPECT_GE(order, 1.9) << "n=" << n;
  }
}

TEST(Jacobian, RejectsBadGrid) {
  DescriptorMatrix d(3, 1);
  const std::vector<double> flat{0.0, 1.0, 1.0};
  EXPECT_THROW(numerical_jacobian(d, flat), InvalidArgument);
  const std::vector<double> shorter{0.0, 1.0};
  EXPECT_THROW(numerical_jacobian(d, shorter), InvalidArgument);
}

TEST(Eigen, TwoByTwo) {
  Matrix a(2, 2);
  a(0, 0) = 2;
  a(0, 1) = 1;
  a(1, 0) = 1;
  a(1, 1) = 2;
  const auto e = eigendecompose(a);
  EXPECT_NEAR(e.values[0], 3.0, 1e-12);
  EXPECT_NEAR(e.values[1], 1.0, 1e-12);
  const double r = std::sqrt(0.5);
  EXPECT_NEAR(e.vectors(0, 0), r, 1e-12);
  EXPECT_NEAR(e.vectors(1, 0), r, 1e-12);
  EXPECT_NEAR(e.vectors(0, 1), r, 1e-12);
  EXPECT_NEAR(e.vectors(1, 1), -r, 1e-12);
}

TEST(Eigen, DiagonalAndZero) {
  Matrix d(3, 3);
  d(0, 0) = 1;
  d(1, 1) = 5;
  d(2, 2) = 3;
  const auto e = eigendecompose(d);
  EXPECT_EQ(e.values, (std::vector<double>{5, 3, 1}));
  EXPECT_EQ(e.vectors(1, 0), 1.0);
  EXPECT_EQ(e.vectors(2, 1), 1.0);
  EXPECT_EQ(e.vectors(0, 2), 1.0);

  const auto z = eigendecompose(Matrix(4, 4));
  EXPECT_EQ(z.values, std::vector<double>(4, 0.0));
  EXPECT_EQ(z.vectors, Matrix::identity(4));
}

TEST(Eigen, RejectsNonSquareAndNonFinite) {
  EXPECT_THROW(eigendecompose(Matrix(2, 3)), InvalidArgument);
  Matrix a(2, 2);
  a(0, 1) = NAN;
  EXPECT_THROW(eigendecompose(a), InvalidArgument);
}

TEST(Eigen, RandomPsdInvariants) {
  Rng rng(99);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(15);
    const auto a = random_psd(rng, n, 1 + rng.below(n + 3));
    const auto e = eigendecompose(a);
    const double scale = std::max(1.0, a.frobenius());
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(e.values[k], 0.0);
      if (k > 0) {
        EXPECT_LE(e.values[k], e.values[k - 1]);
      }
      // A v = λ v
      for (std::size_t r = 0; r < n; ++r) {
        double av = 0.0;
        for (std::size_t c = 0; c < n; ++c) av += a(r, c) * e.vectors(c, k);
        EXPECT_NEAR(av, e.values[k] * e.vectors(r, k), 1e-8 * scale);
      }
      // orthonormal columns
      for (std::size_t l = 0; l < n; ++l) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += e.vectors(r, k) * e.vectors(r, l);
        EXPECT_NEAR(dot, k == l ? 1.0 : 0.0, 1e-8);
      }
      // sign convention
      for (std::size_t r = 0; r < n; ++r) {
        if (std::abs(e.vectors(r, k)) > 1e-9) {
          EXPECT_GT(e.vectors(r, k), 0.0);
          break;
        }
      }
    }
  }
}

TEST(Eigen, ValuesMatchOracle) {
  Rng rng(123);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(15);
    const auto a = random_psd(rng, n, n + 2);
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) m(r, c) = a(r, c);
    Eigen::VectorXd lam;
    Eigen::MatrixXd vec;
    oracle::ref_eigen(m, lam, vec);
    const auto e = eigendecompose(a);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(e.values[k], lam(static_cast<Eigen::Index>(k)), 1e-8);
  }
}

TEST(Transform, Examples) {
  const auto d = rows({{1, 2}, {3, 4}, {5, 6}});
  EigenDecomposition identity{{1, 1, 1}, Matrix::identity(3)};
  EXPECT_EQ(transform_descriptors(d, identity), d);
  EigenDecomposition zero{{0, 0, 0}, Matrix::identity(3)};
  EXPECT_EQ(transform_descriptors(d, zero), DescriptorMatrix(3, 2));
  EigenDecomposition clamped{{4, -1e-12, 1}, Matrix::identity(3)};
  EXPECT_EQ(transform_descriptors(d, clamped), rows({{2, 4}, {0, 0}, {5, 6}}));
  EXPECT_THROW(transform_descriptors(rows({{1}, {2}}), identity), InvalidArgument);
}

TEST(Transform, MatchesTripleProduct) {
  // 5 x 8 descriptors, random orthonormal V from the decomposition of a random
  // symmetric matrix
  Rng rng(8);
  Matrix sym(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j <= i; ++j) sym(i, j) = sym(j, i) = rng.uniform(-1.0, 1.0);
  auto eig = eigendecompose(sym);
  for (auto& v : eig.values) v = rng.uniform(0.0, 4.0);
  DescriptorMatrix d(5, 8);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) d(i, c) = rng.uniform(-1.0, 1.0);
  const auto got = transform_descriptors(d, eig);
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t c = 0; c < 8; ++c) {
      double want = 0.0;
      for (std::size_t j = 0; j < 5; ++j) want += std::sqrt(eig.values[k]) * eig.vectors(j, k) * d(j, c);
      EXPECT_NEAR(got(k, c), want, 1e-10);
    }
}

TEST(Transform, IndependentOfNullSpaceBasis) {
  // Rotating the eigenvectors of a repeated zero eigenvalue leaves D' alone.
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 4 + rng.below(8);
    const auto w = fixtures::random_window(rng, n, 1 + rng.below(2));
    std::vector<Pose> poses;
    std::vector<Descriptor> descs;
    for (const auto& k : w) {
      poses.push_back(k.pose);
      descs.push_back(k.descriptor);
    }
    const auto d = DescriptorMatrix::from_rows(descs);
    auto eig = eigendecompose(gram(numerical_jacobian(d, cumulative_arclength(poses))));
    std::vector<std::size_t> null;
    for (std::size_t k = 0; k < n; ++k)
      if (eig.values[k] == 0.0) null.push_back(k);
    ASSERT_GE(null.size(), 2u);
    const auto before = transform_descriptors(d, eig);
    const double theta = rng.uniform(0.1, 3.0);
    const std::size_t a = null[0], b = null[1];
    for (std::size_t r = 0; r < n; ++r) {
      const double va = eig.vectors(r, a), vb = eig.vectors(r, b);
      eig.vectors(r, a) = std::cos(theta) * va - std::sin(theta) * vb;
      eig.vectors(r, b) = std::sin(theta) * va + std::cos(theta) * vb;
    }
    const auto after = transform_descriptors(d, eig);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d.cols(); ++c) EXPECT_EQ(before(i, c), after(i, c));
  }
}

TEST(Preservation, ConstantDescriptorsGiveZero) {
  const std::vector<Pose> p{at(0), at(1), at(2.5)};
  EXPECT_EQ(preservation(p, rows({{1, 1}, {1, 1}, {1, 1}})), 0.0);
}

TEST(Preservation, NonPositiveAndMatchesOracle) {
  Rng rng(31);
  int compared = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(11);
    // half the windows have fewer descriptor components than keyframes, so
    // JᵀJ has a null space of dimension >= 2
    const std::size_t dim = t % 2 == 0 ? n + rng.below(10) : 1 + rng.below(n);
    const auto w = fixtures::random_window(rng, n, dim);
    const double pi = preservation(std::span<const Keyframe>(w));
    EXPECT_LE(pi, 0.0);
    const double ref = oracle::ref_preservation(oracle::positions_of(w), oracle::to_eigen(w));
    EXPECT_NEAR(pi, ref, 1e-9 * (1.0 + std::abs(ref)));
    ++compared;
  }
  EXPECT_EQ(compared, 300);
}

TEST(Preservation, UsesDistinctArclengthForRepeatedPoses) {
  const std::vector<Pose> p{at(0), at(0), at(1)};
  const double pi = preservation(p, rows({{0}, {1e-7}, {1}}));
  EXPECT_TRUE(std::isfinite(pi));
  EXPECT_LE(pi, 0.0);
}

TEST(Objective, ValueFromTerms) {
  EXPECT_DOUBLE_EQ(objective_value(0.5, -1.0, {}), -0.75);
  EXPECT_DOUBLE_EQ(objective_value(1.0, 0.0, ObjectiveParams{2.0, 0.5}), -6.0);
}

TEST(Objective, RejectsNonPositiveWeights) {
  const std::vector<Pose> p{at(0), at(1)};
  EXPECT_THROW(objective(p, rows({{0}, {1}}), ObjectiveParams{0.0, 1.0}), InvalidArgument);
  EXPECT_THROW(objective(p, rows({{0}, {1}}), ObjectiveParams{1.0, -1.0}), InvalidArgument);
}

TEST(Objective, AlwaysNegative) {
  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    const auto w = fixtures::random_window(rng, 2 + rng.below(10), 1 + rng.below(16));
    ObjectiveParams params{rng.uniform(0.01, 5.0), rng.uniform(0.01, 5.0)};
    EXPECT_LT(objective(std::span<const Keyframe>(w), params), 0.0);
  }
}
