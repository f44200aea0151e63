#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gssc/numerics.hpp"

using namespace gssc;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

Matrix gaussian(Index r, Index c, RngStream s) {
  Rng rng(s);
  Matrix a(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) a(i, j) = rng.normal();
  return a;
}

// det(S - x I) by Gaussian elimination with partial pivoting in 50 digits.
Big char_poly(const Matrix& s, const Big& x) {
  const Index n = s.rows();
  std::vector<std::vector<Big>> a(n, std::vector<Big>(n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a[i][j] = Big(s(i, j)) - (i == j ? x : Big(0));
  Big det = 1;
  for (Index c = 0; c < n; ++c) {
    Index piv = c;
    for (Index r = c + 1; r < n; ++r) {
      if (abs(a[r][c]) > abs(a[piv][c])) piv = r;
    }
    if (a[piv][c] == 0) return 0;
    if (piv != c) {
      std::swap(a[piv], a[c]);
      det = -det;
    }
    det *= a[c][c];
    for (Index r = c + 1; r < n; ++r) {
      const Big f = a[r][c] / a[c][c];
      for (Index k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return det;
}

// All eigenvalues of a symmetric matrix with simple spectrum: sign changes of
// the characteristic polynomial on a fine grid, refined by bisection.
std::vector<double> char_poly_roots(const Matrix& s) {
  const double bound = s.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  const int grid = 20000;
  std::vector<double> roots;
  double lo = -bound;
  Big flo = char_poly(s, Big(lo));
  for (int g = 1; g <= grid; ++g) {
    const double hi = -bound + 2.0 * bound * g / grid;
    const Big fhi = char_poly(s, Big(hi));
    if ((flo < 0) != (fhi < 0)) {
      Big a = lo, b = hi, fa = flo;
      for (int it = 0; it < 80; ++it) {
        const Big mid = (a + b) / 2;
        const Big fm = char_poly(s, mid);
        if ((fm < 0) == (fa < 0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      roots.push_back(static_cast<double>((a + b) / 2));
    }
    lo = hi;
    flo = fhi;
  }
  return roots;
}

double wcss_of(const Matrix& pts, const std::vector<int>& labels, int k) {
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(pts.cols());
    int count = 0;
    for (Index i = 0; i < pts.rows(); ++i) {
      if (labels[i] == c) {
        mean += pts.row(i);
        ++count;
      }
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    mean /= count;
    for (Index i = 0; i < pts.rows(); ++i) {
      if (labels[i] == c) total += (pts.row(i) - mean).squaredNorm();
    }
  }
  return total;
}

// Minimum WCSS over every assignment of n points to k nonempty clusters.
double exhaustive_wcss(const Matrix& pts, int k) {
  const Index n = pts.rows();
  std::vector<int> labels(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    best = std::min(best, wcss_of(pts, labels, k));
    Index i = 0;
    while (i < n && ++labels[i] == k) labels[i++] = 0;
    if (i == n) break;
  }
  return best;
}

}  // namespace

TEST(LeastSquares, IdentitySystem) {
  const Vector x = least_squares(Matrix::Identity(3, 3), Vector::LinSpaced(3, 1.0, 3.0));
  EXPECT_NEAR(x(0), 1.0, 1e-14);
  EXPECT_NEAR(x(1), 2.0, 1e-14);
  EXPECT_NEAR(x(2), 3.0, 1e-14);
}

TEST(LeastSquares, ScalarColumn) {
  Matrix a(2, 1);
  a << 2, 0;
  Vector b(2);
  b << 4, 0;
  const Vector x = least_squares(a, b);
  ASSERT_EQ(x.size(), 1);
  EXPECT_NEAR(x(0), 2.0, 1e-14);
}

TEST(LeastSquares, MatchesNormalEquations) {
  // A^T A = [[1,1],[1,2]], A^T b = (1,2)  =>  x = (0,1).
  Matrix a(3, 2);
  a << 1, 1, 0, 1, 0, 0;
  const Vector x = least_squares(a, Vector::Ones(3));
  EXPECT_NEAR(x(0), 0.0, 1e-13);
  EXPECT_NEAR(x(1), 1.0, 1e-13);
}

TEST(LeastSquares, RejectsRankDeficientAndWide) {
  Matrix dup(3, 2);
  dup << 1, 2, 1, 2, 1, 2;
  try {
    least_squares(dup, Vector::Ones(3));
    FAIL() << "expected RankDeficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
  try {
    least_squares(Matrix::Ones(2, 3), Vector::Ones(2));
    FAIL() << "expected InvalidShape";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidShape);
  }
}

TEST(LeastSquares, ResidualOrthogonalToColumns) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng pick(RngStream{7, s});
    const Index m = 2 + static_cast<Index>(pick.index(11));
    const Index k = 1 + static_cast<Index>(pick.index(static_cast<std::size_t>(std::min<Index>(m, 6))));
    const Matrix a = gaussian(m, k, RngStream{8, s});
    const Vector b = gaussian(m, 1, RngStream{9, s});
    const Vector x = least_squares(a, b);
    const double err = (a.transpose() * (a * x - b)).cwiseAbs().maxCoeff();
    EXPECT_LE(err, 1e-8 * a.norm() * b.norm()) << "instance " << s;
  }
}

TEST(RandomOrthonormal, FullSquareIsOrthogonal) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix u = random_orthonormal(3, 3, RngStream{1, s});
    EXPECT_NEAR(std::abs(u.determinant()), 1.0, 1e-10);
  }
}

TEST(RandomOrthonormal, GramIdentityOnSeededDraws) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Index m = 5 + static_cast<Index>(s % 20);
    const Index k = 1 + static_cast<Index>(s % static_cast<std::uint64_t>(m));
    const Matrix u = random_orthonormal(m, k, RngStream{2, s});
    ASSERT_EQ(u.rows(), m);
    ASSERT_EQ(u.cols(), k);
    EXPECT_LE((u.transpose() * u - Matrix::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(RandomOrthonormal, DeterministicPerStream) {
  const Matrix a = random_orthonormal(5, 2, RngStream{3, 1});
  const Matrix b = random_orthonormal(5, 2, RngStream{3, 1});
  const Matrix c = random_orthonormal(5, 2, RngStream{3, 2});
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(RandomOrthonormal, RejectsTooManyColumns) {
  try {
    random_orthonormal(3, 4, RngStream{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidShape);
  }
}

TEST(RandomOrthonormal, FirstColumnIsotropic) {
  // Haar columns: E[u_i] = 0, E[u_i^2] = 1/m.
  const Index m = 4;
  const int draws = 4000;
  Vector mean = Vector::Zero(m), second = Vector::Zero(m);
  for (int s = 0; s < draws; ++s) {
    const Vector u = random_orthonormal(m, 2, RngStream{4, static_cast<std::uint64_t>(s)}).col(0);
    mean += u;
    second += u.cwiseAbs2();
  }
  mean /= draws;
  second /= draws;
  for (Index i = 0; i < m; ++i) {
    EXPECT_NEAR(mean(i), 0.0, 0.05);
    EXPECT_NEAR(second(i), 0.25, 0.03);
  }
}

TEST(UniformSphere, ZeroSphereIsPlusMinusOne) {
  Rng rng(RngStream{5, 0});
  for (int i = 0; i < 20; ++i) {
    const double v = uniform_sphere(1, rng)(0);
    EXPECT_TRUE(v == 1.0 || v == -1.0);
  }
}

TEST(UniformSphere, UnitNormAndReproducible) {
  Rng a(RngStream{6, 3}), b(RngStream{6, 3});
  const Vector va = uniform_sphere(3, a);
  EXPECT_NEAR(va.norm(), 1.0, 1e-12);
  EXPECT_TRUE(va == uniform_sphere(3, b));
  Rng c(RngStream{});
  EXPECT_THROW(uniform_sphere(0, c), Error);
}

TEST(UniformSphere, EmpiricalMeanNearZero) {
  Rng rng(RngStream{11, 0});
  Vector mean = Vector::Zero(4);
  for (int i = 0; i < 10000; ++i) mean += uniform_sphere(4, rng);
  mean /= 10000.0;
  for (Index i = 0; i < 4; ++i) EXPECT_LT(std::abs(mean(i)), 0.05);
}

TEST(SymEigs, DiagonalAndIdentity) {
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 3, 1, 2;
  const EigenPairs e = sym_eigs_smallest(d, 2);
  ASSERT_EQ(e.values.size(), 2);
  EXPECT_NEAR(e.values(0), 1.0, 1e-14);
  EXPECT_NEAR(e.values(1), 2.0, 1e-14);
  const EigenPairs id = sym_eigs_smallest(Matrix::Identity(4, 4), 1);
  ASSERT_EQ(id.values.size(), 1);
  EXPECT_NEAR(id.values(0), 1.0, 1e-14);
}

TEST(SymEigs, MatchesCharacteristicPolynomialRoots) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Matrix g = gaussian(6, 6, RngStream{12, s});
    const Matrix sym = 0.5 * (g + g.transpose());
    const std::vector<double> roots = char_poly_roots(sym);
    ASSERT_EQ(roots.size(), 6u) << "oracle needs a simple spectrum";
    const EigenPairs e = sym_eigs_smallest(sym, 6);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(e.values(i), roots[i], 1e-8);
  }
}

TEST(SymEigs, EigenpairResidualsAndOrthonormality) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Index n = 2 + static_cast<Index>(s % 15);
    const Matrix g = gaussian(n, n, RngStream{13, s});
    const Matrix sym = g + g.transpose();
    const Index k = 1 + static_cast<Index>(s % static_cast<std::uint64_t>(n));
    const EigenPairs e = sym_eigs_smallest(sym, k);
    for (Index i = 0; i < k; ++i) {
      EXPECT_LE((sym * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm(), 1e-8 * sym.norm());
      if (i > 0) {
        EXPECT_LE(e.values(i - 1), e.values(i));
      }
    }
    EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SymEigs, RejectsAsymmetricInput) {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 1) = 1e-3;
  try {
    sym_eigs_smallest(a, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSymmetric);
  }
}

TEST(SingularValues, Examples) {
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 1, 2;
  const Vector sv = singular_values(d);
  EXPECT_NEAR(sv(0), 2.0, 1e-14);
  EXPECT_NEAR(sv(1), 1.0, 1e-14);

  const Matrix u = random_orthonormal(6, 3, RngStream{14, 0});
  const Vector ones = singular_values(u);
  ASSERT_EQ(ones.size(), 3);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(ones(i), 1.0, 1e-10);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix a = random_orthonormal(4, 2, RngStream{15, s});
    const Matrix b = random_orthonormal(4, 3, RngStream{16, s});
    const Vector c = singular_values(a.transpose() * b);
    ASSERT_EQ(c.size(), 2);
    EXPECT_GE(c(0), c(1));
    EXPECT_GE(c(1), 0.0);
    EXPECT_LE(c(0), 1.0 + 1e-12);
  }
}

TEST(KMeans, SeparatedCloudsSplitPerfectly) {
  Rng noise(RngStream{17, 0});
  Matrix pts(20, 2);
  for (Index i = 0; i < 20; ++i) {
    const double base = i < 10 ? 0.0 : 10.0;
    pts(i, 0) = base + 0.01 * (2 * noise.uniform() - 1);
    pts(i, 1) = base + 0.01 * (2 * noise.uniform() - 1);
  }
  const KMeansResult r = kmeans(pts, 2, RngStream{17, 1});
  for (Index i = 1; i < 10; ++i) EXPECT_EQ(r.labels[i], r.labels[0]);
  for (Index i = 11; i < 20; ++i) EXPECT_EQ(r.labels[i], r.labels[10]);
  EXPECT_NE(r.labels[0], r.labels[10]);
}

TEST(KMeans, SingleClusterAllZero) {
  const KMeansResult r = kmeans(gaussian(7, 3, RngStream{18, 0}), 1, RngStream{18, 1});
  for (int l : r.labels) EXPECT_EQ(l, 0);
}

TEST(KMeans, FivePointsMatchExhaustiveTwoPartition) {
  Matrix pts(5, 2);
  pts << 0, 0, 1, 0, 0, 1, 5, 5, 6, 5;
  const KMeansResult r = kmeans(pts, 2, RngStream{19, 0});
  EXPECT_NEAR(r.wcss, exhaustive_wcss(pts, 2), 1e-12);
  EXPECT_NEAR(r.wcss, wcss_of(pts, r.labels, 2), 1e-12);
}

// Lloyd iterations only reach local minima, so the global optimum is
// demanded with a generous restart budget.
TEST(KMeans, MatchesExhaustiveMinimumOnSmallInstances) {
  for (std::uint64_t s = 0; s < 60; ++s) {
    Rng pick(RngStream{20, s});
    const int k = 2 + static_cast<int>(pick.index(2));
    const Index n = k + static_cast<Index>(pick.index(static_cast<std::size_t>(9 - k)));
    const Matrix pts = gaussian(n, 2, RngStream{21, s});
    const KMeansResult r = kmeans(pts, k, RngStream{22, s}, KMeansConfig{100, 300});
    EXPECT_NEAR(r.wcss, exhaustive_wcss(pts, k), 1e-9) << "instance " << s << " n=" << n << " k=" << k;
    for (int l : r.labels) {
      EXPECT_GE(l, 0);
      EXPECT_LT(l, k);
    }
  }
}

TEST(KMeans, ErrorsAndPurity) {
  const Matrix pts = gaussian(6, 2, RngStream{23, 0});
  EXPECT_THROW(kmeans(pts, 7, RngStream{}), Error);
  EXPECT_THROW(kmeans(pts, 0, RngStream{}), Error);
  const KMeansResult a = kmeans(pts, 3, RngStream{23, 1});
  const KMeansResult b = kmeans(pts, 3, RngStream{23, 1});
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.wcss, b.wcss);
}

TEST(RngStream, DerivedStreamsDifferAndReplay) {
  const RngStream base{42, 0};
  EXPECT_EQ(base.derive(3), base.derive(3));
  EXPECT_NE(base.derive(3), base.derive(4));
  EXPECT_NE(base.derive(3).derive(0), base.derive(0).derive(3));
  Rng a(base.derive(9)), b(base.derive(9));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
}
