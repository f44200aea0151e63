#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gssc/datamodel.hpp"
#include "gssc/pursuit.hpp"
#include "oracles.hpp"

using namespace gssc;

namespace {

Matrix gaussian(Index r, Index c, RngStream s) {
  Rng rng(s);
  Matrix a(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) a(i, j) = rng.normal();
  return a;
}

Matrix unit_columns(Index r, Index c, RngStream s) { return normalize_columns(gaussian(r, c, s)).y; }

double coef(const PursuitResult& r, Index i) {
  for (const auto& c : r.coefficients)
    if (c.index == i) return c.value;
  return 0.0;
}

PursuitConfig omp_di(std::size_t s) { return PursuitConfig::data_independent(Method::OMP, s); }
PursuitConfig mp_di(std::size_t s) { return PursuitConfig::data_independent(Method::MP, s); }

}  // namespace

TEST(OmpRepresent, ExactDuplicateColumn) {
  Matrix y = unit_columns(4, 5, RngStream{1, 0});
  y.col(3) = y.col(1);
  const PursuitResult r = omp_represent(y, 1, PursuitConfig::data_dependent(Method::OMP, 0.0));
  ASSERT_EQ(r.selection_order, std::vector<Index>{3});
  EXPECT_NEAR(coef(r, 3), 1.0, 1e-12);
  EXPECT_LE(r.residual_norm, 1e-12);
  EXPECT_TRUE(r.stop_reason == StopReason::ZeroInnerProducts || r.stop_reason == StopReason::ResidualBelowTau);
}

TEST(OmpRepresent, TwoAxesTieBrokenToLowestIndex) {
  Matrix y(2, 3);
  const double h = 1.0 / std::sqrt(2.0);
  y << 1, 0, h, 0, 1, h;
  const PursuitResult r = omp_represent(y, 2, omp_di(2));
  ASSERT_EQ(r.selection_order, (std::vector<Index>{0, 1}));
  EXPECT_EQ(r.support, (std::vector<Index>{0, 1}));
  EXPECT_NEAR(coef(r, 0), h, 1e-14);
  EXPECT_NEAR(coef(r, 1), h, 1e-14);
  EXPECT_NEAR(r.residual_norm, 0.0, 1e-14);
}

TEST(OmpRepresent, MatchesBruteForceOracleOnRandomInstance) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix y = gaussian(6, 10, RngStream{2, s});
    const Index j = static_cast<Index>(s % 10);
    const PursuitResult r = omp_represent(y, j, omp_di(3));
    const oracle::Trace t = oracle::omp(y, j, omp_di(3));
    EXPECT_EQ(r.selection_order, t.order);
    EXPECT_EQ(r.stop_reason, t.stop);
    EXPECT_NEAR(r.residual_norm, t.residual, 1e-10);
    EXPECT_LE((r.dense(10) - t.coefficients).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MpRepresent, ExactDuplicateColumn) {
  Matrix y = unit_columns(4, 5, RngStream{3, 0});
  y.col(0) = y.col(2);
  const PursuitResult r = mp_represent(y, 2, PursuitConfig::data_dependent(Method::MP, 0.0));
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_NEAR(coef(r, 0), 1.0, 1e-12);
  EXPECT_LE(r.residual_norm, 1e-12);
}

TEST(MpRepresent, ReselectionHandComputation) {
  // Dictionary {e1, (e1+e2)/sqrt2}, target e2:
  //   s=1 picks column 1, b1 = 1/sqrt2, q = (-e1+e2)/2
  //   s=2 picks column 0, b0 = -1/2,   q = e2/2
  //   s=3 picks column 1, b1 += 1/(2 sqrt2), q = (-e1+e2)/4
  const double h = 1.0 / std::sqrt(2.0);
  Matrix y(2, 3);
  y << 1, h, 0, 0, h, 1;
  std::vector<Vector> residuals;
  const PursuitResult r =
      mp_represent(y, 2, mp_di(3), [&](const IterationView& v) { residuals.push_back(v.residual); });
  ASSERT_EQ(r.selection_order, (std::vector<Index>{1, 0, 1}));
  EXPECT_EQ(r.support.size(), 2u);
  EXPECT_EQ(r.iterations, 3u);
  EXPECT_NEAR(coef(r, 1), h + h / 2.0, 1e-15);
  EXPECT_NEAR(coef(r, 0), -0.5, 1e-15);
  EXPECT_NEAR(r.residual_norm, std::sqrt(2.0) / 4.0, 1e-15);
  ASSERT_EQ(residuals.size(), 3u);
  EXPECT_NEAR(residuals[2](0), -0.25, 1e-15);
  EXPECT_NEAR(residuals[2](1), 0.25, 1e-15);
  EXPECT_EQ(r.stop_reason, StopReason::MaxIterations);
}

TEST(MpRepresent, IterationBudgetBindsBeforeSparsity) {
  const Matrix y = unit_columns(8, 20, RngStream{4, 0});
  PursuitConfig cfg = mp_di(5);
  cfg.p_max = 20;
  const PursuitResult r = mp_represent(y, 0, cfg);
  EXPECT_EQ(r.iterations, 5u);
  EXPECT_EQ(r.stop_reason, StopReason::MaxIterations);
}

TEST(MpRepresent, MatchesBruteForceOracle) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix y = gaussian(5, 9, RngStream{5, s});
    const Index j = static_cast<Index>(s % 9);
    PursuitConfig cfg = mp_di(4);
    const PursuitResult r = mp_represent(y, j, cfg);
    const oracle::Trace t = oracle::mp(y, j, cfg);
    EXPECT_EQ(r.selection_order, t.order);
    EXPECT_NEAR(r.residual_norm, t.residual, 1e-10);
    EXPECT_LE((r.dense(9) - t.coefficients).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Pursuit, SparsityBudgetStopsMp) {
  const Matrix y = unit_columns(6, 12, RngStream{6, 0});
  PursuitConfig cfg;
  cfg.method = Method::MP;
  cfg.p_max = 3;
  const PursuitResult r = mp_represent(y, 4, cfg);
  EXPECT_EQ(r.support.size(), 3u);
  EXPECT_EQ(r.stop_reason, StopReason::SparsityReached);
  EXPECT_GE(r.iterations, 3u);
}

TEST(Pursuit, ResidualThresholdContract) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Matrix y = unit_columns(6, 14, RngStream{7, s});
    for (Method m : {Method::OMP, Method::MP}) {
      const double tau = 0.2 + 0.05 * static_cast<double>(s % 5);
      const PursuitResult r = represent(y, 0, PursuitConfig::data_dependent(m, tau));
      if (r.stop_reason == StopReason::ResidualBelowTau) {
        EXPECT_LE(r.residual_norm, tau + 1e-12);
      }
      if (m == Method::OMP) {
        EXPECT_EQ(r.stop_reason, StopReason::ResidualBelowTau);
      }
    }
  }
}

TEST(Pursuit, LargeTauStopsBeforeFirstIteration) {
  const Matrix y = unit_columns(5, 8, RngStream{8, 0});
  for (Method m : {Method::OMP, Method::MP}) {
    const PursuitResult r = represent(y, 2, PursuitConfig::data_dependent(m, 1.0));
    EXPECT_EQ(r.iterations, 0u);
    EXPECT_TRUE(r.support.empty());
    EXPECT_EQ(r.stop_reason, StopReason::ResidualBelowTau);
  }
}

TEST(Pursuit, StopPrecedenceAtStart) {
  const Matrix y = unit_columns(5, 8, RngStream{9, 0});
  PursuitConfig cfg = omp_di(0);
  cfg.tau = 2.0;
  EXPECT_EQ(omp_represent(y, 0, cfg).stop_reason, StopReason::MaxIterations);
  PursuitConfig mp_cfg;
  mp_cfg.method = Method::MP;
  mp_cfg.p_max = 0;
  mp_cfg.tau = 2.0;
  EXPECT_EQ(mp_represent(y, 0, mp_cfg).stop_reason, StopReason::SparsityReached);
}

TEST(Pursuit, OrthogonalTargetHasZeroInnerProducts) {
  Matrix y = Matrix::Zero(3, 3);
  y(0, 0) = 1;
  y(1, 1) = 1;
  y(2, 2) = 1;
  for (Method m : {Method::OMP, Method::MP}) {
    PursuitConfig cfg;
    cfg.method = m;
    const PursuitResult r = represent(y, 2, cfg);
    EXPECT_EQ(r.iterations, 0u);
    EXPECT_EQ(r.stop_reason, StopReason::ZeroInnerProducts);
    EXPECT_NEAR(r.residual_norm, 1.0, 1e-15);
  }
}

TEST(Pursuit, MpIterationCapIsAStopReason) {
  const Matrix y = unit_columns(6, 9, RngStream{10, 0});
  PursuitConfig cfg = PursuitConfig::data_dependent(Method::MP, 0.0);
  cfg.iter_cap = 40;
  const PursuitResult r = mp_represent(y, 0, cfg);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.stop_reason, StopReason::IterCap);
  EXPECT_EQ(r.iterations, 40u);
}

TEST(Pursuit, DegenerateColumnAndBadIndex) {
  Matrix y = unit_columns(4, 5, RngStream{11, 0});
  y.col(2).setZero();
  for (Method m : {Method::OMP, Method::MP}) {
    PursuitConfig cfg = PursuitConfig::data_independent(m, 2);
    const PursuitResult r = represent(y, 2, cfg);
    EXPECT_TRUE(r.degenerate);
    EXPECT_TRUE(r.coefficients.empty());
    EXPECT_EQ(r.stop_reason, StopReason::ZeroInnerProducts);
    try {
      represent(y, 5, cfg);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidIndex);
    }
  }
}

TEST(Pursuit, ConfigValidation) {
  const Matrix y = unit_columns(4, 6, RngStream{12, 0});
  EXPECT_THROW(omp_represent(y, 0, omp_di(5)), Error);  // s_max > min(m, N-1)
  PursuitConfig bad = omp_di(2);
  bad.alpha = 0.0;
  EXPECT_THROW(omp_represent(y, 0, bad), Error);
  bad.alpha = 1.5;
  EXPECT_THROW(omp_represent(y, 0, bad), Error);
  PursuitConfig neg = PursuitConfig::data_dependent(Method::MP, -1.0);
  EXPECT_THROW(mp_represent(y, 0, neg), Error);
  EXPECT_THROW(omp_represent(y, 0, mp_di(2)), Error);
  EXPECT_THROW(omp_represent(Matrix::Ones(3, 1), 0, omp_di(1)), Error);
}

TEST(Pursuit, WeakSelectionTakesLowestQualifyingIndex) {
  // Scores against the target e1: 0.5, 0.8, 0.9 (column 3 is the target).
  Matrix y(2, 4);
  y << 0.5, 0.8, 0.9, 1.0, std::sqrt(0.75), std::sqrt(1 - 0.64), std::sqrt(1 - 0.81), 0.0;
  PursuitConfig cfg = omp_di(1);
  EXPECT_EQ(omp_represent(y, 3, cfg).selection_order.front(), 2);
  cfg.alpha = 0.85;
  EXPECT_EQ(omp_represent(y, 3, cfg).selection_order.front(), 1);
  cfg.alpha = 0.5;
  EXPECT_EQ(omp_represent(y, 3, cfg).selection_order.front(), 0);
  const oracle::Trace t = oracle::omp(y, 3, cfg);
  EXPECT_EQ(t.order.front(), 0);
}

TEST(Pursuit, AlphaOneReproducesPlainRule) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Matrix y = unit_columns(7, 12, RngStream{13, s});
    for (Method m : {Method::OMP, Method::MP}) {
      PursuitConfig cfg = PursuitConfig::data_independent(m, 4);
      cfg.alpha = 1.0;
      const PursuitResult r = represent(y, static_cast<Index>(s % 12), cfg);
      const oracle::Trace t = m == Method::OMP ? oracle::omp(y, static_cast<Index>(s % 12), cfg)
                                               : oracle::mp(y, static_cast<Index>(s % 12), cfg);
      EXPECT_EQ(r.selection_order, t.order) << "instance " << s;
    }
  }
}

TEST(PursuitInvariants, OmpOrthogonalityMonotonicityAndReconstruction) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const Matrix y = gaussian(8, 15, RngStream{14, s});
    const Index j = static_cast<Index>(s % 15);
    const double max_col = y.colwise().norm().maxCoeff();
    double previous = y.col(j).norm();
    const PursuitResult r = omp_represent(y, j, omp_di(7), [&](const IterationView& v) {
      for (Index i : v.selection_order) EXPECT_LE(std::abs(y.col(i).dot(v.residual)), 1e-8 * max_col);
      EXPECT_LE(v.residual.norm(), previous + 1e-12);
      EXPECT_LE(v.residual.norm(), y.col(j).norm() + 1e-12);
      previous = v.residual.norm();
    });
    EXPECT_EQ(r.support.size(), r.iterations);
    Vector fit = Vector::Zero(8);
    for (const auto& c : r.coefficients) fit += c.value * y.col(c.index);
    EXPECT_NEAR((y.col(j) - fit).norm(), r.residual_norm, 1e-8);
    Matrix sub(8, static_cast<Index>(r.support.size()));
    for (std::size_t k = 0; k < r.support.size(); ++k) sub.col(static_cast<Index>(k)) = y.col(r.support[k]);
    const Vector pinv = sub.completeOrthogonalDecomposition().solve(Vector(y.col(j)));
    EXPECT_NEAR((y.col(j) - sub * pinv).norm(), r.residual_norm, 1e-8);
  }
}

TEST(PursuitInvariants, MpEnergyIdentityAndReconstruction) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const Matrix y = gaussian(6, 12, RngStream{15, s});
    const Index j = static_cast<Index>(s % 12);
    double previous = y.col(j).norm();
    const PursuitResult r = mp_represent(y, j, mp_di(25), [&](const IterationView& v) {
      const double drop = previous * previous - v.residual.squaredNorm();
      const double expected = std::pow(v.inner_product / y.col(v.selected).norm(), 2);
      EXPECT_NEAR(drop, expected, 1e-10 * std::max(1.0, expected));
      const Vector recon = y.col(j) - y * *v.coefficients - v.residual;
      EXPECT_LE(recon.norm(), 1e-8);
      EXPECT_EQ((*v.coefficients)(j), 0.0);
      EXPECT_LE(v.residual.norm(), y.col(j).norm() + 1e-12);
      previous = v.residual.norm();
    });
    EXPECT_LE(r.support.size(), r.iterations);
  }
}

TEST(RepresentAll, TwoDuplicateColumns) {
  Matrix y(3, 2);
  y.col(0) << 0.6, 0.8, 0.0;
  y.col(1) = y.col(0);
  for (Method m : {Method::OMP, Method::MP}) {
    const auto rs = represent_all(y, PursuitConfig::data_independent(m, 1));
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_EQ(rs[0].support, std::vector<Index>{1});
    EXPECT_EQ(rs[1].support, std::vector<Index>{0});
    EXPECT_NEAR(coef(rs[0], 1), 1.0, 1e-14);
    EXPECT_NEAR(coef(rs[1], 0), 1.0, 1e-14);
  }
}

TEST(RepresentAll, ScheduleIndependentAndMatchesPointwiseCalls) {
  SyntheticConfig sc{{20, 20, 20}, 0.3, RngStream{16, 1}};
  const DataSet ds = generate_points(sample_arrangement_random(30, {5, 5, 5}, RngStream{16, 0}), sc);
  const Matrix y = normalize_columns(ds.y).y;
  for (Method m : {Method::OMP, Method::MP}) {
    PursuitConfig cfg = m == Method::OMP ? PursuitConfig::data_independent(m, 6)
                                         : PursuitConfig::data_dependent(m, 0.3);
    const auto serial = represent_all(y, cfg, 1);
    const auto parallel = represent_all(y, cfg, 4);
    for (Index j = 0; j < y.cols(); ++j) {
      EXPECT_EQ(serial[j].selection_order, parallel[j].selection_order);
      EXPECT_EQ(serial[j].coefficients, parallel[j].coefficients);
      EXPECT_EQ(serial[j].residual_norm, parallel[j].residual_norm);
      const PursuitResult single = represent(y, j, cfg);
      EXPECT_EQ(serial[j].selection_order, single.selection_order);
      EXPECT_EQ(serial[j].stop_reason, single.stop_reason);
      EXPECT_LE((serial[j].dense(y.cols()) - single.dense(y.cols())).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(RepresentAll, RecordsPerPointFailures) {
  const Matrix y = unit_columns(3, 6, RngStream{17, 0});
  const auto rs = represent_all(y, omp_di(4));  // s_max exceeds min(m, N-1) = 3
  for (const auto& r : rs) {
    EXPECT_FALSE(r.ok());
    EXPECT_FALSE(r.failure.empty());
  }
  EXPECT_THROW(represent_all(Matrix::Ones(3, 1), omp_di(1)), Error);
}
