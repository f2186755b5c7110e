#include <gtest/gtest.h>

#include <cmath>

#include "lrns/linalg.hpp"
#include "lrns/matrix.hpp"
#include "lrns/rng.hpp"

using namespace lrns;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    DenseMatrix m(r, c);
    CounterRng rng(seed);
    for (double& v : m.data) v = rng.gaussian();
    return m;
}

DenseMatrix random_orthogonal(std::size_t n, std::uint64_t seed) {
    return orthonormalize(random_matrix(n, n, seed));
}

/// S = V diag(evals) V^T with a random orthogonal V.
DenseMatrix psd_with_spectrum(const std::vector<double>& evals, std::uint64_t seed) {
    const std::size_t n = evals.size();
    DenseMatrix v = random_orthogonal(n, seed);
    DenseMatrix vd = v;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) vd(i, j) = v(i, j) * evals[j];
    DenseMatrix s = multiply_abt(vd, v);
    // enforce exact symmetry so the PSD precondition is met bit-for-bit
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double m = 0.5 * (s(i, j) + s(j, i));
            s(i, j) = m;
            s(j, i) = m;
        }
    return s;
}

double orthonormality_defect(const DenseMatrix& q) {
    DenseMatrix g = multiply_at_b(q, q);
    for (std::size_t i = 0; i < g.rows; ++i) g(i, i) -= 1.0;
    return frobenius_norm(g);
}

}  // namespace

TEST(Orthonormalize, IdentityIsFixedPoint) {
    DenseMatrix q = orthonormalize(DenseMatrix::identity(3));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_NEAR(q(i, j), i == j ? 1.0 : 0.0, 1e-15);
}

TEST(Orthonormalize, ForcedGramSchmidtPair) {
    DenseMatrix a(2, 2);
    a(0, 0) = 1.0; a(0, 1) = 1.0;
    a(1, 0) = 0.0; a(1, 1) = 1.0;
    DenseMatrix q = orthonormalize(a);
    EXPECT_LE(orthonormality_defect(q), 1e-14);
    // columns span the plane: projecting e2 onto span(Q) must be lossless
    DenseMatrix e(2, 2);
    e(0, 0) = 1.0; e(1, 1) = 1.0;
    EXPECT_LE(subspace_sin_theta(q, e), 1e-12);
}

TEST(Orthonormalize, RandomTallMatrix) {
    DenseMatrix q = orthonormalize(random_matrix(50, 5, 7));
    EXPECT_LE(orthonormality_defect(q), 1e-12);
}

TEST(Orthonormalize, RankDeficiencyNamesColumn) {
    DenseMatrix a = random_matrix(20, 3, 11);
    for (std::size_t i = 0; i < 20; ++i) a(i, 2) = 2.0 * a(i, 0) - a(i, 1);
    try {
        orthonormalize(a);
        FAIL() << "expected rank-deficiency error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos) << e.what();
    }
}

TEST(Orthonormalize, IdempotentUpToSign) {
    DenseMatrix q = orthonormalize(random_matrix(30, 4, 13));
    DenseMatrix q2 = orthonormalize(q);
    EXPECT_LE(subspace_sin_theta(q, q2), 1e-13);
}

TEST(SymEig, DiagonalSpectrumRecovered) {
    DenseMatrix d(4, 4);
    d(0, 0) = 5.0; d(1, 1) = 3.0; d(2, 2) = 3.0; d(3, 3) = -1.0;
    SymmetricEigen e = sym_eig(d);
    ASSERT_EQ(e.values.size(), 4u);
    EXPECT_NEAR(e.values[0], 5.0, 1e-13);
    EXPECT_NEAR(e.values[1], 3.0, 1e-13);
    EXPECT_NEAR(e.values[2], 3.0, 1e-13);
    EXPECT_NEAR(e.values[3], -1.0, 1e-13);
}

TEST(SymEig, ReconstructsRandomSymmetric) {
    DenseMatrix s = psd_with_spectrum({9, 5, 2, 1, 0.5, 0.1}, 17);
    SymmetricEigen e = sym_eig(s);
    // V diag(w) V^T == S
    DenseMatrix vd = e.vectors;
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) vd(i, j) *= e.values[j];
    DenseMatrix rec = multiply_abt(vd, e.vectors);
    for (std::size_t i = 0; i < rec.data.size(); ++i) rec.data[i] -= s.data[i];
    EXPECT_LE(frobenius_norm(rec), 1e-12 * frobenius_norm(s));
}

TEST(Rsvd, DiagonalTopEigenvector) {
    DenseMatrix s(3, 3);
    s(0, 0) = 4.0; s(1, 1) = 1.0; s(2, 2) = 0.0;
    RsvdConfig cfg = RsvdConfig::defaults(3, 1, 5);
    DenseMatrix u = rsvd_top_eigvecs(s, cfg);
    ASSERT_EQ(u.cols, 1u);
    EXPECT_NEAR(std::abs(u(0, 0)), 1.0, 1e-10);
    EXPECT_NEAR(u(1, 0), 0.0, 1e-10);
    EXPECT_NEAR(u(2, 0), 0.0, 1e-10);
}

TEST(Rsvd, TheoremBoundOnMeanResidual) {
    // mean Frobenius residual over 20 plain sketches (p = 0, q = 0) against
    // sqrt(1+k) * sqrt(tail eigenvalue sum)
    const std::size_t n = 100, k = 20;
    std::vector<double> evals(n);
    for (std::size_t i = 0; i < n; ++i)
        evals[i] = i < k ? 10.0 : std::pow(0.9, static_cast<double>(i - k));
    DenseMatrix s = psd_with_spectrum(evals, 23);
    double tail = 0.0;
    for (std::size_t i = k; i < n; ++i) tail += evals[i];
    double mean_residual = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RsvdConfig cfg{k, 0, 0, seed * 101 + 7};
        DenseMatrix u = rsvd_top_eigvecs(s, cfg);
        DenseMatrix proj = multiply(u, multiply_at_b(u, s));
        for (std::size_t i = 0; i < proj.data.size(); ++i) proj.data[i] -= s.data[i];
        mean_residual += frobenius_norm(proj) / 20.0;
    }
    EXPECT_LE(mean_residual, std::sqrt(1.0 + static_cast<double>(k)) * std::sqrt(tail));
}

TEST(Rsvd, FullRankSketchRecoversEverything) {
    const std::size_t n = 24;
    std::vector<double> evals(n);
    for (std::size_t i = 0; i < n; ++i) evals[i] = 1.0 + static_cast<double>(n - i);
    DenseMatrix s = psd_with_spectrum(evals, 29);
    RsvdConfig cfg{n, 0, 0, 3};
    DenseMatrix u = rsvd_top_eigvecs(s, cfg);
    DenseMatrix proj = multiply(u, multiply_at_b(u, s));
    for (std::size_t i = 0; i < proj.data.size(); ++i) proj.data[i] -= s.data[i];
    EXPECT_LE(frobenius_norm(proj), 1e-9 * frobenius_norm(s));
    // cross-check the recovered space against the exact eigendecomposition
    SymmetricEigen e = sym_eig(s);
    EXPECT_LE(subspace_sin_theta(u, e.vectors), 1e-9);
}

TEST(Rsvd, ExactLowRankInputIsCapturedDespiteDeficientSketch) {
    const std::size_t n = 30, r = 4, k = 10;
    std::vector<double> evals(n, 0.0);
    evals[0] = 5.0; evals[1] = 3.0; evals[2] = 2.0; evals[3] = 1.0;
    DenseMatrix s = psd_with_spectrum(evals, 31);
    RsvdConfig cfg{k, 5, 1, 9};
    DenseMatrix u = rsvd_top_eigvecs(s, cfg);
    ASSERT_EQ(u.cols, k);
    EXPECT_LE(orthonormality_defect(u), 1e-10);
    DenseMatrix proj = multiply(u, multiply_at_b(u, s));
    for (std::size_t i = 0; i < proj.data.size(); ++i) proj.data[i] -= s.data[i];
    EXPECT_LE(frobenius_norm(proj), 1e-8 * frobenius_norm(s));
    (void)r;
}

TEST(Rsvd, SubspaceAngleShrinksWithOversamplingAndPower) {
    const std::size_t n = 200, k = 10;
    std::vector<double> evals(n);
    for (std::size_t i = 0; i < n; ++i)
        evals[i] = i < k ? 100.0 : std::pow(0.5, static_cast<double>(i - k));
    DenseMatrix s = psd_with_spectrum(evals, 37);
    SymmetricEigen exact = sym_eig(s);
    DenseMatrix top(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) top(i, c) = exact.vectors(i, c);

    RsvdConfig plain{k, 0, 0, 41};
    RsvdConfig sharp{k, 10, 2, 41};
    const double angle_plain = subspace_sin_theta(top, rsvd_top_eigvecs(s, plain));
    const double angle_sharp = subspace_sin_theta(top, rsvd_top_eigvecs(s, sharp));
    EXPECT_LT(angle_sharp, angle_plain);
    EXPECT_LE(angle_sharp, 1e-6);
}

TEST(Rsvd, RejectsBadInputs) {
    DenseMatrix s = random_matrix(6, 6, 43);
    EXPECT_THROW(rsvd_top_eigvecs(s, RsvdConfig{2, 0, 0, 1}), std::invalid_argument);
    DenseMatrix sym = psd_with_spectrum({3, 2, 1, 1, 1, 1}, 47);
    EXPECT_THROW(rsvd_top_eigvecs(sym, RsvdConfig{5, 2, 0, 1}), std::invalid_argument);
}

TEST(Rsvd, FixedSeedIsBitReproducible) {
    DenseMatrix s = psd_with_spectrum({8, 4, 2, 1, 0.5, 0.25, 0.1, 0.05}, 53);
    RsvdConfig cfg{3, 2, 1, 99};
    DenseMatrix u1 = rsvd_top_eigvecs(s, cfg);
    DenseMatrix u2 = rsvd_top_eigvecs(s, cfg);
    ASSERT_EQ(u1.data.size(), u2.data.size());
    for (std::size_t i = 0; i < u1.data.size(); ++i) EXPECT_EQ(u1.data[i], u2.data[i]);
}

TEST(FactorizeSpd, IdentityAndDiagonal) {
    SymmetricFactorization f = factorize_spd(DenseMatrix::identity(4));
    Vector x = f.solve(std::vector<double>{1, 2, 3, 4});
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x[i], static_cast<double>(i + 1));

    DenseMatrix d(2, 2);
    d(0, 0) = 2.0; d(1, 1) = 8.0;
    SymmetricFactorization fd = factorize_spd(d);
    Vector y = fd.solve(std::vector<double>{2, 8});
    EXPECT_DOUBLE_EQ(y[0], 1.0);
    EXPECT_DOUBLE_EQ(y[1], 1.0);
}

TEST(FactorizeSpd, RandomSpdResidual) {
    const std::size_t n = 60;
    DenseMatrix g = random_matrix(n, n, 59);
    DenseMatrix a = multiply_abt(g, g);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
    SymmetricFactorization f = factorize_spd(a);
    Vector b = gaussian_vector(61, n);
    Vector x = f.solve(b);
    Vector ax = matvec(a, x);
    for (std::size_t i = 0; i < n; ++i) ax[i] -= b[i];
    EXPECT_LE(norm2(ax), 1e-10 * norm2(b));
}

TEST(FactorizeSpd, RoundTripReconstruction) {
    DenseMatrix a = psd_with_spectrum({12, 7, 3, 1.5, 0.7, 0.2}, 67);
    SymmetricFactorization f = factorize_spd(a);
    DenseMatrix rec = f.reconstruct();
    for (std::size_t i = 0; i < rec.data.size(); ++i) rec.data[i] -= a.data[i];
    EXPECT_LE(frobenius_norm(rec), 1e-12 * frobenius_norm(a));
}

TEST(FactorizeSpd, NonPositivePivotNamesIndex) {
    DenseMatrix a = DenseMatrix::identity(3);
    a(2, 2) = -4.0;
    try {
        factorize_spd(a);
        FAIL() << "expected pivot error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos) << e.what();
    }
}

TEST(SpectralNorm, ZeroAndScalarOperators) {
    LinearOp zero{5,
                  [](std::span<const double>, std::span<double> y) {
                      for (double& v : y) v = 0.0;
                  },
                  [](std::span<const double>, std::span<double> y) {
                      for (double& v : y) v = 0.0;
                  }};
    EXPECT_EQ(spectral_norm_estimate(zero, 10, 1), 0.0);

    auto half = [](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.5 * x[i];
    };
    LinearOp scaling{7, half, half};
    EXPECT_NEAR(spectral_norm_estimate(scaling, 50, 2), 0.5, 1e-6);
}

TEST(SpectralNorm, MatchesExactSingularValue) {
    const std::size_t n = 40;
    DenseMatrix m = random_matrix(n, n, 71);
    LinearOp op{n,
                [&](std::span<const double> x, std::span<double> y) { matvec_into(m, x, y); },
                [&](std::span<const double> x, std::span<double> y) { matvec_t_into(m, x, y); }};
    const double est = spectral_norm_estimate(op, 100, 3);
    // oracle: largest eigenvalue of M^T M through the dense Jacobi route
    DenseMatrix mtm = multiply_at_b(m, m);
    const double exact = std::sqrt(sym_eig(mtm).values.front());
    EXPECT_NEAR(est, exact, 0.05 * exact);
    EXPECT_LE(est, exact * (1.0 + 1e-12));
}

TEST(SymEigQl, AgreesWithJacobiOnRandomSymmetric) {
    DenseMatrix s = psd_with_spectrum({15, 9, 9, 4, 2.5, 1, 0.4, 0.1, 0.02, 0.001}, 73);
    SymmetricEigen jac = sym_eig(s);
    SymmetricEigen ql = sym_eig_ql(s);
    for (std::size_t t = 0; t < jac.values.size(); ++t)
        EXPECT_NEAR(ql.values[t], jac.values[t], 1e-12 * jac.values.front());
    // same invariant subspaces despite sign/rotation freedom
    EXPECT_LE(subspace_sin_theta(jac.vectors, ql.vectors), 1e-10);
    // reconstruction check
    DenseMatrix vd = ql.vectors;
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) vd(i, j) *= ql.values[j];
    DenseMatrix rec = multiply_abt(vd, ql.vectors);
    for (std::size_t i = 0; i < rec.data.size(); ++i) rec.data[i] -= s.data[i];
    EXPECT_LE(frobenius_norm(rec), 1e-12 * frobenius_norm(s));
}

TEST(SymEigQl, HandlesZeroAndIdentity) {
    SymmetricEigen z = sym_eig_ql(DenseMatrix(5, 5));
    for (double v : z.values) EXPECT_EQ(v, 0.0);
    SymmetricEigen id = sym_eig_ql(DenseMatrix::identity(6));
    for (double v : id.values) EXPECT_DOUBLE_EQ(v, 1.0);
}
