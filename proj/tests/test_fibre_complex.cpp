#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace weinfib;

TEST(FibreComplex, CellCountsAreProductTimesBinomial)
{
    const std::vector<std::vector<int>> shapes = {{7}, {4, 5}, {3, 4, 5}, {2, 3, 2, 3}};
    for (const auto& res : shapes) {
        const FibreComplex cx(res);
        std::size_t prod = 1;
        for (int r : res) prod *= static_cast<std::size_t>(r);
        for (int k = 0; k <= cx.dim(); ++k)
            EXPECT_EQ(cx.cell_count(k), prod * static_cast<std::size_t>(binomial(cx.dim(), k)));
    }
}

TEST(FibreComplex, CircleCoboundaryIsSignedDifference)
{
    const FibreComplex cx({4});
    Vec f(4);
    f << 0, 1, 0, -1;
    Vec expect(4);
    expect << 1, -1, -1, 1;
    EXPECT_EQ(cx.d(0, f), expect);
}

TEST(FibreComplex, IncidenceCompositionVanishesAsIntegers)
{
    for (int n = 2; n <= 4; ++n) {
        const FibreComplex cx(std::vector<int>(static_cast<std::size_t>(n), 3));
        for (int k = 0; k + 1 < n; ++k) {
            const Eigen::SparseMatrix<int> dd = cx.incidence(k + 1) * cx.incidence(k);
            int worst = 0;
            for (int c = 0; c < dd.outerSize(); ++c)
                for (Eigen::SparseMatrix<int>::InnerIterator it(dd, c); it; ++it) worst = std::max(worst, std::abs(it.value()));
            EXPECT_EQ(worst, 0) << "n=" << n << " k=" << k;
        }
    }
}

TEST(FibreComplex, IncidenceRowsHaveTwoFacesPerAxis)
{
    const FibreComplex cx({4, 4, 4});
    for (int k = 0; k < 3; ++k) {
        const Eigen::SparseMatrix<int, Eigen::RowMajor> inc = cx.incidence(k);
        for (Eigen::Index r = 0; r < inc.rows(); ++r) EXPECT_EQ(inc.row(r).nonZeros(), 2 * (k + 1));
    }
}

TEST(FibreComplex, DDIsZeroBitExactOnIntegerCochains)
{
    std::mt19937_64 rng(11);
    for (int n = 2; n <= 4; ++n) {
        const FibreComplex cx(std::vector<int>(static_cast<std::size_t>(n), n == 4 ? 4 : 9));
        for (int k = 0; k + 1 < n; ++k)
            for (int rep = 0; rep < 5; ++rep) {
                const Vec a = wt::integer_cochain(rng, static_cast<Eigen::Index>(cx.cell_count(k)));
                const Vec dd = cx.d(k + 1, cx.d(k, a));
                EXPECT_EQ(dd.cwiseAbs().maxCoeff(), 0.0);
            }
    }
}

TEST(FibreComplex, TranslationCommutesWithD)
{
    std::mt19937_64 rng(3);
    const FibreComplex cx({5, 6});
    const std::vector<int> shift = {2, -1};
    for (int k = 0; k < 2; ++k) {
        const Vec a = wt::uniform_cochain(rng, static_cast<Eigen::Index>(cx.cell_count(k)));
        EXPECT_EQ(cx.d(k, cx.translate(k, a, shift)), cx.translate(k + 1, cx.d(k, a), shift));
    }
}

TEST(FibreComplex, HodgeWeightsAreDualOverPrimalVolume)
{
    const FibreComplex cx({8, 4}, {kTwoPi, 2.0});
    const double h0 = kTwoPi / 8;
    const double h1 = 0.5;
    EXPECT_DOUBLE_EQ(cx.hodge_weight(0, 0), h0 * h1);
    EXPECT_DOUBLE_EQ(cx.hodge_weight(1, 0), h1 / h0);
    EXPECT_DOUBLE_EQ(cx.hodge_weight(1, 1), h0 / h1);
    EXPECT_DOUBLE_EQ(cx.hodge_weight(2, 0), 1.0 / (h0 * h1));
}

TEST(FibreComplex, RejectsBadShapes)
{
    EXPECT_THROW(FibreComplex(std::vector<int>{}), ConfigurationError);
    EXPECT_THROW(FibreComplex({2, 2, 2, 2, 2}), ConfigurationError);
    EXPECT_THROW(FibreComplex({0, 3}), ConfigurationError);
    const FibreComplex cx({3, 3});
    EXPECT_THROW(cx.coboundary(2), DegreeError);
    EXPECT_THROW(cx.d(0, Vec::Zero(5)), ConfigurationError);
}

TEST(BaseGrid, PartitionOfUnitySupportedInPatches)
{
    for (int patches : {1, 2, 3, 4}) {
        const auto g = BaseGrid::uniform_circle(16, patches, patches > 1 ? 1 : 0);
        for (int j = 0; j < g.size(); ++j) {
            double total = 0.0;
            for (int p = 0; p < g.patch_count(); ++p) {
                total += g.weight(p, j);
                const auto& s = g.patch(p).samples;
                if (g.weight(p, j) > 0.0) {
                    EXPECT_NE(std::find(s.begin(), s.end(), j), s.end());
                }
            }
            EXPECT_NEAR(total, 1.0, 1e-14);
        }
    }
}

TEST(BaseGrid, RejectsInvalidCovers)
{
    EXPECT_THROW(BaseGrid::uniform_circle(8, 2, 0), ConfigurationError);
    EXPECT_THROW(BaseGrid::uniform_circle(3, 2, 1), ConfigurationError);
    EXPECT_THROW(BaseGrid(BaseTopology::interval, {0.0, 0.0}, {{{0, 1}}}, {{1.0, 1.0}}), ConfigurationError);
    EXPECT_THROW(BaseGrid(BaseTopology::interval, {0.0, 1.0}, {{{0, 1}}}, {{1.0, 0.5}}), ConfigurationError);
    EXPECT_THROW(BaseGrid(BaseTopology::interval, {0.0, 1.0}, {{{0}}}, {{0.5, 1.0}}), ConfigurationError);
}

TEST(Numerics, GaussLegendreIntegratesPolynomialsExactly)
{
    const auto q = gauss_legendre(12);
    for (int p = 0; p <= 23; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * std::pow(q.nodes[i], p);
        EXPECT_NEAR(s, 1.0 / (p + 1), 1e-14) << "degree " << p;
    }
    EXPECT_THROW(gauss_legendre(1), ConfigurationError);
}

TEST(Numerics, Rk4IsFourthOrder)
{
    auto f = [](const Vec& x) { return Vec(-x); };
    const Vec x0 = Vec::Ones(1);
    const double e1 = std::abs(rk4_flow(f, x0, 1.0, 0.1)[0] - std::exp(-1.0));
    const double e2 = std::abs(rk4_flow(f, x0, 1.0, 0.05)[0] - std::exp(-1.0));
    EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.1);
}

TEST(Numerics, ProbeSequenceIsReproducible)
{
    ProbeSequence a(3, 42), b(3, 42), c(3, std::nullopt), d(3, std::nullopt);
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(a.next(), b.next());
        const Vec p = c.next();
        EXPECT_EQ(p, d.next());
        EXPECT_TRUE((p.array() >= 0.0).all() && (p.array() < 1.0).all());
    }
}
