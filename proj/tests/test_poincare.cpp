#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace weinfib;

namespace {

FibredForm cylinder_field(const ModelPtr& m, int degree, FieldEval f, FieldJac j = {})
{
    return FibredForm::field(m->base(), FieldForm(degree, 2, std::move(f), std::move(j), FiniteDifference{}, m->ranges()));
}

} // namespace

TEST(Retraction, EndpointsAndFixedSubbundle)
{
    const auto m = make_cylinder();
    const auto L = LagrangianSubbundle::tilted(m, 0.3);
    const auto rho = linear_retraction(L);
    for (const auto& x : m->probe_points(5)) {
        const double b = 0.7;
        EXPECT_LT(sup_abs(rho(0.0, b, x) - x), 1e-15);
        const Vec end = rho(1.0, b, x);
        EXPECT_NEAR(end[1], 0.3 * std::sin(x[0]), 1e-15);
        EXPECT_EQ(end[0], x[0]);
        const Vec on = L.point(b, x.head(1));
        for (double t : {0.0, 0.3, 1.0}) EXPECT_LT(sup_abs(rho(t, b, on) - on), 1e-15);
    }
}

TEST(Retraction, RejectsPointsOutsideTube)
{
    const auto m = make_cylinder(ModelParams{.tubular_radius = 0.5});
    const auto rho = linear_retraction(LagrangianSubbundle::zero(m));
    EXPECT_THROW(rho(0.5, 0.0, Vec::Unit(2, 1) * 0.6), DomainError);
    const auto p = homotopy_P(m->omega(), rho);
    EXPECT_THROW(p.field_data()(0.0, Vec::Unit(2, 1) * 0.6), DomainError);
}

TEST(Homotopy, CylinderExamples)
{
    const auto m = make_cylinder();
    const auto rho = linear_retraction(LagrangianSubbundle::zero(m));
    const auto pts = m->probe_points(6);
    // Pω = r dθ.
    const auto p = homotopy_P(m->omega(), rho);
    EXPECT_EQ(p.degree(), 1);
    EXPECT_LT(wt::max_at(p, 0.0, pts, [](const Vec& x) { return Vec(Vec::Unit(2, 0) * x[1]); }), 1e-14);
    // P(dr) = -r.
    const auto dr = cylinder_field(m, 1, [](double, const Vec&) { return Vec(Vec::Unit(2, 1)); });
    EXPECT_LT(wt::max_at(homotopy_P(dr, rho), 0.0, pts, [](const Vec& x) { return Vec(Vec::Constant(1, -x[1])); }), 1e-14);
    // dθ is basic: P kills it.
    const auto dth = cylinder_field(m, 1, [](double, const Vec&) { return Vec(Vec::Unit(2, 0)); });
    EXPECT_LT(field_sup(homotopy_P(dth, rho), pts), 1e-15);
}

TEST(Homotopy, IdentityHoldsOnGenericForms)
{
    const auto m = make_cylinder(ModelParams{.c_amplitude = 0.4});
    const auto L = LagrangianSubbundle::tilted(m, 0.25);
    const auto rho = linear_retraction(L);
    const auto pts = m->probe_points(5);
    const auto one = cylinder_field(m, 1, [](double b, const Vec& x) {
        Vec v(2);
        v << std::sin(x[0]) * std::cos(x[1]) + b, x[1] * x[1] * std::cos(2.0 * x[0]);
        return v;
    });
    const auto two = cylinder_field(m, 2, [](double b, const Vec& x) {
        return Vec(Vec::Constant(1, std::exp(x[1]) * std::cos(x[0]) * (1.0 + std::sin(b))));
    });
    EXPECT_LE(homotopy_identity_residual(one, rho, pts), 1e-6);
    EXPECT_LE(homotopy_identity_residual(two, rho, pts), 1e-6);
    EXPECT_LE(homotopy_identity_residual(m->omega(), rho, pts), 1e-6);
}

TEST(Homotopy, IdentityOnTorus4)
{
    const auto m = make_torus4(ModelParams{.c_amplitude = 0.2, .fibre_resolution = 4});
    const auto rho = linear_retraction(LagrangianSubbundle::tilted(m, 0.3));
    const auto pts = m->probe_points(3);
    const auto beta = FibredForm::field(m->base(), FieldForm(2, 4, [](double, const Vec& x) {
        Vec v = Vec::Zero(6);
        v[0] = std::sin(x[2]) * std::cos(x[1]);
        v[3] = x[3] * x[0];
        v[5] = std::cos(x[0] + x[3]);
        return v;
    }, {}, FiniteDifference{}, m->ranges()));
    EXPECT_LE(homotopy_identity_residual(beta, rho, pts), 1e-6);
}

TEST(Homotopy, PrimitiveVanishesOnSubbundle)
{
    const auto m = make_torus4(ModelParams{.c_amplitude = 0.5, .fibre_resolution = 4});
    const auto L = LagrangianSubbundle::tilted(m, 0.4);
    const auto rho = linear_retraction(L);
    EXPECT_LE(homotopy_on_L(m->omega(), rho, L, grid_points(2, 6)), 1e-10);
}

TEST(Homotopy, RejectsBadInputs)
{
    const auto m = make_cylinder();
    const auto rho = linear_retraction(LagrangianSubbundle::zero(m));
    const auto f = cylinder_field(m, 0, [](double, const Vec& x) { return Vec(Vec::Constant(1, x[0])); });
    EXPECT_THROW(homotopy_P(f, rho), DegreeError);
    const auto t2 = make_torus2(ModelParams{.fibre_resolution = 8});
    EXPECT_THROW(homotopy_P(*t2->omega_cochain(), rho), BackendError);
    const auto rho4 = linear_retraction(LagrangianSubbundle::zero(make_torus4(ModelParams{.fibre_resolution = 4})));
    EXPECT_THROW(homotopy_P(m->omega(), rho4), ConfigurationError);
}

TEST(Liouville, CylinderAndTiltedGraph)
{
    const auto m = make_cylinder(ModelParams{.c_amplitude = 0.5});
    const auto pts = m->probe_points(5);
    const auto L0 = LagrangianSubbundle::zero(m);
    const auto lam = liouville_from_symplectic(*m, L0, linear_retraction(L0));
    for (double b : {0.0, 1.0, 4.0})
        EXPECT_LT(wt::max_at(lam, b, pts, [&](const Vec& x) { return Vec(Vec::Unit(2, 0) * (-m->c(b) * x[1])); }), 1e-14);

    const auto L = LagrangianSubbundle::tilted(m, 0.2);
    const auto lt = liouville_from_symplectic(*m, L, linear_retraction(L));
    EXPECT_LT(wt::max_at(lt, 1.0, pts, [&](const Vec& x) {
        return Vec(Vec::Unit(2, 0) * (-m->c(1.0) * (x[1] - 0.2 * std::sin(x[0]))));
    }), 1e-14);
    EXPECT_LT(field_sup(fibred_d(lt) - m->omega(), pts), 1e-8);
}

TEST(Liouville, Torus4PrimitiveOfOmega)
{
    const auto m = make_torus4(ModelParams{.c_amplitude = 0.3, .fibre_resolution = 4});
    const auto L = LagrangianSubbundle::zero(m);
    const auto lam = liouville_from_symplectic(*m, L, linear_retraction(L));
    const auto pts = m->probe_points(3);
    EXPECT_LT(wt::max_at(lam, 2.0, pts, [&](const Vec& x) {
        Vec v = Vec::Zero(4);
        v[0] = -m->c(2.0) * x[2];
        v[1] = -m->c(2.0) * x[3];
        return v;
    }), 1e-14);
    EXPECT_LT(field_sup(fibred_d(lam) - m->omega(), pts), 1e-8);
}

TEST(Liouville, NonLagrangianSubbundleIsRejected)
{
    const auto m = make_torus4(ModelParams{.fibre_resolution = 4});
    // σ = sin θ_2 dθ_1 has dσ = -cos θ_2 dθ_1∧dθ_2.
    const FieldForm g(1, 2, [](double, const Vec& th) { return Vec(Vec::Unit(2, 0) * std::sin(th[1])); });
    const LagrangianSubbundle L(m, g);
    EXPECT_NEAR(L.lagrangian_defect(), 1.0, 1e-6);
    EXPECT_THROW(liouville_from_symplectic(*m, L, linear_retraction(L)), ModelError);
    EXPECT_THROW(LagrangianSubbundle(m, g, true), ModelError);
}
