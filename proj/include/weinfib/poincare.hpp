#pragma once

// Vertical tubular retractions ρ_t onto a Lagrangian subbundle and the
// homotopy operator
//   Pβ = ∫_0^1 ι_{∂_t}(ρ^*β) dt,   ρ_1^*β - ρ_0^*β = P d_pβ + d_p Pβ,
// evaluated pointwise by Gauss-Legendre quadrature in t.

#include "weinfib/models.hpp"
#include "weinfib/numerics.hpp"

namespace weinfib {

using TimedEval = std::function<Vec(double t, double b, const Vec& x)>;
using TimedJac = std::function<Mat(double t, double b, const Vec& x)>;

/// A fibre-preserving deformation ρ: [0,1] x U -> U. The base point is never
/// an argument of the output, so p∘ρ_t = p holds by construction.
struct VerticalRetraction {
    int dim = 0;
    TimedEval map;      ///< ρ_t(x)
    TimedJac jacobian;  ///< D_x ρ_t
    TimedEval velocity; ///< ∂_t ρ_t(x)
    std::function<void(double b, const Vec& x)> check_domain;
    bool fixes_L = false;
    bool ends_on_L = false;

    Vec operator()(double t, double b, const Vec& x) const
    {
        if (check_domain) check_domain(b, x);
        return map(t, b, x);
    }

    /// ρ_t as a vertical map with its exact Jacobian.
    VerticalMap at(double t) const
    {
        auto self = *this;
        return VerticalMap::from_fibre_map(
            dim, [self, t](double b, const Vec& x) { return self(t, b, x); },
            [self, t](double b, const Vec& x) { return self.jacobian(t, b, x); });
    }
};

struct HomotopyConfig {
    int nodes = 12;
};

/// ρ_t(θ, r) = (θ, σ_b(θ) + (1 - t)(r - σ_b(θ))) on |r - σ| < r_max.
inline VerticalRetraction linear_retraction(const LagrangianSubbundle& L)
{
    auto sub = std::make_shared<const LagrangianSubbundle>(L);
    const int n = L.half_dim();
    const double rmax = L.model().tubular_radius();
    VerticalRetraction rho;
    rho.dim = 2 * n;
    rho.fixes_L = true;
    rho.ends_on_L = true;
    rho.check_domain = [sub, rmax](double b, const Vec& x) {
        const Vec off = sub->offset(b, x);
        if (off.cwiseAbs().maxCoeff() >= rmax)
            throw DomainError("point lies outside the tubular domain |r - σ| < " + std::to_string(rmax));
    };
    rho.map = [sub, n](double t, double b, const Vec& x) {
        const Vec s = sub->sigma(b, x.head(n));
        Vec y = x;
        y.tail(n) = s + (1.0 - t) * (x.tail(n) - s);
        return y;
    };
    rho.jacobian = [sub, n](double t, double b, const Vec& x) {
        Mat j = Mat::Identity(2 * n, 2 * n);
        j.bottomLeftCorner(n, n) = t * sub->sigma_jacobian(b, x.head(n));
        j.bottomRightCorner(n, n) *= 1.0 - t;
        return j;
    };
    rho.velocity = [sub, n](double, double b, const Vec& x) {
        Vec v = Vec::Zero(2 * n);
        v.tail(n) = -sub->offset(b, x);
        return v;
    };
    return rho;
}

/// Homotopy operator P on a field-backend k-form, k >= 1.
inline FibredForm homotopy_P(const FibredForm& beta, const VerticalRetraction& rho, const HomotopyConfig& cfg = {})
{
    if (beta.backend() != Backend::field) throw BackendError("homotopy operator acts on field-backend forms");
    const FieldForm f = beta.field_data();
    const int k = f.degree();
    const int n = f.dim();
    if (k < 1) throw DegreeError("homotopy operator needs degree >= 1");
    if (rho.dim != n) throw ConfigurationError("retraction and form live on different fibres");
    const QuadratureRule q = gauss_legendre(cfg.nodes);
    auto eval = [f, rho, q, n, k](double b, const Vec& x) {
        if (rho.check_domain) rho.check_domain(b, x);
        Vec acc = Vec::Zero(layout(n, k - 1).size());
        for (std::size_t i = 0; i < q.nodes.size(); ++i) {
            const double t = q.nodes[i];
            const Vec y = rho.map(t, b, x);
            const Vec inner = interior(rho.velocity(t, b, x), f(b, y), n, k);
            acc += q.weights[i] * pullback_components(rho.jacobian(t, b, x), inner, n, k - 1);
        }
        if (!acc.allFinite()) throw DomainError("homotopy quadrature produced non-finite values");
        return acc;
    };
    return FibredForm::field(beta.base_ptr(), FieldForm(k - 1, n, eval, {}, f.function().fd(), f.function().ranges()));
}

/// sup over samples and points of |ρ_1^*β - β - P d_pβ - d_p Pβ|.
inline double homotopy_identity_residual(const FibredForm& beta, const VerticalRetraction& rho,
                                         const std::vector<Vec>& points, const HomotopyConfig& cfg = {})
{
    const int k = beta.degree();
    const int n = beta.fibre_dim();
    FibredForm rhs = pullback(rho.at(1.0), beta) - beta;
    if (k < n) rhs = rhs - homotopy_P(fibred_d(beta), rho, cfg);
    if (k >= 1) rhs = rhs - fibred_d(homotopy_P(beta, rho, cfg));
    return field_sup(rhs, points);
}

/// sup of |Pβ| over L, sampled at the given θ points.
inline double homotopy_on_L(const FibredForm& beta, const VerticalRetraction& rho, const LagrangianSubbundle& L,
                            const std::vector<Vec>& thetas, const HomotopyConfig& cfg = {})
{
    const FibredForm p = homotopy_P(beta, rho, cfg);
    const FieldForm& f = p.field_data();
    double s = 0.0;
    for (int i = 0; i < p.base().size(); ++i) {
        const double b = p.base().sample(i);
        for (const auto& th : thetas) s = std::max(s, sup_abs(f(b, L.point(b, th))));
    }
    return s;
}

inline constexpr double kLagrangianInputTolerance = 1e-8;

/// λ = -Pω: a fibred Liouville form with d_pλ = ω vanishing on L.
inline FibredForm liouville_from_symplectic(const SymplecticBundleModel& model, const LagrangianSubbundle& L,
                                            const VerticalRetraction& rho, const HomotopyConfig& cfg = {})
{
    const double defect = L.omega_pullback_defect(grid_points(L.half_dim(), 8));
    if (defect > kLagrangianInputTolerance)
        throw ModelError("subbundle is not Lagrangian: sup |ω restricted to L| = " + std::to_string(defect));
    return -1.0 * homotopy_P(model.omega(), rho, cfg);
}

} // namespace weinfib
