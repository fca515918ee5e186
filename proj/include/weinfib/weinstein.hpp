#pragma once

// Family Weinstein charts φ_b: V ⊂ T*L_b -> U ⊂ X_b built from a Liouville
// form and a transverse polarisation, and the Lagrangian classifier for
// nearby subbundles: graph(α) is Lagrangian iff d_pα = 0.
//
// The covector Σ a_i dθ_i at the L-point above θ is sent to the point reached
// by flowing along the Hamiltonian fields of Q_i = θ_i∘foot for times a_i,
// with ι_X ω = -dH. Each Q_i is constant on leaves, so the flows stay in the
// leaf through the start point.

#include "weinfib/fibred_hodge.hpp"
#include "weinfib/polarization.hpp"

#include "json.hpp"

namespace weinfib {

class OutOfChartError : public Error {
public:
    OutOfChartError(const std::string& what, std::vector<int> samples) : Error(what), samples_(std::move(samples)) {}
    const std::vector<int>& samples() const { return samples_; }

private:
    std::vector<int> samples_;
};

struct ChartPoint {
    Vec theta;
    Vec a;
};

struct ChartOptions {
    double h = 1e-3;           ///< RK4 step for the Hamiltonian flows
    double commute_tol = 1e-5; ///< tolerated flow non-commutation
    int nodes = 12;            ///< quadrature nodes used for λ (provenance only)
};

class WeinsteinChart {
public:
    WeinsteinChart(ModelPtr model, LagrangianSubbundle L, Polarization pol, ChartOptions opt, double radius,
                   std::string provenance)
        : model_(std::move(model)), L_(std::move(L)), pol_(std::move(pol)), opt_(opt), radius_(radius),
          provenance_(std::move(provenance))
    {
    }

    const SymplecticBundleModel& model() const { return *model_; }
    const ModelPtr& model_ptr() const { return model_; }
    const LagrangianSubbundle& subbundle() const { return L_; }
    const Polarization& polarization() const { return pol_; }
    const ChartOptions& options() const { return opt_; }
    double radius() const { return radius_; }
    double step() const { return opt_.h; }
    const std::string& provenance() const { return provenance_; }
    int half_dim() const { return L_.half_dim(); }

    /// Hamiltonian field of Q_i = θ_i∘foot at y: Ω^T X = -∇Q_i.
    Vec hamiltonian(int i, double b, const Vec& y) const
    {
        const Vec grad = pol_.foot_jacobian(b, y).row(i).transpose();
        return model_->omega_matrix(b, y).transpose().fullPivLu().solve(-grad);
    }

    /// φ_b(θ, a) for a within the chart domain.
    Vec forward(double b, const Vec& theta, const Vec& a) const
    {
        if (sup_abs(a) > radius_ * (1.0 + 1e-12))
            throw DomainError("covector of norm " + std::to_string(sup_abs(a)) + " outside chart radius "
                              + std::to_string(radius_));
        return flow(b, theta, a, false);
    }

    /// φ_b^{-1}(y): foot label plus Gauss-Newton on the flow times.
    ChartPoint inverse(double b, const Vec& y) const
    {
        const int n = half_dim();
        if (sup_abs(L_.offset(b, y)) >= model_->tubular_radius())
            throw DomainError("point outside the tubular domain of L");
        ChartPoint p{pol_.foot(b, y), Vec::Zero(n)};
        Mat jac = a_jacobian(b, p.theta, p.a);
        for (int it = 0; it < 40; ++it) {
            const Vec r = flow(b, p.theta, p.a, false) - y;
            if (r.norm() <= 1e-13) break;
            const Vec step = jac.colPivHouseholderQr().solve(r);
            p.a -= step;
            if (step.norm() <= 1e-14) break;
            if (it == 8) jac = a_jacobian(b, p.theta, p.a);
        }
        return p;
    }

    /// φ_b in (θ, a) coordinates, without the domain check (for differencing).
    Vec raw(double b, const Vec& qa) const
    {
        const int n = half_dim();
        return flow(b, qa.head(n), qa.tail(n), true);
    }

    nlohmann::json manifest() const
    {
        const auto& p = model_->params();
        return {{"schema_version", 1},
                {"model", model_->name()},
                {"params",
                 {{"c_amplitude", p.c_amplitude},
                  {"fibre_resolution", p.fibre_resolution},
                  {"base_samples", p.base_samples},
                  {"patches", p.patches},
                  {"tubular_radius", p.tubular_radius},
                  {"tilt", p.tilt}}},
                {"lambda", provenance_},
                {"polarization", pol_.name},
                {"domain_radius", radius_},
                {"h", opt_.h},
                {"quadrature_nodes", opt_.nodes}};
    }

private:
    Vec flow(double b, const Vec& theta, const Vec& a, bool unchecked) const
    {
        Vec y = L_.point(b, theta);
        for (int i = 0; i < half_dim(); ++i)
            y = rk4_flow([&](const Vec& z) { return hamiltonian(i, b, z); }, y, a[i], opt_.h);
        if (!unchecked && sup_abs(L_.offset(b, y)) >= model_->tubular_radius())
            throw DomainError("chart leaf escaped the tubular domain; shrink the chart domain");
        return y;
    }

    Mat a_jacobian(double b, const Vec& theta, const Vec& a) const
    {
        const int n = half_dim();
        Mat j(2 * n, n);
        const double h = 1e-6;
        for (int i = 0; i < n; ++i) {
            Vec ap = a, am = a;
            ap[i] += h;
            am[i] -= h;
            j.col(i) = (flow(b, theta, ap, true) - flow(b, theta, am, true)) / (2.0 * h);
        }
        return j;
    }

    ModelPtr model_;
    LagrangianSubbundle L_;
    Polarization pol_;
    ChartOptions opt_;
    double radius_;
    std::string provenance_;
};

/// Sup distance between applying the flows in order 1..n and in order n..1.
inline double flow_commutation_defect(const WeinsteinChart& chart, double b, const Vec& theta, const Vec& a)
{
    const int n = chart.half_dim();
    Vec fwd = chart.subbundle().point(b, theta);
    Vec bwd = fwd;
    for (int i = 0; i < n; ++i) {
        fwd = rk4_flow([&](const Vec& z) { return chart.hamiltonian(i, b, z); }, fwd, a[i], chart.step());
        const int j = n - 1 - i;
        bwd = rk4_flow([&](const Vec& z) { return chart.hamiltonian(j, b, z); }, bwd, a[j], chart.step());
    }
    return sup_abs(fwd - bwd);
}

/// Builds the chart after checking that λ vanishes on L and that the
/// polarisation passes its leaf checks.
inline WeinsteinChart build_chart(const LiouvilleField& f, const LagrangianSubbundle& L, const Polarization& pol,
                                  ChartOptions opt = {})
{
    const auto& model = *f.model;
    const int n = L.half_dim();
    const auto& base = *model.base();
    const auto thetas = grid_points(n, 4);
    double lam_on_L = 0.0;
    double cmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < base.size(); ++i) {
        const double b = base.sample(i);
        cmin = std::min(cmin, std::abs(model.c(b)));
        for (const auto& th : thetas) {
            lam_on_L = std::max(lam_on_L, sup_abs(f.lambda.field_data()(b, L.point(b, th))));
            transverse_leaf(f, L, pol, b, th, 3);
        }
    }
    if (lam_on_L > 1e-10) throw PolarizationError("λ does not vanish on L (" + std::to_string(lam_on_L) + ")");
    const double radius = 0.5 * model.tubular_radius() * cmin;
    WeinsteinChart chart(f.model, L, pol, opt, radius,
                         "lambda = -P(omega), linear retraction, " + std::to_string(opt.nodes) + " Gauss nodes");
    for (int i = 0; i < base.size(); ++i) {
        const double b = base.sample(i);
        for (const auto& th : thetas) {
            const double c = flow_commutation_defect(chart, b, th, Vec::Constant(n, 0.7 * radius));
            if (c > opt.commute_tol)
                throw PolarizationError("Hamiltonian flows do not commute (defect " + std::to_string(c) + ")");
        }
    }
    return chart;
}

/// The full pipeline from a model and subbundle: λ, Y, vertical polarisation, chart.
inline WeinsteinChart chart_for(const ModelPtr& model, const LagrangianSubbundle& L, ChartOptions opt = {})
{
    const auto rho = linear_retraction(L);
    const auto lambda = liouville_from_symplectic(*model, L, rho, {opt.nodes});
    return build_chart(liouville_field(model, lambda), L, vertical_polarization(L), opt);
}

/// Rebuilds a chart from its manifest.
inline WeinsteinChart chart_from_manifest(const nlohmann::json& m)
{
    if (m.value("schema_version", 0) != 1) throw ConfigurationError("unknown chart manifest version");
    if (m.at("polarization").get<std::string>() != "vertical")
        throw ConfigurationError("only the vertical polarisation can be rebuilt");
    ModelParams p;
    const auto& q = m.at("params");
    p.c_amplitude = q.at("c_amplitude");
    p.fibre_resolution = q.at("fibre_resolution");
    p.base_samples = q.at("base_samples");
    p.patches = q.at("patches");
    p.tubular_radius = q.at("tubular_radius");
    p.tilt = q.at("tilt");
    auto model = make_model(m.at("model"), p);
    ChartOptions opt;
    opt.h = m.at("h");
    opt.nodes = m.at("quadrature_nodes");
    return chart_for(model, LagrangianSubbundle::tilted(model, p.tilt), opt);
}

struct SymplecticDefect {
    double sup_defect = 0;
    double zero_section = 0; ///< sup distance of φ(θ, 0) from L
    int probes = 0;
};

/// Compares φ_b^*ω_b with Σ dθ_i ∧ da_i at probe points, Jacobian by central
/// differences at step h_fd.
inline SymplecticDefect verify_symplectic(const WeinsteinChart& chart, int sample, int n_probe,
                                          std::optional<std::uint64_t> seed = {}, double h_fd = 1e-4)
{
    const int n = chart.half_dim();
    const double b = chart.model().base()->sample(sample);
    Mat canon = Mat::Zero(2 * n, 2 * n);
    canon.topRightCorner(n, n).setIdentity();
    canon.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    ProbeSequence probes(2 * n, seed);
    std::vector<Vec> pts;
    for (int k = 0; k < n_probe; ++k) {
        const Vec u = probes.next();
        Vec qa(2 * n);
        qa.head(n) = kTwoPi * u.head(n);
        qa.tail(n) = chart.radius() * (2.0 * u.tail(n).array() - 1.0);
        pts.push_back(qa);
    }
    std::vector<double> defect(pts.size(), 0.0);
    std::vector<double> zero(pts.size(), 0.0);
    parallel_for(pts.size(), [&](std::size_t k) {
        const Mat j = fd_jacobian([&](const Vec& qa) { return chart.raw(b, qa); }, pts[k], h_fd);
        const Vec y = chart.forward(b, pts[k].head(n), pts[k].tail(n));
        defect[k] = (j.transpose() * chart.model().omega_matrix(b, y) * j - canon).cwiseAbs().maxCoeff();
        const Vec th = pts[k].head(n);
        zero[k] = sup_abs(chart.forward(b, th, Vec::Zero(n)) - chart.subbundle().point(b, th));
    });
    SymplecticDefect d;
    d.probes = n_probe;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        d.sup_defect = std::max(d.sup_defect, defect[k]);
        d.zero_section = std::max(d.zero_section, zero[k]);
    }
    return d;
}

struct SectionResult {
    FibredForm alpha;         ///< 1-form on the θ-torus with graph φ^{-1}(L_near)
    double roundtrip = 0;     ///< sup |φ(θ, α(θ)) - L_near point|
};

/// The section α of T*L whose graph the chart maps onto L_near.
inline SectionResult subbundle_to_form(const WeinsteinChart& chart, const LagrangianSubbundle& near, int per_axis = 8)
{
    const int n = chart.half_dim();
    if (near.half_dim() != n) throw ConfigurationError("candidate subbundle lives on a different model");
    auto c = std::make_shared<const WeinsteinChart>(chart);
    auto l = std::make_shared<const LagrangianSubbundle>(near);
    // L_near point whose leaf label is θ'.
    auto lift = [c, l, n](double b, const Vec& target) {
        Vec th = target;
        for (int it = 0; it < 30; ++it) {
            const Vec x = l->point(b, th);
            const Vec r = c->polarization().foot(b, x) - target;
            if (sup_abs(r) <= 1e-13) break;
            const Mat j = c->polarization().foot_jacobian(b, x) * l->tangent(b, th);
            th -= j.fullPivLu().solve(r);
        }
        return l->point(b, th);
    };
    auto eval = [c, lift](double b, const Vec& theta) { return c->inverse(b, lift(b, theta)).a; };

    const auto& base = *chart.model().base();
    const auto thetas = grid_points(n, per_axis);
    std::vector<char> outside(static_cast<std::size_t>(base.size()), 0);
    std::vector<double> trip(static_cast<std::size_t>(base.size()), 0.0);
    parallel_for(outside.size(), [&](std::size_t i) {
        const double b = base.sample(static_cast<int>(i));
        for (const auto& th : thetas) {
            try {
                const Vec y = lift(b, th);
                const ChartPoint p = c->inverse(b, y);
                trip[i] = std::max(trip[i], sup_abs(c->forward(b, p.theta, p.a) - y));
            } catch (const DomainError&) {
                outside[i] = 1;
            }
        }
    });
    std::vector<int> bad;
    for (std::size_t i = 0; i < outside.size(); ++i)
        if (outside[i]) bad.push_back(static_cast<int>(i));
    if (!bad.empty()) {
        std::string list;
        for (int i : bad) list += (list.empty() ? "" : ", ") + std::to_string(i);
        throw OutOfChartError("subbundle leaves the chart image over base samples " + list, bad);
    }
    SectionResult r{FibredForm::field(chart.model().base(), FieldForm(1, n, eval)), 0.0};
    r.roundtrip = *std::max_element(trip.begin(), trip.end());
    return r;
}

struct LagrangianVerdict {
    bool lagrangian = false;
    double defect = 0;
};

/// graph(α) is Lagrangian iff d_pα = 0: defect = sup |d_pα| (cell densities
/// on the cochain backend).
inline LagrangianVerdict is_lagrangian(const FibredForm& alpha, double tol = 1e-6, int per_axis = 16)
{
    if (alpha.degree() != 1) throw DegreeError("classifier takes a 1-form on L");
    LagrangianVerdict v;
    if (alpha.fibre_dim() > 1) {
        const FibredForm d = fibred_d(alpha);
        v.defect = alpha.backend() == Backend::field ? field_sup(d, grid_points(alpha.fibre_dim(), per_axis))
                                                     : cochain_density_sup(d);
    }
    v.lagrangian = v.defect < tol;
    return v;
}

/// Closed part of α under 1 - δ_p d_p.
inline FibredForm lagrangianize(const DeltaOperator& d, const FibredForm& alpha)
{
    if (alpha.degree() != 1) throw DegreeError("lagrangianize takes a 1-form on L");
    return project_closed(d, alpha).closed;
}

} // namespace weinfib
