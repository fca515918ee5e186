#pragma once

// Fibred differential forms over a sampled base, in two backends:
//  - cochain: one cochain on the fibre complex per base sample;
//  - field:   a callable (b, x) -> components in the lexicographic layout,
//             with an optional exact component Jacobian.
// Backends never mix inside one operation; sample_cochain() converts.

#include "weinfib/base_grid.hpp"
#include "weinfib/fibre_complex.hpp"
#include "weinfib/numerics.hpp"

#include <memory>
#include <optional>
#include <variant>

namespace weinfib {

using BaseGridPtr = std::shared_ptr<const BaseGrid>;

using FieldEval = std::function<Vec(double b, const Vec& x)>;
using FieldJac = std::function<Mat(double b, const Vec& x)>;

/// A smooth map (b, x) -> R^m on an n-dimensional fibre chart with an
/// optional exact Jacobian; falls back to central differences when allowed.
class FieldFunction {
public:
    FieldFunction() = default;
    FieldFunction(int dim, int out, FieldEval eval, FieldJac jac = {}, FiniteDifference fd = {},
                  std::vector<AxisRange> ranges = {})
        : dim_(dim), out_(out), eval_(std::move(eval)), jac_(std::move(jac)), fd_(fd), ranges_(std::move(ranges))
    {
        if (!eval_) throw ConfigurationError("field needs an evaluation callable");
    }

    int dim() const { return dim_; }
    int out_size() const { return out_; }
    bool has_exact_jacobian() const { return static_cast<bool>(jac_); }
    bool differentiable() const { return has_exact_jacobian() || fd_.allowed; }
    const FiniteDifference& fd() const { return fd_; }
    const std::vector<AxisRange>& ranges() const { return ranges_; }
    const FieldEval& eval_fn() const { return eval_; }
    const FieldJac& jac_fn() const { return jac_; }

    Vec operator()(double b, const Vec& x) const
    {
        if (x.size() != dim_) throw ConfigurationError("evaluation point has wrong dimension");
        Vec v = eval_(b, x);
        if (v.size() != out_) throw ConfigurationError("field callable returned the wrong number of components");
        return v;
    }

    /// out x dim matrix of partial derivatives.
    Mat jacobian(double b, const Vec& x) const
    {
        if (jac_) return jac_(b, x);
        if (!fd_.allowed)
            throw ConfigurationError("field has no derivative callable and finite differences are disabled");
        return fd_jacobian([&](const Vec& y) { return (*this)(b, y); }, x, fd_.h, ranges_.empty() ? nullptr : &ranges_);
    }

private:
    int dim_ = 0;
    int out_ = 0;
    FieldEval eval_;
    FieldJac jac_;
    FiniteDifference fd_;
    std::vector<AxisRange> ranges_;
};

/// Field-backend k-form on an n-dimensional fibre chart.
class FieldForm {
public:
    FieldForm() = default;
    FieldForm(int degree, int dim, FieldEval eval, FieldJac jac = {}, FiniteDifference fd = {},
              std::vector<AxisRange> ranges = {})
        : degree_(degree), fn_(dim, layout(dim, degree).size(), std::move(eval), std::move(jac), fd, std::move(ranges))
    {
    }

    int degree() const { return degree_; }
    int dim() const { return fn_.dim(); }
    int component_count() const { return fn_.out_size(); }
    const FieldFunction& function() const { return fn_; }
    Vec operator()(double b, const Vec& x) const { return fn_(b, x); }
    Mat jacobian(double b, const Vec& x) const { return fn_.jacobian(b, x); }
    bool has_exact_jacobian() const { return fn_.has_exact_jacobian(); }

    static FieldForm zero(int degree, int dim)
    {
        const int m = layout(dim, degree).size();
        return FieldForm(
            degree, dim, [m](double, const Vec&) { return Vec(Vec::Zero(m)); },
            [m, dim](double, const Vec&) { return Mat(Mat::Zero(m, dim)); });
    }

private:
    int degree_ = 0;
    FieldFunction fn_;
};

/// Cochain-backend data: one k-cochain per base sample.
struct CochainData {
    int degree = 0;
    FibreComplexPtr complex;
    std::vector<Vec> slices;
};

enum class Backend { cochain, field };

class FibredForm {
public:
    static FibredForm cochain(BaseGridPtr base, FibreComplexPtr complex, int degree, std::vector<Vec> slices)
    {
        if (!base || !complex) throw ConfigurationError("cochain form needs a base grid and a fibre complex");
        if (degree < 0 || degree > complex->dim()) throw DegreeError("cochain degree outside [0, fibre dim]");
        if (static_cast<int>(slices.size()) != base->size())
            throw ConfigurationError("one cochain slice per base sample required");
        for (const auto& s : slices)
            if (s.size() != static_cast<Eigen::Index>(complex->cell_count(degree)))
                throw ConfigurationError("cochain slice length differs from the k-cell count");
        FibredForm f;
        f.base_ = std::move(base);
        f.data_ = CochainData{degree, std::move(complex), std::move(slices)};
        return f;
    }

    static FibredForm field(BaseGridPtr base, FieldForm form)
    {
        if (!base) throw ConfigurationError("field form needs a base grid");
        FibredForm f;
        f.base_ = std::move(base);
        f.data_ = std::move(form);
        return f;
    }

    static FibredForm zero_cochain(BaseGridPtr base, FibreComplexPtr complex, int degree)
    {
        const auto n = static_cast<Eigen::Index>(complex->cell_count(degree));
        std::vector<Vec> s(static_cast<std::size_t>(base->size()), Vec::Zero(n));
        return cochain(std::move(base), std::move(complex), degree, std::move(s));
    }

    Backend backend() const { return std::holds_alternative<CochainData>(data_) ? Backend::cochain : Backend::field; }
    int degree() const
    {
        return backend() == Backend::cochain ? std::get<CochainData>(data_).degree : std::get<FieldForm>(data_).degree();
    }
    int fibre_dim() const
    {
        return backend() == Backend::cochain ? std::get<CochainData>(data_).complex->dim()
                                             : std::get<FieldForm>(data_).dim();
    }
    const BaseGrid& base() const { return *base_; }
    const BaseGridPtr& base_ptr() const { return base_; }

    const CochainData& cochain_data() const
    {
        if (backend() != Backend::cochain) throw BackendError("expected a cochain-backend form");
        return std::get<CochainData>(data_);
    }
    const FieldForm& field_data() const
    {
        if (backend() != Backend::field) throw BackendError("expected a field-backend form");
        return std::get<FieldForm>(data_);
    }
    const FibreComplex& complex() const { return *cochain_data().complex; }
    const Vec& slice(int i) const
    {
        base_->check_index(i);
        return cochain_data().slices[static_cast<std::size_t>(i)];
    }

private:
    BaseGridPtr base_;
    std::variant<CochainData, FieldForm> data_;
};

// ---------------------------------------------------------------------------
// Vertical vector fields and vertical maps
// ---------------------------------------------------------------------------

/// Vertical vector field: fibre components only, so verticality holds by construction.
class VerticalField {
public:
    VerticalField() = default;
    VerticalField(int dim, FieldEval eval, FieldJac jac = {}, FiniteDifference fd = {})
        : fn_(dim, dim, std::move(eval), std::move(jac), fd)
    {
    }

    int dim() const { return fn_.dim(); }
    Vec operator()(double b, const Vec& x) const { return fn_(b, x); }
    Mat jacobian(double b, const Vec& x) const { return fn_.jacobian(b, x); }
    bool has_exact_jacobian() const { return fn_.has_exact_jacobian(); }
    const FieldFunction& function() const { return fn_; }

    /// Constant-coefficient field Σ c_i ∂_i.
    static VerticalField constant(const Vec& c)
    {
        const auto n = static_cast<int>(c.size());
        return VerticalField(
            n, [c](double, const Vec&) { return c; }, [n](double, const Vec&) { return Mat(Mat::Zero(n, n)); });
    }

private:
    FieldFunction fn_;
};

struct MappedPoint {
    double b;
    Vec x;
};

/// Fibre-preserving map (b, x) -> (b, φ_b(x)).
class VerticalMap {
public:
    using Eval = std::function<MappedPoint(double b, const Vec& x)>;

    VerticalMap() = default;
    VerticalMap(int dim, Eval eval, FieldJac jac = {}, FiniteDifference fd = {})
        : dim_(dim), eval_(std::move(eval)), jac_(std::move(jac)), fd_(fd)
    {
    }

    /// Wraps a fibre map that by construction keeps b.
    static VerticalMap from_fibre_map(int dim, FieldEval fibre, FieldJac jac = {}, FiniteDifference fd = {})
    {
        return VerticalMap(
            dim, [fibre](double b, const Vec& x) { return MappedPoint{b, fibre(b, x)}; }, std::move(jac), fd);
    }

    static VerticalMap identity(int dim)
    {
        return from_fibre_map(
            dim, [](double, const Vec& x) { return x; }, [dim](double, const Vec&) { return Mat(Mat::Identity(dim, dim)); });
    }

    int dim() const { return dim_; }
    bool has_exact_jacobian() const { return static_cast<bool>(jac_); }

    /// Fibre image; refuses maps that move the base point.
    Vec operator()(double b, const Vec& x) const
    {
        const MappedPoint p = eval_(b, x);
        if (std::abs(p.b - b) > 1e-12)
            throw NonVerticalError("map moved the base point by " + std::to_string(std::abs(p.b - b)));
        return p.x;
    }

    Mat jacobian(double b, const Vec& x) const
    {
        if (jac_) return jac_(b, x);
        if (!fd_.allowed) throw ConfigurationError("vertical map has no Jacobian and finite differences are disabled");
        return fd_jacobian([&](const Vec& y) { return (*this)(b, y); }, x, fd_.h);
    }

    const FiniteDifference& fd() const { return fd_; }

private:
    int dim_ = 0;
    Eval eval_;
    FieldJac jac_;
    FiniteDifference fd_;
};

/// φ∘ψ; exact Jacobian by the chain rule when both factors have one.
inline VerticalMap compose(const VerticalMap& phi, const VerticalMap& psi)
{
    FieldJac jac;
    if (phi.has_exact_jacobian() && psi.has_exact_jacobian())
        jac = [phi, psi](double b, const Vec& x) { return Mat(phi.jacobian(b, psi(b, x)) * psi.jacobian(b, x)); };
    return VerticalMap::from_fibre_map(
        psi.dim(), [phi, psi](double b, const Vec& x) { return phi(b, psi(b, x)); }, std::move(jac), psi.fd());
}

/// Time-t flow of a vertical field, integrated with RK4 at step h.
inline VerticalMap flow_map(const VerticalField& z, double t, double h = 1e-3)
{
    return VerticalMap::from_fibre_map(z.dim(), [z, t, h](double b, const Vec& x) {
        return rk4_flow([&](const Vec& y) { return z(b, y); }, x, t, h);
    });
}

// ---------------------------------------------------------------------------
// Linear combinations of field forms
// ---------------------------------------------------------------------------

inline FieldForm linear_combination(double a, const FieldForm& f, double c, const FieldForm& g)
{
    if (f.degree() != g.degree() || f.dim() != g.dim()) throw DegreeError("adding forms of different type");
    FieldJac jac;
    if (f.has_exact_jacobian() && g.has_exact_jacobian())
        jac = [a, f, c, g](double b, const Vec& x) {
            return c == 0.0 ? Mat(a * f.jacobian(b, x)) : Mat(a * f.jacobian(b, x) + c * g.jacobian(b, x));
        };
    return FieldForm(
        f.degree(), f.dim(),
        [a, f, c, g](double b, const Vec& x) { return c == 0.0 ? Vec(a * f(b, x)) : Vec(a * f(b, x) + c * g(b, x)); },
        std::move(jac), f.function().fd(), f.function().ranges());
}

inline FibredForm operator+(const FibredForm& f, const FibredForm& g);
inline FibredForm operator-(const FibredForm& f, const FibredForm& g);
inline FibredForm operator*(double s, const FibredForm& f);

namespace detail {
inline FibredForm combine(double a, const FibredForm& f, double c, const FibredForm& g)
{
    if (f.backend() != g.backend()) throw BackendError("cannot mix cochain and field forms in one expression");
    if (f.degree() != g.degree()) throw DegreeError("adding forms of different degree");
    if (f.backend() == Backend::field)
        return FibredForm::field(f.base_ptr(), linear_combination(a, f.field_data(), c, g.field_data()));
    const auto& fd = f.cochain_data();
    const auto& gd = g.cochain_data();
    if (fd.complex.get() != gd.complex.get() && fd.complex->cell_count(fd.degree) != gd.complex->cell_count(gd.degree))
        throw BackendError("cochains live on different complexes");
    if (f.base().size() != g.base().size()) throw ConfigurationError("forms sampled on different base grids");
    std::vector<Vec> out(fd.slices.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * fd.slices[i] + c * gd.slices[i];
    return FibredForm::cochain(f.base_ptr(), fd.complex, fd.degree, std::move(out));
}
} // namespace detail

inline FibredForm operator+(const FibredForm& f, const FibredForm& g) { return detail::combine(1.0, f, 1.0, g); }
inline FibredForm operator-(const FibredForm& f, const FibredForm& g) { return detail::combine(1.0, f, -1.0, g); }
inline FibredForm operator*(double s, const FibredForm& f) { return detail::combine(s, f, 0.0, f); }

// ---------------------------------------------------------------------------
// Fibred calculus
// ---------------------------------------------------------------------------

/// Exterior derivative of a field form (the fibrewise d at each b).
inline FieldForm exterior_d(const FieldForm& a)
{
    const int k = a.degree();
    const int n = a.dim();
    if (k >= n) throw DegreeError("d of a top-degree form is refused (degree " + std::to_string(k) + ")");
    if (!a.function().differentiable())
        throw ConfigurationError("field form has no derivative callable and finite differences are disabled");
    return FieldForm(
        k + 1, n, [a, n, k](double b, const Vec& x) { return d_from_jacobian(a.jacobian(b, x), n, k); }, {},
        a.function().fd(), a.function().ranges());
}

/// d_p: fibrewise exterior derivative.
inline FibredForm fibred_d(const FibredForm& a)
{
    if (a.backend() == Backend::field) return FibredForm::field(a.base_ptr(), exterior_d(a.field_data()));
    const auto& c = a.cochain_data();
    if (c.degree >= c.complex->dim())
        throw DegreeError("d of a top-degree form is refused (degree " + std::to_string(c.degree) + ")");
    std::vector<Vec> out(c.slices.size());
    parallel_for(out.size(), [&](std::size_t i) { out[i] = c.complex->d(c.degree, c.slices[i]); });
    return FibredForm::cochain(a.base_ptr(), c.complex, c.degree + 1, std::move(out));
}

/// The form on the single fibre over base sample i, as a one-sample fibred form.
inline FibredForm restrict(const FibredForm& a, int i)
{
    a.base().check_index(i);
    const double b = a.base().sample(i);
    auto single = std::make_shared<const BaseGrid>(BaseGrid::single(b));
    if (a.backend() == Backend::cochain) {
        const auto& c = a.cochain_data();
        return FibredForm::cochain(single, c.complex, c.degree, {c.slices[static_cast<std::size_t>(i)]});
    }
    const FieldForm f = a.field_data();
    FieldJac jac;
    if (f.has_exact_jacobian()) jac = [f, b](double, const Vec& x) { return f.jacobian(b, x); };
    return FibredForm::field(single, FieldForm(
                                         f.degree(), f.dim(), [f, b](double, const Vec& x) { return f(b, x); },
                                         std::move(jac), f.function().fd(), f.function().ranges()));
}

/// Reassembles single-sample cochain slices onto a base grid.
inline FibredForm assemble(BaseGridPtr base, const std::vector<FibredForm>& slices)
{
    if (slices.empty()) throw ConfigurationError("nothing to assemble");
    const auto& first = slices.front().cochain_data();
    std::vector<Vec> out;
    for (const auto& s : slices) out.push_back(s.slice(0));
    return FibredForm::cochain(std::move(base), first.complex, first.degree, std::move(out));
}

/// Z ⌟ α, pointwise on each fibre. Field backend only.
inline FibredForm contract(const VerticalField& z, const FibredForm& a)
{
    if (a.backend() != Backend::field) throw BackendError("contraction of cochains is not supported");
    const FieldForm f = a.field_data();
    const int k = f.degree();
    const int n = f.dim();
    if (k < 1) throw DegreeError("contraction of a 0-form");
    if (z.dim() != n) throw ConfigurationError("vector field and form live on different fibres");
    FieldJac jac;
    if (z.has_exact_jacobian() && f.has_exact_jacobian()) {
        jac = [z, f, n, k](double b, const Vec& x) {
            const Vec zv = z(b, x);
            const Vec av = f(b, x);
            const Mat zj = z.jacobian(b, x);
            const Mat aj = f.jacobian(b, x);
            Mat out(layout(n, k - 1).size(), n);
            for (int i = 0; i < n; ++i)
                out.col(i) = interior(zj.col(i), av, n, k) + interior(zv, aj.col(i), n, k);
            return out;
        };
    }
    return FibredForm::field(a.base_ptr(),
                             FieldForm(
                                 k - 1, n, [z, f, n, k](double b, const Vec& x) { return interior(z(b, x), f(b, x), n, k); },
                                 std::move(jac), f.function().fd(), f.function().ranges()));
}

/// (φ^*α)_b = φ_b^* α_b. Field backend only.
inline FibredForm pullback(const VerticalMap& phi, const FibredForm& a)
{
    if (a.backend() != Backend::field) throw BackendError("pullback is defined on field-backend forms");
    const FieldForm f = a.field_data();
    const int k = f.degree();
    const int n = f.dim();
    if (phi.dim() != n) throw ConfigurationError("map and form live on different fibres");
    return FibredForm::field(a.base_ptr(), FieldForm(
                                               k, n,
                                               [phi, f, n, k](double b, const Vec& x) {
                                                   const Vec y = phi(b, x);
                                                   return pullback_components(phi.jacobian(b, x), f(b, y), n, k);
                                               },
                                               {}, f.function().fd(), f.function().ranges()));
}

/// Fibred Lie derivative by the Cartan formula Z⌟d_pα + d_p(Z⌟α).
inline FibredForm lie_derivative(const VerticalField& z, const FibredForm& a)
{
    if (a.backend() != Backend::field) throw BackendError("Lie derivative is defined on field-backend forms");
    const int k = a.degree();
    const int n = a.fibre_dim();
    if (k == n) return fibred_d(contract(z, a));
    if (k == 0) return contract(z, fibred_d(a));
    return contract(z, fibred_d(a)) + fibred_d(contract(z, a));
}

// ---------------------------------------------------------------------------
// Sampling and norms
// ---------------------------------------------------------------------------

enum class SamplingRule { midpoint, gauss };

/// Field -> cochain by the de Rham map: each k-cell gets the integral of the
/// form over the cell, by the midpoint rule or 3-point Gauss per cell axis.
inline FibredForm sample_cochain(const FibredForm& a, FibreComplexPtr complex, SamplingRule rule = SamplingRule::midpoint)
{
    const FieldForm f = a.field_data();
    const int k = f.degree();
    if (f.dim() != complex->dim()) throw ConfigurationError("complex and form have different fibre dimension");
    const std::vector<double> gx = rule == SamplingRule::gauss ? std::vector<double>{-std::sqrt(0.6), 0.0, std::sqrt(0.6)}
                                                               : std::vector<double>{0.0};
    const std::vector<double> gw =
        rule == SamplingRule::gauss ? std::vector<double>{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0} : std::vector<double>{1.0};
    const auto cells = complex->cell_count(k);
    std::vector<Vec> slices(static_cast<std::size_t>(a.base().size()));
    parallel_for(slices.size(), [&](std::size_t bi) {
        const double b = a.base().sample(static_cast<int>(bi));
        Vec out(static_cast<Eigen::Index>(cells));
        for (std::size_t c = 0; c < cells; ++c) {
            const int type = complex->type_of(c);
            const auto& axes = complex->cell_type(k, type);
            const Vec mid = complex->cell_midpoint(k, c);
            double acc = 0.0;
            std::vector<std::size_t> idx(axes.size(), 0);
            while (true) {
                Vec x = mid;
                double w = 1.0;
                for (std::size_t p = 0; p < axes.size(); ++p) {
                    x[axes[p]] += 0.5 * complex->spacing(axes[p]) * gx[idx[p]];
                    w *= gw[idx[p]];
                }
                acc += w * f(b, x)[type];
                std::size_t p = 0;
                while (p < idx.size() && ++idx[p] == gx.size()) idx[p++] = 0;
                if (p == idx.size()) break;
            }
            out[static_cast<Eigen::Index>(c)] = acc * complex->cell_volume(k, type);
        }
        slices[bi] = std::move(out);
    });
    return FibredForm::cochain(a.base_ptr(), std::move(complex), k, std::move(slices));
}

/// 0-cochain from node values of f(b, x).
inline FibredForm node_cochain(BaseGridPtr base, FibreComplexPtr complex, const std::function<double(double, const Vec&)>& f)
{
    std::vector<Vec> slices;
    for (int i = 0; i < base->size(); ++i) {
        Vec v(static_cast<Eigen::Index>(complex->vertex_count()));
        for (std::size_t j = 0; j < complex->vertex_count(); ++j)
            v[static_cast<Eigen::Index>(j)] = f(base->sample(i), complex->vertex_coords(j));
        slices.push_back(std::move(v));
    }
    return FibredForm::cochain(std::move(base), std::move(complex), 0, std::move(slices));
}

/// Uniform grid of points on a box (default the torus [0, 2π)^n).
inline std::vector<Vec> grid_points(int n, int per_axis, const std::vector<AxisRange>& ranges = {})
{
    std::vector<Vec> pts;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    while (true) {
        Vec x(n);
        for (int j = 0; j < n; ++j) {
            const AxisRange r = ranges.empty() ? AxisRange{} : ranges[static_cast<std::size_t>(j)];
            const double step = r.periodic ? (r.hi - r.lo) / per_axis : (r.hi - r.lo) / (per_axis + 1);
            x[j] = r.lo + (r.periodic ? 0.0 : step) + idx[static_cast<std::size_t>(j)] * step;
        }
        pts.push_back(std::move(x));
        int p = 0;
        while (p < n && ++idx[static_cast<std::size_t>(p)] == per_axis) idx[static_cast<std::size_t>(p++)] = 0;
        if (p == n) break;
    }
    return pts;
}

/// sup |components| of a field form over base samples x points.
inline double field_sup(const FibredForm& a, const std::vector<Vec>& points)
{
    const FieldForm& f = a.field_data();
    std::vector<double> per(static_cast<std::size_t>(a.base().size()), 0.0);
    parallel_for(per.size(), [&](std::size_t i) {
        const double b = a.base().sample(static_cast<int>(i));
        for (const auto& x : points) per[i] = std::max(per[i], sup_abs(f(b, x)));
    });
    return *std::max_element(per.begin(), per.end());
}

/// sup of cell densities over all base samples.
inline double cochain_density_sup(const FibredForm& a)
{
    const auto& c = a.cochain_data();
    double s = 0.0;
    for (const auto& v : c.slices) s = std::max(s, c.complex->density_sup(c.degree, v));
    return s;
}

inline double cochain_sup(const FibredForm& a)
{
    double s = 0.0;
    for (const auto& v : a.cochain_data().slices) s = std::max(s, sup_abs(v));
    return s;
}

} // namespace weinfib
