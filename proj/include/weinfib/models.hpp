#pragma once

// Built-in symplectic bundle models over a sampled base b.
//
// Fibre coordinates are x = (θ_1..θ_n, r_1..r_n) and
//   ω_b = c(b) Σ_i dθ_i ∧ dr_i,   c(b) = 1 + A sin b.
//
//   cylinder : n = 1, θ periodic, r in the window (-r_max, r_max)
//   torus2   : n = 1, both axes periodic
//   torus4   : n = 2, all axes periodic
//
// Lagrangian subbundles are graphs r = σ_b(θ) of a fibred 1-form σ on the
// θ-torus L_0 = {r = 0}.

#include "weinfib/fibred_forms.hpp"

#include <map>

namespace weinfib {

struct ModelParams {
    double c_amplitude = 0.0;
    int fibre_resolution = 32;
    int base_samples = 8;
    int patches = 1;
    double tubular_radius = 1.0;
    double tilt = 0.0; ///< graph σ = tilt * sin θ_1 dθ_1 for the default subbundle
};

class SymplecticBundleModel {
public:
    SymplecticBundleModel(std::string name, ModelParams params, int half_dim, bool periodic_r)
        : name_(std::move(name)), params_(params), n_(half_dim)
    {
        if (params_.tubular_radius <= 0.0) throw ModelError("tubular radius must be positive");
        if (periodic_r && params_.tubular_radius >= std::numbers::pi)
            throw ModelError("tubular radius must stay below π on a periodic fibre");
        base_ = std::make_shared<const BaseGrid>(
            BaseGrid::uniform_circle(params_.base_samples, params_.patches, params_.patches > 1 ? 1 : 0));
        const int dim = 2 * n_;
        std::vector<int> res(static_cast<std::size_t>(dim), params_.fibre_resolution);
        std::vector<double> lengths(static_cast<std::size_t>(dim), kTwoPi);
        ranges_.assign(static_cast<std::size_t>(dim), AxisRange{});
        for (int i = n_; i < dim; ++i) {
            if (periodic_r) {
                ranges_[static_cast<std::size_t>(i)] = AxisRange{true, -std::numbers::pi, std::numbers::pi};
            } else {
                ranges_[static_cast<std::size_t>(i)] = AxisRange{false, -params_.tubular_radius, params_.tubular_radius};
                lengths[static_cast<std::size_t>(i)] = 2.0 * params_.tubular_radius;
            }
        }
        fibre_ = std::make_shared<const FibreComplex>(res, lengths);

        const double amp = params_.c_amplitude;
        const int n = n_;
        const auto& lay = layout(dim, 2);
        std::vector<int> pair_index;
        for (int i = 0; i < n; ++i) pair_index.push_back(lay.index(mask_of({i, n + i})));
        const int m = lay.size();
        omega_ = FibredForm::field(
            base_, FieldForm(
                       2, dim,
                       [amp, pair_index, m](double b, const Vec&) {
                           Vec v = Vec::Zero(m);
                           for (int idx : pair_index) v[idx] = 1.0 + amp * std::sin(b);
                           return v;
                       },
                       [m, dim](double, const Vec&) { return Mat(Mat::Zero(m, dim)); }, FiniteDifference{}, ranges_));
        if (periodic_r) omega_cochain_ = sample_cochain(omega_, fibre_, SamplingRule::midpoint);
        validate();
    }

    const std::string& name() const { return name_; }
    const ModelParams& params() const { return params_; }
    int half_dim() const { return n_; }
    int fibre_dim() const { return 2 * n_; }
    const BaseGridPtr& base() const { return base_; }
    const FibreComplexPtr& fibre() const { return fibre_; }
    const FibredForm& omega() const { return omega_; }
    const std::optional<FibredForm>& omega_cochain() const { return omega_cochain_; }
    const std::vector<AxisRange>& ranges() const { return ranges_; }
    double tubular_radius() const { return params_.tubular_radius; }
    double c(double b) const { return 1.0 + params_.c_amplitude * std::sin(b); }

    /// Ω_ij = ω_b(∂_i, ∂_j) at x.
    Mat omega_matrix(double b, const Vec& x) const { return two_form_matrix(omega_.field_data()(b, x), fibre_dim()); }

    /// Sample points inside the tubular window for invariant checks.
    std::vector<Vec> probe_points(int per_axis = 6) const
    {
        std::vector<AxisRange> r = ranges_;
        for (int i = n_; i < 2 * n_; ++i)
            r[static_cast<std::size_t>(i)] = AxisRange{false, -0.9 * tubular_radius(), 0.9 * tubular_radius()};
        return grid_points(fibre_dim(), per_axis, r);
    }

    void validate() const
    {
        const auto pts = probe_points(4);
        if (fibre_dim() > 2) {
            const double closed = field_sup(fibred_d(omega_), pts);
            if (closed > 1e-10) throw ModelError("ω is not fibrewise closed (sup |d_p ω| = " + std::to_string(closed) + ")");
        }
        for (int i = 0; i < base_->size(); ++i)
            for (const auto& x : pts)
                if (std::abs(omega_matrix(base_->sample(i), x).determinant()) <= 1e-10)
                    throw ModelError("ω is degenerate at base sample " + std::to_string(i));
    }

private:
    std::string name_;
    ModelParams params_;
    int n_;
    BaseGridPtr base_;
    FibreComplexPtr fibre_;
    std::vector<AxisRange> ranges_;
    FibredForm omega_;
    std::optional<FibredForm> omega_cochain_;
};

using ModelPtr = std::shared_ptr<const SymplecticBundleModel>;

inline ModelPtr make_cylinder(ModelParams p = {}) { return std::make_shared<const SymplecticBundleModel>("cylinder", p, 1, false); }
inline ModelPtr make_torus2(ModelParams p = {}) { return std::make_shared<const SymplecticBundleModel>("torus2", p, 1, true); }
inline ModelPtr make_torus4(ModelParams p = {}) { return std::make_shared<const SymplecticBundleModel>("torus4", p, 2, true); }

inline ModelPtr make_model(const std::string& name, ModelParams p)
{
    if (name == "cylinder") return make_cylinder(p);
    if (name == "torus2") return make_torus2(p);
    if (name == "torus4" || name == "product_MxB") return std::make_shared<const SymplecticBundleModel>(name, p, 2, true);
    throw ModelError("unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Lagrangian subbundles as graphs
// ---------------------------------------------------------------------------

/// Subbundle L = {r = σ_b(θ)} with σ a fibred 1-form on the θ-torus.
class LagrangianSubbundle {
public:
    LagrangianSubbundle(ModelPtr model, FieldForm graph, bool certify = false)
        : model_(std::move(model)), graph_(std::move(graph))
    {
        if (graph_.degree() != 1 || graph_.dim() != model_->half_dim())
            throw ConfigurationError("graph data must be a 1-form on the n-torus");
        const int n = model_->half_dim();
        if (n >= 2) {
            const auto pts = grid_points(n, 16);
            defect_ = field_sup(fibred_d(FibredForm::field(model_->base(), graph_)), pts);
        }
        certified_ = certify;
        if (certify && defect_ > 1e-8)
            throw ModelError("subbundle is not Lagrangian: sup |dσ| = " + std::to_string(defect_));
    }

    /// L_0 = {r = 0}.
    static LagrangianSubbundle zero(ModelPtr model)
    {
        const int n = model->half_dim();
        return LagrangianSubbundle(std::move(model), FieldForm::zero(1, n), true);
    }

    /// Default subbundle of a model: the zero section, tilted to r_1 = tilt sin θ_1 if requested.
    static LagrangianSubbundle tilted(ModelPtr model, double tilt)
    {
        const int n = model->half_dim();
        FieldForm g(
            1, n,
            [tilt, n](double, const Vec& th) {
                Vec v = Vec::Zero(n);
                v[0] = tilt * std::sin(th[0]);
                return v;
            },
            [tilt, n](double, const Vec& th) {
                Mat j = Mat::Zero(n, n);
                j(0, 0) = tilt * std::cos(th[0]);
                return j;
            });
        return LagrangianSubbundle(std::move(model), std::move(g), true);
    }

    const SymplecticBundleModel& model() const { return *model_; }
    const ModelPtr& model_ptr() const { return model_; }
    const FieldForm& graph() const { return graph_; }
    int half_dim() const { return model_->half_dim(); }
    double lagrangian_defect() const { return defect_; }
    bool certified() const { return certified_; }

    Vec sigma(double b, const Vec& theta) const { return graph_(b, theta); }
    Mat sigma_jacobian(double b, const Vec& theta) const { return graph_.jacobian(b, theta); }

    /// The point of L_b above θ.
    Vec point(double b, const Vec& theta) const
    {
        const int n = half_dim();
        Vec x(2 * n);
        x.head(n) = theta;
        x.tail(n) = sigma(b, theta);
        return x;
    }

    /// Tangent basis of L_b at the point above θ (2n x n).
    Mat tangent(double b, const Vec& theta) const
    {
        const int n = half_dim();
        Mat t(2 * n, n);
        t.topRows(n).setIdentity();
        t.bottomRows(n) = sigma_jacobian(b, theta);
        return t;
    }

    /// Offset r - σ(θ) of a fibre point from L_b.
    Vec offset(double b, const Vec& x) const
    {
        const int n = half_dim();
        return x.tail(n) - sigma(b, x.head(n));
    }

    /// sup_b,θ |ω_b restricted to L_b| at the given θ samples.
    double omega_pullback_defect(const std::vector<Vec>& thetas) const
    {
        double s = 0.0;
        for (int i = 0; i < model_->base()->size(); ++i) {
            const double b = model_->base()->sample(i);
            for (const auto& th : thetas) {
                const Mat t = tangent(b, th);
                const Mat om = model_->omega_matrix(b, point(b, th));
                s = std::max(s, (t.transpose() * om * t).cwiseAbs().maxCoeff());
            }
        }
        return s;
    }

private:
    ModelPtr model_;
    FieldForm graph_;
    double defect_ = 0.0;
    bool certified_ = false;
};

} // namespace weinfib
