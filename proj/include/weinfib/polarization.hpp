#pragma once

// Liouville vector field Y with ω(Y, ·) = λ, the 0/1 eigenspace split of its
// Jacobian along L, conformal scaling of ω under the flow of -Y, and
// verification of closed-form transverse polarisations.

#include "weinfib/poincare.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace weinfib {

class PolarizationError : public Error {
public:
    using Error::Error;
};

struct LiouvilleField {
    ModelPtr model;
    FibredForm lambda;
    VerticalField Y;
};

/// Pointwise solve Ω^T Y = λ, i.e. ω(Y, e_j) = λ_j.
inline LiouvilleField liouville_field(ModelPtr model, const FibredForm& lambda)
{
    if (lambda.backend() != Backend::field || lambda.degree() != 1)
        throw BackendError("Liouville field needs a field-backend 1-form");
    if (lambda.fibre_dim() != model->fibre_dim()) throw ConfigurationError("λ and model live on different fibres");
    const FieldForm lam = lambda.field_data();
    const auto m = model;
    VerticalField y(model->fibre_dim(), [m, lam](double b, const Vec& x) {
        const Mat om = m->omega_matrix(b, x);
        Eigen::FullPivLU<Mat> lu(om.transpose());
        if (!lu.isInvertible() || std::abs(om.determinant()) <= 1e-10)
            throw SolverError("ω is singular at base point " + std::to_string(b));
        return Vec(lu.solve(lam(b, x)));
    });
    return {model, lambda, std::move(y)};
}

/// sup |ω(Y, ·) - λ| over base samples x points.
inline double liouville_residual(const LiouvilleField& f, const std::vector<Vec>& points)
{
    const auto& base = *f.model->base();
    std::vector<double> per(static_cast<std::size_t>(base.size()), 0.0);
    parallel_for(per.size(), [&](std::size_t i) {
        const double b = base.sample(static_cast<int>(i));
        for (const auto& x : points) {
            const Vec r = f.model->omega_matrix(b, x).transpose() * f.Y(b, x) - f.lambda.field_data()(b, x);
            per[i] = std::max(per[i], sup_abs(r));
        }
    });
    return *std::max_element(per.begin(), per.end());
}

/// Orthonormal basis of the numerical null space of a (columns of V for the
/// `dim` smallest singular values).
inline Mat null_space(const Mat& a, int dim)
{
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
    return svd.matrixV().rightCols(dim);
}

struct EigenSplit {
    Vec x;
    Mat jacobian;
    Eigen::VectorXcd eigenvalues;
    Mat e0;                 ///< tangent to L_b
    Mat e1;                 ///< transverse, Lagrangian
    double e0_residual = 0; ///< sup ‖J v‖
    double e1_residual = 0; ///< sup ‖J w - w‖
    double e1_isotropy = 0; ///< sup |ω(w, w')|
    double cluster_distance = 0;
};

inline constexpr double kEigenClusterTolerance = 1e-3;

/// Eigenspace split of DY at x ∈ L_b.
inline EigenSplit jacobian_split(const LiouvilleField& f, const LagrangianSubbundle& L, double b, const Vec& x)
{
    const int n = L.half_dim();
    if (sup_abs(L.offset(b, x)) > 1e-9) throw DomainError("split point is not on L");
    EigenSplit s;
    s.x = x;
    s.jacobian = f.Y.jacobian(b, x);
    s.eigenvalues = Eigen::EigenSolver<Mat>(s.jacobian, false).eigenvalues();
    for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
        const auto ev = s.eigenvalues[i];
        const double d = std::min(std::abs(ev), std::abs(ev - 1.0));
        s.cluster_distance = std::max(s.cluster_distance, d);
    }
    if (s.cluster_distance > kEigenClusterTolerance)
        throw PolarizationError("Jacobian eigenvalue off {0, 1} by " + std::to_string(s.cluster_distance)
                                + ": λ and ω are inconsistent");
    const Mat id = Mat::Identity(2 * n, 2 * n);
    s.e0 = null_space(s.jacobian, n);
    s.e1 = null_space(s.jacobian - id, n);
    s.e0_residual = (s.jacobian * s.e0).colwise().norm().maxCoeff();
    s.e1_residual = ((s.jacobian - id) * s.e1).colwise().norm().maxCoeff();
    s.e1_isotropy = (s.e1.transpose() * f.model->omega_matrix(b, x) * s.e1).cwiseAbs().maxCoeff();
    return s;
}

/// Largest principal-angle sine between the column spans of a and b.
inline double subspace_gap(const Mat& a, const Mat& b)
{
    const Mat qa = Eigen::HouseholderQR<Mat>(a).householderQ() * Mat::Identity(a.rows(), a.cols());
    const Mat qb = Eigen::HouseholderQR<Mat>(b).householderQ() * Mat::Identity(b.rows(), b.cols());
    return (qb - qa * (qa.transpose() * qb)).colwise().norm().maxCoeff();
}

struct ConformalRow {
    double t = 0;
    double residual = 0;   ///< sup |ω(Mz1, Mz2) - e^{-t} ω(z1, z2)|
    double e1_decay = 0;   ///< sup ‖M w1‖‖M w2‖ over E1 unit pairs
    double e1_expected = 0; ///< e^{-2t}
};

struct ConformalReport {
    std::vector<ConformalRow> rows;
    double sup_residual = 0;
};

/// Flows points under -Y with RK4 plus the variational equation and compares
/// (φ^{-t})^*ω with e^{-t} ω on coordinate pairs.
inline ConformalReport conformal_check(const LiouvilleField& f, const LagrangianSubbundle& L, double b,
                                       const std::vector<Vec>& points, double t_max, double h = 1e-3, int rows = 10)
{
    const int dim = f.model->fibre_dim();
    const int n = dim / 2;
    const auto steps = static_cast<int>(std::ceil(t_max / h - 1e-9));
    const double dt = steps > 0 ? t_max / steps : 0.0;
    const int every = std::max(1, steps / std::max(1, rows));
    ConformalReport rep;
    std::vector<std::vector<ConformalRow>> per(points.size());
    parallel_for(points.size(), [&](std::size_t p) {
        const Vec x0 = points[p];
        const Mat om0 = f.model->omega_matrix(b, x0);
        const Mat e1 = jacobian_split(f, L, b, L.point(b, x0.head(n))).e1;
        Vec state(dim + dim * dim);
        state.head(dim) = x0;
        Eigen::Map<Mat>(state.data() + dim, dim, dim).setIdentity();
        auto rhs = [&](const Vec& s) {
            Vec out(s.size());
            const Vec x = s.head(dim);
            out.head(dim) = -f.Y(b, x);
            const Mat m = Eigen::Map<const Mat>(s.data() + dim, dim, dim);
            Eigen::Map<Mat>(out.data() + dim, dim, dim) = -f.Y.jacobian(b, x) * m;
            return out;
        };
        auto record = [&](int step) {
            const double t = step * dt;
            const Vec x = state.head(dim);
            const Mat m = Eigen::Map<const Mat>(state.data() + dim, dim, dim);
            const Mat pulled = m.transpose() * f.model->omega_matrix(b, x) * m;
            ConformalRow row;
            row.t = t;
            row.residual = (pulled - std::exp(-t) * om0).cwiseAbs().maxCoeff();
            const Mat me1 = m * e1;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    row.e1_decay = std::max(row.e1_decay, me1.col(i).norm() * me1.col(j).norm());
            row.e1_expected = std::exp(-2.0 * t);
            per[p].push_back(row);
        };
        record(0);
        for (int s = 1; s <= steps; ++s) {
            state = rk4_step(rhs, state, dt);
            if (s % every == 0 || s == steps) record(s);
        }
    });
    if (points.empty()) return rep;
    rep.rows = per.front();
    for (std::size_t p = 1; p < per.size(); ++p)
        for (std::size_t r = 0; r < rep.rows.size(); ++r) {
            rep.rows[r].residual = std::max(rep.rows[r].residual, per[p][r].residual);
            rep.rows[r].e1_decay = std::max(rep.rows[r].e1_decay, per[p][r].e1_decay);
        }
    for (const auto& r : rep.rows) rep.sup_residual = std::max(rep.sup_residual, r.residual);
    return rep;
}

/// A polarisation declared in closed form.
struct Polarization {
    std::string name;
    /// Label of the leaf through x: the θ-coordinates of its foot on L.
    std::function<Vec(double b, const Vec& x)> foot;
    std::function<Mat(double b, const Vec& x)> foot_jacobian;
    /// Point of the leaf through the L-point above θ, at leaf parameter s.
    std::function<Vec(double b, const Vec& theta, const Vec& s)> leaf;
    /// 2n x n basis of the leaf tangent at x.
    std::function<Mat(double b, const Vec& x)> tangent;
};

/// Leaves {θ = const}, the fibres of the cotangent projection.
inline Polarization vertical_polarization(const LagrangianSubbundle& L)
{
    auto sub = std::make_shared<const LagrangianSubbundle>(L);
    const int n = L.half_dim();
    Polarization p;
    p.name = "vertical";
    p.foot = [n](double, const Vec& x) { return Vec(x.head(n)); };
    p.foot_jacobian = [n](double, const Vec&) {
        Mat j = Mat::Zero(n, 2 * n);
        j.leftCols(n).setIdentity();
        return j;
    };
    p.leaf = [sub, n](double b, const Vec& theta, const Vec& s) {
        Vec x = sub->point(b, theta);
        x.tail(n) += s;
        return x;
    };
    p.tangent = [n](double, const Vec&) {
        Mat t = Mat::Zero(2 * n, n);
        t.bottomRows(n).setIdentity();
        return t;
    };
    return p;
}

struct LeafCheck {
    Vec theta;
    std::vector<Vec> points;
    double ker_lambda = 0;  ///< sup |λ(tangent)|
    double vertical = 0;    ///< base component of the tangents (zero by representation)
    double lagrangian = 0;  ///< sup |ω(t_i, t_j)|
    double y_tangent = 0;   ///< distance of Y from the tangent span
    double e1_gap = 0;      ///< tangent at L versus E1
    bool passed = false;
};

struct LeafTolerances {
    double ker_lambda = 1e-8;
    double lagrangian = 1e-8;
    double y_tangent = 1e-6;
    double e1_gap = 1e-6;
};

/// Verifies the leaf of `pol` through the L-point above θ; throws if any
/// property fails.
inline LeafCheck transverse_leaf(const LiouvilleField& f, const LagrangianSubbundle& L, const Polarization& pol, double b,
                                 const Vec& theta, int samples = 5, const LeafTolerances& tol = {})
{
    const int n = L.half_dim();
    const double reach = 0.8 * L.model().tubular_radius();
    LeafCheck c;
    c.theta = theta;
    const FieldForm& lam = f.lambda.field_data();
    for (const auto& s : grid_points(n, samples, std::vector<AxisRange>(static_cast<std::size_t>(n), {false, -reach, reach}))) {
        const Vec x = pol.leaf(b, theta, s);
        if (sup_abs(pol.foot(b, x) - theta) > 1e-10) throw PolarizationError("leaf parametrization leaves its label");
        c.points.push_back(x);
        const Mat t = pol.tangent(b, x);
        c.ker_lambda = std::max(c.ker_lambda, sup_abs(t.transpose() * lam(b, x)));
        c.lagrangian = std::max(c.lagrangian, (t.transpose() * f.model->omega_matrix(b, x) * t).cwiseAbs().maxCoeff());
        const Vec y = f.Y(b, x);
        const Vec proj = t * t.completeOrthogonalDecomposition().solve(y);
        c.y_tangent = std::max(c.y_tangent, (y - proj).norm());
    }
    const Vec x0 = L.point(b, theta);
    c.e1_gap = subspace_gap(pol.tangent(b, x0), jacobian_split(f, L, b, x0).e1);
    c.passed = c.ker_lambda <= tol.ker_lambda && c.lagrangian <= tol.lagrangian && c.y_tangent <= tol.y_tangent
               && c.e1_gap <= tol.e1_gap;
    if (!c.passed)
        throw PolarizationError("polarisation '" + pol.name + "' rejected: ker λ " + std::to_string(c.ker_lambda)
                                + ", Lagrangian " + std::to_string(c.lagrangian) + ", Y-tangency "
                                + std::to_string(c.y_tangent) + ", E1 gap " + std::to_string(c.e1_gap));
    return c;
}

} // namespace weinfib
