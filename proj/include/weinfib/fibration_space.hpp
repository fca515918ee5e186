#pragma once

// Fibrations π: M -> B as subbundles L_π = {(m, π(m))} of M x B, the
// submersion and Lagrangian-fibre tests, and the bi-fibration
// reparametrization Ψ(α) = α∘(p₂∘α)^{-1} on N = S¹ x S¹.

#include "weinfib/weinstein.hpp"

namespace weinfib {

using PointMap = std::function<Vec(const Vec&)>;
using PointJac = std::function<Mat(const Vec&)>;

/// π: T^m -> B (B a k-torus or interval, values as lifts).
class FibrationMap {
public:
    FibrationMap(int m_dim, int b_dim, PointMap pi, PointJac dpi = {}, FiniteDifference fd = {})
        : m_(m_dim), k_(b_dim), pi_(std::move(pi)), dpi_(std::move(dpi)), fd_(fd)
    {
        if (!pi_) throw ConfigurationError("fibration needs a map callable");
    }

    int total_dim() const { return m_; }
    int base_dim() const { return k_; }
    Vec operator()(const Vec& x) const
    {
        Vec v = pi_(x);
        if (v.size() != k_) throw ConfigurationError("fibration map returned the wrong dimension");
        return v;
    }
    Mat differential(const Vec& x) const
    {
        if (dpi_) return dpi_(x);
        if (!fd_.allowed) throw ConfigurationError("fibration has no differential and finite differences are disabled");
        return fd_jacobian([&](const Vec& y) { return (*this)(y); }, x, fd_.h);
    }

private:
    int m_;
    int k_;
    PointMap pi_;
    PointJac dpi_;
    FiniteDifference fd_;
};

inline constexpr double kSubmersionSigmaMin = 1e-6;

struct SubmersionResult {
    bool passed = false;
    double min_singular = 0;
    Vec worst_point;
    std::vector<Vec> failures;
};

inline double smallest_singular(const Mat& a)
{
    Eigen::JacobiSVD<Mat> svd(a);
    const Vec s = svd.singularValues();
    return s.size() == 0 ? 0.0 : s.minCoeff();
}

/// Rank test of Dπ on a uniform grid of M.
inline SubmersionResult submersion_test(const FibrationMap& pi, int per_axis = 64)
{
    SubmersionResult r;
    r.min_singular = std::numeric_limits<double>::infinity();
    for (const auto& x : grid_points(pi.total_dim(), per_axis)) {
        const double s = smallest_singular(pi.differential(x));
        if (s < r.min_singular) {
            r.min_singular = s;
            r.worst_point = x;
        }
        if (s < kSubmersionSigmaMin) r.failures.push_back(x);
    }
    r.passed = r.failures.empty();
    return r;
}

/// L_π ⊂ M x B.
struct FibrationGraph {
    FibrationMap pi;
    SubmersionResult submersion;
    bool is_subbundle = false;

    Vec embed(const Vec& x) const
    {
        Vec out(pi.total_dim() + pi.base_dim());
        out.head(pi.total_dim()) = x;
        out.tail(pi.base_dim()) = pi(x);
        return out;
    }
};

inline FibrationGraph graph_of(const FibrationMap& pi, int per_axis = 64)
{
    FibrationGraph g{pi, submersion_test(pi, per_axis), false};
    g.is_subbundle = g.submersion.passed;
    return g;
}

/// Wraps to (-π, π].
inline double wrap_angle(double a) { return a - kTwoPi * std::ceil((a - std::numbers::pi) / kTwoPi); }

/// Points of π^{-1}(b) by minimum-norm Newton from each seed; the base is a
/// torus, so residuals are wrapped.
inline std::vector<Vec> fibre_points(const FibrationMap& pi, const Vec& b, const std::vector<Vec>& seeds)
{
    std::vector<Vec> out;
    for (Vec x : seeds) {
        for (int it = 0; it < 50; ++it) {
            Vec r = pi(x) - b;
            for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = wrap_angle(r[i]);
            if (r.norm() <= 1e-12) break;
            x -= pi.differential(x).completeOrthogonalDecomposition().solve(r);
        }
        out.push_back(x);
    }
    return out;
}

struct FibreVerdict {
    bool lagrangian = false;
    double defect = 0;
    int kernel_dim = 0;
};

/// Fibres of π are Lagrangian iff sup |ω(v, w)| over an orthonormal basis of
/// ker Dπ is at most 1e-8 and dim ker = dim M / 2.
inline FibreVerdict lagrangian_fibration_test(const std::function<Mat(const Vec&)>& omega, const FibrationMap& pi,
                                              int per_axis = 6)
{
    const int m = pi.total_dim();
    if (m % 2 != 0) throw ConfigurationError("symplectic total space must be even-dimensional");
    FibreVerdict v;
    v.kernel_dim = m;
    bool first = true;
    for (const auto& x : grid_points(m, per_axis)) {
        const Mat d = pi.differential(x);
        Eigen::JacobiSVD<Mat> svd(d, Eigen::ComputeFullV);
        const Vec s = svd.singularValues();
        int rank = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s[i] > kSubmersionSigmaMin) ++rank;
        const int kdim = m - rank;
        if (first) v.kernel_dim = kdim;
        else if (kdim != v.kernel_dim) throw SolverError("kernel dimension of Dπ varies across M");
        first = false;
        const Mat ker = svd.matrixV().rightCols(kdim);
        if (kdim > 0) v.defect = std::max(v.defect, (ker.transpose() * omega(x) * ker).cwiseAbs().maxCoeff());
    }
    v.lagrangian = v.defect <= 1e-8 && 2 * v.kernel_dim == m;
    return v;
}

/// Symplectic basis (u_1..u_n, v_1..v_n) of a constant Ω: columns of the result.
inline Mat symplectic_basis(const Mat& omega)
{
    const auto m = omega.rows();
    const auto n = m / 2;
    std::vector<Vec> rest;
    for (Eigen::Index i = 0; i < m; ++i) rest.push_back(Vec::Unit(m, i));
    auto w = [&](const Vec& a, const Vec& b) { return a.dot(omega * b); };
    Mat out(m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec u = rest.front();
        rest.erase(rest.begin());
        std::size_t best = 0;
        for (std::size_t j = 1; j < rest.size(); ++j)
            if (std::abs(w(u, rest[j])) > std::abs(w(u, rest[best]))) best = j;
        const double p = w(u, rest[best]);
        if (std::abs(p) < 1e-12) throw ModelError("ω is degenerate");
        const Vec v = rest[best] / p;
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(best));
        for (auto& x : rest) x = x - w(x, v) * u + w(x, u) * v;
        out.col(i) = u;
        out.col(n + i) = v;
    }
    return out;
}

/// Linear Darboux chart (q, p) ↦ m0 + E q + F p around a fibre of π with
/// F Lagrangian and transverse to the fibre tangent.
struct DarbouxFrame {
    Vec origin;
    Mat e;
    Mat f;
};

inline DarbouxFrame darboux_frame_for(const Mat& omega, const Mat& fibre_tangent, const Vec& origin)
{
    const auto m = omega.rows();
    const auto n = m / 2;
    const Mat s = symplectic_basis(omega);
    // In the symplectic basis ω is [[0, I], [-I, 0]] and J = [[0, -I], [I, 0]]
    // maps a Lagrangian F onto a Lagrangian complement.
    const Mat t = s.fullPivLu().solve(fibre_tangent);
    // Candidates: coordinate Lagrangians, then graphs of symmetric S over the
    // u- and v-planes.
    std::vector<Mat> candidates;
    for (unsigned choice = 0; choice < (1U << n); ++choice) {
        Mat f = Mat::Zero(m, n);
        for (Eigen::Index j = 0; j < n; ++j) f((choice >> j & 1U) ? j : n + j, j) = 1.0;
        candidates.push_back(f);
    }
    std::vector<Mat> syms = {Mat::Identity(n, n), -Mat::Identity(n, n)};
    for (double off : {1.0, -1.0, 0.5}) {
        Mat sym = Mat::Constant(n, n, off);
        sym.diagonal().setZero();
        if (n > 1) syms.push_back(sym);
    }
    for (const Mat& sym : syms)
        for (int over_v = 0; over_v < 2; ++over_v) {
            Mat f(m, n);
            f.topRows(n) = over_v ? sym : Mat(Mat::Identity(n, n));
            f.bottomRows(n) = over_v ? Mat(Mat::Identity(n, n)) : sym;
            candidates.push_back(f);
        }
    const Mat tq = Eigen::HouseholderQR<Mat>(t).householderQ() * Mat::Identity(m, t.cols());
    Mat best_f;
    double best_score = -1.0;
    for (const Mat& f : candidates) {
        Mat both(m, t.cols() + n);
        both << tq, Eigen::HouseholderQR<Mat>(f).householderQ() * Mat::Identity(m, n);
        const double score = smallest_singular(both);
        if (score > best_score + 1e-12) {
            best_score = score;
            best_f = f;
        }
    }
    if (best_score < 1e-6) throw SolverError("no Lagrangian plane transverse to the fibre found");
    Mat j = Mat::Zero(m, m);
    j.topRightCorner(n, n) = -Mat::Identity(n, n);
    j.bottomLeftCorner(n, n).setIdentity();
    Mat std_omega = Mat::Zero(m, m);
    std_omega.topRightCorner(n, n).setIdentity();
    std_omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    const Mat g = j * best_f;
    const Mat pair = g.transpose() * std_omega * best_f;
    const Mat e = g * pair.transpose().inverse();
    return {origin, s * e, s * best_f};
}

/// Fibre π^{-1}(π(m0)) near m0 as the graph p(q) of a 1-form over the q-plane
/// of a linear Darboux chart, classified with the subbundle classifier.
inline LagrangianVerdict classify_via_subbundle(const std::function<Mat(const Vec&)>& omega, const FibrationMap& pi,
                                                const Vec& m0, double reach = 0.2, int per_axis = 7)
{
    const int m = pi.total_dim();
    const int n = m / 2;
    if (pi.base_dim() != n) throw ConfigurationError("graph classification needs dim B = dim M / 2");
    const Mat om = omega(m0);
    Eigen::JacobiSVD<Mat> svd(pi.differential(m0), Eigen::ComputeFullV);
    const DarbouxFrame fr = darboux_frame_for(om, svd.matrixV().rightCols(n), m0);
    const Vec target = pi(m0);
    auto section = [pi, fr, target, n](double, const Vec& q) {
        Vec p = Vec::Zero(n);
        for (int it = 0; it < 50; ++it) {
            const Vec x = fr.origin + fr.e * q + fr.f * p;
            Vec r = pi(x) - target;
            for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = wrap_angle(r[i]);
            if (r.norm() <= 1e-14) break;
            const Vec step = (pi.differential(x) * fr.f).fullPivLu().solve(r);
            p -= step;
            if (step.norm() <= 1e-15) break;
        }
        return p;
    };
    const std::vector<AxisRange> box(static_cast<std::size_t>(n), AxisRange{false, -reach, reach});
    const auto alpha = FibredForm::field(std::make_shared<const BaseGrid>(BaseGrid::single(0.0)),
                                         FieldForm(1, n, section, {}, FiniteDifference{}, box));
    LagrangianVerdict v;
    if (n > 1) v.defect = field_sup(fibred_d(alpha), grid_points(n, per_axis, box));
    v.lagrangian = v.defect <= 1e-8;
    return v;
}

// ---------------------------------------------------------------------------
// Bi-fibration N = S¹ x S¹ with p₁(x, y) = x, p₂(x, y) = y, ι_L(x) = (x, x)
// ---------------------------------------------------------------------------

class PsiError : public Error {
public:
    PsiError(const std::string& what, int node) : Error(what), node_(node) {}
    int node() const { return node_; }

private:
    int node_;
};

/// Section of p_j stored as periodic offsets: for j = 1, α(x) = (x, x + d(x));
/// for j = 2, β(y) = (y + d(y), y). Nodes are x_i = 2πi/N.
struct CircleSection {
    int fibration = 1;
    std::vector<double> offsets;

    int nodes() const { return static_cast<int>(offsets.size()); }
    double node(int i) const { return kTwoPi * i / nodes(); }
    /// The moving coordinate: x + d(x).
    double lift(double x) const { return x + periodic_cubic(offsets, kTwoPi, x).value; }
    double lift_derivative(double x) const { return 1.0 + periodic_cubic(offsets, kTwoPi, x).derivative; }
    Vec point(double s) const
    {
        Vec p(2);
        if (fibration == 1) p << s, lift(s);
        else p << lift(s), s;
        return p;
    }
};

struct BiFibration {
    int nodes = 256;

    Vec p1(const Vec& z) const { return z.head(1); }
    Vec p2(const Vec& z) const { return z.tail(1); }
    Vec iota(double x) const { return Vec::Constant(2, x); }

    CircleSection common_section(int fibration = 1) const
    {
        return {fibration, std::vector<double>(static_cast<std::size_t>(nodes), 0.0)};
    }

    /// Section of p₁ with α(x) = (x, g(x)) sampled from g.
    CircleSection section_p1(const std::function<double(double)>& g) const
    {
        CircleSection s{1, {}};
        for (int i = 0; i < nodes; ++i) {
            const double x = kTwoPi * i / nodes;
            s.offsets.push_back(g(x) - x);
        }
        return s;
    }
};

inline constexpr double kPsiTolerance = 1e-10;

/// Solves x + d(x) = y for a degree-one circle map given by offsets: Newton on
/// the lift with a bisection fallback inside a sign-changing bracket.
inline double invert_circle_lift(const CircleSection& s, double y, int* iterations = nullptr)
{
    double span = 0.0;
    for (double d : s.offsets) span = std::max(span, std::abs(d));
    double lo = y - span - 1.0;
    double hi = y + span + 1.0;
    auto f = [&](double x) { return s.lift(x) - y; };
    while (f(lo) > 0) lo -= 1.0;
    while (f(hi) < 0) hi += 1.0;
    double x = y - periodic_cubic(s.offsets, kTwoPi, y).value;
    int it = 0;
    for (; it < 50; ++it) {
        const double r = f(x);
        if (std::abs(r) <= 1e-15 * std::max(1.0, std::abs(y))) break;
        if (r < 0) lo = x;
        else hi = x;
        const double dv = s.lift_derivative(x);
        double next = dv > 0 ? x - r / dv : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-16 * std::max(1.0, std::abs(x))) {
            x = next;
            break;
        }
        x = next;
    }
    if (iterations) *iterations = it;
    if (std::abs(f(x)) > kPsiTolerance)
        throw PsiError("Newton inversion did not converge at y = " + std::to_string(y), -1);
    return x;
}

/// Throws PsiError (the section lies outside V₁) unless the lift is strictly
/// increasing, checked at nodes and midpoints.
inline void check_monotone(const CircleSection& s)
{
    const int n = s.nodes();
    for (int i = 0; i < n; ++i) {
        const double x = s.node(i);
        const double next = s.node(i + 1);
        const double mid = 0.5 * (x + next);
        if (s.lift(next) <= s.lift(x) || s.lift_derivative(x) <= 0 || s.lift_derivative(mid) <= 0)
            throw PsiError("p∘α is not a diffeomorphism of L (lift not increasing near node " + std::to_string(i)
                               + "): section lies outside V1",
                           i);
    }
}

struct PsiResult {
    CircleSection section;
    double identity_residual = 0; ///< sup |p_j∘Ψ(α) - id| at nodes
    double graph_residual = 0;    ///< sup distance of Ψ(α) nodes from graph(α)
    int max_iterations = 0;
};

namespace detail {
inline PsiResult swap_section(const CircleSection& a)
{
    check_monotone(a);
    PsiResult r;
    r.section.fibration = a.fibration == 1 ? 2 : 1;
    r.section.offsets.resize(a.offsets.size());
    std::vector<int> its(a.offsets.size(), 0);
    parallel_for(a.offsets.size(), [&](std::size_t i) {
        const double y = a.node(static_cast<int>(i));
        r.section.offsets[i] = invert_circle_lift(a, y, &its[i]) - y;
    });
    r.max_iterations = *std::max_element(its.begin(), its.end());
    for (int i = 0; i < r.section.nodes(); ++i) {
        const Vec z = r.section.point(r.section.node(i));
        // Ψ(α) is a p_j section by construction; its node lies on graph(α) iff
        // α's lift maps the moving coordinate back onto the fixed one.
        const double fixed = a.fibration == 1 ? z[1] : z[0];
        const double moving = a.fibration == 1 ? z[0] : z[1];
        r.graph_residual = std::max(r.graph_residual, std::abs(wrap_angle(a.lift(moving) - fixed)));
        r.identity_residual = std::max(r.identity_residual, std::abs(fixed - r.section.node(i)));
    }
    return r;
}
} // namespace detail

/// Ψ(α) = α∘(p₂∘α)^{-1}, a section of p₂ with the same graph as α.
inline PsiResult psi_reparametrize(const BiFibration& bf, const CircleSection& a)
{
    if (a.fibration != 1) throw ConfigurationError("Ψ takes a section of p1");
    if (a.nodes() != bf.nodes) throw ConfigurationError("section and bi-fibration use different grids");
    return detail::swap_section(a);
}

/// Ψ^{-1}(β) = β∘(p₁∘β)^{-1}.
inline PsiResult psi_inverse(const BiFibration& bf, const CircleSection& b)
{
    if (b.fibration != 2) throw ConfigurationError("Ψ^-1 takes a section of p2");
    if (b.nodes() != bf.nodes) throw ConfigurationError("section and bi-fibration use different grids");
    return detail::swap_section(b);
}

inline double section_distance(const CircleSection& a, const CircleSection& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.offsets.size(); ++i) s = std::max(s, std::abs(a.offsets[i] - b.offsets[i]));
    return s;
}

/// Solves F(x) = y for a torus map F(x) = x + D(x) (D periodic) by damped
/// Newton with backtracking on |F(x) - y|.
inline Vec invert_torus_map(const PointMap& f, const PointJac& df, const Vec& y, Vec x, double tol = kPsiTolerance,
                            int max_iter = 50)
{
    auto res = [&](const Vec& z) { return Vec(f(z) - y); };
    Vec r = res(x);
    for (int it = 0; it < max_iter && r.norm() > tol; ++it) {
        const Mat j = df ? df(x) : fd_jacobian(f, x, 1e-6);
        const Vec step = j.fullPivLu().solve(r);
        double t = 1.0;
        Vec trial = x - step;
        Vec rt = res(trial);
        while (rt.norm() >= r.norm() && t > 1e-4) {
            t *= 0.5;
            trial = x - t * step;
            rt = res(trial);
        }
        x = trial;
        r = rt;
    }
    if (r.norm() > tol) throw PsiError("torus map inversion did not converge", -1);
    return x;
}

} // namespace weinfib
