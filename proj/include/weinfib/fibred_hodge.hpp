#pragma once

// Glued right-inverse δ of d over a base cover, the projection P = δ_p d_p
// onto the complement of the fibrewise closed forms, and smooth families of
// primitives.
//
// On one fibre δ_i = G d^*, with G the Green operator of the flat-torus
// cochain Laplacian. Over base sample b the patches are glued as
//   δ(β)_b = Σ_i ρ_i(b) Φ_i^{-1}(δ_i(Φ_i(β_b))).

#include "weinfib/fibred_forms.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <map>
#include <set>

namespace weinfib {

/// Reported when a form handed to primitive_family is not fibrewise exact.
class NonExactError : public Error {
public:
    NonExactError(int sample, double residual)
        : Error("form is not exact over base sample " + std::to_string(sample) + " (residual "
                + std::to_string(residual) + ")"),
          sample_(sample), residual_(residual)
    {
    }
    int sample() const { return sample_; }
    double residual() const { return residual_; }

private:
    int sample_;
    double residual_;
};

/// Minimum-norm solver for the degree-k cochain Laplacian on one fibre.
///
/// Works with the symmetric matrix A = M_k Δ_k
///   = M_k D_{k-1} M_{k-1}^{-1} D_{k-1}^T M_k + D_k^T M_{k+1} D_k,
/// whose kernel is spanned by the per-type constant cochains. Up to two fibre
/// dimensions one cell of each type is pinned to zero and the rest is
/// factorized by sparse LDL^T; beyond that the fill-in is prohibitive and the
/// consistent singular system goes to conjugate gradients from x = 0. Either
/// way the per-type mean is removed from each solution.
class GreenSolver {
public:
    GreenSolver(FibreComplexPtr complex, int degree) : complex_(std::move(complex)), k_(degree)
    {
        const auto& cx = *complex_;
        const int n = cx.dim();
        if (k_ < 0 || k_ > n) throw DegreeError("Green solver degree outside [0, n]");
        const auto cells = static_cast<Eigen::Index>(cx.cell_count(k_));
        Eigen::SparseMatrix<double> a(cells, cells);
        const Vec mk = cx.hodge_weights(k_);
        if (k_ < n) {
            const auto& d = cx.coboundary(k_);
            const Vec mup = cx.hodge_weights(k_ + 1);
            a += Eigen::SparseMatrix<double>(d.transpose() * mup.asDiagonal() * d);
        }
        if (k_ > 0) {
            const auto& d = cx.coboundary(k_ - 1);
            const Vec mdown = cx.hodge_weights(k_ - 1).cwiseInverse();
            const Eigen::SparseMatrix<double> md = mk.asDiagonal() * d;
            a += Eigen::SparseMatrix<double>(md * mdown.asDiagonal() * md.transpose());
        }
        if (n > 2) {
            full_ = a;
            cg_.setTolerance(1e-14);
            cg_.setMaxIterations(20 * static_cast<Eigen::Index>(cells));
            cg_.compute(full_);
            iterative_ = true;
            return;
        }
        // Pin the first cell of each type.
        const auto v = cx.vertex_count();
        reduced_index_.assign(static_cast<std::size_t>(cells), -1);
        Eigen::Index next = 0;
        for (Eigen::Index c = 0; c < cells; ++c)
            if (static_cast<std::size_t>(c) % v != 0) reduced_index_[static_cast<std::size_t>(c)] = next++;
        std::vector<Eigen::Triplet<double>> trip;
        for (Eigen::Index col = 0; col < a.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it) {
                const auto r = reduced_index_[static_cast<std::size_t>(it.row())];
                const auto c = reduced_index_[static_cast<std::size_t>(it.col())];
                if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
            }
        Eigen::SparseMatrix<double> red(next, next);
        red.setFromTriplets(trip.begin(), trip.end());
        if (next > 0) {
            solver_.compute(red);
            if (solver_.info() != Eigen::Success) throw SolverError("Laplacian factorization failed");
        }
        reduced_size_ = next;
    }

    // The CG solver keeps a reference to full_.
    GreenSolver(const GreenSolver&) = delete;
    GreenSolver& operator=(const GreenSolver&) = delete;

    int degree() const { return k_; }
    const FibreComplex& complex() const { return *complex_; }

    /// Minimum-norm x with (M_k Δ_k) x = rhs; rhs must be orthogonal to the
    /// per-type constants.
    Vec solve(const Vec& rhs) const
    {
        const auto& cx = *complex_;
        const auto v = static_cast<Eigen::Index>(cx.vertex_count());
        auto demean = [&](Vec& x) {
            for (int t = 0; t < cx.type_count(k_); ++t) {
                auto seg = x.segment(t * v, v);
                seg.array() -= seg.mean();
            }
        };
        if (iterative_) {
            if (rhs.cwiseAbs().maxCoeff() == 0.0) return Vec::Zero(rhs.size());
            Vec x = cg_.solve(rhs);
            if (cg_.info() != Eigen::Success) throw SolverError("Laplacian CG did not converge");
            demean(x);
            return x;
        }
        Vec r(reduced_size_);
        for (std::size_t c = 0; c < reduced_index_.size(); ++c)
            if (reduced_index_[c] >= 0) r[reduced_index_[c]] = rhs[static_cast<Eigen::Index>(c)];
        Vec y = reduced_size_ > 0 ? Vec(solver_.solve(r)) : Vec(r);
        if (reduced_size_ > 0 && solver_.info() != Eigen::Success) throw SolverError("Laplacian solve failed");
        Vec x = Vec::Zero(rhs.size());
        for (std::size_t c = 0; c < reduced_index_.size(); ++c)
            if (reduced_index_[c] >= 0) x[static_cast<Eigen::Index>(c)] = y[reduced_index_[c]];
        demean(x);
        return x;
    }

    /// δ_i = G d^*: a (k+1)-cochain to a k-cochain with d δ d = d.
    Vec delta(const Vec& beta) const
    {
        const auto& cx = *complex_;
        const Vec weighted = cx.hodge_weights(k_ + 1).cwiseProduct(beta);
        return solve(cx.coboundary(k_).transpose() * weighted);
    }

private:
    FibreComplexPtr complex_;
    int k_;
    std::vector<Eigen::Index> reduced_index_;
    Eigen::Index reduced_size_ = 0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
    bool iterative_ = false;
    Eigen::SparseMatrix<double> full_;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg_;
};

/// Trivialization Φ_i of the fibres over patch i, as a lattice translation of
/// the periodic grid (a cellular map, so it commutes with d).
struct PatchTrivialization {
    int reference_sample = 0;
    std::vector<int> shift; ///< empty = identity
};

class DeltaOperator {
public:
    DeltaOperator(BaseGridPtr base, FibreComplexPtr complex, std::vector<PatchTrivialization> patches,
                  std::map<int, std::shared_ptr<const GreenSolver>> green)
        : base_(std::move(base)), complex_(std::move(complex)), patches_(std::move(patches)), green_(std::move(green))
    {
    }

    const BaseGrid& base() const { return *base_; }
    const BaseGridPtr& base_ptr() const { return base_; }
    const FibreComplexPtr& complex() const { return complex_; }
    const std::vector<PatchTrivialization>& patches() const { return patches_; }
    bool has_degree(int k) const { return green_.count(k) != 0; }

    /// δ on the fibre over sample i, taking a (k+1)-cochain to a k-cochain.
    Vec apply_slice(int sample, const Vec& beta, int k) const
    {
        const auto it = green_.find(k);
        if (it == green_.end()) throw ConfigurationError("δ was not built for degree " + std::to_string(k));
        const auto& g = *it->second;
        Vec out = Vec::Zero(static_cast<Eigen::Index>(complex_->cell_count(k)));
        for (std::size_t p = 0; p < patches_.size(); ++p) {
            const double w = base_->weight(static_cast<int>(p), sample);
            if (w == 0.0) continue;
            const auto& shift = patches_[p].shift;
            if (shift.empty()) {
                out += w * g.delta(beta);
            } else {
                std::vector<int> back(shift.size());
                for (std::size_t j = 0; j < shift.size(); ++j) back[j] = -shift[j];
                const Vec local = g.delta(complex_->translate(k + 1, beta, shift));
                out += w * complex_->translate(k, local, back);
            }
        }
        return out;
    }

private:
    BaseGridPtr base_;
    FibreComplexPtr complex_;
    std::vector<PatchTrivialization> patches_;
    std::map<int, std::shared_ptr<const GreenSolver>> green_;
};

/// Builds δ for each requested output degree k (δ: degree k+1 -> degree k).
/// `patch_shifts[i]`, when given, twists patch i by a lattice translation.
inline DeltaOperator build_delta(BaseGridPtr base, FibreComplexPtr complex, const std::set<int>& degrees,
                                 const std::vector<std::vector<int>>& patch_shifts = {})
{
    if (!base || !complex) throw ConfigurationError("δ needs a base grid and a fibre complex");
    for (int j = 0; j < base->size(); ++j) {
        double total = 0.0;
        for (int p = 0; p < base->patch_count(); ++p) total += base->weight(p, j);
        if (std::abs(total - 1.0) > 1e-12) throw ConfigurationError("cover does not cover base sample " + std::to_string(j));
    }
    if (!patch_shifts.empty() && static_cast<int>(patch_shifts.size()) != base->patch_count())
        throw ConfigurationError("one shift per patch required");
    std::vector<PatchTrivialization> patches;
    for (int p = 0; p < base->patch_count(); ++p) {
        PatchTrivialization t;
        const auto& members = base->patch(p).samples;
        t.reference_sample = members[members.size() / 2];
        if (!patch_shifts.empty()) {
            t.shift = patch_shifts[static_cast<std::size_t>(p)];
            if (static_cast<int>(t.shift.size()) != complex->dim()) throw ConfigurationError("shift has wrong dimension");
            if (std::all_of(t.shift.begin(), t.shift.end(), [](int s) { return s == 0; })) t.shift.clear();
        }
        patches.push_back(std::move(t));
    }
    std::map<int, std::shared_ptr<const GreenSolver>> green;
    for (int k : degrees) {
        if (k < 0 || k >= complex->dim()) throw DegreeError("δ degree must lie in [0, n)");
        green.emplace(k, std::make_shared<const GreenSolver>(complex, k));
    }
    return DeltaOperator(std::move(base), std::move(complex), std::move(patches), std::move(green));
}

/// δ_p β for a cochain-backend (k+1)-form β.
inline FibredForm apply_delta(const DeltaOperator& d, const FibredForm& beta)
{
    if (beta.backend() != Backend::cochain) throw BackendError("δ acts on cochain-backend forms");
    const auto& c = beta.cochain_data();
    if (c.degree < 1) throw DegreeError("δ of a 0-form");
    if (c.slices.size() != static_cast<std::size_t>(d.base().size()))
        throw ConfigurationError("form and δ use different base grids");
    std::vector<Vec> out(c.slices.size());
    parallel_for(out.size(), [&](std::size_t i) { out[i] = d.apply_slice(static_cast<int>(i), c.slices[i], c.degree - 1); });
    return FibredForm::cochain(beta.base_ptr(), c.complex, c.degree - 1, std::move(out));
}

struct ClosedSplit {
    FibredForm closed;
    FibredForm complement; ///< δ_p d_p α
};

/// α = (α - δ_p d_p α) + δ_p d_p α with the first part fibrewise closed.
inline ClosedSplit project_closed(const DeltaOperator& d, const FibredForm& a)
{
    if (a.backend() != Backend::cochain) throw BackendError("projection acts on cochain-backend forms");
    const auto& c = a.cochain_data();
    if (c.degree == c.complex->dim()) return {a, FibredForm::zero_cochain(a.base_ptr(), c.complex, c.degree)};
    FibredForm complement = apply_delta(d, fibred_d(a));
    FibredForm closed = a - complement;
    return {std::move(closed), std::move(complement)};
}

struct PrimitiveFamily {
    FibredForm primitive;
    std::vector<double> residuals; ///< density sup of d(primitive) - α per sample
    double smoothness_residual;    ///< cubic prediction error of odd samples from even ones
};

inline constexpr double kExactnessThreshold = 1e-6;

/// Cubic interpolation of the even-indexed samples evaluated at the odd ones.
inline double family_smoothness(const FibredForm& family)
{
    const auto& c = family.cochain_data();
    const auto& base = family.base();
    const int m = base.size();
    const bool circle = base.topology() == BaseTopology::circle;
    if (m < 8) return 0.0;
    std::vector<double> xs;
    std::vector<Vec> ys;
    if (circle) {
        // Unwrap two periods of even samples around the odd targets.
        for (int rep = -1; rep <= 1; ++rep)
            for (int j = 0; j < m; j += 2) {
                xs.push_back(base.sample(j) + rep * kTwoPi);
                ys.push_back(c.slices[static_cast<std::size_t>(j)]);
            }
    } else {
        for (int j = 0; j < m; j += 2) {
            xs.push_back(base.sample(j));
            ys.push_back(c.slices[static_cast<std::size_t>(j)]);
        }
    }
    double worst = 0.0;
    for (int j = 1; j < m; j += 2) {
        if (circle && m % 2 == 1 && j == m - 1) continue;
        const Vec pred = cubic_interpolate(xs, ys, base.sample(j));
        worst = std::max(worst, c.complex->density_sup(c.degree, pred - c.slices[static_cast<std::size_t>(j)]));
    }
    return worst;
}

/// Smooth family of primitives δ_p α of a fibrewise exact α.
inline PrimitiveFamily primitive_family(const DeltaOperator& d, const FibredForm& a)
{
    FibredForm prim = apply_delta(d, a);
    const FibredForm back = fibred_d(prim);
    const auto& cx = a.complex();
    std::vector<double> res(static_cast<std::size_t>(a.base().size()));
    for (int i = 0; i < a.base().size(); ++i) {
        res[static_cast<std::size_t>(i)] = cx.density_sup(a.degree(), back.slice(i) - a.slice(i));
        if (res[static_cast<std::size_t>(i)] > kExactnessThreshold) throw NonExactError(i, res[static_cast<std::size_t>(i)]);
    }
    const double smooth = family_smoothness(prim);
    return {std::move(prim), std::move(res), smooth};
}

/// sup ‖dδdα - dα‖∞ / ‖dα‖∞ for one form α (relative, raw cochain norm).
inline double right_inverse_residual(const DeltaOperator& d, const FibredForm& a)
{
    const FibredForm da = fibred_d(a);
    const FibredForm back = fibred_d(apply_delta(d, da));
    double worst = 0.0;
    for (int i = 0; i < a.base().size(); ++i) {
        const double scale = sup_abs(da.slice(i));
        if (scale == 0.0) continue;
        worst = std::max(worst, sup_abs(back.slice(i) - da.slice(i)) / scale);
    }
    return worst;
}

} // namespace weinfib
