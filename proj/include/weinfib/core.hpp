#pragma once

// Shared vocabulary: vector aliases, the exception hierarchy, axis-subset
// combinatorics for component layouts, finite differences and a small
// parallel_for used for per-base-sample work.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace weinfib {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Degree out of range for the requested operation (e.g. d of a top form).
class DegreeError : public Error {
public:
    using Error::Error;
};

/// Operation not defined for this backend, or two backends mixed.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Missing callable / disallowed finite differences / bad parameter.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Evaluation point outside the domain where a map is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

/// A model violates its own invariants (closedness, nondegeneracy, ...).
class ModelError : public Error {
public:
    using Error::Error;
};

/// A vertical map moved the base point.
class NonVerticalError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Axis subsets
// ---------------------------------------------------------------------------

inline constexpr int kMaxFieldDim = 8;

using AxisMask = std::uint32_t;

inline AxisMask mask_of(const std::vector<int>& axes)
{
    AxisMask m = 0;
    for (int a : axes) m |= AxisMask{1} << a;
    return m;
}

/// Sorted k-subsets of {0..n-1} in lexicographic order, plus the reverse map.
/// Component c of a k-form is the coefficient of dx_{S[0]}^...^dx_{S[k-1]}.
class ComponentLayout {
public:
    ComponentLayout() = default;
    ComponentLayout(int n, int k) : n_(n), k_(k), index_(std::size_t{1} << n, -1)
    {
        std::vector<int> cur;
        build(0, cur);
        for (std::size_t i = 0; i < subsets_.size(); ++i) index_[mask_of(subsets_[i])] = static_cast<int>(i);
    }

    int dim() const { return n_; }
    int degree() const { return k_; }
    int size() const { return static_cast<int>(subsets_.size()); }
    const std::vector<int>& subset(int i) const { return subsets_[static_cast<std::size_t>(i)]; }
    const std::vector<std::vector<int>>& subsets() const { return subsets_; }

    /// -1 when the mask is not a k-subset.
    int index(AxisMask m) const { return index_[m]; }

private:
    void build(int start, std::vector<int>& cur)
    {
        if (static_cast<int>(cur.size()) == k_) {
            subsets_.push_back(cur);
            return;
        }
        for (int a = start; a < n_; ++a) {
            cur.push_back(a);
            build(a + 1, cur);
            cur.pop_back();
        }
    }

    int n_ = 0;
    int k_ = 0;
    std::vector<std::vector<int>> subsets_;
    std::vector<int> index_;
};

/// Cached layouts for all n <= kMaxFieldDim.
inline const ComponentLayout& layout(int n, int k)
{
    static const std::vector<std::vector<ComponentLayout>> table = [] {
        std::vector<std::vector<ComponentLayout>> t(kMaxFieldDim + 1);
        for (int n = 0; n <= kMaxFieldDim; ++n)
            for (int k = 0; k <= n; ++k) t[static_cast<std::size_t>(n)].emplace_back(n, k);
        return t;
    }();
    if (n < 0 || n > kMaxFieldDim || k < 0 || k > n)
        throw DegreeError("no component layout for degree " + std::to_string(k) + " in dimension "
                          + std::to_string(n));
    return table[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)];
}

inline int binomial(int n, int k)
{
    if (k < 0 || k > n) return 0;
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return static_cast<int>(r);
}

// ---------------------------------------------------------------------------
// Pointwise exterior algebra on component vectors
// ---------------------------------------------------------------------------

/// Interior product of a k-covector with a vector: ι_Z(dx_i^dx_j) = Z_i dx_j - Z_j dx_i.
inline Vec interior(const Vec& z, const Vec& comps, int n, int k)
{
    if (k < 1) throw DegreeError("interior product of a 0-form");
    const auto& in = layout(n, k);
    const auto& out = layout(n, k - 1);
    Vec r = Vec::Zero(out.size());
    for (int c = 0; c < in.size(); ++c) {
        const auto& s = in.subset(c);
        const AxisMask m = mask_of(s);
        for (int p = 0; p < k; ++p) {
            const int j = s[static_cast<std::size_t>(p)];
            const int t = out.index(m & ~(AxisMask{1} << j));
            r[t] += ((p % 2 == 0) ? 1.0 : -1.0) * z[j] * comps[c];
        }
    }
    return r;
}

/// Pullback of a k-covector at φ(x) by the linear map J = Dφ(x).
inline Vec pullback_components(const Mat& jac, const Vec& comps, int n, int k)
{
    const auto& lay = layout(n, k);
    if (k == 0) return comps;
    Vec r = Vec::Zero(lay.size());
    Mat minor(k, k);
    for (int s = 0; s < lay.size(); ++s) {
        const auto& cols = lay.subset(s);
        for (int t = 0; t < lay.size(); ++t) {
            if (comps[t] == 0.0) continue;
            const auto& rows = lay.subset(t);
            for (int a = 0; a < k; ++a)
                for (int bb = 0; bb < k; ++bb)
                    minor(a, bb) = jac(rows[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(bb)]);
            r[s] += comps[t] * minor.determinant();
        }
    }
    return r;
}

/// The antisymmetric matrix Ω_ij = ω(∂_i, ∂_j) of a 2-covector.
inline Mat two_form_matrix(const Vec& comps, int n)
{
    const auto& lay = layout(n, 2);
    Mat m = Mat::Zero(n, n);
    for (int c = 0; c < lay.size(); ++c) {
        const int i = lay.subset(c)[0];
        const int j = lay.subset(c)[1];
        m(i, j) = comps[c];
        m(j, i) = -comps[c];
    }
    return m;
}

/// Exterior derivative components from a component Jacobian (jac(c, i) = ∂_i α_c).
inline Vec d_from_jacobian(const Mat& jac, int n, int k)
{
    const auto& in = layout(n, k);
    const auto& out = layout(n, k + 1);
    Vec r = Vec::Zero(out.size());
    for (int c = 0; c < out.size(); ++c) {
        const auto& s = out.subset(c);
        const AxisMask m = mask_of(s);
        for (int p = 0; p <= k; ++p) {
            const int j = s[static_cast<std::size_t>(p)];
            const int t = in.index(m & ~(AxisMask{1} << j));
            r[c] += ((p % 2 == 0) ? 1.0 : -1.0) * jac(t, j);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

struct FiniteDifference {
    bool allowed = true;
    double h = 1e-4;
};

/// Per-axis domain. Bounded axes switch to one-sided second-order stencils
/// near their ends.
struct AxisRange {
    bool periodic = true;
    double lo = 0.0;
    double hi = kTwoPi;
};

/// Central-difference Jacobian of f: R^n -> R^m, columns are ∂_i f.
template <class F>
Mat fd_jacobian(F&& f, const Vec& x, double h, const std::vector<AxisRange>* ranges = nullptr)
{
    const Eigen::Index n = x.size();
    Vec xp = x;
    Mat j;
    for (Eigen::Index i = 0; i < n; ++i) {
        bool lo_ok = true;
        bool hi_ok = true;
        if (ranges && static_cast<std::size_t>(i) < ranges->size() && !(*ranges)[static_cast<std::size_t>(i)].periodic) {
            const auto& r = (*ranges)[static_cast<std::size_t>(i)];
            lo_ok = x[i] - h >= r.lo;
            hi_ok = x[i] + h <= r.hi;
        }
        Vec col;
        if (lo_ok && hi_ok) {
            xp[i] = x[i] + h;
            Vec fp = f(xp);
            xp[i] = x[i] - h;
            Vec fm = f(xp);
            col = (fp - fm) / (2.0 * h);
        } else {
            const double s = lo_ok ? -1.0 : 1.0;
            xp[i] = x[i];
            Vec f0 = f(xp);
            xp[i] = x[i] + s * h;
            Vec f1 = f(xp);
            xp[i] = x[i] + 2.0 * s * h;
            Vec f2 = f(xp);
            col = s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h);
        }
        xp[i] = x[i];
        if (j.size() == 0) j.resize(col.size(), n);
        j.col(i) = col;
    }
    if (j.size() == 0) j.resize(0, n);
    return j;
}

// ---------------------------------------------------------------------------
// Threads
// ---------------------------------------------------------------------------

inline std::atomic<int>& thread_setting()
{
    static std::atomic<int> n{[] {
        if (const char* env = std::getenv("WEINFIB_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
        return 1;
    }()};
    return n;
}

inline int thread_count() { return thread_setting().load(); }
inline void set_thread_count(int n) { thread_setting().store(std::max(1, n)); }

/// Runs f(i) for i in [0, n). Each index must write only its own output slot.
template <class F>
void parallel_for(std::size_t n, F&& f)
{
    const auto workers = static_cast<std::size_t>(thread_count());
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                if (failed) return;
                try {
                    f(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

inline double sup_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

} // namespace weinfib
