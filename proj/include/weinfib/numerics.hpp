#pragma once

// Quadrature, interpolation, RK4 and probe-point generators.

#include "weinfib/core.hpp"

#include <optional>
#include <random>

namespace weinfib {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule on [0, 1].
inline QuadratureRule gauss_legendre(int n)
{
    if (n < 2) throw ConfigurationError("Gauss-Legendre rule needs at least 2 nodes");
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(n - 1 - i);
        rule.nodes[lo] = 0.5 * (1.0 - x);
        rule.nodes[hi] = 0.5 * (1.0 + x);
        rule.weights[lo] = 0.5 * w;
        rule.weights[hi] = 0.5 * w;
    }
    return rule;
}

/// Four-point Lagrange interpolation on a uniform periodic grid
/// (values[j] at j*period/N). Returns value and derivative.
struct InterpResult {
    double value;
    double derivative;
};

inline InterpResult periodic_cubic(const std::vector<double>& values, double period, double x)
{
    const auto n = static_cast<long>(values.size());
    if (n < 4) throw ConfigurationError("periodic cubic interpolation needs at least 4 nodes");
    const double h = period / static_cast<double>(n);
    const double s = x / h;
    const double fl = std::floor(s);
    const double u = s - fl;
    const long i0 = static_cast<long>(fl);
    auto at = [&](long j) { return values[static_cast<std::size_t>(((j % n) + n) % n)]; };
    const double fm = at(i0 - 1);
    const double f0 = at(i0);
    const double f1 = at(i0 + 1);
    const double f2 = at(i0 + 2);
    // Lagrange basis on nodes -1, 0, 1, 2.
    const double lm = -u * (u - 1.0) * (u - 2.0) / 6.0;
    const double l0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
    const double l1 = -(u + 1.0) * u * (u - 2.0) / 2.0;
    const double l2 = (u + 1.0) * u * (u - 1.0) / 6.0;
    const double dm = -(3.0 * u * u - 6.0 * u + 2.0) / 6.0;
    const double d0 = (3.0 * u * u - 4.0 * u - 1.0) / 2.0;
    const double d1 = -(3.0 * u * u - 2.0 * u - 2.0) / 2.0;
    const double d2 = (3.0 * u * u - 1.0) / 6.0;
    return {lm * fm + l0 * f0 + l1 * f1 + l2 * f2, (dm * fm + d0 * f0 + d1 * f1 + d2 * f2) / h};
}

/// Cubic Lagrange interpolation through the four nodes of `xs` nearest to x.
inline Vec cubic_interpolate(const std::vector<double>& xs, const std::vector<Vec>& ys, double x)
{
    const auto n = xs.size();
    if (n < 4) throw ConfigurationError("cubic interpolation needs at least 4 nodes");
    std::size_t hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    std::size_t start = hi >= 2 ? hi - 2 : 0;
    start = std::min(start, n - 4);
    Vec out = Vec::Zero(ys[start].size());
    for (std::size_t a = start; a < start + 4; ++a) {
        double l = 1.0;
        for (std::size_t c = start; c < start + 4; ++c)
            if (c != a) l *= (x - xs[c]) / (xs[a] - xs[c]);
        out += l * ys[a];
    }
    return out;
}

/// One classical Runge-Kutta step for x' = f(x).
template <class F>
Vec rk4_step(F&& f, const Vec& x, double dt)
{
    const Vec k1 = f(x);
    const Vec k2 = f(Vec(x + 0.5 * dt * k1));
    const Vec k3 = f(Vec(x + 0.5 * dt * k2));
    const Vec k4 = f(Vec(x + dt * k3));
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates x' = f(x) over time t with steps no larger than h.
template <class F>
Vec rk4_flow(F&& f, Vec x, double t, double h)
{
    if (t == 0.0) return x;
    const auto steps = static_cast<long>(std::ceil(std::abs(t) / h - 1e-12));
    const double dt = t / static_cast<double>(std::max(1L, steps));
    for (long s = 0; s < std::max(1L, steps); ++s) x = rk4_step(f, x, dt);
    return x;
}

/// Points in [0,1)^d: seeded Mersenne Twister when a seed is given, else a
/// Kronecker sequence (fractional parts of k*sqrt(prime)), so unseeded runs
/// stay deterministic without any RNG.
class ProbeSequence {
public:
    ProbeSequence(int dim, std::optional<std::uint64_t> seed) : dim_(dim)
    {
        if (seed) rng_.emplace(*seed);
    }

    Vec next()
    {
        static constexpr double kRoots[] = {1.4142135623730951, 1.7320508075688772, 2.2360679774997896,
                                            2.6457513110645907, 3.3166247903554,    3.605551275463989,
                                            4.123105625617661,  4.358898943540674};
        Vec p(dim_);
        ++count_;
        for (int i = 0; i < dim_; ++i) {
            if (rng_) {
                p[i] = std::uniform_real_distribution<double>(0.0, 1.0)(*rng_);
            } else {
                const double v = static_cast<double>(count_) * kRoots[i % 8];
                p[i] = v - std::floor(v);
            }
        }
        return p;
    }

private:
    int dim_;
    long count_ = 0;
    std::optional<std::mt19937_64> rng_;
};

} // namespace weinfib
