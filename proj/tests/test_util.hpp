#pragma once

#include "weinfib/weinfib.hpp"

#include <random>

namespace wt {

using weinfib::Mat;
using weinfib::Vec;

/// Random integers in [-range, range]: sums and differences stay exact.
inline Vec integer_cochain(std::mt19937_64& rng, Eigen::Index size, int range = 1000)
{
    std::uniform_int_distribution<int> u(-range, range);
    Vec v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = u(rng);
    return v;
}

inline Vec uniform_cochain(std::mt19937_64& rng, Eigen::Index size)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = u(rng);
    return v;
}

inline weinfib::FibreComplexPtr torus(int n, int per_axis)
{
    return std::make_shared<const weinfib::FibreComplex>(std::vector<int>(static_cast<std::size_t>(n), per_axis));
}

inline weinfib::BaseGridPtr circle(int m, int patches = 1)
{
    return std::make_shared<const weinfib::BaseGrid>(weinfib::BaseGrid::uniform_circle(m, patches, patches > 1 ? 1 : 0));
}

inline weinfib::BaseGridPtr point(double b = 0.0)
{
    return std::make_shared<const weinfib::BaseGrid>(weinfib::BaseGrid::single(b));
}

/// Field 1-form on T^n from a component callable with exact Jacobian.
inline weinfib::FibredForm field1(weinfib::BaseGridPtr base, int n, weinfib::FieldEval f, weinfib::FieldJac j = {})
{
    return weinfib::FibredForm::field(std::move(base), weinfib::FieldForm(1, n, std::move(f), std::move(j)));
}

inline double max_at(const weinfib::FibredForm& a, double b, const std::vector<Vec>& pts, const std::function<Vec(const Vec&)>& expect)
{
    double s = 0.0;
    for (const auto& x : pts) s = std::max(s, weinfib::sup_abs(a.field_data()(b, x) - expect(x)));
    return s;
}

} // namespace wt
