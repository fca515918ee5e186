#pragma once

#include "weinfib/core.hpp"

#include <Eigen/Sparse>

#include <memory>

namespace weinfib {

/// Periodic cubical complex on the flat torus T^n (1 <= n <= 4).
///
/// A k-cell is a pair (type S, base vertex v): S a sorted k-subset of the
/// axes, v a vertex multi-index. Cells are numbered type-major, vertices
/// row-major with axis 0 fastest. Coboundary of a k-cochain a:
///   (da)(S', v) = sum_p (-1)^p [a(S' \ j_p, v + e_{j_p}) - a(S' \ j_p, v)].
class FibreComplex {
public:
    explicit FibreComplex(std::vector<int> resolution, std::vector<double> lengths = {})
        : res_(std::move(resolution)), len_(std::move(lengths))
    {
        const int n = dim();
        if (n < 1 || n > 4) throw ConfigurationError("fibre complex dimension must be 1..4");
        if (len_.empty()) len_.assign(res_.size(), kTwoPi);
        if (len_.size() != res_.size()) throw ConfigurationError("one length per axis required");
        vertices_ = 1;
        for (int j = 0; j < n; ++j) {
            if (res_[static_cast<std::size_t>(j)] < 1) throw ConfigurationError("resolution must be positive");
            stride_.push_back(vertices_);
            vertices_ *= static_cast<std::size_t>(res_[static_cast<std::size_t>(j)]);
        }
        for (int k = 0; k < n; ++k) build_incidence(k);
    }

    int dim() const { return static_cast<int>(res_.size()); }
    int resolution(int axis) const { return res_[static_cast<std::size_t>(axis)]; }
    double length(int axis) const { return len_[static_cast<std::size_t>(axis)]; }
    double spacing(int axis) const { return length(axis) / resolution(axis); }
    std::size_t vertex_count() const { return vertices_; }
    int type_count(int k) const { return layout(dim(), k).size(); }
    std::size_t cell_count(int k) const { return static_cast<std::size_t>(type_count(k)) * vertices_; }
    const std::vector<int>& cell_type(int k, int type) const { return layout(dim(), k).subset(type); }

    int type_of(std::size_t cell) const { return static_cast<int>(cell / vertices_); }
    std::size_t vertex_of(std::size_t cell) const { return cell % vertices_; }

    std::vector<int> multi_index(std::size_t v) const
    {
        std::vector<int> m(res_.size());
        for (std::size_t j = 0; j < res_.size(); ++j) {
            m[j] = static_cast<int>(v % static_cast<std::size_t>(res_[j]));
            v /= static_cast<std::size_t>(res_[j]);
        }
        return m;
    }

    std::size_t vertex_index(const std::vector<int>& m) const
    {
        std::size_t v = 0;
        for (std::size_t j = 0; j < res_.size(); ++j) {
            const int r = res_[j];
            v += static_cast<std::size_t>(((m[j] % r) + r) % r) * stride_[j];
        }
        return v;
    }

    std::size_t shifted_vertex(std::size_t v, const std::vector<int>& shift) const
    {
        auto m = multi_index(v);
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += shift[j];
        return vertex_index(m);
    }

    Vec vertex_coords(std::size_t v) const
    {
        const auto m = multi_index(v);
        Vec x(dim());
        for (int j = 0; j < dim(); ++j) x[j] = m[static_cast<std::size_t>(j)] * spacing(j);
        return x;
    }

    Vec cell_midpoint(int k, std::size_t cell) const
    {
        Vec x = vertex_coords(vertex_of(cell));
        for (int j : cell_type(k, type_of(cell))) x[j] += 0.5 * spacing(j);
        return x;
    }

    double cell_volume(int k, int type) const
    {
        double v = 1.0;
        for (int j : cell_type(k, type)) v *= spacing(j);
        return v;
    }

    /// Diagonal flat-metric Hodge star weight: dual volume / primal volume.
    double hodge_weight(int k, int type) const
    {
        const auto& s = cell_type(k, type);
        const AxisMask m = mask_of(s);
        double w = 1.0;
        for (int j = 0; j < dim(); ++j) w *= (m >> j & 1U) ? 1.0 / spacing(j) : spacing(j);
        return w;
    }

    Vec hodge_weights(int k) const
    {
        Vec w(static_cast<Eigen::Index>(cell_count(k)));
        for (int t = 0; t < type_count(k); ++t)
            w.segment(static_cast<Eigen::Index>(t * vertices_), static_cast<Eigen::Index>(vertices_))
                .setConstant(hodge_weight(k, t));
        return w;
    }

    /// Signed integer incidence, rows (k+1)-cells, columns k-cells.
    const Eigen::SparseMatrix<int>& incidence(int k) const
    {
        check_deg(k);
        return incidence_[static_cast<std::size_t>(k)];
    }
    const Eigen::SparseMatrix<double>& coboundary(int k) const
    {
        check_deg(k);
        return coboundary_[static_cast<std::size_t>(k)];
    }

    Vec d(int k, const Vec& cochain) const
    {
        if (cochain.size() != static_cast<Eigen::Index>(cell_count(k)))
            throw ConfigurationError("cochain length does not match the k-cell count");
        return coboundary(k) * cochain;
    }

    /// Translation pullback (τ_s^* a)(S, v) = a(S, v + s); commutes with d.
    Vec translate(int k, const Vec& cochain, const std::vector<int>& shift) const
    {
        Vec out(cochain.size());
        for (std::size_t v = 0; v < vertices_; ++v) {
            const std::size_t w = shifted_vertex(v, shift);
            for (int t = 0; t < type_count(k); ++t) {
                const auto base = static_cast<std::size_t>(t) * vertices_;
                out[static_cast<Eigen::Index>(base + v)] = cochain[static_cast<Eigen::Index>(base + w)];
            }
        }
        return out;
    }

    /// Largest |value| / cell volume; compares cochains with pointwise densities.
    double density_sup(int k, const Vec& cochain) const
    {
        double s = 0.0;
        for (int t = 0; t < type_count(k); ++t) {
            const double vol = cell_volume(k, t);
            const auto seg = cochain.segment(static_cast<Eigen::Index>(static_cast<std::size_t>(t) * vertices_),
                                             static_cast<Eigen::Index>(vertices_));
            if (seg.size() > 0) s = std::max(s, seg.cwiseAbs().maxCoeff() / vol);
        }
        return s;
    }

private:
    void check_deg(int k) const
    {
        if (k < 0 || k >= dim())
            throw DegreeError("no coboundary out of degree " + std::to_string(k) + " on a "
                              + std::to_string(dim()) + "-dimensional fibre");
    }

    void build_incidence(int k)
    {
        const auto& hi = layout(dim(), k + 1);
        const auto& lo = layout(dim(), k);
        std::vector<Eigen::Triplet<int>> trip;
        trip.reserve(cell_count(k + 1) * static_cast<std::size_t>(2 * (k + 1)));
        for (int t = 0; t < hi.size(); ++t) {
            const auto& s = hi.subset(t);
            const AxisMask m = mask_of(s);
            for (std::size_t v = 0; v < vertices_; ++v) {
                const auto row = static_cast<int>(static_cast<std::size_t>(t) * vertices_ + v);
                for (int p = 0; p <= k; ++p) {
                    const int j = s[static_cast<std::size_t>(p)];
                    const int face = lo.index(m & ~(AxisMask{1} << j));
                    const int sign = p % 2 == 0 ? 1 : -1;
                    const auto base = static_cast<std::size_t>(face) * vertices_;
                    const std::size_t up = base + neighbour(v, j);
                    trip.emplace_back(row, static_cast<int>(up), sign);
                    trip.emplace_back(row, static_cast<int>(base + v), -sign);
                }
            }
        }
        Eigen::SparseMatrix<int> inc(static_cast<Eigen::Index>(cell_count(k + 1)),
                                     static_cast<Eigen::Index>(cell_count(k)));
        inc.setFromTriplets(trip.begin(), trip.end());
        inc.prune(0);
        incidence_.push_back(inc);
        coboundary_.push_back(inc.cast<double>());
    }

    std::size_t neighbour(std::size_t v, int axis) const
    {
        const auto r = static_cast<std::size_t>(res_[static_cast<std::size_t>(axis)]);
        const std::size_t st = stride_[static_cast<std::size_t>(axis)];
        const std::size_t coord = (v / st) % r;
        return coord + 1 == r ? v - coord * st : v + st;
    }

    std::vector<int> res_;
    std::vector<double> len_;
    std::vector<std::size_t> stride_;
    std::size_t vertices_ = 0;
    std::vector<Eigen::SparseMatrix<int>> incidence_;
    std::vector<Eigen::SparseMatrix<double>> coboundary_;
};

using FibreComplexPtr = std::shared_ptr<const FibreComplex>;

} // namespace weinfib
