#pragma once

#include "weinfib/core.hpp"

#include <set>

namespace weinfib {

enum class BaseTopology { interval, circle };

/// Sampled one-dimensional base with a finite patch cover and a partition of
/// unity subordinate to it.
class BaseGrid {
public:
    struct Patch {
        std::vector<int> samples; ///< indices covered by the patch, in order
    };

    BaseGrid(BaseTopology topology, std::vector<double> samples, std::vector<Patch> patches,
             std::vector<std::vector<double>> weights)
        : topology_(topology), samples_(std::move(samples)), patches_(std::move(patches)),
          weights_(std::move(weights))
    {
        validate();
    }

    /// m uniform samples of [0, 2π) covered by `patches` arcs overlapping in
    /// 2*overlap samples.
    static BaseGrid uniform_circle(int m, int patches = 1, int overlap = 1)
    {
        std::vector<double> s(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) s[static_cast<std::size_t>(j)] = kTwoPi * j / m;
        return with_cover(BaseTopology::circle, std::move(s), patches, overlap);
    }

    static BaseGrid uniform_interval(double lo, double hi, int m, int patches = 1, int overlap = 1)
    {
        if (m < 1) throw ConfigurationError("base grid needs at least one sample");
        std::vector<double> s(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) s[static_cast<std::size_t>(j)] = m == 1 ? lo : lo + (hi - lo) * j / (m - 1);
        return with_cover(BaseTopology::interval, std::move(s), patches, overlap);
    }

    static BaseGrid single(double b) { return uniform_interval(b, b, 1); }

    BaseTopology topology() const { return topology_; }
    int size() const { return static_cast<int>(samples_.size()); }
    double sample(int i) const { return samples_.at(static_cast<std::size_t>(i)); }
    const std::vector<double>& samples() const { return samples_; }
    int patch_count() const { return static_cast<int>(patches_.size()); }
    const Patch& patch(int i) const { return patches_.at(static_cast<std::size_t>(i)); }
    double weight(int patch, int sample) const
    {
        return weights_[static_cast<std::size_t>(patch)][static_cast<std::size_t>(sample)];
    }

    void check_index(int i) const
    {
        if (i < 0 || i >= size())
            throw std::out_of_range("base sample index " + std::to_string(i) + " outside [0, "
                                    + std::to_string(size()) + ")");
    }

private:
    static BaseGrid with_cover(BaseTopology topo, std::vector<double> s, int patches, int overlap)
    {
        const int m = static_cast<int>(s.size());
        if (patches < 1) throw ConfigurationError("cover needs at least one patch");
        if (patches > 1 && overlap < 1) throw ConfigurationError("patches must overlap in at least two samples");
        std::vector<Patch> cover;
        std::vector<std::vector<double>> raw;
        if (patches == 1) {
            Patch p;
            for (int j = 0; j < m; ++j) p.samples.push_back(j);
            cover.push_back(p);
            raw.emplace_back(static_cast<std::size_t>(m), 1.0);
        } else {
            if (m < 2 * patches) throw ConfigurationError("too few base samples for the requested cover");
            for (int i = 0; i < patches; ++i) {
                const int a = i * m / patches - overlap;
                const int b = (i + 1) * m / patches + overlap; // exclusive
                Patch p;
                for (int j = a; j < b; ++j) {
                    if (topo == BaseTopology::circle)
                        p.samples.push_back(((j % m) + m) % m);
                    else if (j >= 0 && j < m)
                        p.samples.push_back(j);
                }
                std::vector<double> w(static_cast<std::size_t>(m), 0.0);
                const int len = b - a;
                for (int j = a; j < b; ++j) {
                    const int idx = topo == BaseTopology::circle ? ((j % m) + m) % m : j;
                    if (idx < 0 || idx >= m) continue;
                    const double u = std::sin(std::numbers::pi * (j - a + 1) / (len + 1));
                    w[static_cast<std::size_t>(idx)] = u * u;
                }
                cover.push_back(p);
                raw.push_back(std::move(w));
            }
            for (int j = 0; j < m; ++j) {
                double total = 0.0;
                for (const auto& w : raw) total += w[static_cast<std::size_t>(j)];
                for (auto& w : raw) w[static_cast<std::size_t>(j)] /= total;
            }
        }
        return BaseGrid(topo, std::move(s), std::move(cover), std::move(raw));
    }

    void validate() const
    {
        if (samples_.empty()) throw ConfigurationError("base grid has no samples");
        for (std::size_t j = 1; j < samples_.size(); ++j)
            if (!(samples_[j] > samples_[j - 1])) throw ConfigurationError("base samples must be strictly increasing");
        if (patches_.empty() || weights_.size() != patches_.size())
            throw ConfigurationError("patch cover and weights disagree");
        const int m = size();
        std::vector<std::set<int>> members(patches_.size());
        for (std::size_t i = 0; i < patches_.size(); ++i) {
            if (weights_[i].size() != samples_.size()) throw ConfigurationError("weight vector has wrong length");
            for (int j : patches_[i].samples) {
                if (j < 0 || j >= m) throw ConfigurationError("patch references a missing sample");
                members[i].insert(j);
            }
        }
        for (int j = 0; j < m; ++j) {
            double total = 0.0;
            for (std::size_t i = 0; i < patches_.size(); ++i) {
                const double w = weights_[i][static_cast<std::size_t>(j)];
                if (w < 0.0) throw ConfigurationError("negative partition weight");
                if (w > 0.0 && !members[i].count(j)) throw ConfigurationError("partition weight supported outside its patch");
                total += w;
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw ConfigurationError("cover does not cover base sample " + std::to_string(j));
        }
        if (patches_.size() > 1) {
            for (std::size_t i = 0; i < patches_.size(); ++i) {
                const std::size_t next = (i + 1) % patches_.size();
                if (topology_ == BaseTopology::interval && next == 0) continue;
                int shared = 0;
                for (int j : members[i]) shared += static_cast<int>(members[next].count(j));
                if (shared < 2) throw ConfigurationError("consecutive patches overlap in fewer than two samples");
            }
        }
    }

    BaseTopology topology_;
    std::vector<double> samples_;
    std::vector<Patch> patches_;
    std::vector<std::vector<double>> weights_;
};

} // namespace weinfib
