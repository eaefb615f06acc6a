#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsb/types.hpp"

namespace rsb::metrics {

struct EvalReport {
    double sliced_w2 = 0.0;
    std::optional<double> mode_coverage; // absent when the reference has no modes
    std::vector<long> per_mode_counts;
    long n_samples = 0;
};

inline nlohmann::json to_json(const EvalReport& r)
{
    nlohmann::json j;
    j["sliced_w2"] = r.sliced_w2;
    j["mode_coverage"] = r.mode_coverage ? nlohmann::json(*r.mode_coverage) : nlohmann::json(nullptr);
    j["per_mode_counts"] = r.per_mode_counts;
    j["n_samples"] = r.n_samples;
    return j;
}

// Average over random unit directions of the 1D 2-Wasserstein distance
// between the projected batches.
inline double sliced_w2(const Points& a, const Points& b, int n_proj, Rng& rng)
{
    if (a.rows() != b.rows())
        throw StructuralError("sliced_w2 needs equally sized batches");
    if (a.rows() < 1)
        throw PreconditionError("sliced_w2 needs at least one point");
    if (n_proj < 1)
        throw PreconditionError("sliced_w2 needs at least one projection");
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<double> pa(static_cast<std::size_t>(a.rows()));
    std::vector<double> pb(pa.size());
    double total = 0.0;
    for (int p = 0; p < n_proj; ++p) {
        const double th = angle(rng);
        const Eigen::Vector2d dir(std::cos(th), std::sin(th));
        Eigen::Map<Vector>(pa.data(), a.rows()) = a * dir;
        Eigen::Map<Vector>(pb.data(), b.rows()) = b * dir;
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double ss = 0.0;
        for (std::size_t i = 0; i < pa.size(); ++i)
            ss += (pa[i] - pb[i]) * (pa[i] - pb[i]);
        total += std::sqrt(ss / static_cast<double>(pa.size()));
    }
    return total / n_proj;
}

struct Coverage {
    double fraction = 0.0;
    std::vector<long> counts;
};

// Nearest-center assignment within radius; a mode is covered once it holds
// at least min_count samples.
inline Coverage mode_coverage(const Points& samples, const std::vector<Eigen::Vector2d>& centers, double radius,
                              long min_count)
{
    if (centers.empty())
        throw PreconditionError("mode_coverage needs at least one center");
    if (!(radius > 0.0))
        throw DomainError("mode_coverage radius must be positive");
    Coverage cov;
    cov.counts.assign(centers.size(), 0);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        const Eigen::Vector2d p = samples.row(i).transpose();
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const double d = (p - centers[c]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best_d <= radius * radius)
            ++cov.counts[best];
    }
    long covered = 0;
    for (long c : cov.counts)
        covered += c >= min_count ? 1 : 0;
    cov.fraction = static_cast<double>(covered) / static_cast<double>(centers.size());
    return cov;
}

// max(1, n / (4 * modes))
inline long default_min_count(Eigen::Index n, std::size_t modes)
{
    return std::max<long>(1, static_cast<long>(n) / static_cast<long>(4 * modes));
}

// Fraction of points whose radius lies within tol of one of the ring radii.
inline double ring_membership(const Points& samples, const std::vector<double>& radii, double tol)
{
    if (samples.rows() == 0)
        return 0.0;
    long inside = 0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        const double r = samples.row(i).norm();
        for (double ring : radii)
            if (std::abs(r - ring) <= tol) {
                ++inside;
                break;
            }
    }
    return static_cast<double>(inside) / static_cast<double>(samples.rows());
}

} // namespace rsb::metrics
