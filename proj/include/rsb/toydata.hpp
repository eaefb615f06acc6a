#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "rsb/types.hpp"

namespace rsb::toydata {

enum class Kind { eight_gaussians, twentyfive_gaussians, checkerboard, circles, standard_gaussian };

inline std::string_view to_string(Kind k)
{
    switch (k) {
    case Kind::eight_gaussians: return "eight_gaussians";
    case Kind::twentyfive_gaussians: return "twentyfive_gaussians";
    case Kind::checkerboard: return "checkerboard";
    case Kind::circles: return "circles";
    case Kind::standard_gaussian: return "standard_gaussian";
    }
    return "?";
}

inline Kind parse_kind(std::string_view s)
{
    for (Kind k : {Kind::eight_gaussians, Kind::twentyfive_gaussians, Kind::checkerboard, Kind::circles,
                   Kind::standard_gaussian})
        if (s == to_string(k))
            return k;
    throw DomainError("unknown toy distribution '" + std::string(s) + "'");
}

struct ToySpec {
    Kind kind = Kind::standard_gaussian;
    double scale = 1.0;
    double mode_std = 0.0; // Gaussian noise of mixture modes / ring radii

    void validate() const
    {
        if (!(scale > 0.0))
            throw DomainError("toy spec scale must be positive");
        if ((kind == Kind::eight_gaussians || kind == Kind::twentyfive_gaussians || kind == Kind::circles) &&
            !(mode_std > 0.0))
            throw DomainError("toy spec mode_std must be positive for " + std::string(to_string(kind)));
    }

    friend bool operator==(const ToySpec&, const ToySpec&) = default;
};

inline ToySpec default_spec(Kind kind)
{
    switch (kind) {
    case Kind::eight_gaussians: return {kind, 8.0, 0.3};
    case Kind::twentyfive_gaussians: return {kind, 8.0, 0.15};
    case Kind::checkerboard: return {kind, 4.0, 0.0};
    case Kind::circles: return {kind, 8.0, 0.2};
    case Kind::standard_gaussian: return {kind, 1.0, 0.0};
    }
    return {};
}

inline bool is_mixture(Kind k)
{
    return k == Kind::eight_gaussians || k == Kind::twentyfive_gaussians;
}

// Divisor that brings samples into roughly [-2, 2]^2.
inline double standardization_scale(const ToySpec& spec)
{
    return spec.kind == Kind::standard_gaussian ? 1.0 : spec.scale / 2.0;
}

inline std::vector<Eigen::Vector2d> mode_centers(const ToySpec& spec)
{
    std::vector<Eigen::Vector2d> c;
    switch (spec.kind) {
    case Kind::eight_gaussians:
        for (int k = 0; k < 8; ++k) {
            const double a = k * std::numbers::pi / 4.0;
            c.emplace_back(spec.scale * std::cos(a), spec.scale * std::sin(a));
        }
        return c;
    case Kind::twentyfive_gaussians:
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j)
                c.emplace_back(i * spec.scale / 2.0, j * spec.scale / 2.0);
        return c;
    default:
        throw DomainError("mode_centers requires a Gaussian-mixture kind, got " + std::string(to_string(spec.kind)));
    }
}

// Black squares of the 4x4 board over [-scale, scale]^2 are the cells whose
// floor-index sum is even.
inline bool on_black_square(double x, double y, double scale)
{
    const auto ix = static_cast<long>(std::floor(2.0 * x / scale));
    const auto iy = static_cast<long>(std::floor(2.0 * y / scale));
    return ((ix + iy) % 2 + 2) % 2 == 0;
}

inline Points sample(const ToySpec& spec, Eigen::Index n, Rng& rng)
{
    if (n < 0)
        throw PreconditionError("sample count must be non-negative");
    spec.validate();
    Points out(n, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    switch (spec.kind) {
    case Kind::eight_gaussians:
    case Kind::twentyfive_gaussians: {
        const auto centers = mode_centers(spec);
        std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& c = centers[pick(rng)];
            const double dx = normal(rng);
            const double dy = normal(rng);
            out(i, 0) = c.x() + spec.mode_std * dx;
            out(i, 1) = c.y() + spec.mode_std * dy;
        }
        break;
    }
    case Kind::checkerboard: {
        std::vector<std::pair<int, int>> black;
        for (int ix = -2; ix < 2; ++ix)
            for (int iy = -2; iy < 2; ++iy)
                if (((ix + iy) % 2 + 2) % 2 == 0)
                    black.emplace_back(ix, iy);
        std::uniform_int_distribution<std::size_t> pick(0, black.size() - 1);
        const double cell = spec.scale / 2.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto [ix, iy] = black[pick(rng)];
            const double u = unit(rng);
            const double v = unit(rng);
            out(i, 0) = (ix + u) * cell;
            out(i, 1) = (iy + v) * cell;
        }
        break;
    }
    case Kind::circles: {
        std::bernoulli_distribution outer(0.5);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double radius = outer(rng) ? spec.scale : spec.scale / 2.0;
            const double angle = 2.0 * std::numbers::pi * unit(rng);
            const double r = radius + spec.mode_std * normal(rng);
            out(i, 0) = r * std::cos(angle);
            out(i, 1) = r * std::sin(angle);
        }
        break;
    }
    case Kind::standard_gaussian:
        fill_standard_normal(out, rng);
        break;
    }
    return out;
}

// Radii of the rings of a circles spec.
inline std::vector<double> ring_radii(const ToySpec& spec)
{
    if (spec.kind != Kind::circles)
        throw DomainError("ring_radii requires the circles kind");
    return {spec.scale, spec.scale / 2.0};
}

} // namespace rsb::toydata
