#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rsb/nnet.hpp"
#include "rsb/types.hpp"

// Discrete-time Markov kernels of the bridge:
//   forward   x_{t+1} ~ N(x_t     + gamma_t f_t(x_t),         2 gamma_t I)
//   backward  x_t     ~ N(x_{t+1} + gamma_t b_{t+1}(x_{t+1}), 2 gamma_t I)
// Drifts are residuals; the mean maps are F_t(x) = x + gamma_t f_t(x) and
// B_{t+1}(x) = x + gamma_t b_{t+1}(x).
namespace rsb::bridge {

struct TimeGrid {
    std::vector<double> gamma; // gamma[t] is the size of step t -> t+1

    int steps() const { return static_cast<int>(gamma.size()); }

    double horizon() const
    {
        double s = 0.0;
        for (double g : gamma)
            s += g;
        return s;
    }

    void validate() const
    {
        if (gamma.empty())
            throw DomainError("time grid needs at least one step");
        for (std::size_t t = 0; t < gamma.size(); ++t)
            if (!(gamma[t] > 0.0) || !std::isfinite(gamma[t]))
                throw DomainError("gamma[" + std::to_string(t) + "] must be positive and finite");
    }

    static TimeGrid uniform(int steps, double horizon)
    {
        if (steps < 1)
            throw DomainError("timesteps must be >= 1");
        if (!(horizon > 0.0))
            throw DomainError("horizon must be positive");
        TimeGrid g{std::vector<double>(static_cast<std::size_t>(steps), horizon / steps)};
        g.validate();
        return g;
    }

    // Steps grow linearly from the ends toward the middle and mirror around
    // it; gamma_max / gamma_min = ratio. Small end steps keep the first and
    // last kernels sharp.
    static TimeGrid symmetric(int steps, double horizon, double ratio)
    {
        if (steps < 1)
            throw DomainError("timesteps must be >= 1");
        if (!(horizon > 0.0))
            throw DomainError("horizon must be positive");
        if (!(ratio >= 1.0) || !std::isfinite(ratio))
            throw DomainError("gamma ratio must be >= 1");
        const int half = (steps + 1) / 2;
        std::vector<double> w(static_cast<std::size_t>(steps));
        for (int k = 0; k < half; ++k) {
            const double v = half == 1 ? 1.0 : 1.0 + (ratio - 1.0) * k / (half - 1);
            w[static_cast<std::size_t>(k)] = v;
            w[static_cast<std::size_t>(steps - 1 - k)] = v;
        }
        double total = 0.0;
        for (double v : w)
            total += v;
        for (double& v : w)
            v *= horizon / total;
        TimeGrid g{std::move(w)};
        g.validate();
        return g;
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

struct ZeroDrift {};

// f_t(x) = -1/2 beta_t x with beta_t linear in t/T.
struct VpLinearDrift {
    double beta_min = 0.1;
    double beta_max = 3.0;

    double beta(int t, int total_steps) const
    {
        return beta_min + (beta_max - beta_min) * static_cast<double>(t) / total_steps;
    }
};

struct LearnedDrift {
    std::shared_ptr<const nnet::ParameterSet> params;
};

using DriftRole = std::variant<ZeroDrift, VpLinearDrift, LearnedDrift>;

inline DriftRole learned(nnet::ParameterSet params)
{
    params.validate();
    return LearnedDrift{std::make_shared<const nnet::ParameterSet>(std::move(params))};
}

inline void validate(const DriftRole& role)
{
    if (const auto* vp = std::get_if<VpLinearDrift>(&role)) {
        if (vp->beta_min < 0.0 || vp->beta_max < vp->beta_min)
            throw DomainError("vp_linear requires 0 <= beta_min <= beta_max");
    } else if (const auto* l = std::get_if<LearnedDrift>(&role)) {
        if (!l->params)
            throw StructuralError("learned drift without parameters");
    }
}

inline std::uint64_t fingerprint(const DriftRole& role)
{
    const auto index = role.index();
    std::uint64_t h = fnv1a(&index, sizeof index);
    if (const auto* vp = std::get_if<VpLinearDrift>(&role)) {
        h = fnv1a(&vp->beta_min, sizeof(double), h);
        h = fnv1a(&vp->beta_max, sizeof(double), h);
    } else if (const auto* l = std::get_if<LearnedDrift>(&role)) {
        const auto p = l->params->fingerprint();
        h = fnv1a(&p, sizeof p, h);
    }
    return h;
}

// f_t(x) evaluated row-wise at times[i]; the value before scaling by gamma.
inline Points drift_eval(const DriftRole& role, const Points& x, std::span<const int> times, const TimeGrid& grid)
{
    const int total = grid.steps();
    if (static_cast<Eigen::Index>(times.size()) != x.rows())
        throw StructuralError("one timestep per row required");
    for (int t : times)
        if (t < 0 || t > total)
            throw PreconditionError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(total) + "]");

    if (std::holds_alternative<ZeroDrift>(role))
        return Points::Zero(x.rows(), 2);
    if (const auto* vp = std::get_if<VpLinearDrift>(&role)) {
        Points out(x.rows(), 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            out.row(i) = -0.5 * vp->beta(times[static_cast<std::size_t>(i)], total) * x.row(i);
        return out;
    }
    return nnet::net_forward(*std::get<LearnedDrift>(role).params, x, times, total);
}

inline Points drift_eval(const DriftRole& role, const Points& x, int t, const TimeGrid& grid)
{
    const std::vector<int> times(static_cast<std::size_t>(x.rows()), t);
    return drift_eval(role, x, times, grid);
}

namespace detail {

inline Points gaussian_step(const Points& mean, double gamma, Rng& rng, bool add_noise, int t)
{
    Points next = mean;
    if (add_noise) {
        Points z(mean.rows(), 2);
        fill_standard_normal(z, rng);
        next += std::sqrt(2.0 * gamma) * z;
    }
    if (!next.allFinite())
        throw DivergenceError("non-finite state produced at timestep " + std::to_string(t));
    return next;
}

inline void check_step(int t, const TimeGrid& grid)
{
    if (t < 0 || t >= grid.steps())
        throw PreconditionError("transition step " + std::to_string(t) + " outside [0, " +
                                std::to_string(grid.steps()) + ")");
}

} // namespace detail

// Forward kernel step t: x_t -> x_{t+1}.
inline Points transition(const DriftRole& role, const Points& x_t, int t, const TimeGrid& grid, Rng& rng,
                         bool add_noise = true)
{
    detail::check_step(t, grid);
    const double g = grid.gamma[static_cast<std::size_t>(t)];
    const Points mean = x_t + g * drift_eval(role, x_t, t, grid);
    return detail::gaussian_step(mean, g, rng, add_noise, t);
}

// Backward kernel step t: x_{t+1} -> x_t, drift queried at index t+1.
inline Points backward_transition(const DriftRole& role, const Points& x_next, int t, const TimeGrid& grid, Rng& rng,
                                  bool add_noise = true)
{
    detail::check_step(t, grid);
    const double g = grid.gamma[static_cast<std::size_t>(t)];
    const Points mean = x_next + g * drift_eval(role, x_next, t + 1, grid);
    return detail::gaussian_step(mean, g, rng, add_noise, t);
}

// A realized path. states are in rollout order: states[0] is the start
// (x_0 for forward rollouts, x_T for backward ones).
struct Trajectory {
    std::vector<Points> states;
    Direction direction = Direction::forward;
    TimeGrid grid;

    int steps() const { return grid.steps(); }
    Eigen::Index batch() const { return states.empty() ? 0 : states.front().rows(); }

    // State at process time t (x_t), independent of direction.
    const Points& at_time(int t) const
    {
        const int k = direction == Direction::forward ? t : steps() - t;
        return states.at(static_cast<std::size_t>(k));
    }

    const Points& terminal() const { return states.back(); }
};

struct RolloutOptions {
    // When false the last step returns the kernel mean (used for generated
    // outputs; training caches keep the full kernel).
    bool noise_last_step = true;
    // Receives the drift time index used at each step.
    std::function<void(int)> drift_log;
};

inline Trajectory rollout(const DriftRole& role, const Points& x_start, const TimeGrid& grid, Rng& rng,
                          Direction direction, const RolloutOptions& opts = {})
{
    grid.validate();
    validate(role);
    if (!x_start.allFinite())
        throw PreconditionError("rollout start contains non-finite values");
    const int total = grid.steps();
    Trajectory tr{{}, direction, grid};
    tr.states.reserve(static_cast<std::size_t>(total) + 1);
    tr.states.push_back(x_start);
    for (int k = 0; k < total; ++k) {
        const bool noise = opts.noise_last_step || k + 1 < total;
        if (direction == Direction::forward) {
            if (opts.drift_log)
                opts.drift_log(k);
            tr.states.push_back(transition(role, tr.states.back(), k, grid, rng, noise));
        } else {
            const int t = total - 1 - k;
            if (opts.drift_log)
                opts.drift_log(t + 1);
            tr.states.push_back(backward_transition(role, tr.states.back(), t, grid, rng, noise));
        }
    }
    return tr;
}

} // namespace rsb::bridge
