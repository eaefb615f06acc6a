#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rsb/bridge.hpp"
#include "rsb/metrics.hpp"
#include "rsb/nnet.hpp"
#include "rsb/toydata.hpp"
#include "rsb/types.hpp"

// Iterative proportional fitting of the forward/backward drift networks.
//
// Each stage trains the backward network against trajectories of the frozen
// forward process, then the forward network against trajectories of the
// frozen backward process. Both are mean-matching regressions on pairs
// (x_t, x_{t+1}) drawn from a replay cache.
namespace rsb::ipf {

using bridge::DriftRole;
using bridge::TimeGrid;

// ---------------------------------------------------------------- endpoints

// A toy distribution together with the divisor that standardizes it.
struct Endpoint {
    toydata::ToySpec spec;
    double scale = 1.0;

    static Endpoint of(const toydata::ToySpec& spec) { return {spec, toydata::standardization_scale(spec)}; }

    Points sample(Eigen::Index n, Rng& rng) const { return toydata::sample(spec, n, rng) / scale; }
};

enum class TaskKind { unconditional, translation };

// x_0 lives on the source side, x_T on the target side. Unconditional tasks
// bridge data (source) and the standard Gaussian (target).
struct Task {
    TaskKind kind = TaskKind::unconditional;
    toydata::ToySpec source = toydata::default_spec(toydata::Kind::eight_gaussians);
    toydata::ToySpec target = toydata::default_spec(toydata::Kind::standard_gaussian);

    Endpoint source_endpoint() const { return Endpoint::of(source); }
    Endpoint target_endpoint() const { return Endpoint::of(target); }

    // The endpoint a rollout in direction d starts from / lands on.
    Endpoint start_of(Direction d) const { return d == Direction::forward ? source_endpoint() : target_endpoint(); }
    Endpoint end_of(Direction d) const { return d == Direction::forward ? target_endpoint() : source_endpoint(); }

    friend bool operator==(const Task&, const Task&) = default;
};

// ------------------------------------------------------------------- config

struct TrainConfig {
    std::string name = "run";
    Task task;
    int timesteps = 8;
    double horizon = 1.0;
    // gamma_max / gamma_min of the symmetric step schedule; 1 is uniform.
    double gamma_ratio = 1.0;
    double alpha = 0.5;
    double beta_reg = 2.5;
    int ipf_stages = 10;
    long iters_backward = 4000;
    long iters_forward = 2000;
    long batch_size = 256;
    long cache_trajectories = 2560;
    long cache_refresh_every = 500;
    nnet::AdamHyper adam;
    nnet::NetShape net;
    bool ema = true;
    double ema_decay = 0.999;
    // Forward initialization of unconditional tasks.
    double init_beta_min = 0.1;
    double init_beta_max = 3.0;
    long eval_samples = 2000;
    int eval_projections = 64;
    long log_every = 100;
    std::uint64_t seed = 0;

    TimeGrid grid() const
    {
        return gamma_ratio == 1.0 ? TimeGrid::uniform(timesteps, horizon)
                                  : TimeGrid::symmetric(timesteps, horizon, gamma_ratio);
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

    void validate() const
    {
        auto positive = [](auto v, const char* field) {
            if (!(v > 0))
                throw ConfigError(std::string("field '") + field + "' must be positive");
        };
        positive(timesteps, "timesteps");
        positive(horizon, "horizon");
        if (!(gamma_ratio >= 1.0) || !std::isfinite(gamma_ratio))
            throw ConfigError("field 'gamma_ratio' must be >= 1");
        positive(ipf_stages, "ipf_stages");
        positive(iters_backward, "iters_backward");
        positive(iters_forward, "iters_forward");
        positive(batch_size, "batch_size");
        positive(cache_trajectories, "cache_trajectories");
        positive(cache_refresh_every, "cache_refresh_every");
        positive(adam.learning_rate, "learning_rate");
        positive(eval_samples, "eval_samples");
        positive(eval_projections, "eval_projections");
        positive(log_every, "log_every");
        if (!(alpha >= 0.0))
            throw ConfigError("field 'alpha' must be non-negative");
        if (!(beta_reg >= 0.0))
            throw ConfigError("field 'beta' must be non-negative");
        if (!(ema_decay >= 0.0 && ema_decay < 1.0))
            throw ConfigError("field 'ema_decay' must lie in [0, 1)");
        if (init_beta_min < 0.0 || init_beta_max < init_beta_min)
            throw ConfigError("fields 'beta_min'/'beta_max' need 0 <= beta_min <= beta_max");
        try {
            task.source.validate();
            task.target.validate();
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
        if (task.kind == TaskKind::unconditional && task.target.kind != toydata::Kind::standard_gaussian)
            throw ConfigError("unconditional tasks bridge to the standard Gaussian");
    }
};

// Unconditional tasks start from a linear-drift noising process whose beta
// schedule is rescaled so that sum_t gamma_t beta_t = 2 * horizon: the
// average beta is 2, the stationary point of the 2*gamma noise kernel.
// Translation starts from Brownian motion.
inline DriftRole initial_forward_role(const TrainConfig& cfg)
{
    if (cfg.task.kind == TaskKind::translation)
        return bridge::ZeroDrift{};
    const TimeGrid grid = cfg.grid();
    const bridge::VpLinearDrift raw{cfg.init_beta_min, cfg.init_beta_max};
    double s = 0.0;
    for (int t = 0; t < grid.steps(); ++t)
        s += grid.gamma[static_cast<std::size_t>(t)] * raw.beta(t, grid.steps());
    if (s <= 0.0)
        return raw;
    const double k = 2.0 * grid.horizon() / s;
    return bridge::VpLinearDrift{k * cfg.init_beta_min, k * cfg.init_beta_max};
}

// -------------------------------------------------------------------- state

// A process held fixed while its counterpart is trained. The stamp identifies
// it; caches and minibatches carry the stamp of the process that made them.
struct FrozenProcess {
    DriftRole role;
    Direction direction = Direction::forward;
    std::uint64_t stamp = 0;
};

inline FrozenProcess freeze(DriftRole role, Direction direction)
{
    bridge::validate(role);
    const auto d = static_cast<int>(direction);
    const std::uint64_t stamp = fnv1a(&d, sizeof d, bridge::fingerprint(role));
    return {std::move(role), direction, stamp};
}

struct ReplayCache {
    std::vector<Points> by_time; // by_time[t] holds x_t of every cached trajectory
    Direction producer = Direction::forward;
    std::uint64_t stamp = 0;

    Eigen::Index size() const { return by_time.empty() ? 0 : by_time.front().rows(); }
    int steps() const { return static_cast<int>(by_time.size()) - 1; }
};

struct Minibatch {
    Points x_t;
    Points x_t1;
    std::vector<int> t;
    std::uint64_t stamp = 0;
};

struct DirectionState {
    nnet::ParameterSet params;
    nnet::ParameterSet ema;
    nnet::OptimizerState optimizer;
};

struct IPFState {
    int stage = 0; // completed backward+forward alternations
    DirectionState forward;
    DirectionState backward;
    bool forward_learned = false;
    DriftRole forward_init = bridge::ZeroDrift{};
    std::optional<ReplayCache> forward_cache;  // made by the frozen forward process
    std::optional<ReplayCache> backward_cache; // made by the frozen backward process
    Rng rng;

    DirectionState& of(Direction d) { return d == Direction::forward ? forward : backward; }
    const DirectionState& of(Direction d) const { return d == Direction::forward ? forward : backward; }

    // The process currently representing direction d.
    DriftRole role(Direction d, bool use_ema) const
    {
        if (d == Direction::forward && !forward_learned)
            return forward_init;
        const auto& s = of(d);
        return bridge::learned(use_ema ? s.ema : s.params);
    }
};

inline IPFState initial_state(const TrainConfig& cfg)
{
    cfg.validate();
    IPFState s;
    s.rng.seed(cfg.seed);
    s.forward_init = initial_forward_role(cfg);
    // Raw network outputs are displacements per step; the drift is that
    // divided by the mean step size.
    const double output_scale = cfg.timesteps / cfg.horizon;
    for (Direction d : {Direction::forward, Direction::backward}) {
        auto& ds = s.of(d);
        ds.params = nnet::init_parameters(cfg.net, s.rng, output_scale);
        ds.ema = ds.params;
        ds.optimizer = nnet::OptimizerState::fresh(ds.params, cfg.adam);
    }
    return s;
}

// ------------------------------------------------------------------ targets

namespace detail {

inline std::vector<int> shifted(std::span<const int> t, int by)
{
    std::vector<int> out(t.begin(), t.end());
    for (int& v : out)
        v += by;
    return out;
}

inline Vector step_sizes(std::span<const int> t, const TimeGrid& grid)
{
    Vector g(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0 || t[i] >= grid.steps())
            throw PreconditionError("pair index " + std::to_string(t[i]) + " outside [0, " +
                                    std::to_string(grid.steps()) + ")");
        g(static_cast<Eigen::Index>(i)) = grid.gamma[static_cast<std::size_t>(t[i])];
    }
    return g;
}

} // namespace detail

// Regression target for B_{t+1}(x_{t+1}):
//   x_{t+1} + F_t(x_t) - F_t(x_{t+1}) = x_t + gamma_t (f_t(x_t) - f_t(x_{t+1}))
inline Points backward_target(const DriftRole& frozen_forward, const Points& x_t, const Points& x_t1,
                              std::span<const int> t, const TimeGrid& grid)
{
    if (x_t.rows() != x_t1.rows())
        throw StructuralError("x_t and x_t1 differ in batch size");
    const Vector g = detail::step_sizes(t, grid);
    const Points diff = bridge::drift_eval(frozen_forward, x_t, t, grid) -
                        bridge::drift_eval(frozen_forward, x_t1, t, grid);
    return x_t + (diff.array().colwise() * g.array()).matrix();
}

inline Points backward_target(const DriftRole& frozen_forward, const Points& x_t, const Points& x_t1, int t,
                              const TimeGrid& grid)
{
    const std::vector<int> ts(static_cast<std::size_t>(x_t.rows()), t);
    return backward_target(frozen_forward, x_t, x_t1, ts, grid);
}

// Regression target for F_t(x_t):
//   x_t + B_{t+1}(x_{t+1}) - B_{t+1}(x_t) = x_{t+1} + gamma_t (b_{t+1}(x_{t+1}) - b_{t+1}(x_t))
inline Points forward_target(const DriftRole& frozen_backward, const Points& x_t1, const Points& x_t,
                             std::span<const int> t, const TimeGrid& grid)
{
    if (x_t.rows() != x_t1.rows())
        throw StructuralError("x_t and x_t1 differ in batch size");
    const Vector g = detail::step_sizes(t, grid);
    const auto t1 = detail::shifted(t, 1);
    const Points diff = bridge::drift_eval(frozen_backward, x_t1, t1, grid) -
                        bridge::drift_eval(frozen_backward, x_t, t1, grid);
    return x_t1 + (diff.array().colwise() * g.array()).matrix();
}

inline Points forward_target(const DriftRole& frozen_backward, const Points& x_t1, const Points& x_t, int t,
                             const TimeGrid& grid)
{
    const std::vector<int> ts(static_cast<std::size_t>(x_t.rows()), t);
    return forward_target(frozen_backward, x_t1, x_t, ts, grid);
}

// ------------------------------------------------------------------- losses

namespace detail {

// The trainee's mean map on a minibatch: B_{t+1}(x_{t+1}) for the backward
// trainee, F_t(x_t) for the forward one.
struct MapEvaluation {
    Points prediction;
    Vector gamma;
    nnet::Tape tape;
};

inline MapEvaluation trainee_map(const nnet::ParameterSet& trainee, const Minibatch& mb, Direction trainee_dir,
                                 const TimeGrid& grid)
{
    MapEvaluation m;
    m.gamma = step_sizes(mb.t, grid);
    const bool backward = trainee_dir == Direction::backward;
    const Points& x = backward ? mb.x_t1 : mb.x_t;
    const auto times = backward ? shifted(mb.t, 1) : std::vector<int>(mb.t.begin(), mb.t.end());
    auto ev = nnet::forward_recorded(trainee, x, times, grid.steps());
    m.prediction = x + (ev.output.array().colwise() * m.gamma.array()).matrix();
    m.tape = std::move(ev.tape);
    return m;
}

inline void check_minibatch(const FrozenProcess& frozen, const Minibatch& mb, Direction trainee_dir)
{
    if (mb.x_t.rows() == 0)
        throw PreconditionError("empty minibatch");
    if (mb.x_t.rows() != mb.x_t1.rows() || static_cast<Eigen::Index>(mb.t.size()) != mb.x_t.rows())
        throw StructuralError("minibatch fields disagree in size");
    if (frozen.direction == trainee_dir)
        throw PreconditionError("trainee and frozen process must have opposite directions");
    if (mb.stamp != frozen.stamp)
        throw StaleCacheError("minibatch was produced by a different frozen process");
}

inline Points target_for(const FrozenProcess& frozen, const Minibatch& mb, const TimeGrid& grid)
{
    return frozen.direction == Direction::forward ? backward_target(frozen.role, mb.x_t, mb.x_t1, mb.t, grid)
                                                  : forward_target(frozen.role, mb.x_t1, mb.x_t, mb.t, grid);
}

} // namespace detail

// Mean-matching objective: mean_i ||map_i - target_i||^2.
inline nnet::LossAndGradient dsb_loss(const nnet::ParameterSet& trainee, const FrozenProcess& frozen,
                                      const Minibatch& mb, Direction trainee_dir, const TimeGrid& grid)
{
    detail::check_minibatch(frozen, mb, trainee_dir);
    const Points target = detail::target_for(frozen, mb, grid);
    auto m = detail::trainee_map(trainee, mb, trainee_dir, grid);
    const Points resid = m.prediction - target;
    const double n = static_cast<double>(mb.x_t.rows());
    nnet::LossAndGradient out;
    out.loss = resid.squaredNorm() / n;
    const Points cot = ((2.0 / n) * resid).array().colwise() * m.gamma.array();
    out.grad = nnet::backward(trainee, m.tape, cot);
    return out;
}

// Mean-matching objective plus two squared-error regularizers on the realized
// endpoint of each pair (x_t for the backward trainee, x_{t+1} for the forward
// one):
//   alpha      * ||map_i - endpoint_i||^2                 on every pair
//   beta_reg   * ||map_i - endpoint_i||^2                 on the boundary pair
// The boundary pair is the step that lands on the trainee's output marginal
// (t = 0 backward, t = T-1 forward). Both terms are minimized by the exact
// conditional mean of the frozen process's reverse kernel, which the
// mean-matching target only approximates to first order in gamma.
inline nnet::LossAndGradient rsb_loss(const nnet::ParameterSet& trainee, const FrozenProcess& frozen,
                                      const Minibatch& mb, Direction trainee_dir, const TimeGrid& grid, double alpha,
                                      double beta_reg)
{
    if (!(alpha >= 0.0) || !(beta_reg >= 0.0))
        throw DomainError("regularization weights must be non-negative");
    if (alpha == 0.0 && beta_reg == 0.0)
        return dsb_loss(trainee, frozen, mb, trainee_dir, grid);

    detail::check_minibatch(frozen, mb, trainee_dir);
    const Points target = detail::target_for(frozen, mb, grid);
    auto m = detail::trainee_map(trainee, mb, trainee_dir, grid);
    const bool backward = trainee_dir == Direction::backward;
    const Points& endpoint = backward ? mb.x_t : mb.x_t1;
    const int boundary = backward ? 0 : grid.steps() - 1;

    const Eigen::Index n = mb.x_t.rows();
    Vector weight(n);
    for (Eigen::Index i = 0; i < n; ++i)
        weight(i) = alpha + (mb.t[static_cast<std::size_t>(i)] == boundary ? beta_reg : 0.0);

    const Points r_dsb = m.prediction - target;
    const Points r_end = m.prediction - endpoint;
    const Vector per_row = r_dsb.rowwise().squaredNorm() + weight.cwiseProduct(r_end.rowwise().squaredNorm());
    nnet::LossAndGradient out;
    out.loss = per_row.sum() / static_cast<double>(n);
    const Points d_map = (2.0 / static_cast<double>(n)) *
                         (r_dsb + (r_end.array().colwise() * weight.array()).matrix());
    const Points cot = d_map.array().colwise() * m.gamma.array();
    out.grad = nnet::backward(trainee, m.tape, cot);
    return out;
}

// -------------------------------------------------------------- replay cache

inline ReplayCache refresh_cache(const FrozenProcess& frozen, const Endpoint& start, const TimeGrid& grid,
                                 Eigen::Index n_trajectories, Rng& rng)
{
    if (n_trajectories < 1)
        throw PreconditionError("cache needs at least one trajectory");
    const Points x0 = start.sample(n_trajectories, rng);
    const auto tr = bridge::rollout(frozen.role, x0, grid, rng, frozen.direction);
    ReplayCache c;
    c.producer = frozen.direction;
    c.stamp = frozen.stamp;
    c.by_time.reserve(static_cast<std::size_t>(grid.steps()) + 1);
    for (int t = 0; t <= grid.steps(); ++t)
        c.by_time.push_back(tr.at_time(t));
    return c;
}

// Uniform (trajectory, t) pairs.
inline Minibatch sample_minibatch(const ReplayCache& cache, Eigen::Index batch, Rng& rng)
{
    if (cache.size() == 0 || cache.steps() < 1)
        throw PreconditionError("cannot sample from an empty cache");
    std::uniform_int_distribution<Eigen::Index> traj(0, cache.size() - 1);
    std::uniform_int_distribution<int> step(0, cache.steps() - 1);
    Minibatch mb{Points(batch, 2), Points(batch, 2), std::vector<int>(static_cast<std::size_t>(batch)), cache.stamp};
    for (Eigen::Index i = 0; i < batch; ++i) {
        const Eigen::Index k = traj(rng);
        const int t = step(rng);
        mb.t[static_cast<std::size_t>(i)] = t;
        mb.x_t.row(i) = cache.by_time[static_cast<std::size_t>(t)].row(k);
        mb.x_t1.row(i) = cache.by_time[static_cast<std::size_t>(t) + 1].row(k);
    }
    return mb;
}

// --------------------------------------------------------------- evaluation

struct MetricRow {
    int stage = 0;
    Direction direction = Direction::backward;
    long iteration = 0;
    double loss = 0.0;
    std::optional<double> sliced_w;
    std::optional<double> mode_coverage;
};

struct TrainObserver {
    std::function<void(const MetricRow&)> on_metric;
    std::function<void(const IPFState&)> on_stage_end;
};

// Rolls the direction-d process from standardized start points and returns
// the terminal batch in raw data units of the destination endpoint. The last
// step emits the kernel mean.
inline bridge::Trajectory generate(const IPFState& state, const TrainConfig& cfg, Direction d,
                                   const Points& start_standardized, Rng& rng, bool use_ema = true)
{
    bridge::RolloutOptions opts;
    opts.noise_last_step = false;
    return bridge::rollout(state.role(d, use_ema && cfg.ema), start_standardized, cfg.grid(), rng, d, opts);
}

struct EvalOptions {
    long n = 2000;
    int n_proj = 64;
    std::optional<long> min_count; // default: metrics::default_min_count
};

// Compares direction-d outputs against fresh samples of the endpoint it
// should reach.
inline metrics::EvalReport evaluate(const IPFState& state, const TrainConfig& cfg, Direction d,
                                    const EvalOptions& opts, Rng& rng)
{
    const Endpoint from = cfg.task.start_of(d);
    const Endpoint to = cfg.task.end_of(d);
    const Points start = from.sample(opts.n, rng);
    const Points out = generate(state, cfg, d, start, rng).terminal() * to.scale;
    const Points reference = toydata::sample(to.spec, opts.n, rng);
    metrics::EvalReport r;
    r.n_samples = static_cast<long>(opts.n);
    r.sliced_w2 = metrics::sliced_w2(out, reference, opts.n_proj, rng);
    if (toydata::is_mixture(to.spec.kind)) {
        const auto centers = toydata::mode_centers(to.spec);
        const long min_count = opts.min_count.value_or(metrics::default_min_count(opts.n, centers.size()));
        const auto cov = metrics::mode_coverage(out, centers, 3.0 * to.spec.mode_std, min_count);
        r.mode_coverage = cov.fraction;
        r.per_mode_counts = cov.counts;
    }
    return r;
}

// ----------------------------------------------------------------- training

namespace detail {

inline Rng derived_rng(std::uint64_t seed, int stage, Direction d)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(d), 0x65766aU};
    return Rng(seq);
}

} // namespace detail

inline long iterations_for(const TrainConfig& cfg, Direction d)
{
    return d == Direction::backward ? cfg.iters_backward : cfg.iters_forward;
}

// Trains direction d for its iteration budget against the frozen counterpart.
inline void ipf_half_stage(IPFState& state, Direction d, const TrainConfig& cfg, const TrainObserver& obs = {})
{
    const long iters = iterations_for(cfg, d);
    if (iters < 1)
        throw PreconditionError("a half-stage needs at least one iteration");
    const TimeGrid grid = cfg.grid();
    const Direction other = opposite(d);
    const FrozenProcess frozen = freeze(state.role(other, cfg.ema), other);
    const Endpoint start = cfg.task.start_of(other);
    const int stage = state.stage + 1;

    ReplayCache cache = refresh_cache(frozen, start, grid, cfg.cache_trajectories, state.rng);
    auto& trainee = state.of(d);
    double window = 0.0;
    long in_window = 0;
    for (long it = 1; it <= iters; ++it) {
        if (it > 1 && (it - 1) % cfg.cache_refresh_every == 0)
            cache = refresh_cache(frozen, start, grid, cfg.cache_trajectories, state.rng);
        const Minibatch mb = sample_minibatch(cache, cfg.batch_size, state.rng);
        auto lg = rsb_loss(trainee.params, frozen, mb, d, grid, cfg.alpha, cfg.beta_reg);
        if (!std::isfinite(lg.loss))
            throw DivergenceError("non-finite loss at stage " + std::to_string(stage) + ", " +
                                  std::string(to_string(d)) + " iteration " + std::to_string(it));
        try {
            nnet::optimizer_step(trainee.params, lg.grad, trainee.optimizer);
        } catch (const DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " (stage " + std::to_string(stage) + ", " +
                                  std::string(to_string(d)) + " iteration " + std::to_string(it) + ")");
        }
        if (cfg.ema)
            nnet::ema_update(trainee.ema, trainee.params, cfg.ema_decay);
        else
            trainee.ema = trainee.params;
        window += lg.loss;
        ++in_window;
        if (obs.on_metric && (it % cfg.log_every == 0 || it == iters)) {
            obs.on_metric({stage, d, it, window / static_cast<double>(in_window), {}, {}});
            window = 0.0;
            in_window = 0;
        }
    }
    (d == Direction::backward ? state.forward_cache : state.backward_cache) = std::move(cache);
    if (d == Direction::forward)
        state.forward_learned = true;

    if (obs.on_metric) {
        Rng eval_rng = detail::derived_rng(cfg.seed, stage, d);
        const auto rep = evaluate(state, cfg, d, {cfg.eval_samples, cfg.eval_projections, {}}, eval_rng);
        obs.on_metric({stage, d, iters, std::nan(""), rep.sliced_w2, rep.mode_coverage});
    }
}

// Runs one backward+forward alternation.
inline void ipf_stage(IPFState& state, const TrainConfig& cfg, const TrainObserver& obs = {})
{
    ipf_half_stage(state, Direction::backward, cfg, obs);
    ipf_half_stage(state, Direction::forward, cfg, obs);
    ++state.stage;
    if (obs.on_stage_end)
        obs.on_stage_end(state);
}

inline IPFState train(const TrainConfig& cfg, const TrainObserver& obs = {})
{
    IPFState state = initial_state(cfg);
    while (state.stage < cfg.ipf_stages)
        ipf_stage(state, cfg, obs);
    return state;
}

} // namespace rsb::ipf
