#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "rsb/checkpoint.hpp"
#include "rsb/config.hpp"
#include "rsb/csv.hpp"
#include "rsb/ipf.hpp"
#include "rsb/metrics.hpp"
#include "rsb/sinkhorn.hpp"
#include "rsb/svg.hpp"

// Subcommand implementations. Each returns a process exit status; errors are
// reported on the error stream and mapped onto the status codes below.
namespace rsb::cli {

enum ExitCode : int { ok = 0, internal = 1, invalid = 2, diverged = 3, io = 4 };

struct Context {
    std::optional<std::uint64_t> seed;
    std::filesystem::path run_dir = "runs";
    bool quiet = false;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

inline int guarded(const Context& ctx, const std::function<int()>& body)
{
    try {
        return body();
    } catch (const DivergenceError& e) {
        *ctx.err << "error: numerical divergence: " << e.what() << '\n';
        return diverged;
    } catch (const IoError& e) {
        *ctx.err << "error: " << e.what() << '\n';
        return io;
    } catch (const std::filesystem::filesystem_error& e) {
        *ctx.err << "error: " << e.what() << '\n';
        return io;
    } catch (const Error& e) {
        *ctx.err << "error: " << e.what() << '\n';
        return invalid;
    } catch (const std::exception& e) {
        *ctx.err << "internal error: " << e.what() << '\n';
        return internal;
    }
}

namespace detail {

inline std::filesystem::path run_path(const Context& ctx, const ipf::TrainConfig& cfg)
{
    return ctx.run_dir / cfg.name;
}

inline std::string format_optional(const std::optional<double>& v)
{
    if (!v)
        return "";
    std::ostringstream s;
    s.precision(std::numeric_limits<double>::max_digits10);
    s << *v;
    return s.str();
}

inline std::filesystem::path stage_checkpoint(const std::filesystem::path& run, int stage)
{
    return run / ("stage_" + std::to_string(stage) + ".ckpt.json");
}

} // namespace detail

// Trains from a TOML config into <run-dir>/<name>/: config.toml,
// stage_<n>.ckpt.json after every stage, metrics.csv and samples/.
inline int cmd_train(const std::filesystem::path& config_path, const Context& ctx)
{
    return guarded(ctx, [&] {
        ipf::TrainConfig cfg = config::load(config_path);
        if (ctx.seed)
            cfg.seed = *ctx.seed;
        const auto run = detail::run_path(ctx, cfg);
        {
            auto out = csv::open_for_write(run / "config.toml");
            out << config::to_toml(cfg);
        }
        auto metrics = csv::open_for_write(run / "metrics.csv");
        metrics << "stage,direction,iteration,loss,sliced_w,mode_coverage\n";

        ipf::TrainObserver obs;
        obs.on_metric = [&](const ipf::MetricRow& r) {
            metrics << r.stage << ',' << to_string(r.direction) << ',' << r.iteration << ','
                    << (std::isfinite(r.loss) ? detail::format_optional(r.loss) : "") << ','
                    << detail::format_optional(r.sliced_w) << ',' << detail::format_optional(r.mode_coverage)
                    << '\n';
            metrics.flush();
            if (!ctx.quiet && r.sliced_w) {
                *ctx.out << "stage " << r.stage << ' ' << to_string(r.direction) << ": sliced_w2 " << *r.sliced_w;
                if (r.mode_coverage)
                    *ctx.out << ", mode coverage " << *r.mode_coverage;
                *ctx.out << std::endl;
            }
        };
        obs.on_stage_end = [&](const ipf::IPFState& s) {
            checkpoint::save(detail::stage_checkpoint(run, s.stage), cfg, s);
        };
        const ipf::IPFState state = ipf::train(cfg, obs);

        for (Direction d : {Direction::backward, Direction::forward}) {
            if (cfg.task.kind == ipf::TaskKind::unconditional && d == Direction::forward)
                continue;
            Rng rng(cfg.seed);
            const auto from = cfg.task.start_of(d);
            const Points start = from.sample(cfg.eval_samples, rng);
            const Points out = ipf::generate(state, cfg, d, start, rng).terminal() * cfg.task.end_of(d).scale;
            csv::write_points(run / "samples" / (std::string(to_string(d)) + ".csv"), out);
        }
        if (!ctx.quiet)
            *ctx.out << "wrote " << detail::stage_checkpoint(run, state.stage).string() << std::endl;
        return int(ok);
    });
}

struct SampleRequest {
    std::filesystem::path checkpoint;
    long n = 1000;
    Direction direction = Direction::backward;
    std::optional<std::uint64_t> seed;
    std::filesystem::path output;
    std::optional<std::filesystem::path> input;      // raw start points instead of fresh draws
    std::optional<std::filesystem::path> trajectory; // full path CSV, standardized units
};

// Terminal samples of the direction's process in raw units of the endpoint it
// reaches.
inline int cmd_sample(const SampleRequest& req, const Context& ctx)
{
    return guarded(ctx, [&] {
        if (req.n < 0 && !req.input)
            throw PreconditionError("n must be non-negative");
        const auto ck = checkpoint::load(req.checkpoint);
        const auto& cfg = ck.config;
        Rng rng(req.seed.value_or(ctx.seed.value_or(cfg.seed)));
        const auto from = cfg.task.start_of(req.direction);
        const auto to = cfg.task.end_of(req.direction);
        const Points start = req.input ? Points(csv::read_points(*req.input) / from.scale) : from.sample(req.n, rng);

        if (start.rows() == 0) {
            csv::write_points(req.output, Points(0, 2));
            if (req.trajectory)
                csv::write_trajectory(*req.trajectory, bridge::Trajectory{{}, req.direction, cfg.grid()});
            return int(ok);
        }
        const auto tr = ipf::generate(ck.state, cfg, req.direction, start, rng);
        csv::write_points(req.output, Points(tr.terminal() * to.scale));
        if (req.trajectory)
            csv::write_trajectory(*req.trajectory, tr);
        if (!ctx.quiet)
            *ctx.out << "wrote " << start.rows() << " samples to " << req.output.string() << std::endl;
        return int(ok);
    });
}

// Forward transport of given source points.
inline int cmd_translate(SampleRequest req, const Context& ctx)
{
    if (!req.input) {
        *ctx.err << "error: translate needs an input CSV\n";
        return invalid;
    }
    req.direction = Direction::forward;
    return cmd_sample(req, ctx);
}

struct EvalRequest {
    std::filesystem::path checkpoint;
    long n = 2000;
    std::optional<std::uint64_t> seed;
    int projections = 64;
    std::optional<std::filesystem::path> output; // default: next to the checkpoint
};

// Sliced W2 and mode coverage of every trained direction against fresh
// ground truth. Unconditional runs report generation only.
inline int cmd_eval(const EvalRequest& req, const Context& ctx)
{
    return guarded(ctx, [&] {
        if (req.n < 1)
            throw PreconditionError("n must be positive");
        if (req.projections < 1)
            throw PreconditionError("projections must be positive");
        const auto ck = checkpoint::load(req.checkpoint);
        const auto& cfg = ck.config;
        nlohmann::json j;
        j["stage"] = ck.state.stage;
        for (Direction d : {Direction::backward, Direction::forward}) {
            if (cfg.task.kind == ipf::TaskKind::unconditional && d == Direction::forward)
                continue;
            Rng rng(req.seed.value_or(ctx.seed.value_or(cfg.seed)));
            j[std::string(to_string(d))] = metrics::to_json(ipf::evaluate(ck.state, cfg, d, {req.n, req.projections, {}}, rng));
        }
        auto path = req.output.value_or(std::filesystem::path(req.checkpoint).replace_extension("").replace_extension(".eval.json"));
        auto out = csv::open_for_write(path);
        out << j.dump(2) << '\n';
        *ctx.out << j.dump(2) << std::endl;
        return int(ok);
    });
}

struct OracleRequest {
    std::filesystem::path mu;
    std::filesystem::path nu;
    double eps = 0.1;
    double tol = 1e-9;
    int max_iters = 10000;
    std::optional<std::filesystem::path> plan_output;
};

// Entropic OT between two weighted point sets (columns x, y, weight).
inline int cmd_oracle(const OracleRequest& req, const Context& ctx)
{
    return guarded(ctx, [&] {
        const auto mu = csv::read_measure(req.mu);
        const auto nu = csv::read_measure(req.nu);
        sinkhorn::SolveOptions opts;
        opts.tol = req.tol;
        opts.max_iters = req.max_iters;
        const auto sol = sinkhorn::sinkhorn_solve(mu, nu, req.eps, opts);
        const Matrix cost = sinkhorn::cost_matrix(mu, nu);
        const auto& plan = sol.coupling.plan;
        nlohmann::json j{{"iterations", sol.report.iterations},
                         {"marginal_violation", sol.report.violation},
                         {"converged", sol.report.converged},
                         {"log_domain", sol.report.log_domain},
                         {"transport_cost", sinkhorn::transport_cost(plan, cost)},
                         {"entropy", sinkhorn::plan_entropy(plan)},
                         {"objective", sinkhorn::coupling_objective(plan, cost, req.eps, mu, nu)}};
        if (req.plan_output)
            csv::write_plan(*req.plan_output, plan);
        *ctx.out << j.dump(2) << std::endl;
        if (!sol.report.converged) {
            *ctx.err << "error: no convergence within " << req.max_iters << " iterations (violation "
                     << sol.report.violation << ")\n";
            return int(diverged);
        }
        return int(ok);
    });
}

// Scatter SVG of a points CSV, or one panel per timestep of a trajectory
// CSV. An empty file gives empty axes.
inline int cmd_plot(const std::filesystem::path& input, const std::filesystem::path& output, const Context& ctx)
{
    return guarded(ctx, [&] {
        if (!std::filesystem::exists(input))
            throw IoError("cannot open '" + input.string() + "' for reading");
        std::vector<svg::Panel> panels;
        if (std::filesystem::file_size(input) > 0)
            panels = svg::panels_from_table(csv::read(input));
        svg::write(output, panels);
        if (!ctx.quiet)
            *ctx.out << "wrote " << output.string() << std::endl;
        return int(ok);
    });
}

} // namespace rsb::cli
