#include <CLI11.hpp>

#include "rsb/commands.hpp"

int main(int argc, char** argv)
{
    using namespace rsb;
    CLI::App app{"Regularized Schrodinger bridge trainer and tools"};
    app.require_subcommand(1);

    cli::Context ctx;
    std::uint64_t seed = 0;
    std::string run_dir = "runs";
    auto* seed_opt = app.add_option("--seed", seed, "Override the seed")->expected(1);
    app.add_option("--run-dir", run_dir, "Directory holding runs")->capture_default_str();
    app.add_flag("--quiet,-q", ctx.quiet, "Only print errors and results");

    std::string config_path;
    auto* train = app.add_subcommand("train", "Train a bridge from a TOML config");
    train->add_option("config", config_path, "Config file")->required();

    cli::SampleRequest sample_req;
    std::string direction = "backward";
    std::string sample_ckpt, sample_out, sample_in, sample_traj;
    auto* sample = app.add_subcommand("sample", "Roll a trained process and write terminal samples");
    sample->add_option("checkpoint", sample_ckpt, "Checkpoint file")->required();
    sample->add_option("-n", sample_req.n, "Number of samples")->capture_default_str();
    sample->add_option("-d,--direction", direction, "forward or backward")
        ->check(CLI::IsMember({"forward", "backward"}))
        ->capture_default_str();
    sample->add_option("-o,--output", sample_out, "Output CSV")->required();
    sample->add_option("-i,--input", sample_in, "Start from these points (x,y CSV) instead of fresh draws");
    sample->add_option("--trajectory", sample_traj, "Also write the full trajectory CSV");

    std::string tr_ckpt, tr_in, tr_out, tr_traj;
    auto* translate = app.add_subcommand("translate", "Transport source points with the forward process");
    translate->add_option("checkpoint", tr_ckpt, "Checkpoint file")->required();
    translate->add_option("-i,--input", tr_in, "Source points (x,y CSV)")->required();
    translate->add_option("-o,--output", tr_out, "Output CSV")->required();
    translate->add_option("--trajectory", tr_traj, "Also write the full trajectory CSV");

    cli::EvalRequest eval_req;
    std::string eval_ckpt, eval_out;
    auto* eval = app.add_subcommand("eval", "Sliced W2 and mode coverage against fresh ground truth");
    eval->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("-n", eval_req.n, "Number of samples")->capture_default_str();
    eval->add_option("--projections", eval_req.projections, "Sliced W2 projections")->capture_default_str();
    eval->add_option("-o,--output", eval_out, "Report JSON (default: next to the checkpoint)");

    cli::OracleRequest oracle_req;
    std::string mu_path, nu_path, plan_out;
    auto* oracle = app.add_subcommand("oracle", "Entropic OT between two weighted point sets");
    oracle->add_option("mu", mu_path, "Source measure CSV (x,y,weight)")->required();
    oracle->add_option("nu", nu_path, "Target measure CSV (x,y,weight)")->required();
    oracle->add_option("--eps", oracle_req.eps, "Entropic regularization")->capture_default_str();
    oracle->add_option("--tol", oracle_req.tol, "Marginal violation tolerance")->capture_default_str();
    oracle->add_option("--max-iters", oracle_req.max_iters, "Iteration cap")->capture_default_str();
    oracle->add_option("-o,--output", plan_out, "Plan CSV (i,j,mass)");

    std::string plot_in, plot_out;
    auto* plot = app.add_subcommand("plot", "Scatter SVG of a points or trajectory CSV");
    plot->add_option("input", plot_in, "Points or trajectory CSV")->required();
    plot->add_option("-o,--output", plot_out, "Output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::invalid;
    }

    if (*seed_opt)
        ctx.seed = seed;
    ctx.run_dir = run_dir;

    if (*train)
        return cli::cmd_train(config_path, ctx);
    if (*sample) {
        sample_req.checkpoint = sample_ckpt;
        sample_req.direction = parse_direction(direction);
        sample_req.output = sample_out;
        if (!sample_in.empty())
            sample_req.input = sample_in;
        if (!sample_traj.empty())
            sample_req.trajectory = sample_traj;
        return cli::cmd_sample(sample_req, ctx);
    }
    if (*translate) {
        cli::SampleRequest req;
        req.checkpoint = tr_ckpt;
        req.input = tr_in;
        req.output = tr_out;
        if (!tr_traj.empty())
            req.trajectory = tr_traj;
        return cli::cmd_translate(req, ctx);
    }
    if (*eval) {
        eval_req.checkpoint = eval_ckpt;
        if (!eval_out.empty())
            eval_req.output = eval_out;
        return cli::cmd_eval(eval_req, ctx);
    }
    if (*oracle) {
        oracle_req.mu = mu_path;
        oracle_req.nu = nu_path;
        if (!plan_out.empty())
            oracle_req.plan_output = plan_out;
        return cli::cmd_oracle(oracle_req, ctx);
    }
    if (*plot)
        return cli::cmd_plot(plot_in, plot_out, ctx);
    return cli::invalid;
}
