#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <toml.hpp>

#include "rsb/ipf.hpp"

// TOML run configuration.
//
//   name = "8gauss_rsb"
//   seed = 1
//   full_budget = false        # multiplies the iteration budgets by 5
//   [task]  kind = "unconditional", data = "eight_gaussians"
//           kind = "translation", source = "circles", target = "eight_gaussians"
//   [grid]  timesteps (required), horizon, gamma_ratio
//   [rsb]   alpha, beta
//   [train] stages, iters_backward, iters_forward, batch_size, cache_trajectories,
//           cache_refresh_every, learning_rate, ema, ema_decay, eval_samples,
//           eval_projections, log_every
//   [net]   width, depth, time_embed_dim, activation
//   [init]  beta_min, beta_max
//
// iters_forward defaults to half of iters_backward for unconditional tasks
// and to iters_backward for translation.
namespace rsb::config {

inline constexpr long kFullBudgetFactor = 5;

namespace detail {

inline void reject_unknown(const toml::table& t, std::string_view section, std::set<std::string_view> allowed)
{
    for (const auto& [key, node] : t) {
        if (!allowed.contains(key.str())) {
            const std::string where = section.empty() ? "" : std::string(section) + ".";
            throw ConfigError("unknown field '" + where + std::string(key.str()) + "'");
        }
    }
}

inline const toml::table* section(const toml::table& root, std::string_view name)
{
    const auto* node = root.get(name);
    if (!node)
        return nullptr;
    const auto* t = node->as_table();
    if (!t)
        throw ConfigError("field '" + std::string(name) + "' must be a table");
    return t;
}

inline std::string qualified(std::string_view sec, std::string_view key)
{
    return sec.empty() ? std::string(key) : std::string(sec) + "." + std::string(key);
}

template <typename T>
void read(const toml::table* t, std::string_view sec, std::string_view key, T& out)
{
    if (!t)
        return;
    const auto* node = t->get(key);
    if (!node)
        return;
    if constexpr (std::is_same_v<T, bool>) {
        const auto v = node->value<bool>();
        if (!v)
            throw ConfigError("field '" + qualified(sec, key) + "' must be a boolean");
        out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        const auto v = node->value<std::string>();
        if (!v)
            throw ConfigError("field '" + qualified(sec, key) + "' must be a string");
        out = *v;
    } else if constexpr (std::is_floating_point_v<T>) {
        const auto v = node->value<double>();
        if (!v)
            throw ConfigError("field '" + qualified(sec, key) + "' must be a number");
        out = *v;
    } else {
        if (!node->is_integer())
            throw ConfigError("field '" + qualified(sec, key) + "' must be an integer");
        const auto v = node->value<std::int64_t>();
        if constexpr (std::is_unsigned_v<T>) {
            if (*v < 0)
                throw ConfigError("field '" + qualified(sec, key) + "' must be non-negative");
        }
        out = static_cast<T>(*v);
    }
}

inline toydata::ToySpec parse_spec(const std::string& name, const std::string& field)
{
    try {
        return toydata::default_spec(toydata::parse_kind(name));
    } catch (const DomainError& e) {
        throw ConfigError("field '" + field + "': " + e.what());
    }
}

} // namespace detail

inline ipf::TrainConfig from_table(const toml::table& root)
{
    using detail::read;
    detail::reject_unknown(root, "", {"name", "seed", "full_budget", "task", "grid", "rsb", "train", "net", "init"});

    ipf::TrainConfig cfg;
    read(&root, "", "name", cfg.name);
    read(&root, "", "seed", cfg.seed);
    bool full_budget = false;
    read(&root, "", "full_budget", full_budget);

    const auto* task = detail::section(root, "task");
    if (task) {
        detail::reject_unknown(*task, "task", {"kind", "data", "source", "target"});
        std::string kind = "unconditional";
        read(task, "task", "kind", kind);
        if (kind == "unconditional") {
            if (task->contains("source") || task->contains("target"))
                throw ConfigError("field 'task.source'/'task.target' only apply to translation; use 'task.data'");
            std::string data = "eight_gaussians";
            read(task, "task", "data", data);
            cfg.task.kind = ipf::TaskKind::unconditional;
            cfg.task.source = detail::parse_spec(data, "task.data");
            cfg.task.target = toydata::default_spec(toydata::Kind::standard_gaussian);
        } else if (kind == "translation") {
            if (task->contains("data"))
                throw ConfigError("field 'task.data' only applies to unconditional tasks");
            std::string source;
            std::string target;
            read(task, "task", "source", source);
            read(task, "task", "target", target);
            if (source.empty())
                throw ConfigError("missing required field 'task.source'");
            if (target.empty())
                throw ConfigError("missing required field 'task.target'");
            cfg.task.kind = ipf::TaskKind::translation;
            cfg.task.source = detail::parse_spec(source, "task.source");
            cfg.task.target = detail::parse_spec(target, "task.target");
        } else {
            throw ConfigError("field 'task.kind' must be 'unconditional' or 'translation'");
        }
    }

    const auto* grid = detail::section(root, "grid");
    if (!grid || !grid->contains("timesteps"))
        throw ConfigError("missing required field 'grid.timesteps'");
    detail::reject_unknown(*grid, "grid", {"timesteps", "horizon", "gamma_ratio"});
    read(grid, "grid", "timesteps", cfg.timesteps);
    read(grid, "grid", "horizon", cfg.horizon);
    read(grid, "grid", "gamma_ratio", cfg.gamma_ratio);

    if (const auto* rsb = detail::section(root, "rsb")) {
        detail::reject_unknown(*rsb, "rsb", {"alpha", "beta"});
        read(rsb, "rsb", "alpha", cfg.alpha);
        read(rsb, "rsb", "beta", cfg.beta_reg);
    }

    bool forward_given = false;
    if (const auto* train = detail::section(root, "train")) {
        detail::reject_unknown(*train, "train",
                               {"stages", "iters_backward", "iters_forward", "batch_size", "cache_trajectories",
                                "cache_refresh_every", "learning_rate", "ema", "ema_decay", "eval_samples",
                                "eval_projections", "log_every"});
        read(train, "train", "stages", cfg.ipf_stages);
        read(train, "train", "iters_backward", cfg.iters_backward);
        forward_given = train->contains("iters_forward");
        read(train, "train", "iters_forward", cfg.iters_forward);
        read(train, "train", "batch_size", cfg.batch_size);
        read(train, "train", "cache_trajectories", cfg.cache_trajectories);
        read(train, "train", "cache_refresh_every", cfg.cache_refresh_every);
        read(train, "train", "learning_rate", cfg.adam.learning_rate);
        read(train, "train", "ema", cfg.ema);
        read(train, "train", "ema_decay", cfg.ema_decay);
        read(train, "train", "eval_samples", cfg.eval_samples);
        read(train, "train", "eval_projections", cfg.eval_projections);
        read(train, "train", "log_every", cfg.log_every);
    }
    if (!forward_given)
        cfg.iters_forward = cfg.task.kind == ipf::TaskKind::translation ? cfg.iters_backward
                                                                         : cfg.iters_backward / 2;
    if (full_budget) {
        cfg.iters_backward *= kFullBudgetFactor;
        cfg.iters_forward *= kFullBudgetFactor;
    }

    if (const auto* net = detail::section(root, "net")) {
        detail::reject_unknown(*net, "net", {"width", "depth", "time_embed_dim", "activation"});
        read(net, "net", "width", cfg.net.hidden_width);
        read(net, "net", "depth", cfg.net.hidden_layers);
        read(net, "net", "time_embed_dim", cfg.net.time_embed_dim);
        std::string act(nnet::to_string(cfg.net.activation));
        read(net, "net", "activation", act);
        try {
            cfg.net.activation = nnet::parse_activation(act);
        } catch (const DomainError& e) {
            throw ConfigError(std::string("field 'net.activation': ") + e.what());
        }
        if (cfg.net.hidden_width < 1)
            throw ConfigError("field 'net.width' must be positive");
        if (cfg.net.hidden_layers < 0)
            throw ConfigError("field 'net.depth' must be non-negative");
        if (cfg.net.time_embed_dim < 2 || cfg.net.time_embed_dim % 2 != 0)
            throw ConfigError("field 'net.time_embed_dim' must be a positive even integer");
    }

    if (const auto* init = detail::section(root, "init")) {
        detail::reject_unknown(*init, "init", {"beta_min", "beta_max"});
        read(init, "init", "beta_min", cfg.init_beta_min);
        read(init, "init", "beta_max", cfg.init_beta_max);
    }

    cfg.validate();
    return cfg;
}

inline ipf::TrainConfig parse(std::string_view text, std::string_view source = "config")
{
    try {
        return from_table(toml::parse(text, source));
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ':' << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
}

inline ipf::TrainConfig load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

// Fully resolved configuration; parse(to_toml(c)) == c.
inline std::string to_toml(const ipf::TrainConfig& c)
{
    toml::table task;
    if (c.task.kind == ipf::TaskKind::unconditional) {
        task.insert("kind", "unconditional");
        task.insert("data", std::string(toydata::to_string(c.task.source.kind)));
    } else {
        task.insert("kind", "translation");
        task.insert("source", std::string(toydata::to_string(c.task.source.kind)));
        task.insert("target", std::string(toydata::to_string(c.task.target.kind)));
    }
    const toml::table root{
        {"name", c.name},
        {"seed", static_cast<std::int64_t>(c.seed)},
        {"task", task},
        {"grid", toml::table{{"timesteps", c.timesteps}, {"horizon", c.horizon}, {"gamma_ratio", c.gamma_ratio}}},
        {"rsb", toml::table{{"alpha", c.alpha}, {"beta", c.beta_reg}}},
        {"train", toml::table{{"stages", c.ipf_stages},
                              {"iters_backward", static_cast<std::int64_t>(c.iters_backward)},
                              {"iters_forward", static_cast<std::int64_t>(c.iters_forward)},
                              {"batch_size", static_cast<std::int64_t>(c.batch_size)},
                              {"cache_trajectories", static_cast<std::int64_t>(c.cache_trajectories)},
                              {"cache_refresh_every", static_cast<std::int64_t>(c.cache_refresh_every)},
                              {"learning_rate", c.adam.learning_rate},
                              {"ema", c.ema},
                              {"ema_decay", c.ema_decay},
                              {"eval_samples", static_cast<std::int64_t>(c.eval_samples)},
                              {"eval_projections", c.eval_projections},
                              {"log_every", static_cast<std::int64_t>(c.log_every)}}},
        {"net", toml::table{{"width", c.net.hidden_width},
                            {"depth", c.net.hidden_layers},
                            {"time_embed_dim", c.net.time_embed_dim},
                            {"activation", std::string(nnet::to_string(c.net.activation))}}},
        {"init", toml::table{{"beta_min", c.init_beta_min}, {"beta_max", c.init_beta_max}}},
    };
    std::ostringstream out;
    out << root << '\n';
    return out.str();
}

} // namespace rsb::config
