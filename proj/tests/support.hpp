#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "rsb/rsb.hpp"

namespace rsb::testing {

inline nnet::ParameterSet random_net(int width, int depth, int embed, nnet::Activation act, Rng& rng,
                                     double final_scale = 0.5)
{
    nnet::ParameterSet p = nnet::init_parameters({width, depth, embed, act}, rng);
    std::normal_distribution<double> n(0.0, final_scale);
    for (Eigen::Index i = 0; i < p.layers.back().weight.size(); ++i)
        p.layers.back().weight.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < p.layers.back().bias.size(); ++i)
        p.layers.back().bias(i) = n(rng);
    return p;
}

inline Points random_points(Eigen::Index n, Rng& rng, double scale = 1.0)
{
    Points p(n, 2);
    fill_standard_normal(p, rng);
    return scale * p;
}

// Visits every scalar parameter with a mutable reference.
inline void for_each_entry(nnet::ParameterSet& p, const std::function<void(double&, std::size_t)>& fn)
{
    std::size_t k = 0;
    for (auto& l : p.layers) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i)
            fn(l.weight.data()[i], k++);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i)
            fn(l.bias.data()[i], k++);
    }
}

inline std::vector<double> flatten(const nnet::Gradient& g)
{
    std::vector<double> out;
    for (const auto& l : g.layers) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

struct FdResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Central differences of loss(params) against the analytic gradient. The
// relative error uses a floor on the denominator so entries whose true
// derivative is ~0 are judged on an absolute scale.
inline FdResult finite_difference_check(nnet::ParameterSet params, const nnet::Gradient& analytic,
                                        const std::function<double(const nnet::ParameterSet&)>& loss,
                                        double h = 1e-5, double floor = 1e-6)
{
    const auto g = flatten(analytic);
    FdResult r;
    for_each_entry(params, [&](double& w, std::size_t k) {
        const double saved = w;
        w = saved + h;
        const double up = loss(params);
        w = saved - h;
        const double down = loss(params);
        w = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(fd - g[k]) / std::max({std::abs(fd), std::abs(g[k]), floor});
        r.max_rel_error = std::max(r.max_rel_error, rel);
        ++r.checked;
    });
    return r;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("rsb_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::size_t count_occurrences(const std::string& haystack, const std::string& needle)
{
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1))
        ++n;
    return n;
}

} // namespace rsb::testing
