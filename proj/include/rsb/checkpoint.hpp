#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

#include "rsb/config.hpp"
#include "rsb/ipf.hpp"

// Training state as one JSON document. Numeric arrays are stored as base64
// of little-endian IEEE doubles in row-major order with an explicit shape.
// Replay caches are not stored; every half-stage rebuilds its cache before
// the first step.
namespace rsb::checkpoint {

inline constexpr int kFormatVersion = 1;

using nlohmann::json;

namespace detail {

namespace b64 = boost::beast::detail::base64;

inline std::string encode_doubles(const std::vector<double>& v)
{
    std::vector<unsigned char> bytes(v.size() * sizeof(double));
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto word = std::bit_cast<std::uint64_t>(v[i]);
        for (std::size_t b = 0; b < sizeof word; ++b)
            bytes[i * sizeof word + b] = static_cast<unsigned char>((word >> (8 * b)) & 0xffU);
    }
    std::string out(b64::encoded_size(bytes.size()), '\0');
    out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
    return out;
}

inline std::vector<double> decode_doubles(const std::string& s, std::size_t expected)
{
    std::vector<unsigned char> bytes(b64::decoded_size(s.size()));
    const auto [written, read] = b64::decode(bytes.data(), s.data(), s.size());
    const auto body = s.find_last_not_of('=') + 1;
    if (s.size() % 4 != 0 || read < body)
        throw StructuralError("checkpoint array is not valid base64");
    if (written != expected * sizeof(double))
        throw StructuralError("checkpoint array holds " + std::to_string(written / sizeof(double)) +
                              " values, shape says " + std::to_string(expected));
    std::vector<double> v(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t word = 0;
        for (std::size_t b = 0; b < sizeof word; ++b)
            word |= static_cast<std::uint64_t>(bytes[i * sizeof word + b]) << (8 * b);
        v[i] = std::bit_cast<double>(word);
    }
    return v;
}

inline json matrix_to_json(const Matrix& m)
{
    std::vector<double> flat(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            flat[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return {{"shape", {m.rows(), m.cols()}}, {"data", encode_doubles(flat)}};
}

inline Matrix matrix_from_json(const json& j)
{
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0)
        throw StructuralError("checkpoint matrix needs a two-entry shape");
    const auto flat = decode_doubles(j.at("data").get<std::string>(), static_cast<std::size_t>(shape[0] * shape[1]));
    Matrix m(shape[0], shape[1]);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2)
            m(i, j2) = flat[static_cast<std::size_t>(i * m.cols() + j2)];
    return m;
}

inline json layers_to_json(const std::vector<nnet::DenseLayer>& layers)
{
    json arr = json::array();
    for (const auto& l : layers)
        arr.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", matrix_to_json(l.bias)}});
    return arr;
}

inline std::vector<nnet::DenseLayer> layers_from_json(const json& arr)
{
    std::vector<nnet::DenseLayer> layers;
    for (const auto& l : arr) {
        const Matrix b = matrix_from_json(l.at("bias"));
        if (b.cols() != 1)
            throw StructuralError("checkpoint bias must be a column");
        layers.push_back({matrix_from_json(l.at("weight")), b.col(0)});
    }
    return layers;
}

inline json params_to_json(const nnet::ParameterSet& p)
{
    return {{"time_embed_dim", p.time_embed_dim},
            {"activation", std::string(nnet::to_string(p.activation))},
            {"output_scale", p.output_scale},
            {"layers", layers_to_json(p.layers)}};
}

inline nnet::ParameterSet params_from_json(const json& j)
{
    nnet::ParameterSet p;
    p.time_embed_dim = j.at("time_embed_dim").get<int>();
    p.activation = nnet::parse_activation(j.at("activation").get<std::string>());
    p.output_scale = j.at("output_scale").get<double>();
    p.layers = layers_from_json(j.at("layers"));
    p.validate();
    return p;
}

inline json optimizer_to_json(const nnet::OptimizerState& o)
{
    return {{"step", o.step},
            {"learning_rate", o.hyper.learning_rate},
            {"beta1", o.hyper.beta1},
            {"beta2", o.hyper.beta2},
            {"eps", o.hyper.eps},
            {"first_moment", layers_to_json(o.first_moment.layers)},
            {"second_moment", layers_to_json(o.second_moment.layers)}};
}

inline nnet::OptimizerState optimizer_from_json(const json& j, const nnet::ParameterSet& params)
{
    nnet::OptimizerState o;
    o.step = j.at("step").get<std::int64_t>();
    o.hyper = {j.at("learning_rate").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
               j.at("eps").get<double>()};
    o.first_moment.layers = layers_from_json(j.at("first_moment"));
    o.second_moment.layers = layers_from_json(j.at("second_moment"));
    if (!o.first_moment.congruent_with(params) || !o.second_moment.congruent_with(params))
        throw StructuralError("checkpoint optimizer state does not match the parameters");
    return o;
}

inline json direction_to_json(const ipf::DirectionState& s)
{
    return {{"params", params_to_json(s.params)},
            {"ema", params_to_json(s.ema)},
            {"optimizer", optimizer_to_json(s.optimizer)}};
}

inline ipf::DirectionState direction_from_json(const json& j)
{
    ipf::DirectionState s;
    s.params = params_from_json(j.at("params"));
    s.ema = params_from_json(j.at("ema"));
    if (s.ema.size() != s.params.size())
        throw StructuralError("checkpoint EMA parameters do not match the parameters");
    s.optimizer = optimizer_from_json(j.at("optimizer"), s.params);
    return s;
}

} // namespace detail

struct Checkpoint {
    ipf::TrainConfig config;
    ipf::IPFState state;
};

inline json to_json(const ipf::TrainConfig& cfg, const ipf::IPFState& state)
{
    std::ostringstream rng;
    rng << state.rng;
    return {{"format_version", kFormatVersion},
            {"config", config::to_toml(cfg)},
            {"stage", state.stage},
            {"forward_learned", state.forward_learned},
            {"standardization",
             {{"source", cfg.task.source_endpoint().scale}, {"target", cfg.task.target_endpoint().scale}}},
            {"seed", cfg.seed},
            {"rng_state", rng.str()},
            {"forward", detail::direction_to_json(state.forward)},
            {"backward", detail::direction_to_json(state.backward)}};
}

inline Checkpoint from_json(const json& j)
{
    if (!j.is_object() || !j.contains("format_version"))
        throw StructuralError("not a checkpoint document");
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
        throw VersionError("checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kFormatVersion) + ")");
    try {
        Checkpoint c;
        c.config = config::parse(j.at("config").get<std::string>(), "checkpoint config");
        const auto& std_consts = j.at("standardization");
        if (std_consts.at("source").get<double>() != c.config.task.source_endpoint().scale ||
            std_consts.at("target").get<double>() != c.config.task.target_endpoint().scale)
            throw StructuralError("checkpoint standardization constants disagree with its config");
        if (j.at("seed").get<std::uint64_t>() != c.config.seed)
            throw StructuralError("checkpoint seed disagrees with its config");
        c.state.stage = j.at("stage").get<int>();
        c.state.forward_learned = j.at("forward_learned").get<bool>();
        c.state.forward_init = ipf::initial_forward_role(c.config);
        c.state.forward = detail::direction_from_json(j.at("forward"));
        c.state.backward = detail::direction_from_json(j.at("backward"));
        std::istringstream rng(j.at("rng_state").get<std::string>());
        rng >> c.state.rng;
        if (!rng)
            throw StructuralError("checkpoint RNG state is malformed");
        return c;
    } catch (const json::exception& e) {
        throw StructuralError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save(const std::filesystem::path& path, const ipf::TrainConfig& cfg, const ipf::IPFState& state)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << to_json(cfg, state).dump(1) << '\n';
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

inline Checkpoint load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open checkpoint '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

} // namespace rsb::checkpoint
