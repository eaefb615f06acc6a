#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rsb/types.hpp"

// Dense time-conditioned drift network: x (2D) concatenated with a fixed
// sinusoidal embedding of t/T, a stack of activated hidden layers and a linear
// 2D output. Activations are stored feature-major (features x batch).
namespace rsb::nnet {

inline constexpr int kDataDim = 2;

enum class Activation { relu, silu, tanh };

inline std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::silu: return "silu";
    case Activation::tanh: return "tanh";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s)
{
    if (s == "relu") return Activation::relu;
    if (s == "silu") return Activation::silu;
    if (s == "tanh") return Activation::tanh;
    throw DomainError("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
    Matrix weight; // out x in
    Vector bias;   // out
};

struct ParameterSet {
    std::vector<DenseLayer> layers;
    int time_embed_dim = 32;
    Activation activation = Activation::silu;
    // Fixed multiplier on the last layer's output.
    double output_scale = 1.0;

    Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
    Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

    std::size_t size() const
    {
        std::size_t n = 0;
        for (const auto& l : layers)
            n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    void validate() const
    {
        if (layers.empty())
            throw StructuralError("parameter set has no layers");
        if (time_embed_dim <= 0 || time_embed_dim % 2 != 0)
            throw StructuralError("time_embed_dim must be a positive even integer");
        if (input_dim() != kDataDim + time_embed_dim)
            throw StructuralError("first layer input dim " + std::to_string(input_dim()) +
                                  " != 2 + time_embed_dim");
        if (output_dim() != kDataDim)
            throw StructuralError("last layer output dim must be 2");
        if (!(output_scale > 0.0) || !std::isfinite(output_scale))
            throw StructuralError("output_scale must be positive and finite");
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& l = layers[k];
            if (l.bias.size() != l.weight.rows())
                throw StructuralError("bias size mismatch in layer " + std::to_string(k));
            if (k + 1 < layers.size() && layers[k + 1].weight.cols() != l.weight.rows())
                throw StructuralError("layer " + std::to_string(k) + " output does not chain into layer " +
                                      std::to_string(k + 1));
            if (!l.weight.allFinite() || !l.bias.allFinite())
                throw DivergenceError("non-finite parameter in layer " + std::to_string(k));
        }
    }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b)
    {
        if (a.time_embed_dim != b.time_embed_dim || a.activation != b.activation || a.output_scale != b.output_scale ||
            a.layers.size() != b.layers.size())
            return false;
        for (std::size_t k = 0; k < a.layers.size(); ++k) {
            const auto& la = a.layers[k];
            const auto& lb = b.layers[k];
            if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols() ||
                la.bias.size() != lb.bias.size() || la.weight != lb.weight || la.bias != lb.bias)
                return false;
        }
        return true;
    }

    std::uint64_t fingerprint() const
    {
        std::uint64_t h = fnv1a(&time_embed_dim, sizeof time_embed_dim);
        h = fnv1a(&activation, sizeof activation, h);
        h = fnv1a(&output_scale, sizeof output_scale, h);
        for (const auto& l : layers) {
            h = fnv1a(l.weight.data(), sizeof(double) * static_cast<std::size_t>(l.weight.size()), h);
            h = fnv1a(l.bias.data(), sizeof(double) * static_cast<std::size_t>(l.bias.size()), h);
        }
        return h;
    }
};

// Per-entry partial derivatives, shape-congruent with a ParameterSet.
struct Gradient {
    std::vector<DenseLayer> layers;

    static Gradient zeros_like(const ParameterSet& p)
    {
        Gradient g;
        g.layers.reserve(p.layers.size());
        for (const auto& l : p.layers)
            g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
        return g;
    }

    bool all_finite() const
    {
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite())
                return false;
        return true;
    }

    bool congruent_with(const ParameterSet& p) const
    {
        if (layers.size() != p.layers.size())
            return false;
        for (std::size_t k = 0; k < layers.size(); ++k)
            if (layers[k].weight.rows() != p.layers[k].weight.rows() ||
                layers[k].weight.cols() != p.layers[k].weight.cols() ||
                layers[k].bias.size() != p.layers[k].bias.size())
                return false;
        return true;
    }

    Gradient& operator*=(double s)
    {
        for (auto& l : layers) {
            l.weight *= s;
            l.bias *= s;
        }
        return *this;
    }

    Gradient& operator+=(const Gradient& o)
    {
        for (std::size_t k = 0; k < layers.size(); ++k) {
            layers[k].weight += o.layers[k].weight;
            layers[k].bias += o.layers[k].bias;
        }
        return *this;
    }
};

struct NetShape {
    int hidden_width = 128;
    int hidden_layers = 3;
    int time_embed_dim = 32;
    Activation activation = Activation::silu;

    friend bool operator==(const NetShape&, const NetShape&) = default;
};

// Hidden layers: uniform in +-1/sqrt(fan_in). Output layer: zero, so a fresh
// network is the zero drift.
inline ParameterSet init_parameters(const NetShape& shape, Rng& rng, double output_scale = 1.0)
{
    if (shape.hidden_width <= 0 || shape.hidden_layers < 0)
        throw DomainError("invalid network shape");
    ParameterSet p;
    p.time_embed_dim = shape.time_embed_dim;
    p.activation = shape.activation;
    p.output_scale = output_scale;
    Eigen::Index in = kDataDim + shape.time_embed_dim;
    for (int k = 0; k < shape.hidden_layers; ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        DenseLayer l{Matrix(shape.hidden_width, in), Vector(shape.hidden_width)};
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
                l.weight(i, j) = u(rng);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i)
            l.bias(i) = u(rng);
        p.layers.push_back(std::move(l));
        in = shape.hidden_width;
    }
    p.layers.push_back({Matrix::Zero(kDataDim, in), Vector::Zero(kDataDim)});
    p.validate();
    return p;
}

// Sinusoidal embedding of s = t/T: sin/cos at frequencies spaced
// geometrically in [1, 1000]. Returns dim x n.
inline Matrix time_embedding(std::span<const int> times, int total_steps, int dim)
{
    if (total_steps <= 0)
        throw PreconditionError("total timesteps must be positive");
    const int half = dim / 2;
    Matrix e(dim, static_cast<Eigen::Index>(times.size()));
    for (std::size_t c = 0; c < times.size(); ++c) {
        const int t = times[c];
        if (t < 0 || t > total_steps)
            throw PreconditionError("timestep " + std::to_string(t) + " outside [0, " +
                                    std::to_string(total_steps) + "]");
        const double s = static_cast<double>(t) / total_steps;
        for (int k = 0; k < half; ++k) {
            const double freq = half > 1 ? std::exp(std::log(1000.0) * k / (half - 1)) : 1.0;
            e(k, static_cast<Eigen::Index>(c)) = std::sin(freq * s);
            e(half + k, static_cast<Eigen::Index>(c)) = std::cos(freq * s);
        }
    }
    return e;
}

namespace detail {

inline Matrix activate(const Matrix& z, Activation a)
{
    switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::silu: return (z.array() / (1.0 + (-z.array()).exp())).matrix();
    }
    return z;
}

inline Matrix activation_derivative(const Matrix& z, Activation a)
{
    switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::silu: {
        const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-z.array()).exp());
        return (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
    }
    }
    return z;
}

} // namespace detail

// Intermediate values of one forward pass, consumed by backward().
struct Tape {
    std::vector<Matrix> inputs;      // input to layer k (features x n)
    std::vector<Matrix> pre_activs;  // pre-activation of hidden layer k
};

struct Evaluation {
    Points output;
    Tape tape;
};

inline Evaluation forward_recorded(const ParameterSet& params, const Points& x, std::span<const int> times,
                                   int total_steps)
{
    if (params.layers.empty() || params.input_dim() != kDataDim + params.time_embed_dim)
        throw StructuralError("input dimension does not match first layer");
    if (static_cast<Eigen::Index>(times.size()) != x.rows())
        throw StructuralError("one timestep per input row required");
    Evaluation ev;
    Matrix h(params.input_dim(), x.rows());
    h.topRows(kDataDim) = x.transpose();
    h.bottomRows(params.time_embed_dim) = time_embedding(times, total_steps, params.time_embed_dim);

    const std::size_t last = params.layers.size() - 1;
    ev.tape.inputs.reserve(params.layers.size());
    ev.tape.pre_activs.reserve(last);
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const auto& l = params.layers[k];
        Matrix z = l.weight * h;
        z.colwise() += l.bias;
        ev.tape.inputs.push_back(std::move(h));
        if (k == last) {
            ev.output = params.output_scale * z.transpose();
        } else {
            h = detail::activate(z, params.activation);
            ev.tape.pre_activs.push_back(std::move(z));
        }
    }
    return ev;
}

// Reverse-mode accumulation of d(sum_i <cotangent_i, output_i>)/d(params).
inline Gradient backward(const ParameterSet& params, const Tape& tape, const Points& cotangent)
{
    Gradient g;
    g.layers.resize(params.layers.size());
    Matrix dz = params.output_scale * cotangent.transpose();
    for (std::size_t k = params.layers.size(); k-- > 0;) {
        g.layers[k].weight.noalias() = dz * tape.inputs[k].transpose();
        g.layers[k].bias = dz.rowwise().sum();
        if (k == 0)
            break;
        Matrix da = params.layers[k].weight.transpose() * dz;
        dz = da.cwiseProduct(detail::activation_derivative(tape.pre_activs[k - 1], params.activation));
    }
    return g;
}

inline Points net_forward(const ParameterSet& params, const Points& x, std::span<const int> times, int total_steps)
{
    return forward_recorded(params, x, times, total_steps).output;
}

inline Points net_forward(const ParameterSet& params, const Points& x, int t, int total_steps)
{
    const std::vector<int> times(static_cast<std::size_t>(x.rows()), t);
    return net_forward(params, x, times, total_steps);
}

struct LossAndGradient {
    double loss = 0.0;
    Gradient grad;
};

// Mean over the batch of ||net(x_i, t_i) - target_i||^2.
inline LossAndGradient loss_and_grad(const ParameterSet& params, const Points& inputs, std::span<const int> times,
                                     int total_steps, const Points& targets)
{
    if (inputs.rows() == 0)
        throw PreconditionError("loss_and_grad requires a non-empty batch");
    if (inputs.rows() != targets.rows())
        throw StructuralError("inputs and targets differ in batch size");
    auto ev = forward_recorded(params, inputs, times, total_steps);
    const Points resid = ev.output - targets;
    const double n = static_cast<double>(inputs.rows());
    LossAndGradient out;
    out.loss = resid.squaredNorm() / n;
    out.grad = backward(params, ev.tape, (2.0 / n) * resid);
    return out;
}

inline LossAndGradient loss_and_grad(const ParameterSet& params, const Points& inputs, int t, int total_steps,
                                     const Points& targets)
{
    const std::vector<int> times(static_cast<std::size_t>(inputs.rows()), t);
    return loss_and_grad(params, inputs, times, total_steps, targets);
}

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct OptimizerState {
    Gradient first_moment;
    Gradient second_moment;
    std::int64_t step = 0;
    AdamHyper hyper;

    static OptimizerState fresh(const ParameterSet& p, AdamHyper hyper = {})
    {
        return {Gradient::zeros_like(p), Gradient::zeros_like(p), 0, hyper};
    }
};

// Adaptive-moment update with bias correction, in place.
inline void optimizer_step(ParameterSet& params, const Gradient& grad, OptimizerState& state)
{
    if (!grad.congruent_with(params) || !state.first_moment.congruent_with(params) ||
        !state.second_moment.congruent_with(params))
        throw StructuralError("gradient/optimizer state shape does not match parameters");
    if (!grad.all_finite())
        throw DivergenceError("non-finite gradient at optimizer step " + std::to_string(state.step + 1));

    const auto& h = state.hyper;
    ++state.step;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = h.beta1 * m + (1.0 - h.beta1) * g;
        v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
        param.array() -= h.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
    };
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        update(params.layers[k].weight, state.first_moment.layers[k].weight, state.second_moment.layers[k].weight,
               grad.layers[k].weight);
        update(params.layers[k].bias, state.first_moment.layers[k].bias, state.second_moment.layers[k].bias,
               grad.layers[k].bias);
    }
}

// ema <- decay * ema + (1 - decay) * params
inline void ema_update(ParameterSet& ema, const ParameterSet& params, double decay)
{
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        ema.layers[k].weight = decay * ema.layers[k].weight + (1.0 - decay) * params.layers[k].weight;
        ema.layers[k].bias = decay * ema.layers[k].bias + (1.0 - decay) * params.layers[k].bias;
    }
}

} // namespace rsb::nnet
