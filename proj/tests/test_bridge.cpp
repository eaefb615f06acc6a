#include <gtest/gtest.h>

#include "support.hpp"

using namespace rsb;
using namespace rsb::bridge;
using rsb::testing::random_net;
using rsb::testing::random_points;

namespace {

// Per-coordinate sample mean and variance of a batch.
std::pair<Eigen::RowVector2d, Eigen::RowVector2d> moments(const Points& x)
{
    const Eigen::RowVector2d mean = x.colwise().mean();
    const Points c = x.rowwise() - mean;
    const Eigen::RowVector2d var = c.cwiseProduct(c).colwise().sum() / double(x.rows() - 1);
    return {mean, var};
}

} // namespace

TEST(TimeGrid, UniformAndValidation)
{
    const auto g = TimeGrid::uniform(8, 1.0);
    EXPECT_EQ(g.steps(), 8);
    EXPECT_NEAR(g.horizon(), 1.0, 1e-15);
    EXPECT_THROW(TimeGrid::uniform(0, 1.0), DomainError);
    EXPECT_THROW(TimeGrid::uniform(4, 0.0), DomainError);
    EXPECT_THROW((TimeGrid{{0.1, 0.0}}.validate()), DomainError);
    EXPECT_THROW((TimeGrid{{}}.validate()), DomainError);
}

TEST(TimeGrid, SymmetricScheduleMirrorsAndSums)
{
    const auto g = TimeGrid::symmetric(8, 2.0, 10.0);
    EXPECT_NEAR(g.horizon(), 2.0, 1e-14);
    for (int t = 0; t < 8; ++t)
        EXPECT_DOUBLE_EQ(g.gamma[std::size_t(t)], g.gamma[std::size_t(7 - t)]);
    EXPECT_NEAR(g.gamma[3] / g.gamma[0], 10.0, 1e-12);
    EXPECT_LT(g.gamma[0], g.gamma[1]);
    const auto odd = TimeGrid::symmetric(5, 1.0, 4.0);
    EXPECT_NEAR(odd.gamma[2] / odd.gamma[0], 4.0, 1e-12);
    EXPECT_EQ(TimeGrid::symmetric(6, 1.0, 1.0), TimeGrid::uniform(6, 1.0));
}

TEST(DriftEval, ZeroRoleIsZero)
{
    Rng rng(1);
    EXPECT_TRUE(drift_eval(ZeroDrift{}, random_points(5, rng), 3, TimeGrid::uniform(4, 1.0)).isZero());
}

TEST(DriftEval, VpLinearIsMinusHalfBetaX)
{
    Points x(1, 2);
    x << 2.0, 0.0;
    const Points f = drift_eval(VpLinearDrift{1.5, 1.5}, x, 2, TimeGrid::uniform(4, 1.0));
    EXPECT_DOUBLE_EQ(f(0, 0), -1.5);
    EXPECT_DOUBLE_EQ(f(0, 1), 0.0);
}

TEST(DriftEval, VpLinearInterpolatesBeta)
{
    const VpLinearDrift vp{0.1, 3.0};
    EXPECT_DOUBLE_EQ(vp.beta(0, 10), 0.1);
    EXPECT_DOUBLE_EQ(vp.beta(10, 10), 3.0);
    EXPECT_NEAR(vp.beta(5, 10), 1.55, 1e-15);
}

TEST(DriftEval, LearnedDelegatesToNetwork)
{
    Rng rng(2);
    const auto p = random_net(16, 2, 4, nnet::Activation::silu, rng);
    const Points x = random_points(9, rng);
    const auto grid = TimeGrid::uniform(6, 1.0);
    const Points a = drift_eval(learned(p), x, 4, grid);
    const Points b = nnet::net_forward(p, x, 4, 6);
    EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(DriftEval, TimestepRangeChecked)
{
    Rng rng(3);
    const auto grid = TimeGrid::uniform(4, 1.0);
    EXPECT_THROW(drift_eval(ZeroDrift{}, random_points(2, rng), 5, grid), PreconditionError);
    EXPECT_NO_THROW(drift_eval(ZeroDrift{}, random_points(2, rng), 4, grid));
}

TEST(Transition, VanishingStepIsIdentity)
{
    Rng rng(4);
    const Points x = random_points(20, rng, 3.0);
    const TimeGrid grid{{1e-30}};
    const Points y = transition(VpLinearDrift{1.0, 1.0}, x, 0, grid, rng);
    EXPECT_LT((y - x).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Transition, ZeroDriftMoments)
{
    Rng rng(5);
    const long n = 100000;
    const double gamma = 0.5;
    const Points x = Points::Constant(n, 2, 0.0).rowwise() + Eigen::RowVector2d(1.0, -2.0);
    const Points y = transition(ZeroDrift{}, x, 0, TimeGrid{{gamma}}, rng);
    const auto [mean, var] = moments(y);
    EXPECT_NEAR(mean(0), 1.0, 3.0 * std::sqrt(2.0 * gamma / n));
    EXPECT_NEAR(mean(1), -2.0, 3.0 * std::sqrt(2.0 * gamma / n));
    EXPECT_NEAR(var(0), 2.0 * gamma, 0.05 * 2.0 * gamma);
    EXPECT_NEAR(var(1), 2.0 * gamma, 0.05 * 2.0 * gamma);
}

TEST(Transition, LearnedDriftMomentsAtFiveSigma)
{
    Rng rng(6);
    const auto p = random_net(16, 2, 4, nnet::Activation::tanh, rng);
    const auto role = learned(p);
    const auto grid = TimeGrid::uniform(4, 1.0);
    const long n = 100000;
    Eigen::RowVector2d x0(0.3, -0.7);
    const Points x = Points::Zero(n, 2).rowwise() + x0;
    const Points y = transition(role, x, 2, grid, rng);
    const Eigen::RowVector2d expect = x0 + grid.gamma[2] * drift_eval(role, x.topRows(1), 2, grid).row(0);
    const auto [mean, var] = moments(y);
    const double v = 2.0 * grid.gamma[2];
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(mean(c), expect(c), 5.0 * std::sqrt(v / n));
        EXPECT_NEAR(var(c), v, 5.0 * v * std::sqrt(2.0 / (n - 1)));
    }
    const Points centered = y.rowwise() - mean;
    const double cov = centered.col(0).dot(centered.col(1)) / double(n - 1);
    EXPECT_NEAR(cov, 0.0, 5.0 * v / std::sqrt(double(n)));
}

TEST(Transition, NonFiniteOutputNamesTimestep)
{
    Rng rng(7);
    Points x = random_points(3, rng);
    x(1, 0) = std::numeric_limits<double>::infinity();
    try {
        transition(ZeroDrift{}, x, 2, TimeGrid::uniform(4, 1.0), rng);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("timestep 2"), std::string::npos);
    }
}

TEST(Transition, StepIndexChecked)
{
    Rng rng(8);
    EXPECT_THROW(transition(ZeroDrift{}, random_points(2, rng), 4, TimeGrid::uniform(4, 1.0), rng),
                 PreconditionError);
}

TEST(Rollout, SingleStepHasTwoSlices)
{
    Rng rng(9);
    const auto tr = rollout(ZeroDrift{}, random_points(4, rng), TimeGrid::uniform(1, 1.0), rng, Direction::forward);
    EXPECT_EQ(tr.states.size(), 2u);
}

TEST(Rollout, BrownianVarianceAccumulates)
{
    Rng rng(10);
    const long n = 100000;
    const auto grid = TimeGrid::uniform(5, 1.5);
    const Points x0 = Points::Zero(n, 2);
    const auto tr = rollout(ZeroDrift{}, x0, grid, rng, Direction::forward);
    ASSERT_EQ(tr.states.size(), 6u);
    const auto [mean, var] = moments(Points(tr.terminal() - tr.states.front()));
    const double v = 2.0 * grid.horizon();
    EXPECT_NEAR(var(0), v, 5.0 * v * std::sqrt(2.0 / n));
    EXPECT_NEAR(var(1), v, 5.0 * v * std::sqrt(2.0 / n));
}

TEST(Rollout, SameSeedIsBitIdentical)
{
    Rng setup(11);
    const auto role = learned(random_net(8, 2, 4, nnet::Activation::silu, setup));
    const Points x0 = random_points(30, setup);
    const auto grid = TimeGrid::uniform(6, 1.0);
    Rng a(12);
    Rng b(12);
    const auto t1 = rollout(role, x0, grid, a, Direction::backward);
    const auto t2 = rollout(role, x0, grid, b, Direction::backward);
    for (std::size_t k = 0; k < t1.states.size(); ++k)
        EXPECT_TRUE((t1.states[k].array() == t2.states[k].array()).all());
}

TEST(Rollout, BackwardConsumesIndicesTDownToOne)
{
    Rng rng(13);
    const auto grid = TimeGrid::uniform(8, 1.0);
    std::vector<int> log;
    RolloutOptions opts;
    opts.drift_log = [&](int t) { log.push_back(t); };
    rollout(ZeroDrift{}, random_points(2, rng), grid, rng, Direction::backward, opts);
    EXPECT_EQ(log, (std::vector<int>{8, 7, 6, 5, 4, 3, 2, 1}));
    log.clear();
    rollout(ZeroDrift{}, random_points(2, rng), grid, rng, Direction::forward, opts);
    EXPECT_EQ(log, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Rollout, BackwardTimeIndexing)
{
    Rng rng(14);
    const auto grid = TimeGrid::uniform(3, 1.0);
    const Points x = random_points(4, rng);
    const auto tr = rollout(ZeroDrift{}, x, grid, rng, Direction::backward);
    EXPECT_TRUE((tr.at_time(3).array() == x.array()).all());
    EXPECT_TRUE((tr.at_time(0).array() == tr.terminal().array()).all());
}

TEST(Rollout, NoiselessLastStepReturnsKernelMean)
{
    Rng rng(15);
    const auto grid = TimeGrid::uniform(2, 1.0);
    RolloutOptions opts;
    opts.noise_last_step = false;
    const Points x = random_points(5, rng);
    const auto tr = rollout(VpLinearDrift{1.0, 1.0}, x, grid, rng, Direction::forward, opts);
    const Points expect = tr.states[1] + grid.gamma[1] * drift_eval(VpLinearDrift{1.0, 1.0}, tr.states[1], 1, grid);
    EXPECT_TRUE((tr.terminal().array() == expect.array()).all());
}

TEST(Rollout, NonFiniteStartRejected)
{
    Rng rng(16);
    Points x = random_points(2, rng);
    x(0, 0) = std::nan("");
    EXPECT_THROW(rollout(ZeroDrift{}, x, TimeGrid::uniform(2, 1.0), rng, Direction::forward), PreconditionError);
}

TEST(VpLinear, ConstantBetaMatchesClosedFormKernel)
{
    // With beta = 2 the 2*gamma kernel is the Euler-Maruyama discretization of
    // dx = -x dt + sqrt(2) dW, whose transition from x_0 over time s is
    // N(x_0 e^{-s}, (1 - e^{-2s}) I).
    Rng rng(17);
    const long n = 100000;
    const double s = 1.0;
    const auto grid = TimeGrid::uniform(1000, s);
    const Eigen::RowVector2d x0(1.5, -0.5);
    const Points start = Points::Zero(n, 2).rowwise() + x0;
    const auto tr = rollout(VpLinearDrift{2.0, 2.0}, start, grid, rng, Direction::forward);
    const auto [mean, var] = moments(tr.terminal());
    const double v = 1.0 - std::exp(-2.0 * s);
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(mean(c), x0(c) * std::exp(-s), 5.0 * std::sqrt(v / n) + 1e-3 * std::abs(x0(c)));
        EXPECT_NEAR(var(c), v, 5.0 * v * std::sqrt(2.0 / n) + 1e-3);
    }
}

TEST(VpLinear, LongHorizonStandardizesData)
{
    Rng rng(18);
    const long n = 50000;
    const auto spec = toydata::default_spec(toydata::Kind::eight_gaussians);
    const Points x0 = toydata::sample(spec, n, rng) / toydata::standardization_scale(spec);
    const auto tr = rollout(VpLinearDrift{2.0, 2.0}, x0, TimeGrid::uniform(200, 5.0), rng, Direction::forward);
    const auto [mean, var] = moments(tr.terminal());
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(mean(c), 0.0, 5.0 / std::sqrt(double(n)));
        EXPECT_NEAR(var(c), 1.0, 5.0 * std::sqrt(2.0 / n) + 0.01);
    }
}

TEST(DriftRole, FingerprintSeparatesRoles)
{
    Rng rng(19);
    const auto p = random_net(8, 1, 4, nnet::Activation::relu, rng);
    auto q = p;
    q.layers[0].bias(0) += 1e-12;
    EXPECT_NE(fingerprint(ZeroDrift{}), fingerprint(VpLinearDrift{}));
    EXPECT_NE(fingerprint(VpLinearDrift{0.1, 3.0}), fingerprint(VpLinearDrift{0.1, 2.0}));
    EXPECT_EQ(fingerprint(learned(p)), fingerprint(learned(p)));
    EXPECT_NE(fingerprint(learned(p)), fingerprint(learned(q)));
    EXPECT_THROW(validate(VpLinearDrift{2.0, 1.0}), DomainError);
}
