#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rsb/types.hpp"

// Entropic optimal transport between discrete measures (the static
// Schrodinger problem), solved by alternating diagonal scaling of the Gibbs
// kernel K = exp(-C / eps):  pi = diag(u) K diag(v).
namespace rsb::sinkhorn {

struct DiscreteMeasure {
    Points support;
    Vector weights;

    Eigen::Index size() const { return weights.size(); }

    void validate() const
    {
        if (support.rows() != weights.size())
            throw StructuralError("measure support and weights differ in length");
        if (weights.size() == 0)
            throw PreconditionError("measure needs at least one atom");
        if (!weights.allFinite() || (weights.array() < 0.0).any())
            throw DomainError("measure weights must be finite and non-negative");
        if (std::abs(weights.sum() - 1.0) > 1e-12)
            throw DomainError("measure weights must sum to 1");
        std::vector<std::pair<double, double>> pts;
        pts.reserve(static_cast<std::size_t>(support.rows()));
        for (Eigen::Index i = 0; i < support.rows(); ++i)
            pts.emplace_back(support(i, 0), support(i, 1));
        std::sort(pts.begin(), pts.end());
        if (std::adjacent_find(pts.begin(), pts.end()) != pts.end())
            throw DomainError("measure support contains duplicate points");
    }

    static DiscreteMeasure make(Points support, Vector weights)
    {
        DiscreteMeasure m{std::move(support), std::move(weights)};
        m.validate();
        return m;
    }

    static DiscreteMeasure uniform(Points support)
    {
        const auto n = support.rows();
        return make(std::move(support), Vector::Constant(n, 1.0 / static_cast<double>(n)));
    }
};

struct Coupling {
    Matrix plan;
    DiscreteMeasure rows;
    DiscreteMeasure cols;
};

struct SolveReport {
    int iterations = 0;
    double violation = std::numeric_limits<double>::infinity();
    bool converged = false;
    bool log_domain = false;
};

struct Solution {
    Coupling coupling;
    SolveReport report;
};

enum class Mode { automatic, standard, log_domain };

struct SolveOptions {
    int max_iters = 10000;
    double tol = 1e-9;
    Mode mode = Mode::automatic;
    // In automatic mode, eps at or below this goes straight to log-domain.
    double log_domain_below = 1e-2;
};

// C[i][j] = ||x_i - y_j||^2
inline Matrix cost_matrix(const Points& x, const Points& y)
{
    Matrix c(x.rows(), y.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j) {
            const double dx = x(i, 0) - y(j, 0);
            const double dy = x(i, 1) - y(j, 1);
            c(i, j) = dx * dx + dy * dy;
        }
    return c;
}

inline Matrix cost_matrix(const DiscreteMeasure& x, const DiscreteMeasure& y)
{
    return cost_matrix(x.support, y.support);
}

inline Matrix gibbs_kernel(const Matrix& cost, double eps)
{
    if (!(eps > 0.0))
        throw DomainError("eps must be positive");
    // std::exp rather than Eigen's vectorized exp, which clamps large negative
    // arguments instead of underflowing to 0.
    return cost.unaryExpr([eps](double c) { return std::exp(-c / eps); });
}

// max of the L1 errors of row and column sums.
inline double marginal_violation(const Matrix& plan, const Vector& row_w, const Vector& col_w)
{
    const double r = (plan.rowwise().sum() - row_w).lpNorm<1>();
    const double c = (plan.colwise().sum().transpose() - col_w).lpNorm<1>();
    return std::max(r, c);
}

inline double transport_cost(const Matrix& plan, const Matrix& cost)
{
    return plan.cwiseProduct(cost).sum();
}

// -sum pi log pi with 0 log 0 = 0.
inline double plan_entropy(const Matrix& plan)
{
    double h = 0.0;
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
        for (Eigen::Index i = 0; i < plan.rows(); ++i)
            if (plan(i, j) > 0.0)
                h -= plan(i, j) * std::log(plan(i, j));
    return h;
}

// <pi, C> + eps KL(pi | mu x nu), with 0 log 0 = 0.
inline double coupling_objective(const Matrix& plan, const Matrix& cost, double eps, const DiscreteMeasure& mu,
                                 const DiscreteMeasure& nu)
{
    if (plan.rows() != mu.size() || plan.cols() != nu.size() || cost.rows() != plan.rows() ||
        cost.cols() != plan.cols())
        throw StructuralError("plan, cost and measures disagree in shape");
    double kl = 0.0;
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
        for (Eigen::Index i = 0; i < plan.rows(); ++i) {
            const double p = plan(i, j);
            if (p > 0.0)
                kl += p * std::log(p / (mu.weights(i) * nu.weights(j)));
        }
    return transport_cost(plan, cost) + eps * kl;
}

namespace detail {

// Returns false when the kernel underflows or the scalings leave the
// representable range.
inline bool solve_standard(const Matrix& cost, const Vector& a, const Vector& b, double eps,
                           const SolveOptions& opts, Matrix& plan, SolveReport& rep)
{
    const Matrix k = gibbs_kernel(cost, eps);
    // Subnormal entries have lost their relative precision.
    if ((k.array() < std::numeric_limits<double>::min()).any())
        return false;
    Vector u = Vector::Ones(a.size());
    Vector v = Vector::Ones(b.size());
    rep = {};
    for (int it = 1; it <= opts.max_iters; ++it) {
        const Vector kv = k * v;
        u = a.cwiseQuotient(kv);
        const Vector ktu = k.transpose() * u;
        v = b.cwiseQuotient(ktu);
        if (!u.allFinite() || !v.allFinite())
            return false;
        rep.iterations = it;
        // Columns match exactly after the v update; only rows can be off.
        rep.violation = (u.cwiseProduct(k * v) - a).lpNorm<1>();
        if (rep.violation <= opts.tol)
            break;
    }
    plan = u.asDiagonal() * k * v.asDiagonal();
    if (!plan.allFinite())
        return false;
    rep.violation = marginal_violation(plan, a, b);
    rep.converged = rep.violation <= opts.tol;
    rep.log_domain = false;
    return true;
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& x)
{
    const double m = x.maxCoeff();
    if (!std::isfinite(m))
        return m;
    return m + std::log((x.array() - m).exp().sum());
}

inline void solve_log(const Matrix& cost, const Vector& a, const Vector& b, double eps, const SolveOptions& opts,
                      Matrix& plan, SolveReport& rep)
{
    const Vector log_a = a.array().log();
    const Vector log_b = b.array().log();
    Vector f = Vector::Zero(a.size());
    Vector g = Vector::Zero(b.size());
    auto log_plan = [&]() {
        Matrix lp = (-cost).array() / eps;
        lp.colwise() += (f / eps + log_a);
        lp.rowwise() += (g / eps + log_b).transpose();
        return lp;
    };
    rep = {};
    Vector buf;
    for (int it = 1; it <= opts.max_iters; ++it) {
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            buf = (g.array() - cost.row(i).transpose().array()) / eps + log_b.array();
            f(i) = -eps * log_sum_exp(buf);
        }
        for (Eigen::Index j = 0; j < b.size(); ++j) {
            buf = (f.array() - cost.col(j).array()) / eps + log_a.array();
            g(j) = -eps * log_sum_exp(buf);
        }
        rep.iterations = it;
        const Matrix p = log_plan().array().exp().matrix();
        rep.violation = (p.rowwise().sum() - a).lpNorm<1>();
        if (rep.violation <= opts.tol)
            break;
    }
    plan = log_plan().array().exp().matrix();
    rep.violation = marginal_violation(plan, a, b);
    rep.converged = rep.violation <= opts.tol;
    rep.log_domain = true;
}

// Lexicographic order on (size, support, weights); used to pick a canonical
// orientation so that swapping the measures transposes the plan exactly.
inline bool precedes(const DiscreteMeasure& x, const DiscreteMeasure& y)
{
    if (x.size() != y.size())
        return x.size() < y.size();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        for (int c = 0; c < 2; ++c)
            if (x.support(i, c) != y.support(i, c))
                return x.support(i, c) < y.support(i, c);
        if (x.weights(i) != y.weights(i))
            return x.weights(i) < y.weights(i);
    }
    return false;
}

} // namespace detail

inline Solution sinkhorn_solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double eps,
                               const SolveOptions& opts = {})
{
    if (!(eps > 0.0))
        throw DomainError("eps must be positive");
    if (!(opts.tol > 0.0))
        throw DomainError("tol must be positive");
    if (opts.max_iters < 1)
        throw DomainError("max_iters must be >= 1");
    mu.validate();
    nu.validate();

    if (detail::precedes(nu, mu)) {
        Solution s = sinkhorn_solve(nu, mu, eps, opts);
        s.coupling.plan.transposeInPlace();
        std::swap(s.coupling.rows, s.coupling.cols);
        return s;
    }

    const Matrix cost = cost_matrix(mu, nu);
    Solution s{{Matrix(), mu, nu}, {}};
    const bool log_first = opts.mode == Mode::log_domain ||
                           (opts.mode == Mode::automatic && eps <= opts.log_domain_below);
    if (!log_first) {
        if (detail::solve_standard(cost, mu.weights, nu.weights, eps, opts, s.coupling.plan, s.report))
            return s;
        if (opts.mode == Mode::standard)
            throw DivergenceError("standard-domain Sinkhorn overflowed at eps=" + std::to_string(eps));
    }
    detail::solve_log(cost, mu.weights, nu.weights, eps, opts, s.coupling.plan, s.report);
    return s;
}

// --------------------------------------------------------- bridge vs oracle

namespace detail {

// r x r lattice spanning the bounding box; points snap to the nearest node.
struct Lattice {
    Eigen::Vector2d lo;
    Eigen::Vector2d step;
    int r = 2;

    static Lattice fit(const Points& p, int r)
    {
        Lattice l;
        l.r = r;
        l.lo = p.colwise().minCoeff().transpose();
        const Eigen::Vector2d hi = p.colwise().maxCoeff().transpose();
        l.step = (hi - l.lo) / static_cast<double>(r - 1);
        return l;
    }

    int axis_index(double v, int c) const
    {
        if (step(c) <= 0.0)
            return 0;
        const long k = std::lround((v - lo(c)) / step(c));
        return static_cast<int>(std::clamp<long>(k, 0, r - 1));
    }

    int cell(const Eigen::RowVector2d& p) const { return axis_index(p(0), 0) * r + axis_index(p(1), 1); }

    Eigen::RowVector2d center(int cell) const
    {
        const int ix = cell / r;
        const int iy = cell % r;
        return {lo(0) + ix * step(0), lo(1) + iy * step(1)};
    }
};

} // namespace detail

struct BinnedComparison {
    double discrepancy = 0.0; // total variation distance
    Matrix empirical;         // joint histogram on active cells
    Coupling oracle;
    SolveReport report;
};

// Histograms (x_0, x_T) pairs on grid_resolution^2 cells per marginal and
// returns the total-variation distance between the empirical joint and the
// entropic-OT coupling of the two marginal histograms.
inline BinnedComparison compare_binned(const Points& x0, const Points& xT, int grid_resolution, double eps,
                                       const SolveOptions& opts = {})
{
    if (x0.rows() != xT.rows())
        throw StructuralError("endpoint batches differ in length");
    if (x0.rows() < 1000)
        throw PreconditionError("bridge_vs_oracle needs at least 1000 pairs");
    if (grid_resolution < 2)
        throw DomainError("grid_resolution must be >= 2");
    const auto lx = detail::Lattice::fit(x0, grid_resolution);
    const auto ly = detail::Lattice::fit(xT, grid_resolution);
    const int cells = grid_resolution * grid_resolution;
    Matrix joint = Matrix::Zero(cells, cells);
    for (Eigen::Index i = 0; i < x0.rows(); ++i)
        joint(lx.cell(x0.row(i)), ly.cell(xT.row(i))) += 1.0;
    joint /= static_cast<double>(x0.rows());

    const Vector rows = joint.rowwise().sum();
    const Vector cols = joint.colwise().sum().transpose();
    std::vector<int> ar;
    std::vector<int> ac;
    for (int c = 0; c < cells; ++c) {
        if (rows(c) > 0.0)
            ar.push_back(c);
        if (cols(c) > 0.0)
            ac.push_back(c);
    }
    auto make = [](const std::vector<int>& active, const Vector& w, const detail::Lattice& lat) {
        Points s(static_cast<Eigen::Index>(active.size()), 2);
        Vector m(static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
            s.row(static_cast<Eigen::Index>(k)) = lat.center(active[k]);
            m(static_cast<Eigen::Index>(k)) = w(active[k]);
        }
        m /= m.sum();
        return DiscreteMeasure::make(std::move(s), std::move(m));
    };

    BinnedComparison out;
    const auto mu = make(ar, rows, lx);
    const auto nu = make(ac, cols, ly);
    auto sol = sinkhorn_solve(mu, nu, eps, opts);
    out.empirical.resize(mu.size(), nu.size());
    for (std::size_t i = 0; i < ar.size(); ++i)
        for (std::size_t j = 0; j < ac.size(); ++j)
            out.empirical(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = joint(ar[i], ac[j]);
    out.discrepancy = 0.5 * (out.empirical - sol.coupling.plan).cwiseAbs().sum();
    out.oracle = std::move(sol.coupling);
    out.report = sol.report;
    return out;
}

inline double bridge_vs_oracle(const Points& x0, const Points& xT, int grid_resolution, double eps,
                               const SolveOptions& opts = {})
{
    return compare_binned(x0, xT, grid_resolution, eps, opts).discrepancy;
}

struct SweepEntry {
    double eps = 0.0;
    double discrepancy = 0.0;
};

// The bridge's implicit eps is unknown, so report the best-matching one.
inline std::vector<SweepEntry> bridge_vs_oracle_sweep(const Points& x0, const Points& xT, int grid_resolution,
                                                      const std::vector<double>& eps_values,
                                                      const SolveOptions& opts = {})
{
    std::vector<SweepEntry> out;
    for (double e : eps_values)
        out.push_back({e, bridge_vs_oracle(x0, xT, grid_resolution, e, opts)});
    std::sort(out.begin(), out.end(), [](const SweepEntry& a, const SweepEntry& b) {
        return a.discrepancy < b.discrepancy;
    });
    return out;
}

} // namespace rsb::sinkhorn
