#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "vecspin/phi.hpp"

namespace vecspin {

/// Truncated Ruelle cascade on a tree of depth r. Level j (0-based) holds the
/// children of depth-j nodes; leaves are indexed in mixed radix with the
/// depth-1 digit most significant.
struct CascadeTree {
    int r = 0;
    std::vector<double> x;         // cascade parameters x_0..x_{r-1}
    std::vector<int> fanouts;      // children per node at each level
    std::vector<double> log_weights;
    std::vector<double> weights;

    std::size_t leaves() const { return log_weights.size(); }

    /// Number of leaves under one depth-j node.
    std::size_t block(int depth) const {
        std::size_t b = 1;
        for (int j = depth; j < r; ++j) b *= static_cast<std::size_t>(fanouts[static_cast<std::size_t>(j)]);
        return b;
    }

    /// Path coordinates (α_1, ..., α_r) of a leaf, 0-based.
    std::vector<int> coordinates(std::size_t leaf) const {
        std::vector<int> out(static_cast<std::size_t>(r));
        for (int j = r - 1; j >= 0; --j) {
            const auto f = static_cast<std::size_t>(fanouts[static_cast<std::size_t>(j)]);
            out[static_cast<std::size_t>(j)] = static_cast<int>(leaf % f);
            leaf /= f;
        }
        return out;
    }
};

/// α¹ ∧ α²: the number of common leading coordinates.
inline int ancestor_depth(const std::vector<int>& a, const std::vector<int>& b) {
    require(a.size() == b.size(), "ancestor_depth: index sequences differ in length");
    int d = 0;
    while (static_cast<std::size_t>(d) < a.size() && a[static_cast<std::size_t>(d)] == b[static_cast<std::size_t>(d)]) ++d;
    return d;
}

inline int ancestor_depth(const CascadeTree& tree, std::size_t a, std::size_t b) {
    return ancestor_depth(tree.coordinates(a), tree.coordinates(b));
}

namespace detail {

// Boundary levels: x = 0 keeps a single child (all mass on the first
// arrival); x = 1 gives equal weights, the fanout-truncated form of a plain
// expectation.
inline CascadeTree build_cascade(const std::vector<double>& x, int fanout, Rng& rng, bool allow_boundary) {
    require(!x.empty(), "cascade needs r >= 1");
    require(fanout >= 2, "cascade fanout must be >= 2");
    CascadeTree t;
    t.r = static_cast<int>(x.size());
    t.x = x;
    require(std::is_sorted(x.begin(), x.end()), "cascade parameters must be non-decreasing");
    for (double v : x) {
        if (!allow_boundary && !(v > 0.0 && v < 1.0)) {
            std::ostringstream os;
            os << "cascade parameter " << v << " outside (0,1)";
            throw ValidationError(os.str());
        }
        require(v >= 0.0 && v <= 1.0, "cascade parameter outside [0,1]");
        t.fanouts.push_back(v < kZeroX ? 1 : fanout);
    }
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> lw{0.0};
    for (int j = 0; j < t.r; ++j) {
        const double xj = x[static_cast<std::size_t>(j)];
        const int f = t.fanouts[static_cast<std::size_t>(j)];
        std::vector<double> next;
        next.reserve(lw.size() * static_cast<std::size_t>(f));
        std::vector<double> local(static_cast<std::size_t>(f));
        for (double parent : lw) {
            if (xj >= 1.0) {
                std::fill(local.begin(), local.end(), 0.0);
            } else if (f == 1) {
                local[0] = 0.0;
            } else {
                // Arrival times Γ_1 < Γ_2 < ... of a unit Poisson process; the
                // points Γ^{-1/x} are the largest atoms of the PD(x) process.
                double gamma = 0.0;
                for (int i = 0; i < f; ++i) {
                    gamma += expo(rng);
                    local[static_cast<std::size_t>(i)] = -std::log(gamma) / xj;
                }
            }
            for (double l : local) next.push_back(parent + l);
        }
        lw = std::move(next);
    }
    const double norm = log_sum_exp(lw.data(), lw.size());
    t.log_weights.resize(lw.size());
    t.weights.resize(lw.size());
    for (std::size_t i = 0; i < lw.size(); ++i) {
        t.log_weights[i] = lw[i] - norm;
        t.weights[i] = std::exp(t.log_weights[i]);
    }
    return t;
}

} // namespace detail

/// Truncated cascade with parameters strictly inside (0,1).
inline CascadeTree sample_cascade(const std::vector<double>& x, int fanout, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::Cascade, 0);
    return detail::build_cascade(x, fanout, rng, false);
}

/// Leaf values of the tree-indexed Gaussian processes: Z with
/// Cov(Z(α¹), Z(α²)) = ξ'(γ_{α¹∧α²}) and Y with Cov = Sum θ(γ_{α¹∧α²}).
struct TreeGaussianField {
    Matrix z;     // κ × leaves
    Vector y;     // leaves
};

namespace detail {

inline TreeGaussianField build_fields(const CascadeTree& tree, const std::vector<Matrix>& z_incs,
                                      const std::vector<double>& y_vars, Rng& rng, bool with_z = true) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index kappa = z_incs.front().rows();
    std::vector<Matrix> factors;
    for (const Matrix& c : z_incs) factors.push_back(psd_factor(c));
    Matrix z = Matrix::Zero(kappa, 1);
    Vector y = Vector::Zero(1);
    for (int j = 0; j < tree.r; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        const int f = tree.fanouts[sj];
        const Eigen::Index nodes = z.cols() * f;
        Matrix zn(kappa, nodes);
        Vector yn(nodes);
        const Matrix& fac = factors[sj];
        const double ysd = std::sqrt(std::max(y_vars[sj], 0.0));
        Vector g(fac.cols());
        for (Eigen::Index p = 0; p < z.cols(); ++p) {
            for (int c = 0; c < f; ++c) {
                const Eigen::Index n = p * f + c;
                if (with_z) {
                    for (Eigen::Index d = 0; d < g.size(); ++d) g(d) = normal(rng);
                    zn.col(n) = z.col(p) + fac * g;
                } else {
                    zn.col(n) = z.col(p);
                }
                yn(n) = y(p) + ysd * normal(rng);
            }
        }
        z = std::move(zn);
        y = std::move(yn);
    }
    return {std::move(z), std::move(y)};
}

inline std::vector<double> y_variances(const MixedModel& model, const Path& path) {
    std::vector<double> out;
    for (int j = 1; j <= path.levels(); ++j) {
        const double v = sum_all(model.theta(path.gamma(j))) - sum_all(model.theta(path.gamma(j - 1)));
        require(v >= -kPsdTol, "Y-field variance increment is negative");
        out.push_back(std::max(v, 0.0));
    }
    return out;
}

} // namespace detail

inline TreeGaussianField sample_fields(const CascadeTree& tree, const MixedModel& model, const Path& path,
                                       std::uint64_t seed) {
    require(tree.r == path.levels(), "tree depth and path levels differ");
    Rng rng = make_rng(seed, Stream::CascadeField, 0);
    return detail::build_fields(tree, increments(model, path), detail::y_variances(model, path), rng);
}

struct OracleEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// (1/M) E log Σ_α v_α exp(√M Y(α)); the cascade identity gives
/// ½ Σ_j x_j Sum(θ(γ_{j+1}) − θ(γ_j)) for every M.
inline OracleEstimate simulate_y_functional(const MixedModel& model, const Path& path, int m, int replications,
                                            int fanout, std::uint64_t seed, int threads = 1) {
    require(m > 0, "M must be positive");
    require(replications >= 2, "need at least 2 replications");
    const std::vector<double> yv = detail::y_variances(model, path);
    const std::vector<Matrix> zinc = increments(model, path);
    const double root_m = std::sqrt(static_cast<double>(m));
    std::vector<double> reps(static_cast<std::size_t>(replications));
    parallel_for(reps.size(), threads, [&](std::size_t b) {
        Rng rng = make_rng(seed, Stream::Cascade, b);
        const CascadeTree tree = detail::build_cascade(path.xs(), fanout, rng, true);
        const TreeGaussianField f = detail::build_fields(tree, zinc, yv, rng, false);
        std::vector<double> t(tree.leaves());
        for (std::size_t a = 0; a < t.size(); ++a) t[a] = tree.log_weights[a] + root_m * f.y(static_cast<Eigen::Index>(a));
        reps[b] = detail::log_sum_exp(t.data(), t.size()) / static_cast<double>(m);
    });
    const MeanError me = mean_error(reps);
    return {me.mean, me.std_error};
}

/// Cascade representation Φ = E log Σ_α v_α ∫ exp(⟨σ, Z(α)⟩ + λ-term) dμ.
inline OracleEstimate simulate_phi(const MixedModel& model, const SpinPrior& prior, const LambdaMatrix& lambda,
                                   const Path& path, int replications, int fanout, std::uint64_t seed,
                                   int threads = 1, const InnerTerms& extra = {}) {
    detail::check_phi_inputs(model, prior, lambda, path);
    require(replications >= 2, "need at least 2 replications");
    const std::vector<Matrix> zinc = increments(model, path);
    const std::vector<double> yv(static_cast<std::size_t>(path.levels()), 0.0);
    const detail::InnerIntegrand inner(prior, lambda, extra);
    std::vector<double> reps(static_cast<std::size_t>(replications));
    parallel_for(reps.size(), threads, [&](std::size_t b) {
        Rng rng = make_rng(seed, Stream::Cascade, b);
        const CascadeTree tree = detail::build_cascade(path.xs(), fanout, rng, true);
        const TreeGaussianField f = detail::build_fields(tree, zinc, yv, rng);
        std::vector<double> t(tree.leaves());
        for (std::size_t a = 0; a < t.size(); ++a)
            t[a] = tree.log_weights[a] + inner.value(f.z.col(static_cast<Eigen::Index>(a)));
        reps[b] = detail::log_sum_exp(t.data(), t.size());
    });
    const MeanError me = mean_error(reps);
    return {me.mean, me.std_error};
}

/// simulate_phi at fanout and 2·fanout; truncation bias should shrink.
struct FanoutDoubling {
    OracleEstimate at_fanout;
    OracleEstimate at_double;
};

inline FanoutDoubling simulate_phi_doubling(const MixedModel& model, const SpinPrior& prior,
                                            const LambdaMatrix& lambda, const Path& path, int replications,
                                            int fanout, std::uint64_t seed, int threads = 1) {
    return {simulate_phi(model, prior, lambda, path, replications, fanout, seed, threads),
            simulate_phi(model, prior, lambda, path, replications, 2 * fanout, seed, threads)};
}

/// One draw of the split bound: log Σ_α v_α Σ_j A_j(α) and each log Σ_α v_α A_j(α),
/// with the parts given as log A_j per leaf.
struct SplitDraw {
    double lhs = 0.0;
    std::vector<double> parts;
};

inline SplitDraw log_sum_split_draw(const CascadeTree& tree, const std::vector<std::vector<double>>& log_parts) {
    require(!log_parts.empty(), "need at least one part");
    SplitDraw out;
    const std::size_t l = tree.leaves();
    std::vector<double> total(l, -std::numeric_limits<double>::infinity());
    for (const auto& part : log_parts) {
        require(part.size() == l, "part has wrong number of leaves");
        std::vector<double> t(l);
        for (std::size_t a = 0; a < l; ++a) {
            t[a] = tree.log_weights[a] + part[a];
            const double hi = std::max(total[a], part[a]);
            if (std::isfinite(hi))
                total[a] = hi + std::log(std::exp(total[a] - hi) + std::exp(part[a] - hi));
        }
        out.parts.push_back(detail::log_sum_exp(t.data(), l));
    }
    for (std::size_t a = 0; a < l; ++a) total[a] += tree.log_weights[a];
    out.lhs = detail::log_sum_exp(total.data(), l);
    return out;
}

/// E log Σ v Σ_j A_j  <=  (log n)/x_0 + max_j E log Σ v A_j.
struct SplitCheck {
    double lhs = 0.0;
    double lhs_se = 0.0;
    double rhs = 0.0;
    double max_part = 0.0;
    double max_part_se = 0.0;
    int parts = 0;
};

using PartsFn = std::function<std::vector<std::vector<double>>(const CascadeTree&, const TreeGaussianField&)>;

inline SplitCheck log_sum_split_check(const MixedModel& model, const Path& path, const PartsFn& parts_fn,
                                      int replications, int fanout, std::uint64_t seed, int threads = 1) {
    require(path.x(0) > 0.0, "split bound needs x_0 > 0");
    require(replications >= 2, "need at least 2 replications");
    const std::vector<Matrix> zinc = increments(model, path);
    const std::vector<double> yv = detail::y_variances(model, path);
    std::vector<SplitDraw> draws(static_cast<std::size_t>(replications));
    parallel_for(draws.size(), threads, [&](std::size_t b) {
        Rng rng = make_rng(seed, Stream::Cascade, b);
        const CascadeTree tree = detail::build_cascade(path.xs(), fanout, rng, true);
        const TreeGaussianField f = detail::build_fields(tree, zinc, yv, rng);
        draws[b] = log_sum_split_draw(tree, parts_fn(tree, f));
    });
    SplitCheck out;
    out.parts = static_cast<int>(draws.front().parts.size());
    std::vector<double> lhs;
    for (const auto& d : draws) lhs.push_back(d.lhs);
    const MeanError ml = mean_error(lhs);
    out.lhs = ml.mean;
    out.lhs_se = ml.std_error;
    out.max_part = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < out.parts; ++j) {
        std::vector<double> v;
        for (const auto& d : draws) v.push_back(d.parts[static_cast<std::size_t>(j)]);
        const MeanError mj = mean_error(v);
        if (mj.mean > out.max_part) {
            out.max_part = mj.mean;
            out.max_part_se = mj.std_error;
        }
    }
    out.rhs = std::log(static_cast<double>(out.parts)) / path.x(0) + out.max_part;
    return out;
}

} // namespace vecspin
