#pragma once

// Monte Carlo estimators over independent replicas. Sample i always uses
// sample_index = first_sample + i under the master seed, and per-sample results
// are merged in index order, so estimates do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "perc/cluster.hpp"
#include "perc/disjoint_paths.hpp"
#include "perc/error.hpp"
#include "perc/explorer.hpp"
#include "perc/lattice.hpp"
#include "perc/random_field.hpp"
#include "perc/stats.hpp"

namespace perc {

struct EstimatorConfig {
    std::uint64_t n_samples = 10'000;
    std::uint64_t master_seed = 1;
    GrowthBudget budget;
    /// 0 = PERC_WORKERS or hardware concurrency.
    unsigned parallel_workers = 1;
    std::uint64_t first_sample = 0;

    void validate() const {
        if (n_samples < 1) throw UsageError("n_samples must be >= 1");
        budget.validate();
    }

    FieldConfig field(double p, std::uint64_t i) const { return FieldConfig(master_seed, p, first_sample + i); }
};

inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PERC_WORKERS")) {
        int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates fn(i) for i in [0, n) across workers; results land at their sample position.
template <class T, class Fn>
std::vector<T> run_samples(std::uint64_t n, unsigned workers, Fn&& fn) {
    std::vector<T> out(n);
    workers = std::max(1u, std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(std::max<std::uint64_t>(n, 1))));
    if (workers == 1) {
        for (std::uint64_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::uint64_t> next{0};
    constexpr std::uint64_t chunk = 64;
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::uint64_t b; (b = next.fetch_add(chunk)) < n;)
                    for (std::uint64_t i = b; i < std::min(n, b + chunk); ++i) out[i] = fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
                next.store(n);
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline PointEstimate tally(const std::vector<Outcome>& outcomes) {
    std::uint64_t yes = 0, no = 0, ind = 0;
    for (auto o : outcomes) {
        if (o == Outcome::Yes) ++yes;
        else if (o == Outcome::No) ++no;
        else ++ind;
    }
    return bernoulli_estimate(yes, no, ind);
}

// ---------------------------------------------------------------------------
// Series kernels. A kernel maps one sample's edge source to one observation per scale; all scales
// of a series share the sample. Kernels accept any EdgeSource so tests can run them on restricted
// fields.

using Kind = ScaleAccumulator::Kind;

/// Feeds samples [first, first + n) through the kernel into acc, in sample order.
template <class Kernel, class MakeField>
void accumulate(SeriesAccumulator& acc, const Kernel& kernel, std::uint64_t first, std::uint64_t n, unsigned workers,
                MakeField&& make_field) {
    auto obs = run_samples<std::vector<Observation>>(n, workers, [&](std::uint64_t i) {
        return kernel(make_field(first + i));
    });
    for (const auto& o : obs) acc.add(o);
}

template <class Kernel>
SeriesAccumulator run_series(const Kernel& kernel, double p, const EstimatorConfig& cfg) {
    cfg.validate();
    SeriesAccumulator acc(kernel.kinds());
    accumulate(acc, kernel, cfg.first_sample, cfg.n_samples, cfg.parallel_workers,
               [&](std::uint64_t k) { return FieldConfig(cfg.master_seed, p, k); });
    return acc;
}

inline void require_ascending(const std::vector<std::int64_t>& v, const char* what, std::int64_t min) {
    if (v.empty()) throw UsageError(std::string(what) + " must be nonempty");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < min) throw UsageError(std::string(what) + " must be >= " + std::to_string(min));
        if (i && v[i] <= v[i - 1]) throw UsageError(std::string(what) + " must be strictly ascending");
    }
}

inline Observation indicator(bool yes) { return yes ? 1.0 : 0.0; }

/// 0 <-> dQ_r inside Q_r for every radius from one growth of C(0; Q_rmax): the event at r holds iff
/// the cluster reaches sup-norm > r - L, since the first such vertex on any path is still inside Q_r.
struct OneArmSeries {
    LatticeSpec spec;
    std::vector<std::int64_t> radii;
    GrowthBudget budget;

    OneArmSeries(LatticeSpec s, std::vector<std::int64_t> r, GrowthBudget b)
        : spec(std::move(s)), radii(std::move(r)), budget(b) {
        require_ascending(radii, "radii", 1);
        budget.validate();
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(radii.size(), Kind::Bernoulli); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        const auto rmax = radii.back();
        const auto range = spec.range();
        ClusterGrowth<Field> g(spec, field, budget, Box(spec.dimension(), rmax));
        g.add_root(Point::origin(spec.dimension()));
        std::int64_t reach = 0;
        auto st = g.run([&](const Point& x) {
            reach = std::max(reach, x.linf());
            return reach > rmax - range;
        });
        std::vector<Observation> out;
        for (auto r : radii) {
            if (reach > r - range) out.push_back(1.0);
            else if (st == ClusterGrowth<Field>::Status::Truncated) out.push_back(std::nullopt);
            else out.push_back(0.0);
        }
        return out;
    }
};

/// P(|C(0)| > n) for every threshold from one growth capped at the largest threshold.
struct ClusterTail {
    LatticeSpec spec;
    std::vector<std::int64_t> thresholds;
    GrowthBudget budget;

    ClusterTail(LatticeSpec s, std::vector<std::int64_t> t, GrowthBudget b)
        : spec(std::move(s)), thresholds(std::move(t)), budget(b) {
        require_ascending(thresholds, "thresholds", 1);
        budget.validate();
        if (budget.max_vertices < static_cast<std::uint64_t>(thresholds.back()))
            throw UsageError("budget.max_vertices (" + std::to_string(budget.max_vertices) +
                             ") is below the largest threshold (" + std::to_string(thresholds.back()) + ")");
        // a volume cutoff at the largest threshold already proves |C| > threshold
        budget.max_vertices = static_cast<std::uint64_t>(thresholds.back());
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(thresholds.size(), Kind::Bernoulli); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        auto c = grow_cluster(spec, field, Point::origin(spec.dimension()), std::nullopt, budget);
        std::vector<Observation> out;
        for (auto n : thresholds) {
            if (c.size() > static_cast<std::uint64_t>(n) || c.truncated == Truncation::Volume) out.push_back(1.0);
            else if (c.truncated == Truncation::None) out.push_back(0.0);
            else out.push_back(std::nullopt);
        }
        return out;
    }
};

/// P(0 <-> k e_1) for several k from one cluster per sample. Each observation is the fraction of the
/// 2d axis points at distance k reached (equal in law by reflection and permutation symmetry); the
/// standard error is the sample standard deviation of that fraction over sqrt(n). A truncated
/// growth is indeterminate at distance k unless all of its axis points were already reached.
struct TwoPointAxis {
    LatticeSpec spec;
    std::vector<std::int64_t> distances;
    GrowthBudget budget;

    TwoPointAxis(LatticeSpec s, std::vector<std::int64_t> k, GrowthBudget b)
        : spec(std::move(s)), distances(std::move(k)), budget(b) {
        require_ascending(distances, "axis distances", 1);
        budget.validate();
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(distances.size(), Kind::Mean); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        const auto d = spec.dimension();
        auto c = grow_cluster(spec, field, Point::origin(d), std::nullopt, budget);
        std::vector<Observation> out;
        for (auto k : distances) {
            std::size_t hits = 0;
            for (std::size_t a = 0; a < d; ++a)
                hits += c.contains(Point::axis(d, a, k)) + c.contains(Point::axis(d, a, -k));
            if (c.is_truncated() && hits < 2 * d) out.push_back(std::nullopt);
            else out.push_back(static_cast<double>(hits) / static_cast<double>(2 * d));
        }
        return out;
    }
};

/// {y_1 <-> dQ_r} o ... o {y_l <-> dQ_r} over ascending radii. The event at r' > r implies the event
/// at r (cut each witness path at its first dQ_r vertex), so a sample stops at its first No.
struct MultiArmSeries {
    LatticeSpec spec;
    std::vector<std::int64_t> radii;
    std::vector<Point> points;
    GrowthBudget budget;

    MultiArmSeries(LatticeSpec s, std::vector<std::int64_t> r, std::vector<Point> y, GrowthBudget b)
        : spec(std::move(s)), radii(std::move(r)), points(std::move(y)), budget(b) {
        require_ascending(radii, "radii", 1);
        detail::check_arm_points(spec, radii.front(), points);
        budget.validate();
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(radii.size(), Kind::Bernoulli); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        std::vector<Observation> out(radii.size(), 0.0);
        for (std::size_t k = 0; k < radii.size(); ++k) {
            auto o = multi_arm_event(spec, field, radii[k], points, budget).outcome;
            if (o == Outcome::No) break;
            out[k] = o == Outcome::Yes ? Observation(1.0) : std::nullopt;
        }
        return out;
    }
};

/// X_r = |{z in dQ_r : 0 <-> z in Q_r}| for each radius.
struct BoundarySums {
    LatticeSpec spec;
    std::vector<std::int64_t> radii;
    GrowthBudget budget;

    BoundarySums(LatticeSpec s, std::vector<std::int64_t> r, GrowthBudget b)
        : spec(std::move(s)), radii(std::move(r)), budget(b) {
        require_ascending(radii, "radii", 1);
        budget.validate();
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(radii.size(), Kind::Mean); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        std::vector<Observation> out;
        for (auto r : radii) {
            auto c = census(spec, field, r, 0, budget);
            if (c.X_j_truncated) out.push_back(std::nullopt);
            else out.push_back(static_cast<double>(c.X_j));
        }
        return out;
    }
};

/// Paired indicators per sample: {X_j >= L^2, A_j <= c L^4} for each c, then the one-arm event last.
struct Lowmass {
    LatticeSpec spec;
    std::int64_t j, L;
    std::vector<double> cs;
    std::optional<std::int64_t> buffer;
    GrowthBudget budget;

    Lowmass(LatticeSpec s, std::int64_t j_, std::int64_t L_, std::vector<double> c, std::optional<std::int64_t> B,
            GrowthBudget b)
        : spec(std::move(s)), j(j_), L(L_), cs(std::move(c)), buffer(B), budget(b) {
        if (j < 1 || L < 1) throw UsageError("lowmass needs j >= 1 and L >= 1");
        if (cs.empty()) throw UsageError("lowmass needs at least one c");
        for (auto x : cs)
            if (!(x > 0)) throw UsageError("lowmass constant c must be > 0");
        if (buffer && *buffer < 0) throw UsageError("envelope buffer must be >= 0");
        budget.validate();
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(cs.size() + 1, Kind::Bernoulli); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        auto b = census(spec, field, j, L, budget, buffer);
        const double L2 = static_cast<double>(L) * static_cast<double>(L);
        std::vector<Observation> out;
        for (auto c : cs) {
            if (b.X_j_truncated) out.push_back(std::nullopt);
            else if (static_cast<double>(b.X_j) < L2) out.push_back(0.0);
            else if (static_cast<double>(b.A_j) > c * L2 * L2) out.push_back(0.0);  // A_j only grows with more room
            else if (b.A_j_truncated) out.push_back(std::nullopt);
            else out.push_back(1.0);
        }
        out.push_back(b.X_j_truncated ? std::nullopt : indicator(b.one_arm));
        return out;
    }
};

/// |C(0; envelope) n Q_r|^2 for each radius from one growth. Without an envelope the growth is
/// unrestricted and budget-capped.
struct SecondMoments {
    LatticeSpec spec;
    std::vector<std::int64_t> radii;
    std::optional<std::int64_t> envelope_radius;
    GrowthBudget budget;

    SecondMoments(LatticeSpec s, std::vector<std::int64_t> r, std::optional<std::int64_t> env, GrowthBudget b)
        : spec(std::move(s)), radii(std::move(r)), envelope_radius(env), budget(b) {
        require_ascending(radii, "radii", 1);
        if (envelope_radius && *envelope_radius < radii.back()) throw UsageError("envelope must contain Q_r");
        budget.validate();
    }
    std::vector<Kind> kinds() const { return std::vector<Kind>(radii.size(), Kind::Mean); }

    template <EdgeSource Field>
    std::vector<Observation> operator()(const Field& field) const {
        const auto d = spec.dimension();
        std::optional<Box> region;
        if (envelope_radius) region = Box(d, *envelope_radius);
        auto c = grow_cluster(spec, field, Point::origin(d), region, budget);
        std::vector<Observation> out;
        for (auto r : radii) {
            if (c.is_truncated()) {
                out.push_back(std::nullopt);
                continue;
            }
            double in = 0;
            for (const auto& m : c.members.points())
                if (m.linf() <= r) in += 1;
            out.push_back(in * in);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Point estimators

inline PointEstimate estimate_one_arm(const LatticeSpec& spec, double p, std::int64_t r, const EstimatorConfig& cfg) {
    if (r < 1) throw UsageError("one-arm radius must be >= 1");
    cfg.validate();
    auto outcomes = run_samples<Outcome>(cfg.n_samples, cfg.parallel_workers, [&](std::uint64_t i) {
        return one_arm_event(spec, cfg.field(p, i), r, cfg.budget).outcome;
    });
    return tally(outcomes);
}

inline std::vector<PointEstimate> estimate_one_arm_series(const LatticeSpec& spec, double p,
                                                          const std::vector<std::int64_t>& radii,
                                                          const EstimatorConfig& cfg) {
    return run_series(OneArmSeries(spec, radii, cfg.budget), p, cfg).estimates();
}

/// Estimates are nonincreasing in n by construction: every threshold reads the same clusters.
inline std::vector<PointEstimate> estimate_cluster_tail(const LatticeSpec& spec, double p,
                                                        const std::vector<std::int64_t>& thresholds,
                                                        const EstimatorConfig& cfg) {
    return run_series(ClusterTail(spec, thresholds, cfg.budget), p, cfg).estimates();
}

/// Frequency of x in C(0); a growth truncated before finding x is indeterminate.
inline PointEstimate estimate_two_point(const LatticeSpec& spec, double p, const Point& x, const EstimatorConfig& cfg) {
    cfg.validate();
    spec.check(x);
    if (x.is_origin()) throw UsageError("two-point target must differ from the origin");
    const Point o = Point::origin(spec.dimension());
    auto outcomes = run_samples<Outcome>(cfg.n_samples, cfg.parallel_workers, [&](std::uint64_t i) {
        auto field = cfg.field(p, i);
        ClusterGrowth<FieldConfig> g(spec, field, cfg.budget);
        g.add_root(o);
        switch (g.run([&](const Point& y) { return y == x; })) {
            case ClusterGrowth<FieldConfig>::Status::Stopped: return Outcome::Yes;
            case ClusterGrowth<FieldConfig>::Status::Exhausted:
                return g.cluster().truncated == Truncation::None ? Outcome::No : Outcome::Indeterminate;
            default: return Outcome::Indeterminate;
        }
    });
    return tally(outcomes);
}

inline std::vector<PointEstimate> estimate_two_point_axis_series(const LatticeSpec& spec, double p,
                                                                 const std::vector<std::int64_t>& distances,
                                                                 const EstimatorConfig& cfg) {
    return run_series(TwoPointAxis(spec, distances, cfg.budget), p, cfg).estimates();
}

inline PointEstimate estimate_multi_arm(const LatticeSpec& spec, double p, std::int64_t r,
                                        const std::vector<Point>& points, const EstimatorConfig& cfg) {
    cfg.validate();
    if (r < 1) throw UsageError("multi-arm radius must be >= 1");
    detail::check_arm_points(spec, r, points);
    auto outcomes = run_samples<Outcome>(cfg.n_samples, cfg.parallel_workers, [&](std::uint64_t i) {
        return multi_arm_event(spec, cfg.field(p, i), r, points, cfg.budget).outcome;
    });
    return tally(outcomes);
}

inline std::vector<PointEstimate> estimate_multi_arm_series(const LatticeSpec& spec, double p,
                                                            const std::vector<std::int64_t>& radii,
                                                            const std::vector<Point>& points,
                                                            const EstimatorConfig& cfg) {
    return run_series(MultiArmSeries(spec, radii, points, cfg.budget), p, cfg).estimates();
}

/// S(r,p) = E[X_r], standard error from the sample variance of X_r.
inline PointEstimate boundary_sum(const LatticeSpec& spec, double p, std::int64_t r, const EstimatorConfig& cfg) {
    return run_series(BoundarySums(spec, {r}, cfg.budget), p, cfg).estimates().front();
}

// ---------------------------------------------------------------------------
// Critical point from the boundary-sum criterion S(r,p) >= 1

namespace detail {
struct BoundaryCount {
    std::uint64_t x = 0;
    bool settled = false;    // reached the requested count
    bool truncated = false;  // vertex budget hit first
};

/// |C(0;Q_r) n dQ_r| up to `need`, searching vertices farthest from the origin first. The final
/// count does not depend on the order; the order only makes supercritical samples reach `need` early.
template <EdgeSource Field>
BoundaryCount count_boundary_hits(const LatticeSpec& spec, const Field& field, std::int64_t r, double need,
                                  std::uint64_t max_vertices) {
    const Box q(spec.dimension(), r);
    const auto range = spec.range();
    PointIndex seen;
    // (linf, -index): farthest first, then discovery order
    std::priority_queue<std::pair<std::int64_t, std::int64_t>> frontier;
    BoundaryCount out;
    auto visit = [&](const Point& y) {
        auto [idx, fresh] = seen.insert(y);
        if (!fresh) return;
        if (q.boundary_contains(y, range)) ++out.x;
        frontier.emplace(y.linf(), -static_cast<std::int64_t>(idx));
    };
    visit(Point::origin(spec.dimension()));
    while (!frontier.empty()) {
        if (static_cast<double>(out.x) >= need) {
            out.settled = true;
            return out;
        }
        const Point u = seen[static_cast<std::size_t>(-frontier.top().second)];
        frontier.pop();
        for (const auto& off : spec.offsets()) {
            Point y = u + off;
            if (!q.contains(y) || seen.contains(y) || !field.is_open(u, y)) continue;
            if (seen.size() >= max_vertices) {
                out.truncated = true;
                return out;
            }
            visit(y);
        }
    }
    out.settled = static_cast<double>(out.x) >= need;
    return out;
}
}  // namespace detail

/// Decides mean_i X_r(sample i) >= target on the first n_samples replicas. Samples are visited in
/// index order in fixed batches; each growth stops as soon as the running lower bound settles the
/// question, which keeps supercritical probes cheap without changing the decision.
inline bool boundary_sum_at_least(const LatticeSpec& spec, double p, std::int64_t r, const EstimatorConfig& cfg,
                                  double target = 1.0) {
    cfg.validate();
    const double need_total = target * static_cast<double>(cfg.n_samples);
    double have = 0;
    const std::uint64_t batch = 256 * resolve_workers(cfg.parallel_workers);
    for (std::uint64_t start = 0; start < cfg.n_samples; start += batch) {
        const auto count = std::min(batch, cfg.n_samples - start);
        const double remaining = need_total - have;
        using X = detail::BoundaryCount;
        auto xs = run_samples<X>(count, cfg.parallel_workers, [&](std::uint64_t k) {
            return detail::count_boundary_hits(spec, cfg.field(p, start + k), r, remaining, cfg.budget.max_vertices);
        });
        bool truncated = false;
        for (const auto& x : xs) {
            if (x.settled) return true;
            have += static_cast<double>(x.x);
            truncated = truncated || x.truncated;
        }
        if (have >= need_total) return true;
        if (truncated)
            throw DiagnosticError("boundary-sum criterion undecided at p=" + std::to_string(p) +
                                  ": growth budget exhausted; raise budget.max_vertices");
    }
    return false;
}

struct PcEstimate {
    double p_hat = 0;
    double p_low = 0;
    double p_high = 1;
    std::int64_t r = 0;
    std::uint64_t samples_per_probe = 0;
    std::size_t probes = 0;

    nlohmann::json to_json() const {
        return {{"p_hat", p_hat},   {"bracket", {p_low, p_high}},       {"criterion_radius", r},
                {"samples_per_probe", samples_per_probe}, {"probes", probes}};
    }
};

/// Bisection on p for S(r,p) >= 1 with common random numbers across probes, so the sampled
/// criterion is monotone in p. Converges to the finite-r crossing, which approaches p_c only as r grows.
inline PcEstimate estimate_pc(const LatticeSpec& spec, std::int64_t r, const EstimatorConfig& cfg, double tolerance) {
    cfg.validate();
    if (r < 1) throw UsageError("criterion radius must be >= 1");
    if (!(tolerance > 0)) throw UsageError("tolerance must be > 0");
    const Box q(spec.dimension(), r);
    // S(r,0) = 1[0 in dQ_r]; S(r,1) = |dQ_r| >= 1
    if (q.boundary_contains(Point::origin(spec.dimension()), spec.range()))
        throw DiagnosticError("criterion not bracketed: origin lies on dQ_r, so S(r,0) >= 1");
    PcEstimate est;
    est.r = r;
    est.samples_per_probe = cfg.n_samples;
    double lo = 0.0, hi = 1.0;
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        ++est.probes;
        if (boundary_sum_at_least(spec, mid, r, cfg)) hi = mid;
        else lo = mid;
    }
    est.p_low = lo;
    est.p_high = hi;
    est.p_hat = 0.5 * (lo + hi);
    return est;
}

// ---------------------------------------------------------------------------
// Log-log exponent fits

struct FitOptions {
    /// Scales below this are left out of the window.
    double min_scale = 4;
    double max_indeterminate = 0.01;
};

struct RatioRow {
    double scale = 0, scale2 = 0;
    double ratio = 0, ratio_error = 0;
    double predicted = 0;  // (scale2/scale)^slope
    bool consistent = false;  // within 2 combined standard errors (including the slope's)
};

struct ExponentFit {
    double slope = 0;
    double intercept = 0;
    double slope_std_error = 0;
    std::vector<double> fit_window;
    std::vector<double> weights;
    bool weighted = true;
    std::vector<RatioRow> ratios;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : ratios)
            rows.push_back({{"scale", r.scale}, {"scale2", r.scale2}, {"ratio", r.ratio}, {"ratio_error", r.ratio_error},
                            {"predicted", r.predicted}, {"consistent", r.consistent}});
        return {{"slope", slope},       {"intercept", intercept}, {"slope_std_error", slope_std_error},
                {"fit_window", fit_window}, {"weights", weights}, {"weighted", weighted}, {"ratios", rows}};
    }
};

/// Weighted least squares of log(value) on log(scale). Weights are inverse variances of
/// log(value) by the delta method, (value/std_error)^2; if any usable point has zero error the
/// fit is unweighted and the slope error comes from the residuals.
inline ExponentFit fit_exponent(const std::vector<std::pair<double, PointEstimate>>& series, const FitOptions& opt = {}) {
    std::vector<double> xs, ys, ws;
    ExponentFit fit;
    bool any_zero = false;
    for (const auto& [scale, e] : series) {
        if (scale < opt.min_scale || !(e.value > 0) || e.indeterminate_fraction >= opt.max_indeterminate) continue;
        fit.fit_window.push_back(scale);
        xs.push_back(std::log(scale));
        ys.push_back(std::log(e.value));
        any_zero = any_zero || !(e.std_error > 0);
        ws.push_back(e.std_error > 0 ? std::pow(e.value / e.std_error, 2) : 1.0);
    }
    if (xs.size() < 3)
        throw UsageError("exponent fit needs >= 3 usable points, have " + std::to_string(xs.size()));
    if (any_zero) std::fill(ws.begin(), ws.end(), 1.0);
    fit.weighted = !any_zero;
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sw += ws[i];
        sx += ws[i] * xs[i];
        sy += ws[i] * ys[i];
    }
    const double xbar = sx / sw, ybar = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += ws[i] * (xs[i] - xbar) * (xs[i] - xbar);
        sxy += ws[i] * (xs[i] - xbar) * (ys[i] - ybar);
    }
    if (!(sxx > 0)) throw UsageError("exponent fit needs at least two distinct scales");
    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    if (fit.weighted) {
        fit.slope_std_error = std::sqrt(1.0 / sxx);
    } else {
        double rss = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
            rss += r * r;
        }
        fit.slope_std_error = std::sqrt(rss / static_cast<double>(xs.size() - 2) / sxx);
    }
    fit.weights = ws;

    // ratio test between every pair of window scales, prediction (s2/s1)^slope
    for (std::size_t a = 0; a < series.size(); ++a)
        for (std::size_t b = a + 1; b < series.size(); ++b) {
            const auto& [s1, e1] = series[a];
            const auto& [s2, e2] = series[b];
            if (std::find(fit.fit_window.begin(), fit.fit_window.end(), s1) == fit.fit_window.end()) continue;
            if (std::find(fit.fit_window.begin(), fit.fit_window.end(), s2) == fit.fit_window.end()) continue;
            RatioRow row;
            row.scale = s1;
            row.scale2 = s2;
            row.ratio = e2.value / e1.value;
            row.ratio_error = row.ratio * std::hypot(e1.std_error / e1.value, e2.std_error / e2.value);
            row.predicted = std::pow(s2 / s1, fit.slope);
            const double pred_err = row.predicted * std::log(s2 / s1) * fit.slope_std_error;
            row.consistent = std::abs(row.ratio - row.predicted) <= 2.0 * std::hypot(row.ratio_error, pred_err) + 1e-12;
            fit.ratios.push_back(row);
        }
    return fit;
}


// ---------------------------------------------------------------------------
// Low-mass statistic: P(X_j >= L^2, A_j <= c L^4) against P(0 <-> dQ_j) on the same samples

struct LowmassPoint {
    double c = 0;
    PointEstimate lhs;
    PointEstimate rhs;
    double ratio() const { return rhs.value > 0 ? lhs.value / rhs.value : 0.0; }
};

inline std::vector<LowmassPoint> lowmass_sweep(const LatticeSpec& spec, double p, std::int64_t j, std::int64_t L,
                                               const std::vector<double>& cs, const EstimatorConfig& cfg,
                                               std::optional<std::int64_t> buffer = {}) {
    Lowmass kernel(spec, j, L, cs, buffer, cfg.budget);
    auto est = run_series(kernel, p, cfg).estimates();
    std::vector<LowmassPoint> out;
    for (std::size_t i = 0; i < cs.size(); ++i) out.push_back({cs[i], est[i], est.back()});
    return out;
}

inline LowmassPoint lowmass_statistic(const LatticeSpec& spec, double p, std::int64_t j, std::int64_t L, double c,
                                      const EstimatorConfig& cfg, std::optional<std::int64_t> buffer = {}) {
    return lowmass_sweep(spec, p, j, L, {c}, cfg, buffer).front();
}

// ---------------------------------------------------------------------------
// Second moment E|C(0) n Q_r|^2 = sum_{x,y in Q_r} P(0<->x, 0<->y)

struct SecondMoment {
    PointEstimate moment;
    PointEstimate normalized;  // moment / r^6
};

inline SecondMoment normalize_second_moment(const PointEstimate& moment, std::int64_t r) {
    SecondMoment out{moment, moment};
    const double r6 = std::pow(static_cast<double>(r), 6);
    out.normalized.value /= r6;
    out.normalized.std_error /= r6;
    return out;
}

/// With envelope_radius set, connectivity is restricted to Q_envelope; otherwise unrestricted
/// budget-capped growth, truncated samples excluded.
inline SecondMoment second_moment_check(const LatticeSpec& spec, double p, std::int64_t r, const EstimatorConfig& cfg,
                                        std::optional<std::int64_t> envelope_radius = {}) {
    auto est = run_series(SecondMoments(spec, {r}, envelope_radius, cfg.budget), p, cfg).estimates();
    return normalize_second_moment(est.front(), r);
}

}  // namespace perc
