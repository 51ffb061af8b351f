#pragma once

// Cluster-level measurements: the one-arm event, the boundary census
// (X_j, A_j), the scale-s regularity events, resampled local badness, and the
// box-by-box exploration of the origin's cluster inside Q_j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "perc/cluster.hpp"
#include "perc/disjoint_paths.hpp"
#include "perc/error.hpp"
#include "perc/lattice.hpp"
#include "perc/random_field.hpp"
#include "perc/stats.hpp"

namespace perc {

// ---------------------------------------------------------------------------
// One-arm event

struct OneArmResult {
    Outcome outcome = Outcome::No;
    Truncation truncated = Truncation::None;
    bool reached() const { return outcome == Outcome::Yes; }
};

/// from <-> dQ_r. Growth is confined to Q_r: a witness path's prefix up to its first boundary
/// hit never leaves Q_r. Stops at the first boundary vertex found.
template <EdgeSource Field>
OneArmResult one_arm_event(const LatticeSpec& spec, const Field& field, std::int64_t r, const GrowthBudget& budget,
                           std::optional<Point> from = {}) {
    if (r < 1) throw UsageError("one-arm radius must be >= 1");
    const Box q(spec.dimension(), r);
    const Point start = from.value_or(Point::origin(spec.dimension()));
    ClusterGrowth<Field> g(spec, field, budget, q);
    g.add_root(start);
    const auto range = spec.range();
    auto st = g.run([&](const Point& x) { return q.boundary_contains(x, range); });
    switch (st) {
        case ClusterGrowth<Field>::Status::Stopped: return {Outcome::Yes, g.cluster().truncated};
        case ClusterGrowth<Field>::Status::Exhausted: return {Outcome::No, g.cluster().truncated};
        case ClusterGrowth<Field>::Status::Truncated: break;
    }
    return {Outcome::Indeterminate, Truncation::Volume};
}

// ---------------------------------------------------------------------------
// Boundary census

struct BoundaryCensus {
    std::int64_t j = 0;
    std::int64_t L = 0;
    std::uint64_t X_j = 0;
    std::uint64_t A_j = 0;
    /// Phase-2 growth hit the vertex budget or an open edge left the containment envelope.
    bool A_j_truncated = false;
    /// Phase-1 growth inside Q_j hit the vertex budget; X_j is then a lower bound.
    bool X_j_truncated = false;
    bool one_arm = false;

    nlohmann::json to_json() const {
        return {{"j", j}, {"L", L}, {"X_j", X_j}, {"A_j", A_j}, {"A_j_truncated", A_j_truncated},
                {"X_j_truncated", X_j_truncated}, {"one_arm", one_arm}};
    }
};

/// X_j = |C(0;Q_j) n dQ_j| and A_j = |{y in Q_{j+L} \ Q_j : 0 <-> y}|, the latter with growth
/// continued from the phase-1 cluster inside the envelope Q_{j+L+buffer} (buffer defaults to L).
template <EdgeSource Field>
BoundaryCensus census(const LatticeSpec& spec, const Field& field, std::int64_t j, std::int64_t L,
                      const GrowthBudget& budget, std::optional<std::int64_t> buffer = {}) {
    if (j < 1) throw UsageError("census radius j must be >= 1");
    if (L < 0) throw UsageError("census annulus width L must be >= 0");
    const auto d = spec.dimension();
    const auto range = spec.range();
    const Box qj(d, j);
    BoundaryCensus out;
    out.j = j;
    out.L = L;

    ClusterGrowth<Field> g(spec, field, budget, qj);
    g.add_root(Point::origin(d));
    out.X_j_truncated = g.run() == ClusterGrowth<Field>::Status::Truncated;
    for (const auto& m : g.cluster().members.points())
        if (qj.boundary_contains(m, range)) ++out.X_j;
    out.one_arm = out.X_j >= 1;
    if (L == 0) return out;
    if (out.X_j_truncated) {
        out.A_j_truncated = true;
        return out;
    }

    const auto B = buffer.value_or(L);
    if (B < 0) throw UsageError("census buffer must be >= 0");
    g.set_reveal_escapes(true);
    g.extend(Box(d, j + L + B));
    const bool capped = g.run() == ClusterGrowth<Field>::Status::Truncated;
    out.A_j_truncated = capped || g.escaped();
    const Box outer(d, j + L);
    for (const auto& m : g.cluster().members.points())
        if (outer.contains(m) && !qj.contains(m)) ++out.A_j;
    return out;
}

// ---------------------------------------------------------------------------
// Regularity events at scale s

/// Threshold for the local volume condition: s^4 log^4 s (natural log).
inline double local_volume_threshold(std::int64_t s) {
    const double ls = std::log(static_cast<double>(s));
    return std::pow(static_cast<double>(s), 4) * std::pow(ls, 4);
}
/// Threshold for the disjoint-crossing condition: log^3 s.
inline double crossing_threshold(std::int64_t s) { return std::pow(std::log(static_cast<double>(s)), 3); }
/// Threshold for the global volume condition: s^4 log^7 s.
inline double global_volume_threshold(std::int64_t s) {
    const double ls = std::log(static_cast<double>(s));
    return std::pow(static_cast<double>(s), 4) * std::pow(ls, 7);
}

/// round(s^exponent), never below s.
inline std::int64_t scale_radius(std::int64_t s, double exponent) {
    const double r = std::pow(static_cast<double>(s), exponent);
    if (!(r < static_cast<double>(kCoordinateLimit) / 4)) throw ResourceError("scale radius s^e overflows coordinates");
    return std::max<std::int64_t>(s, std::llround(r));
}

struct LocalRegularity {
    std::uint64_t inner_count = 0;        // max_y |C(y; x+Q_R) n (x+Q_s)|
    std::uint64_t disjoint_crossings = 0;  // x+Q_s to x+dQ_R
    bool volume_ok = false;
    bool crossings_ok = false;
    bool holds() const { return volume_ok && crossings_ok; }
};

/// The locally decidable regularity event inside the envelope x+Q_R.
template <EdgeSource Field>
LocalRegularity local_regularity(const LatticeSpec& spec, const Field& field, const Point& x, std::int64_t s,
                                 std::int64_t envelope_radius, Disjointness mode = Disjointness::Edge) {
    const auto range = spec.range();
    if (envelope_radius < s + range)
        throw UsageError("envelope radius " + std::to_string(envelope_radius) + " must be at least s + L = " +
                         std::to_string(s + range));
    const Box inner(s, x);
    const Box envelope(envelope_radius, x);
    GrowthBudget unlimited{static_cast<std::uint64_t>(envelope.volume()) + 1, std::nullopt};
    PointIndex covered;
    OpenSubgraph sub;
    LocalRegularity out;
    for_each_in_box(inner, [&](const Point& y) {
        if (covered.contains(y)) return;
        auto c = grow_cluster(spec, field, y, envelope, unlimited);
        std::uint64_t in_inner = 0;
        for (const auto& m : c.members.points())
            if (inner.contains(m)) {
                ++in_inner;
                covered.insert(m);
            }
        out.inner_count = std::max(out.inner_count, in_inner);
        sub.merge(c);
    });
    std::vector<Point> shell;
    for (const auto& v : sub.vertices().points())
        if (envelope.boundary_contains(v, range)) shell.push_back(v);
    out.disjoint_crossings = count_disjoint_crossings(sub, inner, shell, mode);
    out.volume_ok = static_cast<double>(out.inner_count) < local_volume_threshold(s);
    out.crossings_ok = static_cast<double>(out.disjoint_crossings) <= crossing_threshold(s);
    return out;
}

struct RegularityParams {
    /// Envelope radius is s^envelope_exponent (2d in the proof; small by default).
    double envelope_exponent = 2.0;
    Disjointness disjointness = Disjointness::Edge;
    GrowthBudget budget;
};

struct RegularityReport {
    Point x;
    std::int64_t s = 0;
    std::int64_t envelope_radius = 0;
    bool T_s_holds = false;
    /// Unrestricted growth hit the budget before |C(x) n (x+Q_s)| crossed the threshold.
    bool T_s_indeterminate = false;
    bool T_s_loc_holds = false;
    std::uint64_t disjoint_crossings = 0;
    std::uint64_t inner_count = 0;
    std::uint64_t global_count = 0;

    nlohmann::json to_json() const {
        return {{"x", x},
                {"s", s},
                {"envelope_radius", envelope_radius},
                {"T_s_holds", T_s_holds},
                {"T_s_indeterminate", T_s_indeterminate},
                {"T_s_loc_holds", T_s_loc_holds},
                {"disjoint_crossings", disjoint_crossings},
                {"inner_count", inner_count},
                {"global_count", global_count}};
    }
};

template <EdgeSource Field>
RegularityReport regularity_check(const LatticeSpec& spec, const Field& field, const Point& x, std::int64_t s,
                                  const RegularityParams& params = {}) {
    if (s < 2) throw UsageError("regularity scale s must be >= 2");
    spec.check(x);
    RegularityReport rep;
    rep.x = x;
    rep.s = s;
    rep.envelope_radius = scale_radius(s, params.envelope_exponent);
    const Box envelope(rep.envelope_radius, x);
    if (envelope.volume() > static_cast<double>(params.budget.max_vertices))
        throw ResourceError("envelope x+Q_" + std::to_string(rep.envelope_radius) + " has " +
                            std::to_string(envelope.volume()) + " vertices, over the budget of " +
                            std::to_string(params.budget.max_vertices));

    auto local = local_regularity(spec, field, x, s, rep.envelope_radius, params.disjointness);
    rep.inner_count = local.inner_count;
    rep.disjoint_crossings = local.disjoint_crossings;
    rep.T_s_loc_holds = local.holds();

    const Box inner(s, x);
    const double global_thr = global_volume_threshold(s);
    ClusterGrowth<Field> g(spec, field, params.budget);
    g.add_root(x);
    std::uint64_t count = 0;
    auto st = g.run([&](const Point& m) {
        if (inner.contains(m)) ++count;
        return static_cast<double>(count) >= global_thr;
    });
    rep.global_count = count;
    if (st == ClusterGrowth<Field>::Status::Stopped) {
        rep.T_s_holds = false;
    } else if (st == ClusterGrowth<Field>::Status::Truncated) {
        rep.T_s_holds = true;
        rep.T_s_indeterminate = true;
    } else {
        rep.T_s_holds = true;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Local badness by resampling around frozen spanning clusters

/// Edge states from a fixed table where present, otherwise from the base source.
template <EdgeSource Base>
struct FrozenOverlay {
    const std::unordered_map<Edge, bool, EdgeHash>* frozen;
    Base base;

    bool is_open(const Point& a, const Point& b) const {
        auto it = frozen->find(Edge(a, b));
        return it != frozen->end() ? it->second : base.is_open(a, b);
    }
};

struct LocalBadnessParams {
    /// T_s^loc envelope radius s^inner_exponent (2d in the proof).
    double inner_exponent = 2.0;
    /// Outer region radius s^outer_exponent (4d^2 in the proof).
    double outer_exponent = 4.0;
    Disjointness disjointness = Disjointness::Edge;
    /// Memory guard on the outer region volume.
    std::uint64_t max_region_vertices = 4'000'000;
};

struct LocalBadnessEstimate {
    PointEstimate failure;  // frequency of not-T_s^loc over the resamples
    std::uint64_t failures = 0;
    std::size_t spanning_clusters = 0;
    std::int64_t inner_radius = 0;
    std::int64_t outer_radius = 0;
    /// Frozen determining edges and their states, sorted.
    std::vector<std::pair<Edge, bool>> frozen;
    /// exp(-log^2 s), the comparison level for local badness.
    double threshold = 0;
};

/// Sub-configuration used for resample k.
inline FieldConfig resample_field(const FieldConfig& field, std::uint64_t k) {
    const std::uint64_t words[2] = {k, 0x6c6f63616c626164ULL};
    return FieldConfig(siphash24_words(field.seed, field.sample_index, words), field.p, k);
}

/// Freezes the spanning clusters of B = x+Q_{s^outer} (clusters of B meeting both x+dQ_{s^outer}
/// and x+dQ_{s^inner}, plus C(x;B)) together with their closed incident edges inside B, resamples
/// every other edge, and reports how often T_s^loc(x) fails.
inline LocalBadnessEstimate estimate_local_badness(const LatticeSpec& spec, const FieldConfig& field, const Point& x,
                                                   std::int64_t s, std::uint64_t resamples,
                                                   const LocalBadnessParams& params = {}) {
    if (resamples < 1) throw UsageError("resamples must be >= 1");
    if (s < 2) throw UsageError("regularity scale s must be >= 2");
    spec.check(x);
    LocalBadnessEstimate out;
    out.inner_radius = scale_radius(s, params.inner_exponent);
    out.outer_radius = std::max(out.inner_radius, scale_radius(s, params.outer_exponent));
    out.threshold = std::exp(-std::pow(std::log(static_cast<double>(s)), 2));
    const Box region(out.outer_radius, x);
    const Box inner_shell_box(out.inner_radius, x);
    if (region.volume() > static_cast<double>(params.max_region_vertices))
        throw ResourceError("local-badness region has " + std::to_string(region.volume()) +
                            " vertices, over the guard of " + std::to_string(params.max_region_vertices));
    const auto range = spec.range();
    GrowthBudget unlimited{static_cast<std::uint64_t>(region.volume()) + 1, std::nullopt};

    std::vector<Cluster> spanning;
    PointIndex covered;
    auto absorb = [&](Cluster c, bool force) {
        bool outer_hit = false, inner_hit = false;
        for (const auto& m : c.members.points()) {
            covered.insert(m);
            outer_hit = outer_hit || region.boundary_contains(m, range);
            inner_hit = inner_hit || inner_shell_box.boundary_contains(m, range);
        }
        if (force || (outer_hit && inner_hit)) spanning.push_back(std::move(c));
    };
    absorb(grow_cluster(spec, field, x, region, unlimited), true);
    for_each_in_box(inner_shell_box, [&](const Point& y) {
        if (!inner_shell_box.boundary_contains(y, range) || covered.contains(y)) return;
        absorb(grow_cluster(spec, field, y, region, unlimited), false);
    });
    out.spanning_clusters = spanning.size();

    std::unordered_map<Edge, bool, EdgeHash> frozen;
    for (const auto& c : spanning)
        for (const auto& u : c.members.points())
            for (const auto& off : spec.offsets()) {
                Point y = u + off;
                if (!region.contains(y)) continue;
                Edge e(u, y);
                if (!frozen.count(e)) frozen.emplace(e, field.is_open(u, y));
            }
    out.frozen.assign(frozen.begin(), frozen.end());
    std::sort(out.frozen.begin(), out.frozen.end());

    std::uint64_t failures = 0;
    for (std::uint64_t k = 0; k < resamples; ++k) {
        FrozenOverlay<FieldConfig> overlay{&frozen, resample_field(field, k)};
        if (!local_regularity(spec, overlay, x, s, out.inner_radius, params.disjointness).holds()) ++failures;
    }
    out.failures = failures;
    out.failure = bernoulli_estimate(failures, resamples - failures, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Box exploration inside Q_j

struct ExplorationStep {
    Point box;                       // anchor of q_i
    std::vector<Point> activated;    // boxes that became active during this step
    bool boundary_touch = false;     // some x in q_i n dQ_j has 0 <-> x through the explored boxes
    std::vector<Point> boundary_hits;
};

struct ExplorationTrace {
    std::int64_t j = 0;
    std::int64_t box_scale = 0;
    Point shift;
    std::vector<Point> initial_explored;  // E_1
    std::vector<Point> initial_active;    // A_1
    std::vector<ExplorationStep> steps;
    std::vector<Point> explored;          // E_tau, sorted
    std::size_t tau = 0;
    std::vector<Point> boundary_hits;     // sorted

    nlohmann::json to_json() const {
        nlohmann::json js = nlohmann::json::array();
        for (const auto& st : steps)
            js.push_back({{"box", st.box},
                          {"activated", st.activated},
                          {"boundary_touch", st.boundary_touch},
                          {"boundary_hits", st.boundary_hits}});
        return {{"j", j},
                {"box_scale", box_scale},
                {"shift", shift},
                {"initial_explored", initial_explored},
                {"initial_active", initial_active},
                {"steps", js},
                {"explored", explored},
                {"tau", tau},
                {"boundary_hits", boundary_hits}};
    }
};

namespace detail {
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    auto q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}
}  // namespace detail

/// Explores C(0; Q_j) box by box. The grid consists of the boxes (v + Q_{2s}) n Q_j with
/// v in (4s+1)Z^d + w. E_1 holds the boxes avoiding dQ_j; a box becomes active once a vertex in
/// it is reached from 0 by an open path whose other vertices all lie in explored boxes. Each step
/// explores the lexicographically least active box. Boxes are named by their anchor v.
template <EdgeSource Field>
ExplorationTrace box_exploration(const LatticeSpec& spec, const Field& field, std::int64_t j, std::int64_t box_scale,
                                 const Point& shift) {
    if (j < 1) throw UsageError("exploration radius j must be >= 1");
    if (box_scale < 0) throw UsageError("box scale must be >= 0");
    spec.check(shift);
    const auto d = spec.dimension();
    const auto range = spec.range();
    const std::int64_t half = 2 * box_scale;
    const std::int64_t pitch = 4 * box_scale + 1;
    const Box qj(d, j);

    ExplorationTrace tr;
    tr.j = j;
    tr.box_scale = box_scale;
    tr.shift = shift;

    auto box_of = [&](const Point& x) {
        Point k(d);
        for (std::size_t i = 0; i < d; ++i) k.set(i, shift[i] + pitch * detail::floor_div(x[i] - shift[i] + half, pitch));
        return k;
    };
    // box meets dQ_j iff along some axis its clipped extent reaches |x_i| > j - L
    auto meets_boundary = [&](const Point& anchor) {
        for (std::size_t i = 0; i < d; ++i) {
            auto lo = std::max(anchor[i] - half, -j), hi = std::min(anchor[i] + half, j);
            if (std::max(lo < 0 ? -lo : lo, hi < 0 ? -hi : hi) > j - range) return true;
        }
        return false;
    };

    // grid boxes meeting Q_j
    std::set<Point> explored, active;
    {
        Point lo(d), hi(d);
        for (std::size_t i = 0; i < d; ++i) {
            lo.set(i, box_of(Point::axis(d, i, -j))[i]);
            hi.set(i, box_of(Point::axis(d, i, j))[i]);
        }
        Point cur = lo;
        while (true) {
            if (!meets_boundary(cur)) explored.insert(cur);
            std::size_t i = d;
            bool done = true;
            while (i > 0) {
                --i;
                if (cur[i] < hi[i]) {
                    cur.set(i, cur[i] + pitch);
                    done = false;
                    break;
                }
                cur.set(i, lo[i]);
            }
            if (done) break;
        }
    }
    tr.initial_explored.assign(explored.begin(), explored.end());

    PointIndex reached;
    std::vector<std::uint32_t> queue;
    std::size_t head = 0;
    std::map<Point, std::vector<std::uint32_t>> waiting;
    std::vector<Point> newly_active;

    auto reach = [&](const Point& y) {
        auto [idx, inserted] = reached.insert(y);
        if (!inserted) return;
        auto b = box_of(y);
        if (explored.count(b)) {
            queue.push_back(idx);
        } else {
            waiting[b].push_back(idx);
            if (active.insert(b).second) newly_active.push_back(b);
        }
    };
    auto flood = [&]() {
        for (; head < queue.size(); ++head) {
            const Point u = reached[queue[head]];
            for (const auto& off : spec.offsets()) {
                Point y = u + off;
                if (!qj.contains(y) || reached.contains(y)) continue;
                if (field.is_open(u, y)) reach(y);
            }
        }
    };

    reach(Point::origin(d));
    flood();
    tr.initial_active.assign(active.begin(), active.end());

    while (!active.empty()) {
        ExplorationStep st;
        st.box = *active.begin();
        active.erase(active.begin());
        explored.insert(st.box);
        newly_active.clear();
        if (auto it = waiting.find(st.box); it != waiting.end()) {
            for (auto idx : it->second) queue.push_back(idx);
            waiting.erase(it);
        }
        flood();
        st.activated = newly_active;
        std::sort(st.activated.begin(), st.activated.end());
        for (const auto& v : reached.points())
            if (qj.boundary_contains(v, range) && box_of(v) == st.box) st.boundary_hits.push_back(v);
        std::sort(st.boundary_hits.begin(), st.boundary_hits.end());
        st.boundary_touch = !st.boundary_hits.empty();
        tr.steps.push_back(std::move(st));
    }
    tr.tau = tr.steps.size();
    tr.explored.assign(explored.begin(), explored.end());
    for (const auto& v : reached.points())
        if (qj.boundary_contains(v, range)) tr.boundary_hits.push_back(v);
    std::sort(tr.boundary_hits.begin(), tr.boundary_hits.end());
    return tr;
}

}  // namespace perc
