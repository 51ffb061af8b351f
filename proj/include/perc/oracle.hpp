#pragma once

// Exact ground truth on small finite graphs by enumerating all 2^m edge configurations.
// A configuration is a bit mask: bit k set means edge k is open.

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "perc/disjoint_paths.hpp"
#include "perc/error.hpp"
#include "perc/lattice.hpp"

namespace perc {

using Config = std::uint64_t;

inline constexpr std::size_t kDefaultEnumerationCap = 20;
/// The raw split definition of disjoint occurrence costs ~4^m per configuration.
inline constexpr std::size_t kRawSplitCap = 10;

class FiniteGraph {
public:
    using EdgeList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

    FiniteGraph() = default;

    FiniteGraph(std::vector<Point> vertices, EdgeList edges, std::size_t cap = kDefaultEnumerationCap)
        : vertices_(std::move(vertices)), edges_(std::move(edges)), cap_(cap) {
        if (cap_ > 63) throw UsageError("enumeration cap must be <= 63");
        for (std::size_t i = 0; i < vertices_.size(); ++i) {
            if (i && vertices_[i].dim() != vertices_[0].dim()) throw UsageError("vertices of mixed dimension");
            if (!index_.emplace(vertices_[i], static_cast<std::uint32_t>(i)).second)
                throw UsageError("duplicate vertex " + vertices_[i].to_string());
        }
        for (std::size_t k = 0; k < edges_.size(); ++k) {
            auto [a, b] = edges_[k];
            if (a >= vertices_.size() || b >= vertices_.size()) throw UsageError("edge endpoint out of range");
            if (a == b) throw UsageError("self-loop on vertex " + std::to_string(a));
            if (!edge_index_.emplace(Edge(vertices_[a], vertices_[b]), static_cast<std::uint32_t>(k)).second)
                throw UsageError("parallel edge between " + std::to_string(a) + " and " + std::to_string(b));
        }
    }

    /// Abstract graph on labels 0..n-1 (stored as 1-d points).
    static FiniteGraph labeled(std::size_t n, EdgeList edges, std::size_t cap = kDefaultEnumerationCap) {
        std::vector<Point> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(Point{static_cast<std::int64_t>(i)});
        return FiniteGraph(std::move(v), std::move(edges), cap);
    }

    /// The listed lattice edges; vertices are their endpoints in sorted order plus `extra`.
    static FiniteGraph from_edges(const std::vector<Edge>& edges, const std::vector<Point>& extra = {},
                                  std::size_t cap = kDefaultEnumerationCap) {
        std::vector<Point> v(extra);
        for (const auto& e : edges) {
            v.push_back(e.first());
            v.push_back(e.second());
        }
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        std::unordered_map<Point, std::uint32_t, PointHash> idx;
        for (std::size_t i = 0; i < v.size(); ++i) idx.emplace(v[i], static_cast<std::uint32_t>(i));
        EdgeList el;
        for (const auto& e : edges) el.emplace_back(idx.at(e.first()), idx.at(e.second()));
        return FiniteGraph(std::move(v), std::move(el), cap);
    }

    /// All lattice edges with both endpoints in the box.
    static FiniteGraph from_region(const LatticeSpec& spec, const Box& box, std::size_t cap = kDefaultEnumerationCap) {
        std::vector<Edge> edges;
        std::vector<Point> pts;
        for_each_in_box(box, [&](const Point& x) {
            pts.push_back(x);
            for (const auto& off : spec.offsets()) {
                Point y = x + off;
                if (box.contains(y) && x < y) edges.emplace_back(x, y);
            }
        });
        return from_edges(edges, pts, cap);
    }

    std::size_t n() const { return vertices_.size(); }
    std::size_t m() const { return edges_.size(); }
    std::size_t cap() const { return cap_; }
    const std::vector<Point>& vertices() const { return vertices_; }
    const EdgeList& edges() const { return edges_; }
    const Point& vertex(std::size_t i) const { return vertices_.at(i); }

    std::optional<std::uint32_t> index_of(const Point& p) const {
        auto it = index_.find(p);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::uint32_t require_index(const Point& p) const {
        auto i = index_of(p);
        if (!i) throw UsageError("point " + p.to_string() + " is not a vertex of the graph");
        return *i;
    }

    std::optional<std::uint32_t> edge_index(const Point& a, const Point& b) const {
        if (a == b || a.dim() != b.dim()) return std::nullopt;
        auto it = edge_index_.find(Edge(a, b));
        if (it == edge_index_.end()) return std::nullopt;
        return it->second;
    }

    void check_cap() const {
        if (m() > cap_)
            throw ResourceError("graph has " + std::to_string(m()) + " edges, over the enumeration cap of " +
                                std::to_string(cap_));
    }

    Config full_mask() const { return m() == 64 ? ~Config{0} : (Config{1} << m()) - 1; }

    /// Open edges of a configuration as a subgraph over all vertices.
    OpenSubgraph open_subgraph(Config mask) const {
        OpenSubgraph g;
        for (const auto& v : vertices_) g.add_vertex(v);
        for (std::size_t k = 0; k < m(); ++k)
            if (mask >> k & 1) g.add_edge(vertices_[edges_[k].first], vertices_[edges_[k].second]);
        return g;
    }

    /// Component label per vertex using the open edges in `mask`.
    std::vector<std::uint32_t> components(Config mask) const {
        std::vector<std::uint32_t> parent(n());
        std::iota(parent.begin(), parent.end(), 0u);
        auto find = [&](std::uint32_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t k = 0; k < m(); ++k)
            if (mask >> k & 1) {
                auto ra = find(edges_[k].first), rb = find(edges_[k].second);
                if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
            }
        for (std::uint32_t v = 0; v < n(); ++v) parent[v] = find(v);
        return parent;
    }

    nlohmann::json to_json() const {
        nlohmann::json v = nlohmann::json::array();
        for (const auto& p : vertices_) {
            if (p.dim() == 1) v.push_back(p[0]);
            else v.push_back(p);
        }
        nlohmann::json e = nlohmann::json::array();
        for (auto [a, b] : edges_) e.push_back({a, b});
        return {{"vertices", v}, {"edges", e}};
    }

    /// {"vertices": [labels or coordinate arrays], "edges": [[i, j], ...], "cap"?: int}
    static FiniteGraph from_json(const nlohmann::json& j) {
        std::vector<Point> v;
        for (const auto& x : j.at("vertices")) {
            if (x.is_number_integer()) v.push_back(Point{x.get<std::int64_t>()});
            else v.push_back(x.get<Point>());
        }
        EdgeList el;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw UsageError("edge entries must be [i, j] pairs");
            el.emplace_back(e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>());
        }
        return FiniteGraph(std::move(v), std::move(el), j.value("cap", kDefaultEnumerationCap));
    }

private:
    std::vector<Point> vertices_;
    EdgeList edges_;
    std::size_t cap_ = kDefaultEnumerationCap;
    std::unordered_map<Point, std::uint32_t, PointHash> index_;
    std::unordered_map<Edge, std::uint32_t, EdgeHash> edge_index_;
};

// ---------------------------------------------------------------------------
// Events

struct EventPredicate {
    enum class Kind { Connect, ConnectToSet, MultiArmDisjoint, SizeAtLeast, Custom };

    Kind kind = Kind::Connect;
    std::uint32_t from = 0;               // Connect, ConnectToSet, SizeAtLeast
    std::vector<std::uint32_t> targets;   // Connect: {b}; ConnectToSet: S; MultiArmDisjoint: sinks
    std::vector<std::uint32_t> sources;   // MultiArmDisjoint
    std::size_t count = 0;                // MultiArmDisjoint: l; SizeAtLeast: k
    std::vector<std::uint8_t> table;      // Custom: one entry per configuration

    static EventPredicate connect(std::uint32_t a, std::uint32_t b) { return {Kind::Connect, a, {b}, {}, 0, {}}; }
    static EventPredicate connect_to_set(std::uint32_t a, std::vector<std::uint32_t> set) {
        return {Kind::ConnectToSet, a, std::move(set), {}, 0, {}};
    }
    static EventPredicate multi_arm_disjoint(std::vector<std::uint32_t> sources, std::vector<std::uint32_t> sinks,
                                             std::size_t l) {
        return {Kind::MultiArmDisjoint, 0, std::move(sinks), std::move(sources), l, {}};
    }
    static EventPredicate size_at_least(std::uint32_t a, std::size_t k) { return {Kind::SizeAtLeast, a, {}, {}, k, {}}; }
    static EventPredicate custom(std::vector<std::uint8_t> table) { return {Kind::Custom, 0, {}, {}, 0, std::move(table)}; }

    /// Connection events {from <-> targets}: the ones with path witnesses.
    bool is_connection() const { return kind == Kind::Connect || kind == Kind::ConnectToSet; }

    void validate(const FiniteGraph& g) const {
        auto check = [&](std::uint32_t v) {
            if (v >= g.n()) throw UsageError("event refers to vertex " + std::to_string(v) + " outside the graph");
        };
        if (kind != Kind::MultiArmDisjoint && kind != Kind::Custom) check(from);
        for (auto v : targets) check(v);
        for (auto v : sources) check(v);
        if (kind == Kind::Custom) {
            g.check_cap();
            if (table.size() != (std::size_t{1} << g.m())) throw UsageError("custom event table must have 2^m entries");
        }
    }

    bool operator()(const FiniteGraph& g, Config mask) const {
        switch (kind) {
            case Kind::Connect:
            case Kind::ConnectToSet: {
                auto comp = g.components(mask);
                for (auto t : targets)
                    if (comp[t] == comp[from]) return true;
                return false;
            }
            case Kind::SizeAtLeast: {
                auto comp = g.components(mask);
                std::size_t size = 0;
                for (auto c : comp) size += c == comp[from];
                return size >= count;
            }
            case Kind::MultiArmDisjoint: {
                std::vector<Point> src, snk;
                for (auto s : sources) src.push_back(g.vertex(s));
                for (auto t : targets) snk.push_back(g.vertex(t));
                return max_edge_disjoint(g.open_subgraph(mask), src, snk).count >= count;
            }
            case Kind::Custom: return table.at(mask) != 0;
        }
        return false;
    }

    nlohmann::json to_json() const {
        switch (kind) {
            case Kind::Connect: return {{"connect", {from, targets.at(0)}}};
            case Kind::ConnectToSet: return {{"connect_to_set", {{"from", from}, {"to", targets}}}};
            case Kind::MultiArmDisjoint: return {{"multi_arm", {{"sources", sources}, {"sinks", targets}, {"l", count}}}};
            case Kind::SizeAtLeast: return {{"size_at_least", {{"from", from}, {"k", count}}}};
            case Kind::Custom: return {{"custom", table}};
        }
        return {};
    }

    static EventPredicate from_json(const nlohmann::json& j) {
        if (!j.is_object() || j.size() != 1) throw UsageError("event must be an object with exactly one key");
        const auto& [key, v] = *j.items().begin();
        if (key == "connect") return connect(v.at(0).get<std::uint32_t>(), v.at(1).get<std::uint32_t>());
        if (key == "connect_to_set")
            return connect_to_set(v.at("from").get<std::uint32_t>(), v.at("to").get<std::vector<std::uint32_t>>());
        if (key == "multi_arm")
            return multi_arm_disjoint(v.at("sources").get<std::vector<std::uint32_t>>(),
                                      v.at("sinks").get<std::vector<std::uint32_t>>(), v.at("l").get<std::size_t>());
        if (key == "size_at_least") return size_at_least(v.at("from").get<std::uint32_t>(), v.at("k").get<std::size_t>());
        if (key == "custom") return custom(v.get<std::vector<std::uint8_t>>());
        throw UsageError("unknown event kind '" + std::string(key) + "'");
    }
};

/// Every {a <-> b} with a < b.
inline std::vector<EventPredicate> all_connection_events(const FiniteGraph& g) {
    std::vector<EventPredicate> out;
    for (std::uint32_t a = 0; a < g.n(); ++a)
        for (std::uint32_t b = a + 1; b < g.n(); ++b) out.push_back(EventPredicate::connect(a, b));
    return out;
}

// ---------------------------------------------------------------------------
// Enumeration

namespace detail {
struct KahanSum {
    double sum = 0, c = 0;
    void add(double x) {
        double y = x - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

/// p^k (1-p)^(m-k) for k = 0..m
inline std::vector<double> config_weights(std::size_t m, double p) {
    if (!(p >= 0 && p <= 1)) throw UsageError("p must be in [0,1]");
    std::vector<double> w(m + 1);
    for (std::size_t k = 0; k <= m; ++k)
        w[k] = std::pow(p, static_cast<double>(k)) * std::pow(1 - p, static_cast<double>(m - k));
    return w;
}
}  // namespace detail

/// Sum over all configurations of P(config) * f(config).
inline double exact_expectation(const FiniteGraph& g, double p, const std::function<double(Config)>& f) {
    g.check_cap();
    auto w = detail::config_weights(g.m(), p);
    detail::KahanSum s;
    const Config n = Config{1} << g.m();
    for (Config mask = 0; mask < n; ++mask) {
        double v = f(mask);
        if (v != 0) s.add(w[std::popcount(mask)] * v);
    }
    return s.sum;
}

inline std::vector<std::uint8_t> truth_table(const FiniteGraph& g, const std::function<bool(Config)>& ev) {
    g.check_cap();
    std::vector<std::uint8_t> t(std::size_t{1} << g.m());
    for (Config mask = 0; mask < t.size(); ++mask) t[mask] = ev(mask) ? 1 : 0;
    return t;
}

inline std::vector<std::uint8_t> truth_table(const FiniteGraph& g, const EventPredicate& ev) {
    ev.validate(g);
    return truth_table(g, [&](Config mask) { return ev(g, mask); });
}

inline double exact_probability(const FiniteGraph& g, double p, const std::vector<std::uint8_t>& table) {
    g.check_cap();
    if (table.size() != (std::size_t{1} << g.m())) throw UsageError("truth table must have 2^m entries");
    return exact_expectation(g, p, [&](Config mask) { return table[mask] ? 1.0 : 0.0; });
}

inline double exact_probability(const FiniteGraph& g, double p, const EventPredicate& ev) {
    return exact_probability(g, p, truth_table(g, ev));
}

/// Opening any closed edge never falsifies the event.
inline bool is_increasing(const std::vector<std::uint8_t>& table, std::size_t m) {
    for (Config mask = 0; mask < table.size(); ++mask) {
        if (!table[mask]) continue;
        for (std::size_t k = 0; k < m; ++k)
            if (!table[mask | Config{1} << k]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Disjoint occurrence

namespace detail {
/// Backtracking search for pairwise edge-disjoint open paths, one per connection event.
class WitnessSearch {
public:
    WitnessSearch(const FiniteGraph& g, Config mask, const std::vector<EventPredicate>& events)
        : g_(g), events_(events), adj_(g.n()), visited_(g.n(), 0) {
        for (std::size_t k = 0; k < g.m(); ++k)
            if (mask >> k & 1) {
                adj_[g.edges()[k].first].emplace_back(g.edges()[k].second, k);
                adj_[g.edges()[k].second].emplace_back(g.edges()[k].first, k);
            }
        target_.assign(events.size(), std::vector<std::uint8_t>(g.n(), 0));
        for (std::size_t i = 0; i < events.size(); ++i)
            for (auto t : events[i].targets) target_[i][t] = 1;
    }

    bool run() { return place(0, 0); }

private:
    bool place(std::size_t i, Config used) {
        if (i == events_.size()) return true;
        auto a = events_[i].from;
        if (target_[i][a]) return place(i + 1, used);
        visited_[a] = 1;
        bool ok = extend(i, a, used);
        visited_[a] = 0;
        return ok;
    }

    // simple paths from the event's source, stopping at the first target vertex
    bool extend(std::size_t i, std::uint32_t u, Config used) {
        for (auto [v, k] : adj_[u]) {
            if (visited_[v] || (used >> k & 1)) continue;
            const Config next = used | Config{1} << k;
            if (target_[i][v]) {
                // later events search from scratch, so free the path's vertices for them
                auto saved = visited_;
                std::fill(visited_.begin(), visited_.end(), 0);
                bool ok = place(i + 1, next);
                visited_ = std::move(saved);
                if (ok) return true;
                continue;
            }
            visited_[v] = 1;
            bool ok = extend(i, v, next);
            visited_[v] = 0;
            if (ok) return true;
        }
        return false;
    }

    const FiniteGraph& g_;
    const std::vector<EventPredicate>& events_;
    std::vector<std::vector<std::pair<std::uint32_t, std::size_t>>> adj_;
    std::vector<std::uint8_t> visited_;
    std::vector<std::vector<std::uint8_t>> target_;
};

inline void require_connection_events(const FiniteGraph& g, const std::vector<EventPredicate>& events) {
    if (events.empty()) throw UsageError("disjoint occurrence needs at least one event");
    for (const auto& e : events) {
        if (!e.is_connection()) throw UsageError("witness search supports connection events only");
        e.validate(g);
    }
}
}  // namespace detail

/// A_1 o ... o A_k at one configuration, by search over edge-disjoint witness paths.
inline bool disjoint_occurrence(const FiniteGraph& g, Config mask, const std::vector<EventPredicate>& events) {
    detail::require_connection_events(g, events);
    return detail::WitnessSearch(g, mask, events).run();
}

/// A_1 o ... o A_k straight from the definition: pairwise disjoint edge sets K_i such that
/// the configuration restricted to K_i forces A_i. Works for any events; m <= 10.
inline bool disjoint_occurrence_raw(const FiniteGraph& g, Config mask, const std::vector<EventPredicate>& events) {
    if (g.m() > kRawSplitCap)
        throw ResourceError("raw split enumeration is limited to " + std::to_string(kRawSplitCap) + " edges");
    if (events.empty()) throw UsageError("disjoint occurrence needs at least one event");
    const std::size_t m = g.m();
    const Config full = g.full_mask();
    const std::size_t nk = std::size_t{1} << m;
    // forced[i][K]: every configuration agreeing with mask on K lies in A_i
    std::vector<std::vector<std::uint8_t>> forced;
    for (const auto& ev : events) {
        auto t = truth_table(g, ev);
        std::vector<std::uint8_t> f(nk);
        for (Config K = 0; K < nk; ++K) {
            const Config fixed = mask & K, free = full & ~K;
            bool all = true;
            for (Config z = free;; z = (z - 1) & free) {
                if (!t[fixed | z]) {
                    all = false;
                    break;
                }
                if (z == 0) break;
            }
            f[K] = all;
        }
        forced.push_back(std::move(f));
    }
    // feasible[X]: events i.. can be forced on disjoint subsets of X
    std::vector<std::uint8_t> feasible(nk, 1);
    for (std::size_t i = events.size(); i-- > 1;) {
        std::vector<std::uint8_t> next(nk, 0);
        for (Config X = 0; X < nk; ++X)
            for (Config K = X;; K = (K - 1) & X) {
                if (forced[i][K] && feasible[X & ~K]) {
                    next[X] = 1;
                    break;
                }
                if (K == 0) break;
            }
        feasible = std::move(next);
    }
    for (Config K = full;; K = (K - 1) & full) {
        if (forced[0][K] && feasible[full & ~K]) return true;
        if (K == 0) break;
    }
    return false;
}

/// Flow certificate for {y_1 <-> S} o ... o {y_l <-> S}: distinct sources, one shared sink set.
inline bool disjoint_occurrence_flow(const FiniteGraph& g, Config mask, const std::vector<EventPredicate>& events) {
    detail::require_connection_events(g, events);
    std::vector<Point> sources, sinks;
    for (auto t : events[0].targets) sinks.push_back(g.vertex(t));
    for (const auto& e : events) {
        if (e.targets != events[0].targets) throw UsageError("flow certificate needs a common sink set");
        sources.push_back(g.vertex(e.from));
    }
    return max_edge_disjoint(g.open_subgraph(mask), sources, sinks).count == events.size();
}

inline std::vector<std::uint8_t> disjoint_occurrence_table(const FiniteGraph& g, const std::vector<EventPredicate>& events) {
    detail::require_connection_events(g, events);
    return truth_table(g, [&](Config mask) { return detail::WitnessSearch(g, mask, events).run(); });
}

inline double exact_disjoint_occurrence(const FiniteGraph& g, double p, const std::vector<EventPredicate>& events) {
    return exact_probability(g, p, disjoint_occurrence_table(g, events));
}

// ---------------------------------------------------------------------------
// Correlation inequalities

struct InequalityCheck {
    double lhs = 0;
    double rhs = 0;
    bool holds = false;
};

inline constexpr double kInequalitySlack = 1e-12;

/// P(A o B) <= P(A) P(B) for connection events.
inline InequalityCheck verify_bk(const FiniteGraph& g, double p, const EventPredicate& a, const EventPredicate& b) {
    InequalityCheck c;
    c.lhs = exact_disjoint_occurrence(g, p, {a, b});
    c.rhs = exact_probability(g, p, a) * exact_probability(g, p, b);
    c.holds = c.lhs <= c.rhs + kInequalitySlack;
    return c;
}

/// P(A n B) >= P(A) P(B) for increasing A, B.
inline InequalityCheck verify_fkg(const FiniteGraph& g, double p, const EventPredicate& a, const EventPredicate& b) {
    auto ta = truth_table(g, a), tb = truth_table(g, b);
    if (!is_increasing(ta, g.m()) || !is_increasing(tb, g.m())) throw UsageError("FKG needs increasing events");
    std::vector<std::uint8_t> both(ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) both[i] = ta[i] & tb[i];
    InequalityCheck c;
    c.lhs = exact_probability(g, p, both);
    c.rhs = exact_probability(g, p, ta) * exact_probability(g, p, tb);
    c.holds = c.lhs + kInequalitySlack >= c.rhs;
    return c;
}

// ---------------------------------------------------------------------------
// Census statistics on lattice regions

/// Statistics of C(0) on a finite lattice graph, with every connection confined to the graph.
struct Statistic {
    enum class Kind { BoundaryCount, AnnulusCount, ClusterInBox, ClusterInBoxSquared };
    Kind kind = Kind::ClusterInBox;
    std::int64_t j = 0;      // BoundaryCount, AnnulusCount
    std::int64_t L = 0;      // AnnulusCount width
    std::int64_t r = 0;      // ClusterInBox radius
    std::int64_t range = 1;  // edge range of the lattice, for dQ_j

    /// X_j = |{z in dQ_j : 0 <-> z in Q_j}|
    static Statistic boundary_count(const LatticeSpec& spec, std::int64_t j) {
        return {Kind::BoundaryCount, j, 0, 0, spec.range()};
    }
    /// A_j = |{y in Q_{j+L} \ Q_j : 0 <-> y}|
    static Statistic annulus_count(std::int64_t j, std::int64_t L) { return {Kind::AnnulusCount, j, L, 0, 1}; }
    static Statistic cluster_in_box(std::int64_t r) { return {Kind::ClusterInBox, 0, 0, r, 1}; }
    static Statistic cluster_in_box_squared(std::int64_t r) { return {Kind::ClusterInBoxSquared, 0, 0, r, 1}; }

    double operator()(const FiniteGraph& g, Config mask) const {
        const auto d = g.vertices().empty() ? 1 : g.vertex(0).dim();
        const auto o = g.require_index(Point::origin(d));
        if (kind == Kind::BoundaryCount) {
            const Box q(d, j);
            Config inside = 0;
            for (std::size_t k = 0; k < g.m(); ++k)
                if (q.contains(g.vertex(g.edges()[k].first)) && q.contains(g.vertex(g.edges()[k].second)))
                    inside |= Config{1} << k;
            auto comp = g.components(mask & inside);
            double x = 0;
            for (std::size_t v = 0; v < g.n(); ++v)
                if (comp[v] == comp[o] && q.boundary_contains(g.vertex(v), range)) x += 1;
            return x;
        }
        auto comp = g.components(mask);
        double x = 0;
        if (kind == Kind::AnnulusCount) {
            const Box inner(d, j), outer(d, j + L);
            for (std::size_t v = 0; v < g.n(); ++v)
                if (comp[v] == comp[o] && outer.contains(g.vertex(v)) && !inner.contains(g.vertex(v))) x += 1;
            return x;
        }
        const Box q(d, r);
        for (std::size_t v = 0; v < g.n(); ++v)
            if (comp[v] == comp[o] && q.contains(g.vertex(v))) x += 1;
        return kind == Kind::ClusterInBoxSquared ? x * x : x;
    }
};

inline double exact_expectation(const FiniteGraph& g, double p, const Statistic& stat) {
    return exact_expectation(g, p, [&](Config mask) { return stat(g, mask); });
}

// ---------------------------------------------------------------------------
// Edge sources backed by a finite graph

/// A fixed configuration: graph edges open per the mask, every other lattice edge closed.
struct ConfigField {
    const FiniteGraph* graph;
    Config mask;

    bool is_open(const Point& a, const Point& b) const {
        auto k = graph->edge_index(a, b);
        return k && (mask >> *k & 1);
    }
};

/// The base field restricted to the graph's edges; every other edge closed.
template <EdgeSource Base>
struct RestrictedField {
    const FiniteGraph* graph;
    Base base;

    bool is_open(const Point& a, const Point& b) const {
        return graph->edge_index(a, b).has_value() && base.is_open(a, b);
    }
};

}  // namespace perc
