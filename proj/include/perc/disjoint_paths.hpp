#pragma once

// Edge-disjoint open-path certificates. For connection events
// {y_1 <-> S} o ... o {y_l <-> S}, disjoint occurrence is equivalent to the
// existence of l pairwise edge-disjoint open paths, one from each y_i to S
// (Menger). We decide it with unit-capacity augmenting-path max-flow and return
// the paths as a checkable witness.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "perc/cluster.hpp"
#include "perc/error.hpp"
#include "perc/lattice.hpp"

namespace perc {

/// Open edges on a vertex set; the substrate witness paths are drawn from.
class OpenSubgraph {
public:
    OpenSubgraph() = default;

    static OpenSubgraph from_cluster(const Cluster& c) {
        OpenSubgraph g;
        g.merge(c);
        return g;
    }

    void merge(const Cluster& c) {
        for (const auto& p : c.members.points()) vertices_.insert(p);
        for (auto [a, b] : c.open_edges) add_edge(c.members[a], c.members[b]);
    }

    std::uint32_t add_vertex(const Point& p) { return vertices_.insert(p).first; }

    void add_edge(const Point& a, const Point& b) {
        auto ia = add_vertex(a);
        auto ib = add_vertex(b);
        if (ia == ib) throw UsageError("self-loop at " + a.to_string());
        auto key = ia < ib ? (std::uint64_t{ia} << 32 | ib) : (std::uint64_t{ib} << 32 | ia);
        if (edge_keys_.insert(key).second) edges_.emplace_back(ia, ib);
    }

    const PointIndex& vertices() const { return vertices_; }
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges() const { return edges_; }
    bool has_vertex(const Point& p) const { return vertices_.contains(p); }
    bool has_edge(const Point& a, const Point& b) const {
        auto ia = vertices_.find(a), ib = vertices_.find(b);
        if (ia == PointIndex::npos || ib == PointIndex::npos || ia == ib) return false;
        auto key = ia < ib ? (std::uint64_t{ia} << 32 | ib) : (std::uint64_t{ib} << 32 | ia);
        return edge_keys_.count(key) != 0;
    }

private:
    PointIndex vertices_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges_;
    std::unordered_set<std::uint64_t> edge_keys_;
};

struct WitnessPath {
    std::size_t source = 0;   // index into the sources list
    std::vector<Point> vertices;  // source ... sink; a single vertex when the source is a sink
};

struct WitnessSet {
    std::vector<WitnessPath> paths;
    std::size_t count = 0;

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& p : paths) j.push_back({{"source", p.source}, {"path", p.vertices}});
        return {{"count", count}, {"paths", j}};
    }
};

enum class Disjointness { Edge, Vertex };

namespace detail {

/// Residual network for small integral max-flow problems.
class FlowNetwork {
public:
    static constexpr int kInfinite = std::numeric_limits<int>::max() / 4;

    explicit FlowNetwork(std::size_t n) : adj_(n) {}

    std::size_t add_node() {
        adj_.emplace_back();
        return adj_.size() - 1;
    }

    /// Arc u->v with capacity cap_uv and reverse capacity cap_vu. Returns the arc id of u->v.
    std::size_t add_arc(std::size_t u, std::size_t v, int cap_uv, int cap_vu = 0) {
        arcs_.push_back({v, cap_uv, cap_uv});
        arcs_.push_back({u, cap_vu, cap_vu});
        adj_[u].push_back(arcs_.size() - 2);
        adj_[v].push_back(arcs_.size() - 1);
        return arcs_.size() - 2;
    }

    /// Breadth-first augmenting paths, one unit at a time.
    int max_flow(std::size_t s, std::size_t t) {
        int flow = 0;
        std::vector<std::size_t> via(adj_.size());
        std::vector<std::uint8_t> seen(adj_.size());
        std::vector<std::size_t> queue;
        while (true) {
            std::fill(seen.begin(), seen.end(), 0);
            queue.clear();
            queue.push_back(s);
            seen[s] = 1;
            for (std::size_t h = 0; h < queue.size() && !seen[t]; ++h) {
                auto u = queue[h];
                for (auto a : adj_[u]) {
                    auto v = arcs_[a].to;
                    if (!seen[v] && arcs_[a].cap > 0) {
                        seen[v] = 1;
                        via[v] = a;
                        queue.push_back(v);
                    }
                }
            }
            if (!seen[t]) return flow;
            for (auto v = t; v != s;) {
                auto a = via[v];
                arcs_[a].cap -= 1;
                arcs_[a ^ 1].cap += 1;
                v = arcs_[a ^ 1].to;
            }
            ++flow;
        }
    }

    /// Net flow carried on arc a (negative when it runs against the arc).
    int net_flow(std::size_t a) const { return arcs_[a].initial - arcs_[a].cap; }
    std::size_t head(std::size_t a) const { return arcs_[a].to; }
    std::size_t tail(std::size_t a) const { return arcs_[a ^ 1].to; }
    const std::vector<std::size_t>& out_arcs(std::size_t u) const { return adj_[u]; }
    std::size_t size() const { return adj_.size(); }

private:
    struct Arc {
        std::size_t to;
        int cap;
        int initial;
    };
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<Arc> arcs_;
};

struct FlowModel {
    FlowNetwork net{0};
    std::size_t source = 0, sink = 0;
    // per subgraph vertex: node carrying inflow / outflow (equal for edge-disjointness)
    std::vector<std::size_t> in_node, out_node;
    std::vector<std::size_t> edge_arcs;  // one arc per subgraph edge, oriented edges[i].first -> second
};

inline FlowModel build_flow(const OpenSubgraph& g, Disjointness mode) {
    FlowModel m;
    const auto n = g.vertices().size();
    m.net = FlowNetwork(0);
    m.in_node.resize(n);
    m.out_node.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        m.in_node[v] = m.net.add_node();
        if (mode == Disjointness::Vertex) {
            m.out_node[v] = m.net.add_node();
            m.net.add_arc(m.in_node[v], m.out_node[v], 1);
        } else {
            m.out_node[v] = m.in_node[v];
        }
    }
    for (auto [a, b] : g.edges()) {
        if (mode == Disjointness::Edge) {
            // one undirected unit edge: opposite flows cancel in the residual
            m.edge_arcs.push_back(m.net.add_arc(m.in_node[a], m.in_node[b], 1, 1));
        } else {
            m.edge_arcs.push_back(m.net.add_arc(m.out_node[a], m.in_node[b], 1));
            m.net.add_arc(m.out_node[b], m.in_node[a], 1);
        }
    }
    m.source = m.net.add_node();
    m.sink = m.net.add_node();
    return m;
}

/// Splits the flow into source->sink walks, then strips cycles so each witness is a simple path.
inline std::vector<WitnessPath> decompose(FlowModel& m, const OpenSubgraph& g,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& source_arcs) {
    // node -> subgraph vertex
    std::vector<std::int64_t> vertex_of(m.net.size(), -1);
    for (std::size_t v = 0; v < m.in_node.size(); ++v) {
        vertex_of[m.in_node[v]] = static_cast<std::int64_t>(v);
        vertex_of[m.out_node[v]] = static_cast<std::int64_t>(v);
    }
    // remaining positive flow per arc, consumed as paths are traced
    std::vector<int> remaining;
    std::vector<std::vector<std::size_t>> flow_out(m.net.size());
    for (std::size_t u = 0; u < m.net.size(); ++u) {
        for (auto a : m.net.out_arcs(u)) {
            if (remaining.size() <= a) remaining.resize(a + 2, 0);
            int f = m.net.net_flow(a);
            if (f > 0) {
                remaining[a] = f;
                flow_out[u].push_back(a);
            }
        }
    }
    std::vector<WitnessPath> paths;
    for (auto [src_index, arc] : source_arcs) {
        if (m.net.net_flow(arc) <= 0) continue;
        remaining[arc] -= 1;
        std::vector<std::size_t> walk{m.net.head(arc)};
        auto u = m.net.head(arc);
        while (u != m.sink) {
            std::size_t next = 0;
            bool found = false;
            for (auto a : flow_out[u])
                if (remaining[a] > 0) {
                    remaining[a] -= 1;
                    next = m.net.head(a);
                    found = true;
                    break;
                }
            if (!found) throw std::logic_error("flow decomposition: conservation violated");
            u = next;
            if (u != m.sink) walk.push_back(u);
        }
        WitnessPath wp;
        wp.source = src_index;
        for (auto node : walk) {
            auto v = vertex_of[node];
            if (!wp.vertices.empty() && wp.vertices.back() == g.vertices()[static_cast<std::size_t>(v)]) continue;
            const Point& p = g.vertices()[static_cast<std::size_t>(v)];
            auto it = std::find(wp.vertices.begin(), wp.vertices.end(), p);
            if (it != wp.vertices.end())
                wp.vertices.erase(it + 1, wp.vertices.end());  // cut the loop
            else
                wp.vertices.push_back(p);
        }
        paths.push_back(std::move(wp));
    }
    return paths;
}

}  // namespace detail

/// Every path is open, starts at its source, ends in sinks; paths pairwise share no edge.
inline bool witness_is_valid(const OpenSubgraph& g, const std::vector<Point>& sources,
                             const std::vector<Point>& sinks, const WitnessSet& ws) {
    if (ws.paths.size() != ws.count) return false;
    std::unordered_set<Edge, EdgeHash> used;
    std::vector<std::uint8_t> source_used(sources.size(), 0);
    for (const auto& p : ws.paths) {
        if (p.source >= sources.size() || source_used[p.source]) return false;
        source_used[p.source] = 1;
        if (p.vertices.empty() || p.vertices.front() != sources[p.source]) return false;
        if (std::find(sinks.begin(), sinks.end(), p.vertices.back()) == sinks.end()) return false;
        for (std::size_t i = 0; i + 1 < p.vertices.size(); ++i) {
            if (!g.has_edge(p.vertices[i], p.vertices[i + 1])) return false;
            if (!used.insert(Edge(p.vertices[i], p.vertices[i + 1])).second) return false;
        }
    }
    return true;
}

/// Maximum family of edge-disjoint open paths, each source starting at most one, each ending in sinks.
inline WitnessSet max_edge_disjoint(const OpenSubgraph& g, const std::vector<Point>& sources,
                                    const std::vector<Point>& sinks, Disjointness mode = Disjointness::Edge) {
    for (std::size_t i = 0; i < sources.size(); ++i)
        for (std::size_t j = i + 1; j < sources.size(); ++j)
            if (sources[i] == sources[j]) throw UsageError("sources must be distinct");
    WitnessSet ws;
    if (sinks.empty() || sources.empty()) return ws;
    auto m = detail::build_flow(g, mode);
    std::vector<std::pair<std::size_t, std::size_t>> source_arcs;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        auto v = g.vertices().find(sources[i]);
        if (v == PointIndex::npos) continue;
        source_arcs.emplace_back(i, m.net.add_arc(m.source, m.in_node[v], 1));
    }
    std::vector<std::uint8_t> is_sink(g.vertices().size(), 0);
    for (const auto& s : sinks) {
        auto v = g.vertices().find(s);
        if (v == PointIndex::npos || is_sink[v]) continue;
        is_sink[v] = 1;
        m.net.add_arc(m.out_node[v], m.sink, detail::FlowNetwork::kInfinite);
    }
    ws.count = static_cast<std::size_t>(m.net.max_flow(m.source, m.sink));
    ws.paths = detail::decompose(m, g, source_arcs);
#ifdef PERC_CHECK_WITNESSES
    if (mode == Disjointness::Edge && !witness_is_valid(g, sources, sinks, ws))
        throw std::logic_error("max_edge_disjoint produced an invalid witness set");
#endif
    return ws;
}

/// Max number of edge-disjoint open paths from any vertex of `inner` to `outer_shell`.
/// Paths may share starting vertices but never edges.
inline std::size_t count_disjoint_crossings(const OpenSubgraph& g, const Box& inner,
                                            const std::vector<Point>& outer_shell,
                                            Disjointness mode = Disjointness::Edge) {
    if (outer_shell.empty()) return 0;
    auto m = detail::build_flow(g, mode);
    bool any_source = false;
    for (std::size_t v = 0; v < g.vertices().size(); ++v)
        if (inner.contains(g.vertices()[v])) {
            // vertex mode: inner vertices may be shared, so enter past the split
            m.net.add_arc(m.source, mode == Disjointness::Vertex ? m.out_node[v] : m.in_node[v],
                          detail::FlowNetwork::kInfinite);
            any_source = true;
        }
    if (!any_source) return 0;
    std::vector<std::uint8_t> is_sink(g.vertices().size(), 0);
    for (const auto& s : outer_shell) {
        auto v = g.vertices().find(s);
        if (v == PointIndex::npos || is_sink[v]) continue;
        if (inner.contains(s)) throw UsageError("outer shell meets the inner box at " + s.to_string());
        is_sink[v] = 1;
        m.net.add_arc(m.out_node[v], m.sink, detail::FlowNetwork::kInfinite);
    }
    return static_cast<std::size_t>(m.net.max_flow(m.source, m.sink));
}

struct MultiArmResult {
    Outcome outcome = Outcome::No;
    bool truncated = false;
    std::size_t count = 0;  // witnessed disjoint arms (lower bound when truncated)
    bool holds() const { return outcome == Outcome::Yes; }
};

namespace detail {
inline void check_arm_points(const LatticeSpec& spec, std::int64_t r, const std::vector<Point>& points) {
    if (points.empty()) throw UsageError("multi-arm event needs at least one point");
    for (std::size_t i = 0; i < points.size(); ++i) {
        spec.check(points[i]);
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if (points[i] == points[j]) throw UsageError("arm points must be distinct");
        if (norms(points[i], Point::origin(spec.dimension())).euclidean > 0.5 * static_cast<double>(r))
            throw UsageError("arm point " + points[i].to_string() + " is outside B(0, r/2)");
    }
}
}  // namespace detail

/// {y_1 <-> dQ_r} o ... o {y_l <-> dQ_r}, with all connections inside Q_r.
template <EdgeSource Field>
MultiArmResult multi_arm_event(const LatticeSpec& spec, const Field& field, std::int64_t r,
                               const std::vector<Point>& points, const GrowthBudget& budget) {
    if (r < 1) throw UsageError("multi-arm radius must be >= 1");
    detail::check_arm_points(spec, r, points);
    const Box q(spec.dimension(), r);
    const auto range = spec.range();
    auto on_boundary = [&](const Point& x) { return q.boundary_contains(x, range); };

    std::vector<ClusterGrowth<Field>> growths;
    growths.reserve(points.size());
    bool truncated = false;
    bool all_hit = true;
    // every arm must exist on its own; stop each growth at its first boundary hit
    for (const auto& y : points) {
        auto& g = growths.emplace_back(spec, field, budget, q);
        g.add_root(y);
        auto st = g.run(on_boundary);
        if (st == ClusterGrowth<Field>::Status::Exhausted) return {Outcome::No, false, 0};
        if (st == ClusterGrowth<Field>::Status::Truncated) {
            truncated = true;
            all_hit = false;
        }
    }
    if (points.size() == 1) return {all_hit ? Outcome::Yes : Outcome::Indeterminate, truncated, all_hit ? 1u : 0u};
    auto evaluate = [&]() {
        OpenSubgraph sub;
        std::vector<Point> sinks;
        for (const auto& g : growths) sub.merge(g.cluster());
        for (const auto& v : sub.vertices().points())
            if (on_boundary(v)) sinks.push_back(v);
        return max_edge_disjoint(sub, points, sinks).count;
    };
    auto count = evaluate();
    if (count == points.size()) return {Outcome::Yes, truncated, count};
    for (auto& g : growths)
        if (g.run() == ClusterGrowth<Field>::Status::Truncated) truncated = true;
    count = evaluate();
    if (count == points.size()) return {Outcome::Yes, truncated, count};
    return {truncated ? Outcome::Indeterminate : Outcome::No, truncated, count};
}

}  // namespace perc
