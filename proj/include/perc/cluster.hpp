#pragma once

// Lazy breadth-first cluster growth over any EdgeSource. Edge states are
// queried only when the growth front reaches them, so clusters on the
// infinite lattice are explored without materializing it.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "perc/error.hpp"
#include "perc/lattice.hpp"
#include "perc/random_field.hpp"

namespace perc {

/// Open-addressing map Point -> dense index, insertion ordered.
class PointIndex {
public:
    static constexpr std::uint32_t npos = 0xffffffffu;

    PointIndex() { slots_.assign(64, 0); }

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const std::vector<Point>& points() const { return points_; }
    const Point& operator[](std::size_t i) const { return points_[i]; }

    std::uint32_t find(const Point& p) const {
        const std::size_t mask = slots_.size() - 1;
        for (std::size_t s = PointHash{}(p) & mask;; s = (s + 1) & mask) {
            auto v = slots_[s];
            if (v == 0) return npos;
            if (points_[v - 1] == p) return v - 1;
        }
    }

    bool contains(const Point& p) const { return find(p) != npos; }

    /// Returns (index, inserted).
    std::pair<std::uint32_t, bool> insert(const Point& p) {
        if (2 * (points_.size() + 1) > slots_.size()) rehash(slots_.size() * 2);
        const std::size_t mask = slots_.size() - 1;
        for (std::size_t s = PointHash{}(p) & mask;; s = (s + 1) & mask) {
            auto v = slots_[s];
            if (v == 0) {
                points_.push_back(p);
                slots_[s] = static_cast<std::uint32_t>(points_.size());
                return {static_cast<std::uint32_t>(points_.size() - 1), true};
            }
            if (points_[v - 1] == p) return {v - 1, false};
        }
    }

private:
    void rehash(std::size_t n) {
        slots_.assign(n, 0);
        const std::size_t mask = n - 1;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            std::size_t s = PointHash{}(points_[i]) & mask;
            while (slots_[s] != 0) s = (s + 1) & mask;
            slots_[s] = static_cast<std::uint32_t>(i + 1);
        }
    }

    std::vector<Point> points_;
    std::vector<std::uint32_t> slots_;
};

struct GrowthBudget {
    std::uint64_t max_vertices = 1'000'000;
    std::optional<std::uint64_t> max_graph_radius;

    void validate() const {
        if (max_vertices == 0) throw UsageError("budget.max_vertices must be >= 1");
    }
};

enum class Truncation { None, Volume, Radius };

inline const char* to_string(Truncation t) {
    switch (t) {
        case Truncation::None: return "none";
        case Truncation::Volume: return "volume";
        case Truncation::Radius: return "radius";
    }
    return "?";
}

/// Three-way sample outcome; truncated samples are never folded into "no".
enum class Outcome { No, Yes, Indeterminate };

/// C(origin; region) as revealed by the growth, with its open-edge witness set.
struct Cluster {
    Point origin;
    PointIndex members;
    /// Graph distance (open edges) at discovery; BFS-exact for single-phase growth.
    std::vector<std::uint32_t> distance;
    /// Open edges between members, as index pairs into members.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> open_edges;
    std::optional<Box> region;
    Truncation truncated = Truncation::None;
    std::optional<std::int64_t> target_radius;
    std::vector<Point> boundary_hits;

    std::size_t size() const { return members.size(); }
    bool contains(const Point& x) const { return members.contains(x); }
    bool is_truncated() const { return truncated != Truncation::None; }

    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(open_edges.size());
        for (auto [a, b] : open_edges) out.emplace_back(members[a], members[b]);
        return out;
    }

    std::vector<Point> sorted_members() const {
        auto v = members.points();
        std::sort(v.begin(), v.end());
        return v;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["origin"] = origin;
        j["members"] = sorted_members();
        auto e = edges();
        std::sort(e.begin(), e.end());
        nlohmann::json je = nlohmann::json::array();
        for (const auto& edge : e) je.push_back(nlohmann::json::array({edge.first(), edge.second()}));
        j["open_edges"] = je;
        if (region) j["region"] = {{"radius", region->radius}, {"center", region->center}};
        j["truncated"] = perc::to_string(truncated);
        if (target_radius) {
            auto hits = boundary_hits;
            std::sort(hits.begin(), hits.end());
            j["target_radius"] = *target_radius;
            j["boundary_hits"] = hits;
        }
        return j;
    }
};

/// Resumable BFS engine. Each in-region candidate edge is revealed at most once; widening the
/// region later (extend) rescans only vertices whose neighbors fell outside the old region.
template <EdgeSource Field>
class ClusterGrowth {
public:
    enum class Status { Exhausted, Stopped, Truncated };

    ClusterGrowth(const LatticeSpec& spec, const Field& field, GrowthBudget budget, std::optional<Box> region = {})
        : spec_(spec), field_(field), budget_(budget), region_(std::move(region)) {
        budget_.validate();
    }

    /// Adds a growth root at distance 0. Returns false if the volume budget is already exhausted.
    bool add_root(const Point& x) {
        spec_.check(x);
        if (region_ && !region_->contains(x)) throw UsageError("root " + x.to_string() + " lies outside region");
        if (cluster_.members.contains(x)) return true;
        if (cluster_.members.size() >= budget_.max_vertices) {
            cluster_.truncated = Truncation::Volume;
            return false;
        }
        add_member(x, 0);
        return true;
    }

    /// Grows until the queue empties, the volume budget binds, or stop(point) is true for a newly
    /// discovered member (roots included). A stopped growth can be resumed by calling run again.
    template <class Stop>
    Status run(Stop&& stop) {
        if (cluster_.truncated == Truncation::Volume) return Status::Truncated;
        // roots added since the previous run are offered to the predicate first
        while (checked_upto_ < cluster_.members.size()) {
            auto i = checked_upto_++;
            if (stop(cluster_.members[i])) return Status::Stopped;
        }
        const auto& offs = spec_.offsets();
        while (head_ < cluster_.members.size()) {
            const std::uint32_t v = head_;
            processed_[v] = 1;
            // copy: members may reallocate while we insert
            const Point x = cluster_.members[v];
            bool deferred = false;
            for (; next_offset_ < offs.size(); ++next_offset_) {
                Point y = x + offs[next_offset_];
                if (region_ && !region_->contains(y)) {
                    deferred = true;
                    if (reveal_escapes_ && !escaped_ && field_.is_open(x, y)) escaped_ = true;
                    continue;
                }
                auto idx = cluster_.members.find(y);
                if (idx != PointIndex::npos && processed_[idx]) continue;
                if (!field_.is_open(x, y)) continue;
                if (idx != PointIndex::npos) {
                    cluster_.open_edges.emplace_back(v, idx);
                    continue;
                }
                const auto dist = cluster_.distance[v] + 1;
                if (budget_.max_graph_radius && dist > *budget_.max_graph_radius) {
                    if (cluster_.truncated == Truncation::None) cluster_.truncated = Truncation::Radius;
                    continue;
                }
                if (cluster_.members.size() >= budget_.max_vertices) {
                    cluster_.truncated = Truncation::Volume;
                    return Status::Truncated;
                }
                add_member(y, dist);
                cluster_.open_edges.emplace_back(v, static_cast<std::uint32_t>(cluster_.members.size() - 1));
                checked_upto_ = cluster_.members.size();
                if (stop(cluster_.members[cluster_.members.size() - 1])) {
                    ++next_offset_;
                    if (deferred) mark_deferred(v);
                    return Status::Stopped;
                }
            }
            if (deferred) mark_deferred(v);
            next_offset_ = 0;
            ++head_;
        }
        return Status::Exhausted;
    }

    Status run() {
        return run([](const Point&) { return false; });
    }

    /// Widens the region (nullopt = unrestricted), revealing edges from already-scanned vertices
    /// into the newly admitted area. Call run() afterwards to continue growth.
    void extend(std::optional<Box> new_region) {
        if (head_ < cluster_.members.size() && next_offset_ != 0)
            throw UsageError("extend() requires a growth that is not stopped mid-scan");
        auto old = region_;
        region_ = std::move(new_region);
        if (!old) return;
        if (cluster_.truncated == Truncation::Volume) return;
        std::vector<std::uint32_t> rescans;
        rescans.swap(deferred_);
        std::fill(deferred_flag_.begin(), deferred_flag_.end(), 0);
        const auto& offs = spec_.offsets();
        for (auto v : rescans) {
            const Point x = cluster_.members[v];
            bool deferred = false;
            for (const auto& off : offs) {
                Point y = x + off;
                if (old->contains(y)) continue;
                if (region_ && !region_->contains(y)) {
                    deferred = true;
                    if (reveal_escapes_ && !escaped_ && field_.is_open(x, y)) escaped_ = true;
                    continue;
                }
                if (!field_.is_open(x, y)) continue;
                auto idx = cluster_.members.find(y);
                if (idx != PointIndex::npos) {
                    cluster_.open_edges.emplace_back(v, idx);
                    continue;
                }
                const auto dist = cluster_.distance[v] + 1;
                if (budget_.max_graph_radius && dist > *budget_.max_graph_radius) {
                    if (cluster_.truncated == Truncation::None) cluster_.truncated = Truncation::Radius;
                    continue;
                }
                if (cluster_.members.size() >= budget_.max_vertices) {
                    cluster_.truncated = Truncation::Volume;
                    return;
                }
                add_member(y, dist);
                cluster_.open_edges.emplace_back(v, static_cast<std::uint32_t>(cluster_.members.size() - 1));
            }
            if (deferred) mark_deferred(v);
        }
        checked_upto_ = cluster_.members.size();
    }

    /// Report open edges from members to vertices outside the region (sets escaped()).
    void set_reveal_escapes(bool on) { reveal_escapes_ = on; }
    bool escaped() const { return escaped_; }

    const Cluster& cluster() const { return cluster_; }
    Cluster take() && {
        cluster_.region = region_;
        return std::move(cluster_);
    }
    const std::optional<Box>& region() const { return region_; }
    bool exhausted() const { return head_ == cluster_.members.size(); }

private:
    void add_member(const Point& y, std::uint32_t dist) {
        cluster_.members.insert(y);
        cluster_.distance.push_back(dist);
        processed_.push_back(0);
        deferred_flag_.push_back(0);
    }

    void mark_deferred(std::uint32_t v) {
        if (!deferred_flag_[v]) {
            deferred_flag_[v] = 1;
            deferred_.push_back(v);
        }
    }

    LatticeSpec spec_;
    const Field& field_;
    GrowthBudget budget_;
    std::optional<Box> region_;
    Cluster cluster_;
    std::vector<std::uint8_t> processed_;
    std::vector<std::uint8_t> deferred_flag_;
    std::vector<std::uint32_t> deferred_;
    std::uint32_t head_ = 0;
    std::size_t next_offset_ = 0;
    std::size_t checked_upto_ = 0;
    bool reveal_escapes_ = false;
    bool escaped_ = false;
};

/// C(origin; region) by breadth-first growth. With target_radius, boundary_hits lists the members
/// lying on the inner boundary of Q_target_radius (centered at the lattice origin).
template <EdgeSource Field>
Cluster grow_cluster(const LatticeSpec& spec, const Field& field, const Point& origin,
                     const std::optional<Box>& region, const GrowthBudget& budget,
                     std::optional<std::int64_t> target_radius = {}) {
    budget.validate();
    spec.check(origin);
    if (region && !region->contains(origin))
        throw UsageError("origin " + origin.to_string() + " is outside the growth region");
    ClusterGrowth<Field> g(spec, field, budget, region);
    g.add_root(origin);
    g.run();
    Cluster c = std::move(g).take();
    c.origin = origin;
    if (target_radius) {
        c.target_radius = target_radius;
        Box q(spec.dimension(), *target_radius);
        for (const auto& m : c.members.points())
            if (q.boundary_contains(m, spec.range())) c.boundary_hits.push_back(m);
    }
    return c;
}

}  // namespace perc
