#pragma once

// Lattice geometry for bond percolation on Z^d: points, canonical edges, boxes
// Q_r = {-r..r}^d, their inner boundaries, and the two edge rules
// (nearest-neighbor and spread-out with l1 range L).

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "perc/error.hpp"

namespace perc {

inline constexpr std::size_t kMaxDimension = 12;
/// Coordinates must satisfy |c| <= 2^31; anything larger is rejected, never wrapped.
inline constexpr std::int64_t kCoordinateLimit = std::int64_t{1} << 31;

namespace detail {
inline std::int64_t checked_coordinate(std::int64_t v) {
    if (v > kCoordinateLimit || v < -kCoordinateLimit)
        throw UsageError("coordinate " + std::to_string(v) + " outside [-2^31, 2^31]");
    return v;
}
}  // namespace detail

/// A vertex of Z^d. Unused trailing slots stay zero so whole-array compare is exact.
class Point {
public:
    Point() = default;

    explicit Point(std::size_t dim) : dim_(static_cast<std::uint32_t>(dim)) {
        if (dim == 0 || dim > kMaxDimension)
            throw UsageError("dimension must be in [1, " + std::to_string(kMaxDimension) + "]");
    }

    Point(std::initializer_list<std::int64_t> coords) : Point(coords.size()) {
        std::size_t i = 0;
        for (auto c : coords) c_[i++] = detail::checked_coordinate(c);
    }

    explicit Point(std::span<const std::int64_t> coords) : Point(coords.size()) {
        for (std::size_t i = 0; i < coords.size(); ++i) c_[i] = detail::checked_coordinate(coords[i]);
    }

    static Point origin(std::size_t dim) { return Point(dim); }

    /// k * e_axis
    static Point axis(std::size_t dim, std::size_t axis, std::int64_t k) {
        Point p(dim);
        p.set(axis, k);
        return p;
    }

    std::size_t dim() const { return dim_; }
    std::int64_t operator[](std::size_t i) const { return c_[i]; }
    void set(std::size_t i, std::int64_t v) { c_[i] = detail::checked_coordinate(v); }
    std::span<const std::int64_t> coords() const { return {c_.data(), dim_}; }

    bool is_origin() const {
        return std::all_of(c_.begin(), c_.begin() + dim_, [](auto c) { return c == 0; });
    }

    std::int64_t linf() const {
        std::int64_t m = 0;
        for (std::size_t i = 0; i < dim_; ++i) m = std::max(m, c_[i] < 0 ? -c_[i] : c_[i]);
        return m;
    }

    std::int64_t l1() const {
        std::int64_t s = 0;
        for (std::size_t i = 0; i < dim_; ++i) s += c_[i] < 0 ? -c_[i] : c_[i];
        return s;
    }

    friend Point operator+(const Point& a, const Point& b) {
        require_same_dim(a, b);
        Point r(a.dim_);
        for (std::size_t i = 0; i < a.dim_; ++i) r.c_[i] = detail::checked_coordinate(a.c_[i] + b.c_[i]);
        return r;
    }

    friend Point operator-(const Point& a, const Point& b) {
        require_same_dim(a, b);
        Point r(a.dim_);
        for (std::size_t i = 0; i < a.dim_; ++i) r.c_[i] = detail::checked_coordinate(a.c_[i] - b.c_[i]);
        return r;
    }

    friend bool operator==(const Point&, const Point&) = default;
    friend auto operator<=>(const Point& a, const Point& b) {
        if (auto c = a.dim_ <=> b.dim_; c != 0) return c;
        return a.c_ <=> b.c_;
    }

    static void require_same_dim(const Point& a, const Point& b) {
        if (a.dim_ != b.dim_)
            throw UsageError("dimension mismatch: " + std::to_string(a.dim_) + " vs " + std::to_string(b.dim_));
    }

    std::string to_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dim_; ++i) {
            if (i) s += ",";
            s += std::to_string(c_[i]);
        }
        return s + ")";
    }

private:
    std::array<std::int64_t, kMaxDimension> c_{};
    std::uint32_t dim_ = 0;
};

inline std::ostream& operator<<(std::ostream& os, const Point& p) { return os << p.to_string(); }

struct PointHash {
    std::size_t operator()(const Point& p) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ p.dim();
        for (auto c : p.coords()) {
            h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0xbf58476d1ce4e5b9ULL;
        }
        h ^= h >> 31;
        return static_cast<std::size_t>(h);
    }
};

enum class Model { NearestNeighbor, SpreadOut };

/// Dimension plus edge rule. Neighbor offsets are precomputed once and shared between copies.
class LatticeSpec {
public:
    static LatticeSpec nearest_neighbor(std::size_t d) { return LatticeSpec(d, Model::NearestNeighbor, 1); }

    static LatticeSpec spread_out(std::size_t d, std::int64_t range) {
        if (range < 1) throw UsageError("spread-out range L must be >= 1");
        return LatticeSpec(d, Model::SpreadOut, range);
    }

    std::size_t dimension() const { return d_; }
    Model model() const { return model_; }
    /// l1 range of the edge rule; 1 for nearest-neighbor.
    std::int64_t range() const { return range_; }
    /// All y != 0 with ||y||_1 <= L, lexicographic.
    const std::vector<Point>& offsets() const { return *offsets_; }
    std::size_t degree() const { return offsets_->size(); }

    void check(const Point& x) const {
        if (x.dim() != d_)
            throw UsageError("point " + x.to_string() + " has dimension " + std::to_string(x.dim()) +
                             ", lattice has " + std::to_string(d_));
    }

    bool adjacent(const Point& a, const Point& b) const {
        check(a);
        check(b);
        auto l1 = (a - b).l1();
        return l1 >= 1 && l1 <= range_;
    }

    friend bool operator==(const LatticeSpec& a, const LatticeSpec& b) {
        return a.d_ == b.d_ && a.model_ == b.model_ && a.range_ == b.range_;
    }

    std::string describe() const {
        return "d=" + std::to_string(d_) +
               (model_ == Model::NearestNeighbor ? " nn" : " spread_out(L=" + std::to_string(range_) + ")");
    }

private:
    LatticeSpec(std::size_t d, Model model, std::int64_t range) : d_(d), model_(model), range_(range) {
        if (d == 0 || d > kMaxDimension)
            throw UsageError("dimension must be in [1, " + std::to_string(kMaxDimension) + "]");
        auto offs = std::make_shared<std::vector<Point>>();
        Point cur(d);
        for (std::size_t i = 0; i < d; ++i) cur.set(i, -range);
        // odometer over {-L..L}^d in lexicographic order, keeping the l1 ball
        while (true) {
            auto l1 = cur.l1();
            if (l1 >= 1 && l1 <= range) offs->push_back(cur);
            std::size_t i = d;
            while (i > 0) {
                --i;
                if (cur[i] < range) {
                    cur.set(i, cur[i] + 1);
                    break;
                }
                cur.set(i, -range);
                if (i == 0) {
                    offsets_ = std::move(offs);
                    return;
                }
            }
        }
    }

    std::size_t d_;
    Model model_;
    std::int64_t range_;
    std::shared_ptr<const std::vector<Point>> offsets_;
};

/// Unordered pair of distinct points, stored with the lexicographically smaller endpoint first.
class Edge {
public:
    Edge(const Point& a, const Point& b) {
        Point::require_same_dim(a, b);
        if (a == b) throw UsageError("edge endpoints must be distinct: " + a.to_string());
        if (a < b) {
            first_ = a;
            second_ = b;
        } else {
            first_ = b;
            second_ = a;
        }
    }

    /// Stores endpoints as given. Only for decoding external data; consumers reject non-canonical edges.
    static Edge raw(const Point& first, const Point& second) {
        Edge e;
        e.first_ = first;
        e.second_ = second;
        return e;
    }

    const Point& first() const { return first_; }
    const Point& second() const { return second_; }
    bool is_canonical() const { return first_ < second_; }

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge& a, const Edge& b) {
        if (auto c = a.first_ <=> b.first_; c != 0) return c;
        return a.second_ <=> b.second_;
    }

    std::string to_string() const { return "{" + first_.to_string() + "," + second_.to_string() + "}"; }

private:
    Edge() = default;
    Point first_, second_;
};

struct EdgeHash {
    std::size_t operator()(const Edge& e) const noexcept {
        PointHash h;
        return h(e.first()) * 0x9e3779b97f4a7c15ULL ^ h(e.second());
    }
};

/// Edge checked against the lattice's adjacency rule.
inline Edge make_edge(const LatticeSpec& spec, const Point& a, const Point& b) {
    if (!spec.adjacent(a, b)) throw UsageError(a.to_string() + " and " + b.to_string() + " are not adjacent");
    return Edge(a, b);
}

/// center + Q_radius.
struct Box {
    std::int64_t radius = 0;
    Point center;

    Box() = default;
    Box(std::size_t d, std::int64_t r) : radius(r), center(Point::origin(d)) { validate(); }
    Box(std::int64_t r, Point c) : radius(r), center(std::move(c)) { validate(); }

    std::size_t dim() const { return center.dim(); }

    bool contains(const Point& x) const {
        for (std::size_t i = 0; i < x.dim(); ++i) {
            auto dx = x[i] - center[i];
            if (dx > radius || dx < -radius) return false;
        }
        return true;
    }

    /// max_i |x_i - center_i|
    std::int64_t linf_from_center(const Point& x) const {
        std::int64_t m = 0;
        for (std::size_t i = 0; i < x.dim(); ++i) {
            auto dx = x[i] - center[i];
            m = std::max(m, dx < 0 ? -dx : dx);
        }
        return m;
    }

    /// Inner boundary for an l1-range-L edge rule. Equivalent to the neighbor rule because
    /// the offsets +-L*e_i are always edges: x has a neighbor outside iff some |x_i - c_i| > r - L.
    bool boundary_contains(const Point& x, std::int64_t range) const {
        auto m = linf_from_center(x);
        return m <= radius && m > radius - range;
    }

    double volume() const { return std::pow(2.0 * static_cast<double>(radius) + 1.0, static_cast<double>(dim())); }

    friend bool operator==(const Box&, const Box&) = default;

private:
    void validate() const {
        if (radius < 0) throw UsageError("box radius must be non-negative");
        detail::checked_coordinate(radius);
    }
};

/// Visits every point of the box in lexicographic order.
template <class Fn>
void for_each_in_box(const Box& box, Fn&& fn) {
    const auto d = box.dim();
    Point cur(d);
    for (std::size_t i = 0; i < d; ++i) cur.set(i, box.center[i] - box.radius);
    while (true) {
        fn(static_cast<const Point&>(cur));
        std::size_t i = d;
        while (true) {
            if (i == 0) return;
            --i;
            if (cur[i] < box.center[i] + box.radius) {
                cur.set(i, cur[i] + 1);
                break;
            }
            cur.set(i, box.center[i] - box.radius);
        }
    }
}

// ---------------------------------------------------------------------------
// Operations

inline std::vector<Point> neighbors(const LatticeSpec& spec, const Point& x) {
    spec.check(x);
    std::vector<Point> out;
    out.reserve(spec.degree());
    for (const auto& off : spec.offsets()) out.push_back(x + off);
    return out;
}

/// z in center+Q_r and some lattice neighbor of z lies outside. Decided by the neighbor rule.
inline bool boundary_membership(const LatticeSpec& spec, std::int64_t r, const Point& z,
                                const Point* center = nullptr) {
    spec.check(z);
    Box box = center ? Box(r, *center) : Box(spec.dimension(), r);
    if (!box.contains(z)) return false;
    for (const auto& off : spec.offsets()) {
        bool outside = false;
        for (std::size_t i = 0; i < z.dim() && !outside; ++i) {
            auto dx = z[i] + off[i] - box.center[i];
            outside = dx > r || dx < -r;
        }
        if (outside) return true;
    }
    return false;
}

struct Norms {
    double euclidean = 0;
    std::int64_t linf = 0;
    std::int64_t l1 = 0;
};

inline Norms norms(const Point& x, const Point& y) {
    auto diff = x - y;
    double sq = 0;
    for (auto c : diff.coords()) sq += static_cast<double>(c) * static_cast<double>(c);
    return {std::sqrt(sq), diff.linf(), diff.l1()};
}

struct BoxPredicate {
    enum class Kind { All, Boundary, Annulus } kind = Kind::All;
    /// Annulus yields Q_outer \ Q_inner.
    std::int64_t inner = 0;
    std::int64_t outer = 0;

    static BoxPredicate all() { return {}; }
    static BoxPredicate boundary() { return {Kind::Boundary, 0, 0}; }
    static BoxPredicate annulus(std::int64_t inner, std::int64_t outer) { return {Kind::Annulus, inner, outer}; }
};

struct EnumerationOptions {
    double warn_above_points = 5e6;
    std::ostream* warnings = &std::clog;
};

/// Points of Q_r (or of the annulus Q_outer \ Q_inner) in lexicographic order.
inline std::vector<Point> enumerate_box(const LatticeSpec& spec, std::int64_t r, const BoxPredicate& pred,
                                        const EnumerationOptions& opts = {}) {
    const auto d = spec.dimension();
    const std::int64_t outer = pred.kind == BoxPredicate::Kind::Annulus ? pred.outer : r;
    if (pred.kind == BoxPredicate::Kind::Annulus && (pred.inner < 0 || pred.outer < pred.inner))
        throw UsageError("annulus requires 0 <= inner <= outer");
    Box box(d, outer);
    if (box.volume() > opts.warn_above_points && opts.warnings)
        *opts.warnings << "perc: enumerating " << box.volume() << " points of Q_" << outer << " in d=" << d
                       << "\n";
    std::vector<Point> out;
    Box inner(d, std::max<std::int64_t>(pred.inner, 0));
    for_each_in_box(box, [&](const Point& x) {
        switch (pred.kind) {
            case BoxPredicate::Kind::All:
                out.push_back(x);
                break;
            case BoxPredicate::Kind::Boundary:
                if (box.boundary_contains(x, spec.range())) out.push_back(x);
                break;
            case BoxPredicate::Kind::Annulus:
                if (!inner.contains(x)) out.push_back(x);
                break;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// JSON: {"d": int, "model": "nn" | {"spread_out": L}}; points as coordinate arrays.

inline void to_json(nlohmann::json& j, const Point& p) {
    j = nlohmann::json::array();
    for (auto c : p.coords()) j.push_back(c);
}

inline void from_json(const nlohmann::json& j, Point& p) {
    if (!j.is_array()) throw UsageError("point must be a JSON array");
    std::vector<std::int64_t> c = j.get<std::vector<std::int64_t>>();
    p = Point(std::span<const std::int64_t>(c));
}

inline void to_json(nlohmann::json& j, const LatticeSpec& s) {
    j = nlohmann::json{{"d", s.dimension()}};
    if (s.model() == Model::NearestNeighbor)
        j["model"] = "nn";
    else
        j["model"] = {{"spread_out", s.range()}};
}

inline LatticeSpec lattice_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("d") || !j.contains("model"))
        throw UsageError("lattice spec needs \"d\" and \"model\"");
    auto d = j.at("d").get<std::int64_t>();
    if (d < 1) throw UsageError("d must be >= 1");
    const auto& m = j.at("model");
    if (m.is_string() && m.get<std::string>() == "nn") return LatticeSpec::nearest_neighbor(static_cast<std::size_t>(d));
    if (m.is_object() && m.contains("spread_out"))
        return LatticeSpec::spread_out(static_cast<std::size_t>(d), m.at("spread_out").get<std::int64_t>());
    throw UsageError("model must be \"nn\" or {\"spread_out\": L}");
}

}  // namespace perc
