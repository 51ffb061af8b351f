#pragma once

// Stateless percolation configuration. Every edge gets a uniform deviate from
// SipHash-2-4 keyed by (seed, sample_index) over a fixed little-endian edge
// encoding; the edge is open iff that deviate is < p. Because the deviate does
// not depend on p, configurations at different p are monotonically coupled.
//
// Edge encoding (bit-exact, 8*(1+2d) bytes):
//   u64le(d) || i64le(first_0) .. i64le(first_{d-1}) || i64le(second_0) .. i64le(second_{d-1})
// with (first, second) the canonical (lexicographically ordered) endpoints.
// Deviate: u = (siphash24(key = (seed, sample_index), encoding) >> 11) * 2^-53.

#include <bit>
#include <charconv>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "perc/error.hpp"
#include "perc/lattice.hpp"

namespace perc {

static_assert(std::endian::native == std::endian::little, "edge encoding assumes a little-endian host");

namespace detail {

struct SipHash24 {
    std::uint64_t v0, v1, v2, v3;

    SipHash24(std::uint64_t k0, std::uint64_t k1)
        : v0(k0 ^ 0x736f6d6570736575ULL),
          v1(k1 ^ 0x646f72616e646f6dULL),
          v2(k0 ^ 0x6c7967656e657261ULL),
          v3(k1 ^ 0x7465646279746573ULL) {}

    void round() {
        v0 += v1;
        v1 = std::rotl(v1, 13);
        v1 ^= v0;
        v0 = std::rotl(v0, 32);
        v2 += v3;
        v3 = std::rotl(v3, 16);
        v3 ^= v2;
        v0 += v3;
        v3 = std::rotl(v3, 21);
        v3 ^= v0;
        v2 += v1;
        v1 = std::rotl(v1, 17);
        v1 ^= v2;
        v2 = std::rotl(v2, 32);
    }

    void absorb(std::uint64_t m) {
        v3 ^= m;
        round();
        round();
        v0 ^= m;
    }

    std::uint64_t finish(std::uint64_t last_block) {
        absorb(last_block);
        v2 ^= 0xff;
        round();
        round();
        round();
        round();
        return v0 ^ v1 ^ v2 ^ v3;
    }
};

}  // namespace detail

/// Reference SipHash-2-4 over an arbitrary byte string.
inline std::uint64_t siphash24(std::uint64_t k0, std::uint64_t k1, std::span<const std::uint8_t> msg) {
    detail::SipHash24 h(k0, k1);
    const std::size_t full = msg.size() / 8;
    for (std::size_t b = 0; b < full; ++b) {
        std::uint64_t m = 0;
        for (int i = 7; i >= 0; --i) m = (m << 8) | msg[b * 8 + static_cast<std::size_t>(i)];
        h.absorb(m);
    }
    std::uint64_t last = static_cast<std::uint64_t>(msg.size() & 0xff) << 56;
    for (std::size_t i = full * 8; i < msg.size(); ++i) last |= std::uint64_t{msg[i]} << (8 * (i - full * 8));
    return h.finish(last);
}

/// SipHash-2-4 of the little-endian byte image of `words`; equal to siphash24() on those bytes.
inline std::uint64_t siphash24_words(std::uint64_t k0, std::uint64_t k1, std::span<const std::uint64_t> words) {
    detail::SipHash24 h(k0, k1);
    for (auto w : words) h.absorb(w);
    return h.finish(static_cast<std::uint64_t>((words.size() * 8) & 0xff) << 56);
}

inline double uniform_from_bits(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

enum class EdgeState { Closed, Open };

/// Identifies one percolation configuration: (seed, sample_index) fixes every edge's deviate.
struct FieldConfig {
    std::uint64_t seed = 0;
    double p = 0.5;
    std::uint64_t sample_index = 0;

    FieldConfig() = default;
    FieldConfig(std::uint64_t seed_, double p_, std::uint64_t sample_index_ = 0)
        : seed(seed_), p(p_), sample_index(sample_index_) {
        if (!(p >= 0.0 && p <= 1.0)) throw UsageError("p must lie in [0,1]");
    }

    FieldConfig with_p(double q) const { return FieldConfig(seed, q, sample_index); }
    FieldConfig with_sample(std::uint64_t k) const { return FieldConfig(seed, p, k); }

    /// Deviate for the pair (a, b) in either order.
    double uniform(const Point& a, const Point& b) const {
        return a < b ? uniform_ordered(a, b) : uniform_ordered(b, a);
    }

    bool is_open(const Point& a, const Point& b) const { return uniform(a, b) < p; }

    /// Caller guarantees a < b.
    double uniform_ordered(const Point& a, const Point& b) const {
        const auto d = a.dim();
        detail::SipHash24 h(seed, sample_index);
        h.absorb(static_cast<std::uint64_t>(d));
        for (auto c : a.coords()) h.absorb(static_cast<std::uint64_t>(c));
        for (auto c : b.coords()) h.absorb(static_cast<std::uint64_t>(c));
        return uniform_from_bits(h.finish(static_cast<std::uint64_t>(((1 + 2 * d) * 8) & 0xff) << 56));
    }
};

/// Anything that can report the open/closed state of a lattice edge.
template <class S>
concept EdgeSource = requires(const S& s, const Point& a, const Point& b) {
    { s.is_open(a, b) } -> std::convertible_to<bool>;
};

static_assert(EdgeSource<FieldConfig>);

/// The documented byte encoding of a canonical edge.
inline std::vector<std::uint8_t> edge_encoding(const Edge& e) {
    std::vector<std::uint64_t> words;
    words.push_back(e.first().dim());
    for (auto c : e.first().coords()) words.push_back(static_cast<std::uint64_t>(c));
    for (auto c : e.second().coords()) words.push_back(static_cast<std::uint64_t>(c));
    std::vector<std::uint8_t> bytes;
    for (auto w : words)
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
    return bytes;
}

inline double edge_uniform(const FieldConfig& config, const Edge& e) {
    if (!e.is_canonical()) throw UsageError("edge " + e.to_string() + " is not canonical");
    return config.uniform_ordered(e.first(), e.second());
}

inline EdgeState edge_open(const FieldConfig& config, const Edge& e) {
    return edge_uniform(config, e) < config.p ? EdgeState::Open : EdgeState::Closed;
}

// ---------------------------------------------------------------------------
// Golden vectors: CSV "seed,sample_index,edge_encoding_hex,u_as_hex_double".

struct GoldenVector {
    std::uint64_t seed = 0;
    std::uint64_t sample_index = 0;
    std::vector<std::uint8_t> encoding;
    double u = 0;
};

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : bytes) {
        s += digits[b >> 4];
        s += digits[b & 0xf];
    }
    return s;
}

inline std::vector<std::uint8_t> from_hex(const std::string& s) {
    if (s.size() % 2) throw UsageError("odd-length hex string");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < s.size(); i += 2) {
        unsigned v = 0;
        auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + i + 2, v, 16);
        if (ec != std::errc{} || ptr != s.data() + i + 2) throw UsageError("bad hex: " + s);
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

inline std::string hex_double(double u) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", u);
    return buf;
}

/// Deviate for a raw encoding, as a foreign implementation would compute it.
inline double uniform_from_encoding(std::uint64_t seed, std::uint64_t sample_index,
                                    std::span<const std::uint8_t> encoding) {
    return uniform_from_bits(siphash24(seed, sample_index, encoding));
}

inline void write_golden_csv(std::ostream& os, const std::vector<GoldenVector>& rows) {
    os << "seed,sample_index,edge_encoding_hex,u_as_hex_double\n";
    for (const auto& r : rows)
        os << r.seed << ',' << r.sample_index << ',' << to_hex(r.encoding) << ',' << hex_double(r.u) << '\n';
}

inline std::vector<GoldenVector> read_golden_csv(std::istream& is) {
    std::vector<GoldenVector> rows;
    std::string line;
    if (!std::getline(is, line) || line.rfind("seed,sample_index", 0) != 0)
        throw UsageError("golden CSV: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[4];
        for (auto& field : f)
            if (!std::getline(ss, field, ',')) throw UsageError("golden CSV: short row: " + line);
        GoldenVector g;
        g.seed = std::stoull(f[0]);
        g.sample_index = std::stoull(f[1]);
        g.encoding = from_hex(f[2]);
        g.u = std::strtod(f[3].c_str(), nullptr);
        rows.push_back(std::move(g));
    }
    return rows;
}

}  // namespace perc
