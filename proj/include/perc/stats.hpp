#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace perc {

/// Monte Carlo mean with its standard error. Indeterminate (truncated) samples are excluded
/// from value and n, and reported as a fraction of all samples drawn.
struct PointEstimate {
    double value = 0;
    double std_error = 0;
    std::uint64_t n = 0;
    double indeterminate_fraction = 0;

    friend bool operator==(const PointEstimate&, const PointEstimate&) = default;
};

inline void to_json(nlohmann::json& j, const PointEstimate& e) {
    j = {{"value", e.value}, {"std_error", e.std_error}, {"n", e.n}, {"indeterminate_fraction", e.indeterminate_fraction}};
}

inline void from_json(const nlohmann::json& j, PointEstimate& e) {
    e.value = j.at("value").get<double>();
    e.std_error = j.at("std_error").get<double>();
    e.n = j.at("n").get<std::uint64_t>();
    e.indeterminate_fraction = j.at("indeterminate_fraction").get<double>();
}

/// Bernoulli frequency: std_error = sqrt(v(1-v)/n).
inline PointEstimate bernoulli_estimate(std::uint64_t yes, std::uint64_t no, std::uint64_t indeterminate) {
    PointEstimate e;
    e.n = yes + no;
    const auto total = e.n + indeterminate;
    e.indeterminate_fraction = total ? static_cast<double>(indeterminate) / static_cast<double>(total) : 0.0;
    if (e.n == 0) return e;
    e.value = static_cast<double>(yes) / static_cast<double>(e.n);
    e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(e.n));
    return e;
}

/// Order-fixed running sums for a real-valued sample mean.
struct MeanAccumulator {
    long double sum = 0, sum_sq = 0;
    std::uint64_t n = 0, indeterminate = 0;

    void add(double x) {
        sum += x;
        sum_sq += static_cast<long double>(x) * x;
        ++n;
    }
    void skip() { ++indeterminate; }

    /// Mean and sample-variance standard error s/sqrt(n).
    PointEstimate estimate() const {
        PointEstimate e;
        e.n = n;
        const auto total = n + indeterminate;
        e.indeterminate_fraction = total ? static_cast<double>(indeterminate) / static_cast<double>(total) : 0.0;
        if (n == 0) return e;
        const long double mean = sum / static_cast<long double>(n);
        e.value = static_cast<double>(mean);
        if (n > 1) {
            long double var = (sum_sq - static_cast<long double>(n) * mean * mean) / static_cast<long double>(n - 1);
            if (var < 0) var = 0;
            e.std_error = static_cast<double>(std::sqrt(var / static_cast<long double>(n)));
        }
        return e;
    }
};

namespace detail {
/// Exact text form of a long double (hex float), for checkpoints that must resume bit-for-bit.
inline std::string exact_string(long double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%La", x);
    return buf;
}
inline long double exact_parse(const std::string& s) { return std::strtold(s.c_str(), nullptr); }
}  // namespace detail

/// One scale's observation for one sample; empty when the sample is indeterminate there.
using Observation = std::optional<double>;

/// Per-scale running statistics: Bernoulli counts or a sample mean.
struct ScaleAccumulator {
    enum class Kind { Bernoulli, Mean };
    Kind kind = Kind::Bernoulli;
    std::uint64_t yes = 0, no = 0, indeterminate = 0;
    MeanAccumulator mean;

    void add(const Observation& o) {
        if (kind == Kind::Bernoulli) {
            if (!o) ++indeterminate;
            else if (*o != 0) ++yes;
            else ++no;
        } else {
            if (o) mean.add(*o);
            else mean.skip();
        }
    }

    PointEstimate estimate() const {
        return kind == Kind::Bernoulli ? bernoulli_estimate(yes, no, indeterminate) : mean.estimate();
    }

    nlohmann::json to_json() const {
        if (kind == Kind::Bernoulli)
            return {{"kind", "bernoulli"}, {"yes", yes}, {"no", no}, {"indeterminate", indeterminate}};
        return {{"kind", "mean"},
                {"sum", detail::exact_string(mean.sum)},
                {"sum_sq", detail::exact_string(mean.sum_sq)},
                {"n", mean.n},
                {"indeterminate", mean.indeterminate}};
    }

    static ScaleAccumulator from_json(const nlohmann::json& j) {
        ScaleAccumulator a;
        if (j.at("kind") == "bernoulli") {
            a.yes = j.at("yes");
            a.no = j.at("no");
            a.indeterminate = j.at("indeterminate");
        } else {
            a.kind = Kind::Mean;
            a.mean.sum = detail::exact_parse(j.at("sum"));
            a.mean.sum_sq = detail::exact_parse(j.at("sum_sq"));
            a.mean.n = j.at("n");
            a.mean.indeterminate = j.at("indeterminate");
        }
        return a;
    }
};

/// Accumulators for every scale of a series, fed one sample at a time in sample order.
struct SeriesAccumulator {
    std::vector<ScaleAccumulator> scales;
    std::uint64_t samples = 0;

    SeriesAccumulator() = default;
    explicit SeriesAccumulator(const std::vector<ScaleAccumulator::Kind>& kinds) {
        for (auto k : kinds) scales.push_back(ScaleAccumulator{k, 0, 0, 0, {}});
    }

    void add(const std::vector<Observation>& obs) {
        for (std::size_t i = 0; i < scales.size(); ++i) scales[i].add(obs.at(i));
        ++samples;
    }

    std::vector<PointEstimate> estimates() const {
        std::vector<PointEstimate> out;
        for (const auto& s : scales) out.push_back(s.estimate());
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& s : scales) a.push_back(s.to_json());
        return {{"samples", samples}, {"scales", a}};
    }

    static SeriesAccumulator from_json(const nlohmann::json& j) {
        SeriesAccumulator acc;
        acc.samples = j.at("samples");
        for (const auto& s : j.at("scales")) acc.scales.push_back(ScaleAccumulator::from_json(s));
        return acc;
    }
};

}  // namespace perc
