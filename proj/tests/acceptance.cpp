// Acceptance run: one PASS/FAIL line per criterion.
// PERC_ACCEPTANCE=1,2,5 selects a subset.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "perc/disjoint_paths.hpp"
#include "perc/estimators.hpp"
#include "perc/experiment.hpp"
#include "perc/explorer.hpp"
#include "perc/oracle.hpp"

using namespace perc;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double bernoulli_se(double q, std::uint64_t n) { return std::sqrt(q * (1 - q) / static_cast<double>(n)); }

std::vector<Edge> box_edges(const LatticeSpec& spec, const Box& box) {
    std::vector<Edge> out;
    for_each_in_box(box, [&](const Point& x) {
        for (const auto& off : spec.offsets()) {
            Point y = x + off;
            if (box.contains(y) && x < y) out.emplace_back(x, y);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// 1. one-arm in d=1 against 2p^r - p^2r

Verdict one_arm_d1() {
    auto spec = LatticeSpec::nearest_neighbor(1);
    EstimatorConfig cfg;
    cfg.n_samples = 100'000;
    cfg.master_seed = 101;
    Verdict v{true, ""};
    double worst = 0;
    for (double p : {0.4, 0.6}) {
        auto est = estimate_one_arm_series(spec, p, {2, 3, 5}, cfg);
        const std::int64_t radii[] = {2, 3, 5};
        for (std::size_t i = 0; i < 3; ++i) {
            const double r = static_cast<double>(radii[i]);
            const double exact = 2 * std::pow(p, r) - std::pow(p, 2 * r);
            const double z = std::abs(est[i].value - exact) / bernoulli_se(exact, cfg.n_samples);
            worst = std::max(worst, z);
            if (z > 3) v.pass = false;
        }
    }
    v.detail = fmt("max |z| = %.2f over 6 cases", worst);
    return v;
}

// ---------------------------------------------------------------------------
// 2. multi-arm frequency vs exact disjoint occurrence; flow vs raw split

struct ArmGraph {
    FiniteGraph graph;
    std::int64_t r;
    std::vector<Point> points;
    std::vector<EventPredicate> events;
};

ArmGraph make_arm_graph(const std::vector<Edge>& edges, std::int64_t r, const std::vector<Point>& points) {
    auto g = FiniteGraph::from_edges(edges, points);
    std::vector<std::uint32_t> shell;
    for (std::uint32_t i = 0; i < g.n(); ++i)
        if (Box(2, r).boundary_contains(g.vertex(i), 1)) shell.push_back(i);
    std::vector<EventPredicate> events;
    for (const auto& y : points) events.push_back(EventPredicate::connect_to_set(g.require_index(y), shell));
    return {std::move(g), r, points, std::move(events)};
}

// Random connected growth of m lattice edges of Q_r outward from the arm points.
std::vector<Edge> grow_edges(const LatticeSpec& spec, std::int64_t r, const std::vector<Point>& points, std::size_t m,
                             std::mt19937_64& rng) {
    const Box q(2, r);
    std::set<Point> verts(points.begin(), points.end());
    std::set<Edge> chosen;
    while (chosen.size() < m) {
        std::vector<Edge> cand;
        for (const auto& x : verts)
            for (const auto& off : spec.offsets()) {
                Point y = x + off;
                if (!q.contains(y)) continue;
                Edge e(x, y);
                if (!chosen.count(e)) cand.push_back(e);
            }
        if (cand.empty()) break;
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        const auto& e = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
        chosen.insert(e);
        verts.insert(e.first());
        verts.insert(e.second());
    }
    return {chosen.begin(), chosen.end()};
}

// Configuration-by-configuration: lattice multi-arm flow, oracle flow and raw split agree.
bool flow_matches_raw(const LatticeSpec& spec, const ArmGraph& ag, std::size_t& configs) {
    const GrowthBudget budget{1'000'000, std::nullopt};
    for (Config mask = 0; mask <= ag.graph.full_mask(); ++mask) {
        ++configs;
        const bool raw = disjoint_occurrence_raw(ag.graph, mask, ag.events);
        const bool flow = disjoint_occurrence_flow(ag.graph, mask, ag.events);
        auto lattice = multi_arm_event(spec, ConfigField{&ag.graph, mask}, ag.r, ag.points, budget);
        if (raw != flow || lattice.holds() != raw || lattice.outcome == Outcome::Indeterminate) return false;
    }
    return true;
}

Verdict multi_arm_semantics() {
    auto spec = LatticeSpec::nearest_neighbor(2);
    const GrowthBudget budget{1'000'000, std::nullopt};
    std::mt19937_64 rng(2024);
    constexpr std::uint64_t n = 100'000;
    const double ps[] = {0.3, 0.5, 0.7};
    std::size_t graphs = 0, drawn = 0, outside = 0, raw_graphs = 0, configs = 0, mismatches = 0;
    double worst = 0;
    std::size_t worst_m = 0;
    while (graphs < 100) {
        ++drawn;
        const bool three = drawn % 2 == 0;
        const std::int64_t r = three ? 3 : 2;
        std::vector<Point> pts{Point{-1, 0}, Point{1, 0}};
        if (three) pts.push_back(Point{0, 1});
        const auto m = std::uniform_int_distribution<std::size_t>(6, 12)(rng);
        auto edges = grow_edges(spec, r, pts, m, rng);
        auto ag = make_arm_graph(edges, r, pts);

        // raw split has a 10-edge cap; larger graphs are checked on their first 10 edges
        auto small = ag.graph.m() <= kRawSplitCap
                         ? ag
                         : make_arm_graph(std::vector<Edge>(edges.begin(), edges.begin() + kRawSplitCap), r, pts);
        ++raw_graphs;
        if (!flow_matches_raw(spec, small, configs)) ++mismatches;

        const double p = ps[drawn % 3];
        const double exact = exact_disjoint_occurrence(ag.graph, p, ag.events);
        if (!(exact > 0)) continue;  // the arms cannot all reach the boundary of this graph
        ++graphs;
        std::uint64_t hits = 0;
        for (std::uint64_t k = 0; k < n; ++k) {
            RestrictedField<FieldConfig> f{&ag.graph, FieldConfig(7000 + drawn, p, k)};
            auto res = multi_arm_event(spec, f, r, pts, budget);
            hits += res.holds();
        }
        const double se = bernoulli_se(exact, n);
        const double z = se > 0 ? std::abs(static_cast<double>(hits) / n - exact) / se : 0.0;
        if (z > 3) ++outside;
        if (z > worst) {
            worst = z;
            worst_m = ag.graph.m();
        }
    }
    Verdict v;
    v.pass = outside == 0 && mismatches == 0;
    v.detail = fmt("%zu graphs (%zu drawn), max |z| = %.2f (m=%zu), %zu beyond 3 sigma; "
                   "flow vs raw on %zu graphs / %zu configurations: %zu mismatching graphs",
                   graphs, drawn, worst, worst_m, outside, raw_graphs, configs, mismatches);
    return v;
}

// ---------------------------------------------------------------------------
// 3. BK and FKG on every small graph, against direct enumeration

struct Brute {
    std::size_t n;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<std::vector<std::uint32_t>> comp;  // component labels per configuration

    Brute(std::size_t n_, std::vector<std::pair<std::uint32_t, std::uint32_t>> e) : n(n_), edges(std::move(e)) {
        const Config total = Config{1} << edges.size();
        comp.resize(total);
        for (Config mask = 0; mask < total; ++mask) {
            std::vector<std::uint32_t> lab(n);
            for (std::uint32_t i = 0; i < n; ++i) lab[i] = i;
            bool changed = true;
            while (changed) {
                changed = false;
                for (std::size_t k = 0; k < edges.size(); ++k) {
                    if (!(mask >> k & 1)) continue;
                    auto [a, b] = edges[k];
                    auto lo = std::min(lab[a], lab[b]);
                    if (lab[a] != lo || lab[b] != lo) {
                        lab[a] = lab[b] = lo;
                        changed = true;
                    }
                }
            }
            comp[mask] = std::move(lab);
        }
    }
    bool linked(Config mask, std::pair<std::uint32_t, std::uint32_t> ev) const {
        return comp[mask][ev.first] == comp[mask][ev.second];
    }
    double weight(Config mask, double p) const {
        const auto k = static_cast<double>(std::popcount(mask));
        return std::pow(p, k) * std::pow(1 - p, static_cast<double>(edges.size()) - k);
    }
};

Verdict correlation_inequalities() {
    std::size_t graphs = 0, checks = 0, violations = 0, disagreements = 0;
    double max_dev = 0;
    auto sweep = [&](std::size_t nv, std::size_t max_edges) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
        for (std::uint32_t a = 0; a < nv; ++a)
            for (std::uint32_t b = a + 1; b < nv; ++b) all.emplace_back(a, b);
        for (Config sub = 0; sub < (Config{1} << all.size()); ++sub) {
            if (static_cast<std::size_t>(std::popcount(sub)) > max_edges) continue;
            std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
            for (std::size_t k = 0; k < all.size(); ++k)
                if (sub >> k & 1) edges.push_back(all[k]);
            ++graphs;
            Brute brute(nv, edges);
            auto g = FiniteGraph::labeled(nv, edges);
            const Config total = Config{1} << edges.size();
            for (std::size_t i = 0; i < all.size(); ++i)
                for (std::size_t j = i; j < all.size(); ++j) {
                    auto ea = EventPredicate::connect(all[i].first, all[i].second);
                    auto eb = EventPredicate::connect(all[j].first, all[j].second);
                    for (double p : {0.2, 0.5, 0.8}) {
                        double pa = 0, pb = 0, pab = 0, pdis = 0;
                        for (Config mask = 0; mask < total; ++mask) {
                            const double w = brute.weight(mask, p);
                            const bool a = brute.linked(mask, all[i]), b = brute.linked(mask, all[j]);
                            pa += a * w;
                            pb += b * w;
                            pab += (a && b) * w;
                            bool dis = false;
                            for (Config s = mask;; s = (s - 1) & mask) {
                                if (brute.linked(s, all[i]) && brute.linked(mask ^ s, all[j])) {
                                    dis = true;
                                    break;
                                }
                                if (s == 0) break;
                            }
                            pdis += dis * w;
                        }
                        auto bk = verify_bk(g, p, ea, eb);
                        auto fkg = verify_fkg(g, p, ea, eb);
                        checks += 2;
                        const double dev = std::max({std::abs(bk.lhs - pdis), std::abs(bk.rhs - pa * pb),
                                                     std::abs(fkg.lhs - pab), std::abs(fkg.rhs - pa * pb)});
                        max_dev = std::max(max_dev, dev);
                        if (dev > 1e-12) ++disagreements;
                        if (!bk.holds || !fkg.holds || pdis > pa * pb + 1e-12 || pab + 1e-12 < pa * pb) ++violations;
                    }
                }
        }
    };
    sweep(4, 6);
    sweep(5, 7);

    std::ifstream in(std::string(PERC_TEST_DATA) + "/oracle_corpus.json");
    auto corpus = verify_corpus(nlohmann::json::parse(in));
    std::size_t corpus_ineq = 0, corpus_failed = 0;
    for (const auto& c : corpus) {
        if (c.kind == "probability") continue;
        ++corpus_ineq;
        corpus_failed += !c.pass;
    }
    Verdict v;
    v.pass = violations == 0 && disagreements == 0 && corpus_failed == 0 && corpus_ineq > 0;
    v.detail = fmt("%zu graphs, %zu checks, %zu violations, max deviation from enumeration %.1e; "
                   "corpus %zu/%zu inequality checks pass",
                   graphs, checks, violations, max_dev, corpus_ineq - corpus_failed, corpus_ineq);
    return v;
}

// ---------------------------------------------------------------------------
// 4. coupling, reruns, workers

Verdict coupling_determinism() {
    const GrowthBudget budget{1'000'000, std::nullopt};
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::size_t bad = 0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
        const std::size_t d = 2 + t % 2;
        auto spec = LatticeSpec::nearest_neighbor(d);
        double p1 = unif(rng), p2 = unif(rng);
        if (p1 > p2) std::swap(p1, p2);
        const Box region(d, d == 2 ? 12 : 5);
        auto lo = grow_cluster(spec, FieldConfig(t, p1, t), Point::origin(d), region, budget);
        auto hi = grow_cluster(spec, FieldConfig(t, p2, t), Point::origin(d), region, budget);
        bool ok = !lo.is_truncated() && !hi.is_truncated() && lo.size() <= hi.size();
        for (const auto& x : lo.members.points()) ok = ok && hi.contains(x);
        bad += !ok;
    }

    auto spec = LatticeSpec::nearest_neighbor(2);
    EstimatorConfig cfg;
    cfg.n_samples = 20'000;
    cfg.master_seed = 44;
    cfg.budget = budget;
    auto kernel = MultiArmSeries(spec, {2, 4, 8}, {Point{-1, 0}, Point{1, 0}}, budget);
    const auto first = run_series(kernel, 0.55, cfg).to_json().dump();
    const bool rerun = run_series(kernel, 0.55, cfg).to_json().dump() == first;
    bool workers = true;
    for (unsigned w : {2u, 3u, 8u}) {
        cfg.parallel_workers = w;
        workers = workers && run_series(kernel, 0.55, cfg).to_json().dump() == first;
    }
    Verdict v;
    v.pass = bad == 0 && rerun && workers;
    v.detail = fmt("containment failures %zu/1000, rerun %s, workers 1/2/3/8 %s", bad, rerun ? "identical" : "differs",
                   workers ? "identical" : "differ");
    return v;
}

// ---------------------------------------------------------------------------
// 5. critical point

Verdict critical_point() {
    EstimatorConfig c1;
    c1.n_samples = 100'000;
    c1.master_seed = 5;
    auto d1 = estimate_pc(LatticeSpec::nearest_neighbor(1), 5, c1, 1e-4);
    const double target = std::pow(2.0, -0.2);
    const bool d1_ok = std::abs(d1.p_hat - target) <= 2e-3;

    EstimatorConfig c2;
    c2.n_samples = 4000;
    c2.master_seed = 5;
    std::vector<PcEstimate> seq;
    for (std::int64_t r : {4, 8, 16}) seq.push_back(estimate_pc(LatticeSpec::nearest_neighbor(2), r, c2, 1e-3));
    const auto& last = seq.back();
    const bool d2_ok = last.p_low <= 0.53 && last.p_high >= 0.47;

    // three-point extrapolation p_r = p_inf - a r^-theta, reported only
    const double g1 = seq[1].p_hat - seq[0].p_hat, g2 = seq[2].p_hat - seq[1].p_hat;
    std::string extra = "n/a";
    if (g1 > 0 && g2 > 0 && g1 > g2) {
        const double theta = std::log2(g1 / g2);
        extra = fmt("%.4f (theta %.2f)", seq[2].p_hat + g2 / (std::pow(2.0, theta) - 1), theta);
    }
    Verdict v;
    v.pass = d1_ok && d2_ok;
    v.detail = fmt("d=1 r=5 p_hat %.5f vs %.5f; d=2 p_hat(4,8,16) = %.4f %.4f %.4f, final bracket [%.4f, %.4f] "
                   "vs [0.47, 0.53]; extrapolated %s",
                   d1.p_hat, target, seq[0].p_hat, seq[1].p_hat, seq[2].p_hat, last.p_low, last.p_high, extra.c_str());
    return v;
}

// ---------------------------------------------------------------------------
// 6-9. d=7 at the r=12 criterion point

struct D7 {
    LatticeSpec spec = LatticeSpec::nearest_neighbor(7);
    PcEstimate pc;
    double p = 0;
    std::vector<PointEstimate> one_arm;
    bool one_arm_done = false;

    void ensure_pc() {
        if (p > 0) return;
        EstimatorConfig cfg;
        cfg.n_samples = 10'000;
        cfg.master_seed = 12;
        pc = estimate_pc(spec, 12, cfg, 2e-5);
        p = 0.5 * (pc.p_low + pc.p_high);
        std::printf("  d=7 criterion point: p_hat %.6f, bracket [%.6f, %.6f], using p = %.6f\n", pc.p_hat, pc.p_low,
                    pc.p_high, p);
    }
    EstimatorConfig cfg(std::uint64_t seed) const {
        EstimatorConfig c;
        c.n_samples = 200'000;
        c.master_seed = seed;
        c.budget = GrowthBudget{1'000'000, std::nullopt};
        return c;
    }
    const std::vector<PointEstimate>& arms() {
        ensure_pc();
        if (!one_arm_done) {
            one_arm = estimate_one_arm_series(spec, p, {8, 12, 16, 24, 32}, cfg(61));
            one_arm_done = true;
        }
        return one_arm;
    }
};

D7& d7() {
    static D7 state;
    return state;
}

struct SlopeCheck {
    std::string name;
    double lo, hi;
    std::vector<double> scales;
    std::vector<PointEstimate> est;
};

std::string describe(const std::vector<double>& scales, const std::vector<PointEstimate>& est) {
    std::ostringstream os;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        os << (i ? " " : "") << scales[i] << ":" << fmt("%.3g", est[i].value);
        if (est[i].indeterminate_fraction > 0) os << fmt("(ind %.3f)", est[i].indeterminate_fraction);
    }
    return os.str();
}

Verdict exponents() {
    auto& s = d7();
    std::vector<SlopeCheck> checks;
    checks.push_back({"one-arm", -2.5, -1.5, {8, 12, 16, 24, 32}, s.arms()});
    checks.push_back({"tail", -0.65, -0.35, {1e2, 1e3, 1e4, 1e5},
                      estimate_cluster_tail(s.spec, s.p, {100, 1000, 10000, 100000}, s.cfg(62))});
    checks.push_back({"two-point", -6, -4, {2, 3, 4, 5, 6, 7, 8},
                      estimate_two_point_axis_series(s.spec, s.p, {2, 3, 4, 5, 6, 7, 8}, s.cfg(63))});
    std::vector<Point> arms{Point::axis(7, 0, 1), Point::axis(7, 0, -1)};
    checks.push_back({"two-arm", -4.8, -3.2, {6, 8, 12, 16},
                      estimate_multi_arm_series(s.spec, s.p, {6, 8, 12, 16}, arms, s.cfg(64))});
    Verdict v{true, ""};
    for (const auto& c : checks) {
        std::vector<std::pair<double, PointEstimate>> series;
        bool indeterminate_ok = true;
        for (std::size_t i = 0; i < c.scales.size(); ++i) {
            series.emplace_back(c.scales[i], c.est[i]);
            indeterminate_ok = indeterminate_ok && c.est[i].indeterminate_fraction < 0.01;
        }
        FitOptions opt;
        opt.min_scale = 0;
        std::string line;
        bool ok = false;
        try {
            auto fit = fit_exponent(series, opt);
            const bool all_used = fit.fit_window.size() == c.scales.size();
            ok = indeterminate_ok && all_used && fit.slope >= c.lo && fit.slope <= c.hi;
            line = fmt("slope %.3f +- %.3f on %zu/%zu scales", fit.slope, fit.slope_std_error, fit.fit_window.size(),
                       c.scales.size());
        } catch (const std::exception& e) {
            line = std::string("no fit: ") + e.what();
        }
        std::printf("  %s [%g, %g]: %s %s%s; %s\n", c.name.c_str(), c.lo, c.hi, ok ? "ok" : "out", line.c_str(),
                    indeterminate_ok ? "" : " indeterminate >= 1%", describe(c.scales, c.est).c_str());
        v.pass = v.pass && ok;
        v.detail += (v.detail.empty() ? "" : ", ") + c.name + (ok ? " ok" : " out");
    }
    v.detail += fmt(" at p = %.6f", s.p);
    return v;
}

Verdict boundary_sum_behavior() {
    auto& s = d7();
    s.ensure_pc();
    // supercritical side: X_j of a truncated sample is a lower bound, so the mean is too
    const double p_hi = s.p + 0.005;
    const GrowthBudget capped{20'000, std::nullopt};
    const std::uint64_t n_hi = 2000;
    double worst = 1e300;
    std::int64_t worst_r = 0;
    bool hi_ok = true;
    for (std::int64_t r = 1; r <= 16; ++r) {
        std::vector<double> xs(n_hi);
        for (std::uint64_t k = 0; k < n_hi; ++k)
            xs[k] = static_cast<double>(census(s.spec, FieldConfig(71, p_hi, k), r, 0, capped).X_j);
        double mean = 0, sq = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(n_hi);
        for (double x : xs) sq += (x - mean) * (x - mean);
        const double se = std::sqrt(sq / static_cast<double>(n_hi - 1) / static_cast<double>(n_hi));
        if (mean + 2 * se < 0.9) hi_ok = false;
        if (mean < worst) {
            worst = mean;
            worst_r = r;
        }
    }

    const double p_lo = s.p - 0.02;
    auto cfg = s.cfg(72);
    cfg.n_samples = 30'000'000;
    auto sums = run_series(BoundarySums(s.spec, {8, 16}, cfg.budget), p_lo, cfg).estimates();
    const bool lo_ok = sums[0].value > 3 * sums[0].std_error && sums[1].value * 2 <= sums[0].value;
    Verdict v;
    v.pass = hi_ok && lo_ok;
    v.detail = fmt("p=%.5f: min over r<=16 of S lower bound %.3f at r=%lld; p=%.5f: S(8) = %.3g +- %.2g, "
                   "S(16) = %.3g +- %.2g",
                   p_hi, worst, static_cast<long long>(worst_r), p_lo, sums[0].value, sums[0].std_error,
                   sums[1].value, sums[1].std_error);
    return v;
}

Verdict one_arm_floor() {
    auto& est = d7().arms();
    const double radii[] = {8, 12, 16, 24, 32};
    double lo = 1e300, hi = 0;
    std::string vals;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double x = radii[i] * radii[i] * est[i].value;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        vals += fmt("%s%g", i ? " " : "", x);
    }
    Verdict v;
    v.pass = lo > 0 && hi <= 3 * lo;
    v.detail = "r^2 gamma(r) over r = 8..32: " + vals + (lo > 0 ? fmt(" (max/min %.2f)", hi / lo) : " (hits zero)");
    return v;
}

Verdict lowmass() {
    auto& s = d7();
    s.ensure_pc();
    auto pts = lowmass_sweep(s.spec, s.p, 16, 8, {1e-3, 1e-2, 1e-1}, s.cfg(91));
    const auto& first = pts.front();
    const double sigma = std::hypot(first.lhs.std_error, first.rhs.std_error);
    Verdict v;
    v.pass = first.lhs.value <= first.rhs.value + 2 * sigma;
    for (const auto& q : pts)
        v.detail += fmt("c=%g: lhs %.3g rhs %.3g; ", q.c, q.lhs.value, q.rhs.value);
    v.detail += fmt("p = %.6f", s.p);
    return v;
}

// ---------------------------------------------------------------------------
// 10. exploration and local badness

struct TableField {
    const std::map<Edge, bool>* table;
    bool is_open(const Point& a, const Point& b) const {
        auto it = table->find(Edge(a, b));
        return it != table->end() && it->second;
    }
};

Verdict exploration_and_badness() {
    auto spec = LatticeSpec::nearest_neighbor(2);
    std::size_t hit_mismatch = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::int64_t j = 6 + seed % 3, scale = 1 + seed % 2;
        FieldConfig f(900 + seed, 0.5, seed);
        auto tr = box_exploration(spec, f, j, scale, Point{0, 0});
        const Box q(2, j);
        std::set<Point> seen{Point{0, 0}};
        std::deque<Point> queue{Point{0, 0}};
        std::vector<Point> hits;
        while (!queue.empty()) {
            auto u = queue.front();
            queue.pop_front();
            if (u.linf() == j) hits.push_back(u);
            for (const auto& y : neighbors(spec, u))
                if (q.contains(y) && !seen.count(y) && f.is_open(u, y)) {
                    seen.insert(y);
                    queue.push_back(y);
                }
        }
        std::sort(hits.begin(), hits.end());
        hit_mismatch += tr.boundary_hits != hits;
    }

    // on the line the crossings are the two arms, so failure is nondegenerate
    auto line = LatticeSpec::nearest_neighbor(1);
    const std::int64_t s = 3, R = 6;
    const double p = 0.7;
    LocalBadnessParams lp;
    lp.inner_exponent = std::log(6.0) / std::log(3.0);
    lp.outer_exponent = std::log(8.0) / std::log(3.0);
    const auto env_edges = box_edges(line, Box(1, R));
    std::size_t instances = 0, degenerate = 0, outside = 0;
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 400 && instances < 10; ++seed) {
        FieldConfig f(5000 + seed, p, 0);
        auto probe = estimate_local_badness(line, f, Point{0}, s, 1, lp);
        std::map<Edge, bool> frozen(probe.frozen.begin(), probe.frozen.end());
        std::vector<Edge> free;
        for (const auto& e : env_edges)
            if (!frozen.count(e)) free.push_back(e);
        if (free.size() > 12) continue;
        std::uint64_t bad = 0;
        double exact = 0;
        std::map<Edge, bool> table = frozen;
        for (Config mask = 0; mask < (Config{1} << free.size()); ++mask) {
            for (std::size_t i = 0; i < free.size(); ++i) table[free[i]] = mask >> i & 1;
            if (local_regularity(line, TableField{&table}, Point{0}, s, R).holds()) continue;
            ++bad;
            const auto k = static_cast<double>(std::popcount(mask));
            exact += std::pow(p, k) * std::pow(1 - p, static_cast<double>(free.size()) - k);
        }
        const std::uint64_t n = 4000;
        auto est = estimate_local_badness(line, f, Point{0}, s, n, lp);
        if (bad == 0 || bad == (Config{1} << free.size())) {
            ++degenerate;
            outside += est.failure.value != (bad == 0 ? 0.0 : 1.0);
            continue;
        }
        ++instances;
        const double z = std::abs(est.failure.value - exact) / bernoulli_se(exact, n);
        worst = std::max(worst, z);
        outside += z > 3;
    }
    Verdict v;
    v.pass = hit_mismatch == 0 && instances >= 3 && outside == 0;
    v.detail = fmt("boundary hits differ on %zu/100 seeds; local badness on %zu instances, max |z| = %.2f "
                   "(%zu degenerate instances, exact 0 or 1)",
                   hit_mismatch, instances, worst, degenerate);
    return v;
}

}  // namespace

int main() {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    struct Entry {
        int id;
        double limit;  // seconds, 0 = none
        std::function<Verdict()> run;
    };
    const std::vector<Entry> all{
        {1, 10, one_arm_d1},
        {2, 300, multi_arm_semantics},
        {3, 60, correlation_inequalities},
        {4, 0, coupling_determinism},
        {5, 1800, critical_point},
        {6, 0, exponents},
        {7, 0, boundary_sum_behavior},
        {8, 0, one_arm_floor},
        {9, 0, lowmass},
        {10, 0, exploration_and_badness},
    };
    std::set<int> wanted;
    if (const char* env = std::getenv("PERC_ACCEPTANCE")) {
        std::stringstream ss(env);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) wanted.insert(std::stoi(tok));
    }
    int failed = 0;
    for (const auto& e : all) {
        if (!wanted.empty() && !wanted.count(e.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = e.run();
        } catch (const std::exception& ex) {
            v = {false, std::string("error: ") + ex.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (e.limit > 0 && secs > e.limit) {
            v.pass = false;
            v.detail += fmt("; over the %.0f s limit", e.limit);
        }
        failed += !v.pass;
        std::printf("criterion %d: %s %s (%.1f s)\n", e.id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    }
    return failed == 0 ? 0 : 1;
}
