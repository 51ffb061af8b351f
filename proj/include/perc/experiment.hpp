#pragma once

// Experiment plans, result records, checkpointed execution and resume for the perc command-line tool.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "perc/error.hpp"
#include "perc/estimators.hpp"
#include "perc/explorer.hpp"
#include "perc/lattice.hpp"
#include "perc/oracle.hpp"
#include "perc/random_field.hpp"
#include "perc/stats.hpp"

namespace perc {

inline constexpr const char* kToolVersion = "0.1.0";

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = {"one-arm",       "multi-arm",  "two-point", "tail",
                                                   "pc",            "boundary-sum", "lowmass", "second-moment",
                                                   "regularity",    "explore",    "oracle-verify"};
    return names;
}

struct PcPlan {
    std::int64_t r = 12;
    std::uint64_t n_samples = 10'000;
    double tolerance = 1e-4;
    std::optional<std::uint64_t> master_seed;
};

struct ExperimentPlan {
    std::string name;
    std::string subcommand;
    std::optional<LatticeSpec> spec;
    std::optional<double> p;  // empty: "auto"
    std::optional<PcPlan> pc;
    std::vector<double> scales;
    EstimatorConfig estimator;
    std::uint64_t checkpoint_every = 10'000;
    nlohmann::json params = nlohmann::json::object();
    std::string out_dir = ".";
    std::string stem;
    std::filesystem::path base_dir = ".";  // resolves relative paths in params
    nlohmann::json source;                  // normalized plan, the input to the plan hash

    bool auto_p() const { return !p.has_value(); }

    std::vector<std::int64_t> integer_scales() const {
        std::vector<std::int64_t> out;
        for (double s : scales) {
            if (s != std::floor(s)) throw UsageError("scales for " + subcommand + " must be integers");
            out.push_back(static_cast<std::int64_t>(s));
        }
        return out;
    }

    std::string hash() const {
        auto text = source.dump();
        auto h = siphash24(0, 0, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    std::filesystem::path record_path() const { return std::filesystem::path(out_dir) / (stem + ".json"); }
    std::filesystem::path csv_path() const { return std::filesystem::path(out_dir) / (stem + ".csv"); }
};

namespace detail {
inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || k == a;
        if (!ok) throw UsageError("unknown key '" + k + "' in " + where);
    }
}
}  // namespace detail

/// Validates and normalizes a plan. seed_override replaces estimator.master_seed and becomes part
/// of the plan (and its hash).
inline ExperimentPlan parse_plan(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = {},
                                 std::filesystem::path base_dir = ".") {
    try {
        if (!j.is_object()) throw UsageError("plan must be a JSON object");
        detail::require_keys(j, {"name", "subcommand", "spec", "p", "pc", "scales", "estimator", "params", "output"}, "plan");
        ExperimentPlan plan;
        plan.base_dir = std::move(base_dir);
        plan.name = j.value("name", std::string("experiment"));
        plan.subcommand = j.at("subcommand").get<std::string>();
        if (std::find(subcommands().begin(), subcommands().end(), plan.subcommand) == subcommands().end())
            throw UsageError("unknown subcommand '" + plan.subcommand + "'");
        const bool oracle = plan.subcommand == "oracle-verify";
        const bool pc_only = plan.subcommand == "pc";
        if (!oracle) plan.spec = lattice_from_json(j.at("spec"));

        if (j.contains("pc")) {
            const auto& q = j.at("pc");
            detail::require_keys(q, {"r", "n_samples", "tolerance", "master_seed"}, "pc");
            PcPlan pc;
            pc.r = q.value("r", pc.r);
            pc.n_samples = q.value("n_samples", pc.n_samples);
            pc.tolerance = q.value("tolerance", pc.tolerance);
            if (q.contains("master_seed")) pc.master_seed = q.at("master_seed").get<std::uint64_t>();
            if (pc.r < 1 || pc.n_samples < 1 || !(pc.tolerance > 0)) throw UsageError("pc sub-plan needs r >= 1, n_samples >= 1, tolerance > 0");
            plan.pc = pc;
        }
        if (!oracle && !pc_only) {
            const auto& pj = j.at("p");
            if (pj.is_string()) {
                if (pj.get<std::string>() != "auto") throw UsageError("p must be a number in [0,1] or \"auto\"");
                if (!plan.pc) throw UsageError("p = \"auto\" requires a pc sub-plan");
            } else {
                double p = pj.get<double>();
                if (!(p >= 0 && p <= 1)) throw UsageError("p must be in [0,1]");
                plan.p = p;
            }
        }

        if (!oracle) {
            plan.scales = j.at("scales").get<std::vector<double>>();
            if (plan.scales.empty()) throw UsageError("scales must be nonempty");
            for (std::size_t i = 1; i < plan.scales.size(); ++i)
                if (!(plan.scales[i] > plan.scales[i - 1])) throw UsageError("scales must be strictly ascending");
        }

        const auto est = j.value("estimator", nlohmann::json::object());
        detail::require_keys(est, {"n_samples", "master_seed", "max_vertices", "max_graph_radius", "workers", "checkpoint_every"},
                             "estimator");
        plan.estimator.n_samples = est.value("n_samples", plan.estimator.n_samples);
        plan.estimator.master_seed = est.value("master_seed", plan.estimator.master_seed);
        plan.estimator.budget.max_vertices = est.value("max_vertices", plan.estimator.budget.max_vertices);
        if (est.contains("max_graph_radius") && !est.at("max_graph_radius").is_null())
            plan.estimator.budget.max_graph_radius = est.at("max_graph_radius").get<std::uint64_t>();
        plan.estimator.parallel_workers = est.value("workers", 0u);
        plan.checkpoint_every = est.value("checkpoint_every", plan.checkpoint_every);
        if (seed_override) plan.estimator.master_seed = *seed_override;
        plan.estimator.validate();
        if (plan.checkpoint_every < 1) throw UsageError("checkpoint_every must be >= 1");

        plan.params = j.value("params", nlohmann::json::object());
        if (!plan.params.is_object()) throw UsageError("params must be an object");
        const auto out = j.value("output", nlohmann::json::object());
        detail::require_keys(out, {"dir", "stem"}, "output");
        plan.out_dir = out.value("dir", std::string("."));
        plan.stem = out.value("stem", plan.name);
        if (plan.stem.empty() || plan.stem.find('/') != std::string::npos) throw UsageError("output stem must be a plain file name");

        // normalized form: workers and output location do not change results, so they stay out of the hash
        nlohmann::json norm = j;
        norm.erase("output");
        if (norm.contains("estimator")) {
            norm["estimator"].erase("workers");
            norm["estimator"].erase("checkpoint_every");
        }
        norm["estimator"]["master_seed"] = plan.estimator.master_seed;
        plan.source = norm;
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed plan: ") + e.what());
    }
}

inline ExperimentPlan load_plan(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {}) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open plan " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("plan " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_plan(j, seed_override, path.parent_path());
}

// ---------------------------------------------------------------------------
// Sampling jobs: one kernel, named series over the plan's scales

struct Job {
    std::vector<std::string> series;  // series[0] is written to the CSV
    std::vector<ScaleAccumulator::Kind> kinds;  // series-major, series.size() * scales
    std::function<std::vector<Observation>(const FieldConfig&)> kernel;
};

namespace detail {
template <class K>
Job simple_job(std::string name, K kernel) {
    Job job;
    job.series = {std::move(name)};
    job.kinds = kernel.kinds();
    job.kernel = [k = std::move(kernel)](const FieldConfig& f) { return k(f); };
    return job;
}

inline std::vector<Point> points_param(const nlohmann::json& params, const char* key, std::size_t d) {
    std::vector<Point> out;
    for (const auto& x : params.at(key)) {
        auto p = x.get<Point>();
        if (p.dim() != d) throw UsageError(std::string(key) + " entries must have dimension " + std::to_string(d));
        out.push_back(p);
    }
    return out;
}

inline Disjointness disjointness_param(const nlohmann::json& params) {
    auto s = params.value("disjointness", std::string("edge"));
    if (s == "edge") return Disjointness::Edge;
    if (s == "vertex") return Disjointness::Vertex;
    throw UsageError("disjointness must be \"edge\" or \"vertex\"");
}
}  // namespace detail

inline Job make_job(const ExperimentPlan& plan) {
    using Kind = ScaleAccumulator::Kind;
    const auto& spec = *plan.spec;
    const auto& budget = plan.estimator.budget;
    const auto& P = plan.params;
    const auto& sc = plan.subcommand;
    try {
        if (sc == "one-arm") return detail::simple_job("one_arm", OneArmSeries(spec, plan.integer_scales(), budget));
        if (sc == "tail") return detail::simple_job("tail", ClusterTail(spec, plan.integer_scales(), budget));
        if (sc == "two-point") return detail::simple_job("two_point_axis", TwoPointAxis(spec, plan.integer_scales(), budget));
        if (sc == "boundary-sum") return detail::simple_job("boundary_sum", BoundarySums(spec, plan.integer_scales(), budget));
        if (sc == "multi-arm") {
            detail::require_keys(P, {"points"}, "params");
            return detail::simple_job("multi_arm", MultiArmSeries(spec, plan.integer_scales(),
                                                                  detail::points_param(P, "points", spec.dimension()), budget));
        }
        if (sc == "second-moment") {
            detail::require_keys(P, {"envelope_radius"}, "params");
            std::optional<std::int64_t> env;
            if (P.contains("envelope_radius") && !P.at("envelope_radius").is_null()) env = P.at("envelope_radius").get<std::int64_t>();
            return detail::simple_job("second_moment", SecondMoments(spec, plan.integer_scales(), env, budget));
        }
        if (sc == "lowmass") {
            detail::require_keys(P, {"j", "L", "buffer"}, "params");
            std::optional<std::int64_t> buffer;
            if (P.contains("buffer") && !P.at("buffer").is_null()) buffer = P.at("buffer").get<std::int64_t>();
            Lowmass k(spec, P.at("j").get<std::int64_t>(), P.at("L").get<std::int64_t>(), plan.scales, buffer, budget);
            const auto n = plan.scales.size();
            Job job;
            job.series = {"lowmass_lhs", "one_arm_rhs"};
            job.kinds.assign(2 * n, Kind::Bernoulli);
            job.kernel = [k, n](const FieldConfig& f) {
                auto o = k(f);
                std::vector<Observation> out(o.begin(), o.begin() + static_cast<std::ptrdiff_t>(n));
                out.insert(out.end(), n, o.back());
                return out;
            };
            return job;
        }
        if (sc == "regularity") {
            detail::require_keys(P, {"x", "envelope_exponent", "disjointness"}, "params");
            RegularityParams rp;
            rp.envelope_exponent = P.value("envelope_exponent", rp.envelope_exponent);
            rp.disjointness = detail::disjointness_param(P);
            rp.budget = budget;
            Point x = P.contains("x") ? P.at("x").get<Point>() : Point::origin(spec.dimension());
            spec.check(x);
            auto ss = plan.integer_scales();
            for (auto s : ss)
                if (s < 2) throw UsageError("regularity scales must be >= 2");
            Job job;
            job.series = {"not_T_s_loc", "not_T_s"};
            job.kinds.assign(2 * ss.size(), Kind::Bernoulli);
            job.kernel = [spec, x, ss, rp](const FieldConfig& f) {
                std::vector<Observation> loc, glob;
                for (auto s : ss) {
                    auto rep = regularity_check(spec, f, x, s, rp);
                    loc.push_back(indicator(!rep.T_s_loc_holds));
                    glob.push_back(rep.T_s_indeterminate ? std::nullopt : indicator(!rep.T_s_holds));
                }
                loc.insert(loc.end(), glob.begin(), glob.end());
                return loc;
            };
            return job;
        }
        if (sc == "explore") {
            detail::require_keys(P, {"box_scale", "shift"}, "params");
            const auto s = P.value("box_scale", std::int64_t{1});
            Point w = P.contains("shift") ? P.at("shift").get<Point>() : Point::origin(spec.dimension());
            spec.check(w);
            auto js = plan.integer_scales();
            Job job;
            job.series = {"tau", "boundary_hits"};
            job.kinds.assign(2 * js.size(), Kind::Mean);
            job.kernel = [spec, s, w, js](const FieldConfig& f) {
                std::vector<Observation> tau, hits;
                for (auto j : js) {
                    auto tr = box_exploration(spec, f, j, s, w);
                    tau.push_back(static_cast<double>(tr.tau));
                    hits.push_back(static_cast<double>(tr.boundary_hits.size()));
                }
                tau.insert(tau.end(), hits.begin(), hits.end());
                return tau;
            };
            return job;
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed params: ") + e.what());
    }
    throw UsageError("subcommand '" + sc + "' has no sampling job");
}

// ---------------------------------------------------------------------------
// Records

inline std::string utc_timestamp() {
    auto t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string csv_header() { return "scale,value,std_error,n,indeterminate_fraction\n"; }

inline std::string csv_row(double scale, const PointEstimate& e) {
    return format_double(scale) + "," + format_double(e.value) + "," + format_double(e.std_error) + "," +
           std::to_string(e.n) + "," + format_double(e.indeterminate_fraction) + "\n";
}

struct CsvSeries {
    std::vector<std::pair<double, PointEstimate>> rows;
};

/// Parses the scale,value,std_error,n,indeterminate_fraction format.
inline CsvSeries read_csv_series(std::istream& in, const std::string& name = "csv") {
    CsvSeries s;
    std::string line;
    if (!std::getline(in, line)) throw UsageError(name + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line + "\n" != csv_header()) throw UsageError(name + ": unexpected header '" + line + "'");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 5) throw UsageError(name + ":" + std::to_string(lineno) + ": expected 5 columns");
        try {
            std::size_t pos = 0;
            auto num = [&](const std::string& c) {
                double v = std::stod(c, &pos);
                if (pos != c.size()) throw std::invalid_argument(c);
                return v;
            };
            PointEstimate e;
            double scale = num(f[0]);
            e.value = num(f[1]);
            e.std_error = num(f[2]);
            e.n = static_cast<std::uint64_t>(num(f[3]));
            e.indeterminate_fraction = num(f[4]);
            s.rows.emplace_back(scale, e);
        } catch (const std::exception&) {
            throw UsageError(name + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return s;
}

inline void write_atomically(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ResourceError("cannot write " + tmp.string());
        out << text;
        if (!out) throw ResourceError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Fit report fields for series whose exponent is meaningful.
inline std::optional<ExponentFit> try_fit(const std::vector<double>& scales, const std::vector<PointEstimate>& est,
                                          const FitOptions& opt = {}) {
    std::vector<std::pair<double, PointEstimate>> series;
    for (std::size_t i = 0; i < scales.size(); ++i) series.emplace_back(scales[i], est[i]);
    try {
        return fit_exponent(series, opt);
    } catch (const UsageError&) {
        return std::nullopt;
    }
}

struct RunOptions {
    /// Stop (leaving a truncated record) once this many samples are done in total.
    std::optional<std::uint64_t> stop_after;
    const std::atomic<bool>* interrupted = nullptr;
    std::ostream* log = nullptr;
};

/// Assembles the record body from the accumulator state.
inline nlohmann::json build_record(const ExperimentPlan& plan, const Job& job, const SeriesAccumulator& acc,
                                   const nlohmann::json& header, bool complete, double wall) {
    nlohmann::json rec = header;
    const auto n = plan.scales.size();
    auto all = acc.estimates();
    nlohmann::json series = nlohmann::json::object();
    for (std::size_t k = 0; k < job.series.size(); ++k) {
        nlohmann::json rows = nlohmann::json::array();
        std::vector<PointEstimate> est(all.begin() + static_cast<std::ptrdiff_t>(k * n),
                                       all.begin() + static_cast<std::ptrdiff_t>((k + 1) * n));
        for (std::size_t i = 0; i < n; ++i) {
            nlohmann::json row = est[i];
            row["scale"] = plan.scales[i];
            if (plan.subcommand == "second-moment") row["normalized_by_r6"] = normalize_second_moment(est[i], static_cast<std::int64_t>(plan.scales[i])).normalized;
            rows.push_back(row);
        }
        series[job.series[k]] = rows;
        if (k == 0) rec["estimates"] = rows;
    }
    rec["series"] = series;
    static const std::vector<std::string> fitted = {"one-arm", "multi-arm", "two-point", "tail"};
    if (std::find(fitted.begin(), fitted.end(), plan.subcommand) != fitted.end()) {
        auto fit = try_fit(plan.scales, std::vector<PointEstimate>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)));
        rec["fit"] = fit ? fit->to_json() : nlohmann::json(nullptr);
    }
    rec["accumulator"] = acc.to_json();
    rec["samples_done"] = acc.samples;
    rec["status"] = complete ? "complete" : "truncated";
    rec["timestamp"] = utc_timestamp();
    rec["wall_seconds"] = rec.value("wall_seconds", 0.0) + wall;
    return rec;
}

inline std::string series_csv(const ExperimentPlan& plan, const SeriesAccumulator& acc) {
    std::string csv = csv_header();
    auto est = acc.estimates();
    for (std::size_t i = 0; i < plan.scales.size(); ++i) csv += csv_row(plan.scales[i], est[i]);
    return csv;
}

/// Resolves p, then samples in checkpoints, flushing record and CSV after each one.
inline nlohmann::json run_sampling(const ExperimentPlan& plan, nlohmann::json header, SeriesAccumulator acc,
                                   const RunOptions& opt) {
    const Job job = make_job(plan);
    const double p = header.at("p").get<double>();
    const auto total = plan.estimator.n_samples;
    const auto t0 = std::chrono::steady_clock::now();
    double flushed_wall = 0;
    nlohmann::json rec;
    auto flush = [&](bool complete) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec = build_record(plan, job, acc, header, complete, wall - flushed_wall);
        header["wall_seconds"] = rec["wall_seconds"];
        flushed_wall = wall;
        write_atomically(plan.csv_path(), series_csv(plan, acc));
        write_atomically(plan.record_path(), rec.dump(2) + "\n");
    };
    while (acc.samples < total) {
        if (opt.interrupted && opt.interrupted->load()) break;
        auto limit = total;
        if (opt.stop_after) limit = std::min(limit, std::max(acc.samples, *opt.stop_after));
        if (acc.samples >= limit) break;
        const auto chunk = std::min(plan.checkpoint_every, limit - acc.samples);
        accumulate(acc, job.kernel, acc.samples, chunk, plan.estimator.parallel_workers,
                   [&](std::uint64_t k) { return FieldConfig(plan.estimator.master_seed, p, k); });
        if (opt.log) *opt.log << plan.name << ": " << acc.samples << "/" << total << " samples\n";
        if (acc.samples < total) flush(false);
    }
    flush(acc.samples >= total);
    return rec;
}

inline nlohmann::json record_header(const ExperimentPlan& plan) {
    nlohmann::json h;
    h["tool"] = "perc";
    h["version"] = kToolVersion;
    h["name"] = plan.name;
    h["quantity"] = plan.subcommand;
    h["plan"] = plan.source;
    h["plan_hash"] = plan.hash();
    if (plan.spec) h["spec"] = *plan.spec;
    h["seed"] = plan.estimator.master_seed;
    h["n_samples"] = plan.estimator.n_samples;
    h["scales"] = plan.scales;
    h["budget"] = {{"max_vertices", plan.estimator.budget.max_vertices},
                   {"max_graph_radius", plan.estimator.budget.max_graph_radius
                                            ? nlohmann::json(*plan.estimator.budget.max_graph_radius)
                                            : nlohmann::json(nullptr)}};
    h["wall_seconds"] = 0.0;
    return h;
}

/// p for the plan: fixed, or the bracket midpoint of estimate_pc (recorded with its bracket).
inline void resolve_p(const ExperimentPlan& plan, nlohmann::json& header) {
    if (!plan.auto_p()) {
        header["p"] = *plan.p;
        header["p_source"] = "fixed";
        return;
    }
    EstimatorConfig cfg = plan.estimator;
    cfg.n_samples = plan.pc->n_samples;
    cfg.first_sample = 0;
    if (plan.pc->master_seed) cfg.master_seed = *plan.pc->master_seed;
    auto est = estimate_pc(*plan.spec, plan.pc->r, cfg, plan.pc->tolerance);
    header["p"] = est.p_hat;
    header["p_source"] = "auto";
    header["pc"] = est.to_json();
}

// ---------------------------------------------------------------------------
// pc and oracle-verify (no per-sample checkpoints)

inline nlohmann::json run_pc(const ExperimentPlan& plan, nlohmann::json header, const RunOptions& opt) {
    const double tol = plan.params.value("tolerance", 1e-4);
    if (!(tol > 0)) throw UsageError("tolerance must be > 0");
    auto radii = plan.integer_scales();
    nlohmann::json rows = header.value("estimates", nlohmann::json::array());
    std::string csv = csv_header();
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (i < rows.size()) continue;  // done in an earlier run
        if (opt.interrupted && opt.interrupted->load()) break;
        auto est = estimate_pc(*plan.spec, radii[i], plan.estimator, tol);
        nlohmann::json row = est.to_json();
        row["scale"] = radii[i];
        rows.push_back(row);
        if (opt.log) *opt.log << plan.name << ": r=" << radii[i] << " p_hat=" << est.p_hat << "\n";
    }
    for (const auto& row : rows) {
        PointEstimate e;
        e.value = row.at("p_hat");
        e.std_error = 0.5 * (row.at("bracket")[1].get<double>() - row.at("bracket")[0].get<double>());
        e.n = row.at("samples_per_probe");
        csv += csv_row(row.at("scale").get<double>(), e);
    }
    header["estimates"] = rows;
    header["status"] = rows.size() == radii.size() ? "complete" : "truncated";
    header["samples_done"] = rows.size();
    header["timestamp"] = utc_timestamp();
    header["wall_seconds"] = header.value("wall_seconds", 0.0) +
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_atomically(plan.csv_path(), csv);
    write_atomically(plan.record_path(), header.dump(2) + "\n");
    return header;
}

struct OracleCheck {
    std::string graph, kind, detail;
    double lhs = 0, rhs = 0;
    bool pass = false;
};

/// Corpus format: {"graphs": [{"name", "vertices", "edges", "events": {name: event},
///   "probabilities": [{"event", "p", "expected"}], "sweep_p": [..]}]}.
/// BK and FKG are checked for every pair of named connection events (and every pair of
/// vertex-to-vertex connection events) at each sweep_p.
inline std::vector<OracleCheck> verify_corpus(const nlohmann::json& corpus) {
    std::vector<OracleCheck> checks;
    try {
        for (const auto& gj : corpus.at("graphs")) {
            const auto name = gj.value("name", std::string("graph"));
            auto g = FiniteGraph::from_json(gj);
            std::map<std::string, EventPredicate> events;
            const auto named = gj.value("events", nlohmann::json::object());
            for (const auto& [k, v] : named.items())
                events.emplace(k, EventPredicate::from_json(v));
            for (const auto& pr : gj.value("probabilities", nlohmann::json::array())) {
                OracleCheck c{name, "probability", pr.at("event").get<std::string>()};
                double p = pr.at("p");
                c.lhs = exact_probability(g, p, events.at(c.detail));
                c.rhs = pr.at("expected");
                c.pass = std::abs(c.lhs - c.rhs) <= 1e-12;
                c.detail += " @p=" + format_double(p);
                checks.push_back(c);
            }
            std::vector<std::pair<std::string, EventPredicate>> conn;
            for (const auto& [k, e] : events)
                if (e.is_connection()) conn.emplace_back(k, e);
            for (const auto& e : all_connection_events(g))
                conn.emplace_back(std::to_string(e.from) + "<->" + std::to_string(e.targets[0]), e);
            for (double p : gj.value("sweep_p", std::vector<double>{0.2, 0.5, 0.8})) {
                for (std::size_t a = 0; a < conn.size(); ++a)
                    for (std::size_t b = a; b < conn.size(); ++b) {
                        auto bk = verify_bk(g, p, conn[a].second, conn[b].second);
                        checks.push_back({name, "bk", conn[a].first + " o " + conn[b].first + " @p=" + format_double(p),
                                          bk.lhs, bk.rhs, bk.holds});
                        auto fkg = verify_fkg(g, p, conn[a].second, conn[b].second);
                        checks.push_back({name, "fkg", conn[a].first + " n " + conn[b].first + " @p=" + format_double(p),
                                          fkg.lhs, fkg.rhs, fkg.holds});
                    }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed oracle corpus: ") + e.what());
    }
    return checks;
}

inline nlohmann::json run_oracle_verify(const ExperimentPlan& plan, nlohmann::json header) {
    detail::require_keys(plan.params, {"corpus"}, "params");
    auto path = std::filesystem::path(plan.params.at("corpus").get<std::string>());
    if (path.is_relative()) path = plan.base_dir / path;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open oracle corpus " + path.string());
    nlohmann::json corpus;
    try {
        in >> corpus;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("oracle corpus is not valid JSON: " + std::string(e.what()));
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto checks = verify_corpus(corpus);
    std::size_t failed = 0;
    nlohmann::json rows = nlohmann::json::array();
    std::string csv = csv_header();
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const auto& c = checks[i];
        failed += !c.pass;
        rows.push_back({{"graph", c.graph}, {"kind", c.kind}, {"detail", c.detail}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}});
        PointEstimate e;
        e.value = c.pass ? 1.0 : 0.0;
        e.n = 1;
        csv += csv_row(static_cast<double>(i), e);
    }
    header["checks"] = rows;
    header["checks_total"] = checks.size();
    header["checks_failed"] = failed;
    header["status"] = "complete";
    header["timestamp"] = utc_timestamp();
    header["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_atomically(plan.csv_path(), csv);
    write_atomically(plan.record_path(), header.dump(2) + "\n");
    return header;
}

/// Runs a plan from scratch.
inline nlohmann::json run_plan(const ExperimentPlan& plan, const RunOptions& opt = {}) {
    auto header = record_header(plan);
    if (plan.subcommand == "oracle-verify") return run_oracle_verify(plan, header);
    if (plan.subcommand == "pc") return run_pc(plan, header, opt);
    resolve_p(plan, header);
    auto job = make_job(plan);
    return run_sampling(plan, header, SeriesAccumulator(job.kinds), opt);
}

/// Continues a truncated record. A complete record is returned unchanged. If `expected` is given,
/// its hash must match the record's plan.
inline nlohmann::json resume_record(const std::filesystem::path& record_path, const std::optional<ExperimentPlan>& expected,
                                    const RunOptions& opt = {}, bool* was_complete = nullptr) {
    std::ifstream in(record_path);
    if (!in) throw UsageError("cannot open record " + record_path.string());
    nlohmann::json rec;
    try {
        in >> rec;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("record is not valid JSON: " + std::string(e.what()));
    }
    try {
        auto plan = parse_plan(rec.at("plan"));
        if (plan.hash() != rec.at("plan_hash").get<std::string>())
            throw UsageError("record plan does not match its plan_hash; refusing to resume");
        if (expected && expected->hash() != plan.hash())
            throw UsageError("plan hash " + expected->hash() + " differs from the record's " + plan.hash() + "; refusing to resume");
        if (was_complete) *was_complete = rec.at("status") == "complete";
        if (rec.at("status") == "complete") return rec;
        // outputs continue next to the record
        plan.out_dir = record_path.parent_path().string();
        if (plan.out_dir.empty()) plan.out_dir = ".";
        plan.stem = record_path.stem().string();
        if (expected) {
            plan.base_dir = expected->base_dir;
            plan.estimator.parallel_workers = expected->estimator.parallel_workers;
            plan.checkpoint_every = expected->checkpoint_every;
        }
        nlohmann::json header = rec;
        for (auto key : {"estimates", "series", "fit", "accumulator", "samples_done", "status", "timestamp"}) {
            if (plan.subcommand == "pc" && std::string(key) == "estimates") continue;
            header.erase(key);
        }
        if (plan.subcommand == "pc") return run_pc(plan, header, opt);
        auto acc = SeriesAccumulator::from_json(rec.at("accumulator"));
        if (acc.scales.size() != make_job(plan).kinds.size()) throw UsageError("record accumulator does not match its plan");
        return run_sampling(plan, header, std::move(acc), opt);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("malformed record: " + std::string(e.what()));
    }
}

}  // namespace perc
