// perc: run, resume and fit percolation experiments.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <new>

#include "CLI11.hpp"
#include "perc/experiment.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

enum Exit { kOk = 0, kDiagnostic = 1, kUsage = 2, kResource = 3 };

void print_record_summary(const nlohmann::json& rec, const std::filesystem::path& where) {
    std::cout << rec.value("name", std::string()) << " [" << rec.value("quantity", std::string()) << "] "
              << rec.value("status", std::string()) << ", record " << where.string() << "\n";
    if (rec.contains("p")) {
        std::cout << "p = " << perc::format_double(rec.at("p").get<double>());
        if (rec.contains("pc")) std::cout << " (auto, bracket " << rec.at("pc").at("bracket").dump() << ")";
        std::cout << "\n";
    }
    if (rec.contains("series")) {
        for (const auto& [name, rows] : rec.at("series").items()) {
            std::cout << name << "\n";
            for (const auto& row : rows) {
                std::printf("  %10g  %-14.8g +- %-12.6g n=%llu indet=%.4f\n", row.at("scale").get<double>(),
                            row.at("value").get<double>(), row.at("std_error").get<double>(),
                            static_cast<unsigned long long>(row.at("n").get<std::uint64_t>()),
                            row.at("indeterminate_fraction").get<double>());
            }
        }
        std::fflush(stdout);
    } else if (rec.contains("estimates") && rec.at("quantity") == "pc") {
        for (const auto& row : rec.at("estimates"))
            std::cout << "  r=" << row.at("scale") << "  p_hat=" << perc::format_double(row.at("p_hat").get<double>())
                      << "  bracket=" << row.at("bracket").dump() << "\n";
    }
    if (rec.contains("fit") && !rec.at("fit").is_null())
        std::cout << "slope " << perc::format_double(rec.at("fit").at("slope").get<double>()) << " +- "
                  << perc::format_double(rec.at("fit").at("slope_std_error").get<double>()) << "\n";
    if (rec.contains("checks_total"))
        std::cout << rec.at("checks_total") << " checks, " << rec.at("checks_failed") << " failed\n";
}

int record_exit(const nlohmann::json& rec) {
    if (rec.contains("checks_failed") && rec.at("checks_failed").get<std::size_t>() > 0) return kDiagnostic;
    return kOk;
}

void print_fit(const std::string& file, const perc::ExponentFit& fit) {
    std::printf("%s\n", file.c_str());
    std::printf("  slope %.6g +- %.3g  (intercept %.6g, %s, %zu scales from %g to %g)\n", fit.slope,
                fit.slope_std_error, fit.intercept, fit.weighted ? "weighted" : "unweighted", fit.fit_window.size(),
                fit.fit_window.front(), fit.fit_window.back());
    std::printf("  %10s %10s %14s %14s %14s %s\n", "r", "r2", "ratio", "std_error", "(r2/r)^slope", "consistent");
    for (const auto& row : fit.ratios)
        std::printf("  %10g %10g %14.6g %14.6g %14.6g %s\n", row.scale, row.scale2, row.ratio, row.ratio_error,
                    row.predicted, row.consistent ? "yes" : "no");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Percolation experiments: sampling estimators, critical point, exact oracles."};
    app.require_subcommand(1);
    app.set_version_flag("--version", perc::kToolVersion);

    std::string config, out_dir, record;
    std::optional<std::uint64_t> seed, stop_after;
    std::optional<unsigned> workers;

    std::vector<std::pair<std::string, CLI::App*>> runners;
    for (const auto& name : perc::subcommands()) {
        auto* sub = app.add_subcommand(name, "run a plan of kind " + name);
        sub->add_option("--config", config, "plan JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed (overrides the plan)");
        sub->add_option("--workers", workers, "worker threads (default PERC_WORKERS or hardware)");
        sub->add_option("--out", out_dir, "output directory (overrides the plan)");
        sub->add_option("--stop-after", stop_after, "stop after this many samples, leaving a truncated record");
        runners.emplace_back(name, sub);
    }

    auto* resume = app.add_subcommand("resume", "continue a truncated record");
    resume->add_option("--record", record, "record JSON")->required();
    resume->add_option("--config", config, "plan JSON; its hash must match the record");
    resume->add_option("--workers", workers, "worker threads");
    resume->add_option("--stop-after", stop_after, "stop after this many samples in total");

    std::vector<std::string> csv_files;
    perc::FitOptions fit_opt;
    bool fit_json = false;
    auto* fit = app.add_subcommand("fit", "fit log-log slopes to CSV series");
    fit->add_option("files", csv_files, "CSV series")->required();
    fit->add_option("--min-scale", fit_opt.min_scale, "smallest scale in the fit window");
    fit->add_option("--max-indeterminate", fit_opt.max_indeterminate, "drop rows above this indeterminate fraction");
    fit->add_flag("--json", fit_json, "print JSON instead of text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    std::signal(SIGINT, on_sigint);
    perc::RunOptions opt;
    opt.interrupted = &g_interrupted;
    opt.stop_after = stop_after;
    opt.log = &std::cerr;

    auto load = [&](const std::string& sub) {
        std::ifstream in(config);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw perc::UsageError("plan " + config + " is not valid JSON: " + e.what());
        }
        if (!sub.empty()) {
            if (!j.is_object()) throw perc::UsageError("plan must be a JSON object");
            if (!j.contains("subcommand")) j["subcommand"] = sub;
            if (j.at("subcommand") != sub)
                throw perc::UsageError("plan is for '" + j.at("subcommand").get<std::string>() + "', not '" + sub + "'");
        }
        auto plan = perc::parse_plan(j, seed, std::filesystem::path(config).parent_path());
        if (workers) plan.estimator.parallel_workers = *workers;
        if (!out_dir.empty()) plan.out_dir = out_dir;
        return plan;
    };

    try {
        for (const auto& [name, sub] : runners) {
            if (!sub->parsed()) continue;
            auto plan = load(name);
            auto rec = perc::run_plan(plan, opt);
            print_record_summary(rec, plan.record_path());
            if (rec.value("status", std::string()) == "truncated") std::cout << "truncated; continue with: perc resume --record "
                                                                              << plan.record_path().string() << "\n";
            return record_exit(rec);
        }
        if (resume->parsed()) {
            std::optional<perc::ExperimentPlan> expected;
            if (!config.empty()) expected = load("");
            else if (workers) {
                // workers alone: take the plan from the record
                std::ifstream in(record);
                nlohmann::json r;
                in >> r;
                expected = perc::parse_plan(r.at("plan"));
                expected->estimator.parallel_workers = *workers;
            }
            bool complete = false;
            auto rec = perc::resume_record(record, expected, opt, &complete);
            if (complete) std::cout << "record already complete; nothing to do\n";
            print_record_summary(rec, record);
            return record_exit(rec);
        }
        if (fit->parsed()) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& file : csv_files) {
                std::ifstream in(file);
                if (!in) throw perc::UsageError("cannot open " + file);
                auto series = perc::read_csv_series(in, file);
                auto f = perc::fit_exponent(series.rows, fit_opt);
                if (fit_json) out.push_back({{"file", file}, {"fit", f.to_json()}});
                else print_fit(file, f);
            }
            if (fit_json) std::cout << out.dump(2) << "\n";
            return kOk;
        }
    } catch (const perc::UsageError& e) {
        std::cerr << "perc: " << e.what() << "\n";
        return kUsage;
    } catch (const perc::ResourceError& e) {
        std::cerr << "perc: resource limit: " << e.what() << "\n";
        return kResource;
    } catch (const std::bad_alloc&) {
        std::cerr << "perc: out of memory\n";
        return kResource;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "perc: " << e.what() << "\n";
        return kResource;
    } catch (const perc::DiagnosticError& e) {
        std::cerr << "perc: diagnostic: " << e.what() << "\n";
        return kDiagnostic;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "perc: malformed input: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
