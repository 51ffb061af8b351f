#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        std::random_device rd;
        dir_ = fs::temp_directory_path() / ("perc-cli-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args) {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = std::string(PERC_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
        int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    fs::path plan(const std::string& name, const nlohmann::json& j) {
        auto p = dir_ / (name + ".json");
        write_file(p, j.dump(2));
        return p;
    }

    nlohmann::json record(const std::string& stem) { return nlohmann::json::parse(slurp(dir_ / "out" / (stem + ".json"))); }
    std::string out_flag() const { return "--out '" + (dir_ / "out").string() + "'"; }

    fs::path dir_;
};

nlohmann::json one_arm_plan(std::uint64_t n) {
    return {{"name", "arm"},
            {"subcommand", "one-arm"},
            {"spec", {{"d", 1}, {"model", "nn"}}},
            {"p", 0.6},
            {"scales", {1, 2, 3, 5}},
            {"estimator", {{"n_samples", n}, {"master_seed", 3}}}};
}

nlohmann::json two_point_plan(std::uint64_t n) {
    return {{"name", "tp"},
            {"subcommand", "two-point"},
            {"spec", {{"d", 2}, {"model", "nn"}}},
            {"p", 0.4},
            {"scales", {1, 2, 3, 4}},
            {"estimator", {{"n_samples", n}, {"master_seed", 8}, {"max_vertices", 400}, {"checkpoint_every", 150}}}};
}

}  // namespace

TEST_F(Cli, VersionAndUsage) {
    auto r = run("--version");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("0.1.0"), std::string::npos);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("one-arm").code, 2);
    EXPECT_EQ(run("one-arm --config '" + (dir_ / "missing.json").string() + "'").code, 2);
}

TEST_F(Cli, OneArmInOneDimensionMatchesClosedForm) {
    auto p = plan("arm", one_arm_plan(20000));
    auto r = run("one-arm --config '" + p.string() + "' " + out_flag());
    ASSERT_EQ(r.code, 0) << r.err;
    auto rec = record("arm");
    EXPECT_EQ(rec.at("status"), "complete");
    EXPECT_EQ(rec.at("samples_done"), 20000);
    EXPECT_EQ(rec.at("p"), 0.6);
    const auto& rows = rec.at("series").begin().value();
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& row : rows) {
        const double q = std::pow(0.6, row.at("scale").get<double>());
        EXPECT_NEAR(row.at("value").get<double>(), 2 * q - q * q, 3 * row.at("std_error").get<double>() + 1e-12);
    }
    auto csv = slurp(dir_ / "out" / "arm.csv");
    EXPECT_EQ(csv.rfind("scale,value,std_error,n,indeterminate_fraction\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(Cli, OracleVerifyShippedCorpus) {
    auto r = run("oracle-verify --config '" + std::string(PERC_CONFIG_DIR) + "/oracle-verify.json' " + out_flag());
    EXPECT_EQ(r.code, 0) << r.err;
    auto rec = record("oracle-verify");
    EXPECT_EQ(rec.at("checks_failed"), 0);
    EXPECT_GT(rec.at("checks_total").get<int>(), 50);
}

TEST_F(Cli, OracleVerifyFailureExitsOne) {
    write_file(dir_ / "bad.json", R"({"graphs": [{"name": "e", "vertices": [0, 1], "edges": [[0, 1]],
        "events": {"x": {"connect": [0, 1]}}, "probabilities": [{"event": "x", "p": 0.5, "expected": 0.4}]}]})");
    auto p = plan("ov", {{"subcommand", "oracle-verify"}, {"name", "ov"}, {"params", {{"corpus", "bad.json"}}}});
    EXPECT_EQ(run("oracle-verify --config '" + p.string() + "' " + out_flag()).code, 1);
}

TEST_F(Cli, OutputsIndependentOfRunAndWorkers) {
    auto p = plan("tp", two_point_plan(600));
    std::vector<std::string> csvs;
    for (const std::string w : {"1", "1", "3"}) {
        auto r = run("two-point --config '" + p.string() + "' --workers " + w + " " + out_flag());
        ASSERT_EQ(r.code, 0) << r.err;
        csvs.push_back(slurp(dir_ / "out" / "tp.csv"));
    }
    EXPECT_FALSE(csvs[0].empty());
    EXPECT_EQ(csvs[0], csvs[1]);
    EXPECT_EQ(csvs[0], csvs[2]);
}

TEST_F(Cli, StopAndResumeEqualsFullRun) {
    auto p = plan("tp", two_point_plan(600));
    ASSERT_EQ(run("two-point --config '" + p.string() + "' " + out_flag()).code, 0);
    const auto full_csv = slurp(dir_ / "out" / "tp.csv");
    const auto full = record("tp");

    auto r = run("two-point --config '" + p.string() + "' --stop-after 250 " + out_flag());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("truncated"), std::string::npos);
    auto partial = record("tp");
    EXPECT_EQ(partial.at("status"), "truncated");
    EXPECT_EQ(partial.at("samples_done"), 250);

    const auto rec_path = (dir_ / "out" / "tp.json").string();
    r = run("resume --record '" + rec_path + "' --stop-after 400 --workers 2");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(record("tp").at("samples_done"), 400);
    r = run("resume --record '" + rec_path + "' --config '" + p.string() + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    auto resumed = record("tp");
    EXPECT_EQ(resumed.at("status"), "complete");
    EXPECT_EQ(slurp(dir_ / "out" / "tp.csv"), full_csv);
    EXPECT_EQ(resumed.at("series"), full.at("series"));
    EXPECT_EQ(resumed.at("accumulator"), full.at("accumulator"));
    EXPECT_EQ(resumed.at("plan_hash"), full.at("plan_hash"));
}

TEST_F(Cli, ResumeOfCompleteRecordIsANoOp) {
    auto p = plan("arm", one_arm_plan(500));
    ASSERT_EQ(run("one-arm --config '" + p.string() + "' " + out_flag()).code, 0);
    const auto rec_path = dir_ / "out" / "arm.json";
    const auto before = slurp(rec_path);
    auto r = run("resume --record '" + rec_path.string() + "'");
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("nothing to do"), std::string::npos);
    EXPECT_EQ(slurp(rec_path), before);
}

TEST_F(Cli, ResumeRefusesMismatchedPlans) {
    auto p = plan("tp", two_point_plan(600));
    ASSERT_EQ(run("two-point --config '" + p.string() + "' --stop-after 100 " + out_flag()).code, 0);
    const auto rec_path = dir_ / "out" / "tp.json";

    // a different seed is a different plan
    auto other = two_point_plan(600);
    other["estimator"]["master_seed"] = 9;
    auto q = plan("other", other);
    EXPECT_EQ(run("resume --record '" + rec_path.string() + "' --config '" + q.string() + "'").code, 2);

    // a tampered hash
    auto rec = nlohmann::json::parse(slurp(rec_path));
    rec["plan_hash"] = "0000000000000000";
    write_file(rec_path, rec.dump());
    auto r = run("resume --record '" + rec_path.string() + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("plan_hash"), std::string::npos);

    write_file(rec_path, "{not json");
    EXPECT_EQ(run("resume --record '" + rec_path.string() + "'").code, 2);
}

TEST_F(Cli, WorkersAndOutputStayOutOfTheHash) {
    auto a = two_point_plan(100), b = two_point_plan(100);
    b["estimator"]["workers"] = 4;
    b["estimator"]["checkpoint_every"] = 7;
    b["output"] = {{"dir", "elsewhere"}};
    ASSERT_EQ(run("two-point --config '" + plan("a", a).string() + "' " + out_flag()).code, 0);
    const auto ha = record("tp").at("plan_hash");
    ASSERT_EQ(run("two-point --config '" + plan("b", b).string() + "' " + out_flag()).code, 0);
    EXPECT_EQ(record("tp").at("plan_hash"), ha);
    ASSERT_EQ(run("two-point --config '" + plan("a", a).string() + "' --seed 99 " + out_flag()).code, 0);
    EXPECT_NE(record("tp").at("plan_hash"), ha);
    EXPECT_EQ(record("tp").at("seed"), 99);
}

TEST_F(Cli, FitReadsSeriesCsv) {
    write_file(dir_ / "s.csv",
               "scale,value,std_error,n,indeterminate_fraction\n"
               "4,0.0625,0.001,1000,0\n8,0.015625,0.0003,1000,0\n16,0.00390625,0.0001,1000,0\n");
    auto r = run("fit '" + (dir_ / "s.csv").string() + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("slope -2"), std::string::npos) << r.out;
    r = run("fit --json '" + (dir_ / "s.csv").string() + "'");
    ASSERT_EQ(r.code, 0);
    auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j.at(0).at("fit").at("slope").get<double>(), -2.0, 1e-9);
}

TEST_F(Cli, FitRejectsMalformedCsv) {
    write_file(dir_ / "bad.csv", "scale,value\n1,2\n");
    EXPECT_EQ(run("fit '" + (dir_ / "bad.csv").string() + "'").code, 2);
    write_file(dir_ / "bad2.csv", "scale,value,std_error,n,indeterminate_fraction\n4,x,0.1,10,0\n");
    EXPECT_EQ(run("fit '" + (dir_ / "bad2.csv").string() + "'").code, 2);
    write_file(dir_ / "short.csv", "scale,value,std_error,n,indeterminate_fraction\n4,0.5,0.1,10,0\n");
    EXPECT_EQ(run("fit '" + (dir_ / "short.csv").string() + "'").code, 2);
    EXPECT_EQ(run("fit '" + (dir_ / "absent.csv").string() + "'").code, 2);
}

TEST_F(Cli, PlanValidationErrorsExitTwo) {
    auto expect_usage = [&](const nlohmann::json& j, const std::string& sub = "one-arm") {
        auto p = plan("v", j);
        auto r = run(sub + " --config '" + p.string() + "' " + out_flag());
        EXPECT_EQ(r.code, 2) << j.dump() << "\n" << r.err;
    };
    auto base = one_arm_plan(10);
    auto j = base;
    j["surprise"] = 1;
    expect_usage(j);
    j = base;
    j["p"] = 1.5;
    expect_usage(j);
    j = base;
    j["p"] = "auto";  // no pc sub-plan
    expect_usage(j);
    j = base;
    j["scales"] = {3, 2};
    expect_usage(j);
    j = base;
    j["spec"]["d"] = 0;
    expect_usage(j);
    j = base;
    j["estimator"]["n_samples"] = 0;
    expect_usage(j);
    j = base;
    j["estimator"]["bogus"] = true;
    expect_usage(j);
    expect_usage(base, "tail");  // subcommand mismatch
    j = base;
    j["subcommand"] = "multi-arm";
    j["params"] = {{"points", {{5, 0}}}};
    expect_usage(j, "multi-arm");  // arm point outside B(0, r/2)
    write_file(dir_ / "broken.json", "{\"subcommand\": ");
    EXPECT_EQ(run("one-arm --config '" + (dir_ / "broken.json").string() + "'").code, 2);
}

TEST_F(Cli, ResourceErrorsExitThree) {
    auto j = nlohmann::json{{"name", "reg"},
                            {"subcommand", "regularity"},
                            {"spec", {{"d", 2}, {"model", "nn"}}},
                            {"p", 0.5},
                            {"scales", {10}},
                            {"estimator", {{"n_samples", 2}, {"max_vertices", 50}}}};
    auto r = run("regularity --config '" + plan("reg", j).string() + "' " + out_flag());
    EXPECT_EQ(r.code, 3) << r.err;
}
