#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vecspin/cli/cli.hpp"

using namespace vecspin;
using namespace vecspin::cli;

namespace {

const std::string kConfigs = VECSPIN_CONFIG_DIR;

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::string& command, const std::string& file, Overrides ov = {}) {
    std::ostringstream out, err;
    const int code = run(command, file, ov, out, err);
    return {code, out.str(), err.str()};
}

std::string write_temp(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / ("vecspin_test_" + name + ".yaml");
    std::ofstream(path) << text;
    return path.string();
}

json without_runtime(const std::string& text) {
    json j = json::parse(text);
    j.erase("runtime_ms");
    return j;
}

const char* kIsing = R"(model:
  kappa: 1
  coefficients:
    2: [0.5]
prior:
  preset: ising
  mass: 2
)";

} // namespace

TEST(Cli, ValidateBundledConfigs) {
    for (const char* name : {"sk_ising", "rpc_check", "optimize_sk", "cov_check", "gg"}) {
        const Outcome o = run_cli("validate", kConfigs + "/" + name + ".yaml");
        EXPECT_EQ(o.code, kOk) << name << ": " << o.err;
    }
}

TEST(Cli, ParisiOnBundledConfig) {
    const Outcome o = run_cli("parisi", kConfigs + "/sk_ising.yaml");
    ASSERT_EQ(o.code, kOk) << o.err;
    const json j = json::parse(o.out);
    EXPECT_NEAR(j["value"].get<double>(), std::log(2.0) + 0.125, 1e-9);
    for (const char* key : {"command", "config_digest", "seed", "value", "std_error", "components", "checks", "runtime_ms"})
        EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Cli, ValueOnlyRunHasNoChecks) {
    const Outcome o = run_cli("phi", kConfigs + "/sk_ising.yaml");
    ASSERT_EQ(o.code, kOk) << o.err;
    EXPECT_TRUE(json::parse(o.out)["checks"].empty());
}

TEST(Cli, OracleRunReportsChecks) {
    const Outcome o = run_cli("cov-check", kConfigs + "/cov_check.yaml");
    ASSERT_EQ(o.code, kOk) << o.err;
    const json j = json::parse(o.out);
    ASSERT_GE(j["checks"].size(), 1u);
    for (const auto& c : j["checks"]) {
        for (const char* key : {"name", "lhs", "rhs", "tol", "pass"}) EXPECT_TRUE(c.contains(key));
        EXPECT_TRUE(c["pass"].get<bool>()) << c.dump();
    }
}

TEST(Cli, ParseErrorExitCode) {
    EXPECT_EQ(run_cli("phi", write_temp("syntax", "model: [1, 2\n")).code, kParse);
    EXPECT_EQ(run_cli("nope", kConfigs + "/sk_ising.yaml").code, kParse);
}

TEST(Cli, ValidationErrorExitCode) {
    const Outcome o = run_cli("phi", write_temp("odd", "model:\n  kappa: 1\n  coefficients:\n    3: [0.5]\n"));
    EXPECT_EQ(o.code, kValidation);
    EXPECT_NE(o.err.find("line"), std::string::npos) << o.err;
    EXPECT_EQ(run_cli("parisi", write_temp("nopath", kIsing)).code, kValidation);
    const std::string bad_path = std::string(kIsing) + "path:\n  x: [0.8, 0.2]\n  gammas: [[[0.5]], [[1.0]]]\n";
    EXPECT_EQ(run_cli("phi", write_temp("badpath", bad_path)).code, kValidation);
}

TEST(Cli, BudgetErrorExitCode) {
    const std::string big = std::string(kIsing) + "system:\n  N: 40\n  n_disorder: 2\n";
    EXPECT_EQ(run_cli("fe", write_temp("big", big)).code, kBudget);
    const std::string empty = std::string(kIsing) + "D: [[0.5]]\neps: 0.01\nsystem:\n  N: 4\n  n_disorder: 2\n";
    EXPECT_EQ(run_cli("fe-constrained", write_temp("empty", empty)).code, kBudget);
}

TEST(Cli, NumericalErrorExitCode) {
    // Every configuration has the rank-one overlap ½·11ᵀ, inside B_0.6(I), so
    // the whitened block is singular and the modifier cannot be built.
    const std::string text = R"(model:
  kappa: 2
  coefficients:
    2: [0.5, 0.5]
prior:
  atoms:
    - {point: [0.7071067811865476, 0.7071067811865476], weight: 0.5}
    - {point: [-0.7071067811865476, -0.7071067811865476], weight: 0.5}
D: [[1.0, 0.0], [0.0, 1.0]]
eps: 0.6
system:
  N: 2
gg:
  disorder_draws: 4
)";
    EXPECT_EQ(run_cli("gg", write_temp("singular", text)).code, kNumerical);
}

TEST(Cli, DeterministicAcrossThreads) {
    const std::string mc = kConfigs + "/sk_ising.yaml";
    Overrides one;
    one.backend = "mc";
    one.threads = 1;
    Overrides many = one;
    many.threads = 4;
    const Outcome a = run_cli("phi", mc, one);
    const Outcome b = run_cli("phi", mc, many);
    ASSERT_EQ(a.code, kOk) << a.err;
    EXPECT_EQ(without_runtime(a.out).dump(), without_runtime(b.out).dump());

    const Outcome fa = run_cli("fe", mc, one);
    const Outcome fb = run_cli("fe", mc, many);
    EXPECT_EQ(without_runtime(fa.out).dump(), without_runtime(fb.out).dump());
}

TEST(Cli, SeedOverrideChangesMonteCarlo) {
    Overrides a, b;
    a.backend = b.backend = "mc";
    a.seed = 1;
    b.seed = 2;
    const std::string file = kConfigs + "/sk_ising.yaml";
    const json ja = json::parse(run_cli("phi", file, a).out);
    const json jb = json::parse(run_cli("phi", file, b).out);
    EXPECT_EQ(ja["seed"].get<std::uint64_t>(), 1u);
    EXPECT_NE(ja["value"].get<double>(), jb["value"].get<double>());
}

TEST(Cli, OutputFileAndCsv) {
    const auto dir = std::filesystem::temp_directory_path();
    Overrides ov;
    ov.out = (dir / "vecspin_test_report.json").string();
    ov.csv = (dir / "vecspin_test_draws.csv").string();
    const Outcome o = run_cli("fe", kConfigs + "/sk_ising.yaml", ov);
    ASSERT_EQ(o.code, kOk) << o.err;
    EXPECT_TRUE(o.out.empty());
    std::ifstream report(*ov.out);
    EXPECT_EQ(json::parse(report)["command"], "fe");
    std::ifstream csv(*ov.csv);
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "N,draw,value,unconstrained");
}
