#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "toda/commands.hpp"

using namespace toda;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig green_config(const std::string& name, double h) {
    RunConfig c;
    c.command = "green";
    c.h = h;
    c.out = (fs::temp_directory_path() / ("toda_cli_" + name)).string();
    fs::remove_all(c.out);
    return c;
}

}  // namespace

TEST(Expression, PrecedenceAndAssociativity) {
    EXPECT_DOUBLE_EQ(Expression::parse("1 + 2 * 3").constant(), 7.0);
    EXPECT_DOUBLE_EQ(Expression::parse("2 ^ 3 ^ 2").constant(), 512.0);
    EXPECT_DOUBLE_EQ(Expression::parse("(1 + 2) * 3").constant(), 9.0);
    EXPECT_DOUBLE_EQ(Expression::parse("-3 + 5").constant(), 2.0);
    EXPECT_DOUBLE_EQ(Expression::parse("8 / 4 / 2").constant(), 1.0);
    EXPECT_NEAR(Expression::parse("pi/2").constant(), kPi / 2, 1e-15);
    EXPECT_NEAR(Expression::parse("log(e)").constant(), 1.0, 1e-15);
}

TEST(Expression, Variables) {
    auto e = Expression::parse("1 + x1^2 + exp(-x2) * cos(theta) + r");
    Point x(0.3, -0.4);
    EXPECT_NEAR(e(x), 1 + 0.09 + std::exp(0.4) * (0.3 / 0.5) + 0.5, 1e-14);
    EXPECT_TRUE(e.uses_variables());
    EXPECT_THROW(e.constant(), std::invalid_argument);
    EXPECT_NEAR(Expression::parse("th")(Point(0.0, 1.0)), kPi / 2, 1e-15);
}

TEST(Expression, RejectsMalformedInput) {
    for (const char* bad : {"", "1 +", "(1", "foo(1)", "x3", "2 ** 3", "1 2"})
        EXPECT_THROW(Expression::parse(bad), std::invalid_argument) << bad;
}

TEST(Config, ParsesSectionsAndExpressions) {
    auto f = ConfigFile::parse(
        "# comment\n[problem]\nk = 1\nm = 2\nrho2 = pi/3\nV1 = 1 + x1^2\n[configuration]\ninterior = 0.1 0.2\n"
        "boundary = pi\n[ladder]\nlambdas = 1e-2, 1e-3\n");
    std::vector<std::string> problems;
    auto c = parse_run_config(f, "construct", &problems);
    EXPECT_TRUE(problems.empty());
    EXPECT_EQ(c.k, 1);
    EXPECT_EQ(c.m, 2);
    EXPECT_NEAR(c.rho2, kPi / 3, 1e-15);
    EXPECT_EQ(c.V1, "1 + x1^2");
    ASSERT_EQ(c.interior.size(), 1u);
    EXPECT_DOUBLE_EQ(c.interior[0].y, 0.2);
    ASSERT_EQ(c.boundary_angles.size(), 1u);
    EXPECT_NEAR(c.boundary_angles[0], kPi, 1e-15);
    EXPECT_EQ(c.lambdas, (std::vector<double>{1e-2, 1e-3}));
    EXPECT_TRUE(validate(c).empty());
}

TEST(Config, RejectsDuplicatesAndReportsUnknownKeys) {
    EXPECT_THROW(ConfigFile::parse("[a]\nx = 1\nx = 2\n"), std::invalid_argument);
    EXPECT_THROW(ConfigFile::parse("[a\n"), std::invalid_argument);
    std::vector<std::string> problems;
    parse_run_config(ConfigFile::parse("[mesh]\nhh = 1\n[problem]\nk = 0.5\n"), "green", &problems);
    EXPECT_EQ(problems.size(), 2u);
}

TEST(Config, ValidationListsEveryViolation) {
    RunConfig c;
    c.command = "construct";
    c.rho2 = 4 * kPi + 1e-12;
    c.V1 = "x1";
    c.lambdas = {1e-3, 1e-2};
    auto e = validate(c);
    ASSERT_GE(e.size(), 3u);
    bool guard = false;
    for (const auto& m : e) guard = guard || m.find("resonance guard") != std::string::npos;
    EXPECT_TRUE(guard);
    EXPECT_NEAR(resonance_distance(2 * kPi + 1e-3), 1e-3, 1e-12);
    c = RunConfig{};
    c.command = "construct";
    c.rho2 = 0.0;
    EXPECT_TRUE(validate(c).empty());
}

TEST(Output, CsvUsesSeventeenDigitsAndLf) {
    CsvTable t({"a", "b"});
    t.row() << 0.1 << "x,y";
    t.row() << 3 << 1.0 / 3.0;
    EXPECT_EQ(t.str(), "a,b\n0.10000000000000001,\"x,y\"\n3,0.33333333333333331\n");
    EXPECT_EQ(std::stod(format_double(kPi)), kPi);
}

TEST(Output, DiskGreenIsSymmetric) {
    Point a(0.1, 0.2), b(-0.3, 0.05), c = boundary_point(0.7);
    EXPECT_NEAR(disk_green(a, b), disk_green(b, a), 1e-14);
    EXPECT_NEAR(disk_green(a, c), disk_green(c, a), 1e-14);
}

TEST(Commands, GreenIsDeterministic) {
    auto c1 = green_config("det1", 0.05), c2 = green_config("det2", 0.05);
    std::ostringstream log;
    ASSERT_EQ(run_command(c1, log), 0) << log.str();
    ASSERT_EQ(run_command(c2, log), 0) << log.str();
    for (const char* f : {"green.csv", "green_symmetry.csv", "checks.csv"})
        EXPECT_EQ(slurp(fs::path(c1.out) / f), slurp(fs::path(c2.out) / f)) << f;
    auto summary = nlohmann::json::parse(slurp(fs::path(c1.out) / "summary.json"));
    EXPECT_EQ(summary["schema_version"], kSchemaVersion);
    EXPECT_FALSE(summary.contains("timestamp"));
    EXPECT_TRUE(nlohmann::json::parse(slurp(fs::path(c1.out) / "metadata.json")).contains("timestamp"));
    EXPECT_EQ(slurp(fs::path(c1.out) / "green.csv").find('\r'), std::string::npos);
}

TEST(Commands, ExitCodes) {
    std::ostringstream log;
    auto coarse = green_config("coarse", 0.2);
    EXPECT_EQ(run_command(coarse, log), 2);
    coarse.check_level = CheckLevel::Warn;
    EXPECT_EQ(run_command(coarse, log), 0);
    auto resonant = green_config("resonant", 0.05);
    resonant.rho2 = 2 * kPi;
    std::ostringstream msg;
    EXPECT_EQ(run_command(resonant, msg), 1);
    EXPECT_NE(msg.str().find("resonance guard"), std::string::npos);
}
