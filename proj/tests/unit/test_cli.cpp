#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string err;
    std::string out;
};

const fs::path kWork = fs::temp_directory_path() / "fastval_cli_tests";

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

CliResult fastval(const std::string& args) {
    fs::create_directories(kWork);
    const fs::path out = kWork / "stdout.txt", err = kWork / "stderr.txt";
    const std::string cmd = std::string("\"") + FASTVAL_CLI + "\" " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

}  // namespace

TEST(Cli, GenSmokeRun) {
    const fs::path dir = kWork / "gen";
    fs::remove_all(dir);
    const CliResult r = fastval("gen --mode amput --count 10 --grid 200x200 --quiet --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "train.csv"));
    EXPECT_TRUE(fs::exists(dir / "test.csv"));
    const std::string manifest = slurp(dir / "manifest.json");
    EXPECT_NE(manifest.find("timing_seconds"), std::string::npos);
}

TEST(Cli, ConfigFileAndOverrides) {
    const fs::path dir = kWork / "config";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "run.json");
        os << R"({"mode": "varswap", "train_count": 30, "test_count": 12, "seed": 5})";
    }
    CliResult r = fastval("gen --config " + (dir / "run.json").string() + " --test-count 7 --quiet --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.err;
    r = fastval("train --config " + (dir / "run.json").string() + " --quiet --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.err;
    r = fastval("eval --config " + (dir / "run.json").string() + " --quiet --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\"n_test\": 7"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("\"seed\": 5"), std::string::npos) << r.out;
}

TEST(Cli, FailuresPrintMachineReadableError) {
    CliResult r = fastval("gen --mode bermudan --out " + (kWork / "bad").string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("error: {\"code\":\"unknown_mode\""), std::string::npos) << r.err;

    r = fastval("train --mode varswap --quiet --out " + (kWork / "does_not_exist").string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("\"code\":\"io_error\""), std::string::npos) << r.err;

    r = fastval("gen --grid 4x4 --mode amput --count 2 --out " + (kWork / "bad").string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("\"code\":\"invalid_parameter\""), std::string::npos) << r.err;

    r = fastval("frobnicate");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("error: {\"code\":\"usage\""), std::string::npos) << r.err;
}

TEST(Cli, EmptySensitivitySweepSucceeds) {
    const fs::path dir = kWork / "sens_empty";
    fs::remove_all(dir);
    const CliResult r = fastval("sensitivity --mode amput --factors \"\" --quiet --out " + dir.string());
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    EXPECT_FALSE(fs::exists(dir / "sensitivity"));
}

TEST(Cli, SensitivityListsFiles) {
    const fs::path dir = kWork / "sens";
    fs::remove_all(dir);
    const CliResult r = fastval("sensitivity --mode varswap --factors a_prime,r --points 5 --quiet --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "sensitivity" / "varswap_a_prime.csv"));
    EXPECT_TRUE(fs::exists(dir / "sensitivity" / "varswap_r.csv"));
}

TEST(Cli, SolvePrintsGreeks) {
    const CliResult r = fastval("solve --grid 100x100 --quiet");
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* k : {"\"V\"", "\"delta\"", "\"gamma\"", "\"theta\""}) EXPECT_NE(r.out.find(k), std::string::npos);
}
