#include "mottsf/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace mottsf;
using namespace mottsf::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "mottsf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mottsf_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kSmallGrid =
    "[grid]\nmu_lo = -1\nmu_hi = 0\nmu_count = 4\nk_lo = 0\nk_hi = 0.3\nk_count = 5\n"
    "[numerics]\nn_max = 4\n";

}  // namespace

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, -0.30000000000000004, 1e-300, 6.02214076e23, 0.0, 123456789.0}) {
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("config parsing") {
    SUBCASE("sectioned and dotted keys") {
        const RunConfig c = parse_config("# comment\n[model]\nomega = 3\nkappa=0.01\n\nnumerics.n_max = 5\n[spectrum]\n"
                                         "channels = a, sigma1\n");
        CHECK(c.model.omega == 3.0);
        CHECK(c.model.kappa == 0.01);
        CHECK(c.numerics.n_max == 5);
        REQUIRE(c.spectrum.channels.size() == 2u);
        CHECK(c.spectrum.channels[1] == Channel::sigma1_minus);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(parse_config("[model]\nnot_a_key = 1\n"), UsageError);
        CHECK_THROWS_AS(parse_config("[model]\nomega = five\n"), UsageError);
        CHECK_THROWS_AS(parse_config("omega = 1\n"), UsageError);
        CHECK_THROWS_AS(parse_config("[model\n"), UsageError);
        CHECK_THROWS_AS(parse_config("{\"model\": {\"bogus\": 1}}"), UsageError);
    }
    SUBCASE("canonical JSON round trip") {
        RunConfig c;
        c.model.delta1 = 1.25;
        c.numerics.seed = 12345;
        c.output.format = OutputFormat::both;
        const std::string j = config_to_json(c);
        CHECK(config_to_json(parse_config(j)) == j);
        // A meta.json wrapper is accepted too.
        const std::string meta = "{\"format_version\": 1, \"config\": " + j + "}";
        CHECK(config_to_json(parse_config(meta)) == j);
    }
}

TEST_CASE("exit codes") {
    CHECK(invoke({}).code == kExitUsage);
    CHECK(invoke({"no-such-command"}).code == kExitUsage);
    CHECK(invoke({"lobes", "--workers", "0"}).code == kExitUsage);
    CHECK(invoke({"--version"}).code == kExitOk);
    CHECK(invoke({"lobes", "--config", "/nonexistent/config.ini"}).code == kExitIo);

    const fs::path dir = scratch_dir("codes");
    write_file(dir / "bad.ini", "[model]\nz = 0\n");
    CHECK(invoke({"lobes", "--config", (dir / "bad.ini").string(), "--out", (dir / "o").string()}).code == kExitUsage);
    write_file(dir / "unknown.ini", "[model]\nzz = 1\n");
    const Outcome u = invoke({"lobes", "--config", (dir / "unknown.ini").string()});
    CHECK(u.code == kExitUsage);
    CHECK(u.err.find("zz") != std::string::npos);

    // The output directory cannot be created under a regular file.
    write_file(dir / "blocker", "x");
    CHECK(invoke({"lobes", "--out", (dir / "blocker" / "sub").string()}).code == kExitIo);
}

TEST_CASE("phase diagram files, determinism and meta round trip") {
    const fs::path dir = scratch_dir("phase");
    write_file(dir / "grid.ini", kSmallGrid);
    const std::string cfg = (dir / "grid.ini").string();
    REQUIRE(invoke({"phase-diagram", "--config", cfg, "--out", (dir / "w1").string(), "--workers", "1"}).code == 0);
    REQUIRE(invoke({"phase-diagram", "--config", cfg, "--out", (dir / "w3").string(), "--workers", "3",
                    "--format", "both"})
                .code == 0);

    const std::string csv = slurp(dir / "w1" / "phase_diagram.csv");
    CHECK(csv == slurp(dir / "w3" / "phase_diagram.csv"));
    CHECK(csv.rfind("# mottsf-csv phase_diagram v1\n", 0) == 0);
    CHECK(csv.find("\r") == std::string::npos);
    CHECK(csv.find("\nmu,k,psi,phase,mean_n,var_n,g2,mean_N,kc_overlay,trunc_flag\n") != std::string::npos);
    std::size_t data_lines = 0;
    std::istringstream lines(csv);
    for (std::string line; std::getline(lines, line);)
        if (!line.empty() && line[0] != '#' && line.rfind("mu,", 0) != 0) ++data_lines;
    CHECK(data_lines == 20u);

    const auto table = nlohmann::json::parse(slurp(dir / "w3" / "phase_diagram.json"));
    CHECK(table["format"] == "mottsf-table");
    CHECK(table["rows"].size() == 20u);

    const auto meta = nlohmann::json::parse(slurp(dir / "w1" / "meta.json"));
    CHECK(meta["format_version"] == kFormatVersion);
    CHECK(meta["command"] == "phase-diagram");
    CHECK(meta["config"]["numerics"]["n_max"] == 4);

    // Re-running from the written meta.json reproduces the table byte for byte.
    REQUIRE(invoke({"phase-diagram", "--config", (dir / "w1" / "meta.json").string(), "--out",
                    (dir / "again").string()})
                .code == 0);
    CHECK(slurp(dir / "again" / "phase_diagram.csv") == csv);
}

TEST_CASE("lobes command") {
    const fs::path dir = scratch_dir("lobes");
    write_file(dir / "l.ini", "[lobes]\naxis = omega\nlo = 0\nhi = 4\ncount = 3\ncharges = 0, 1, 2\n");
    REQUIRE(invoke({"lobes", "--config", (dir / "l.ini").string(), "--out", dir.string()}).code == 0);
    const std::string csv = slurp(dir / "lobes.csv");
    CHECK(csv.find("axis_value,N,mu_boundary\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') >= 9);
}
