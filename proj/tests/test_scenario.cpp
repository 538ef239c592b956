#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carma/carma.hpp"
#include "carma/io/csv.hpp"
#include "carma/io/scenario.hpp"

using namespace carma;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kScenarios = CARMA_SCENARIO_DIR;
const std::string kCli = CARMA_CLI_PATH;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json reference() { return json::parse(slurp(kScenarios + "/car1_reference.json")); }

// Message of the model error raised while parsing `text`.
std::string parse_error(const std::string& text) {
    try {
        io::parse_scenario(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::model);
        return e.what();
    }
    ADD_FAILURE() << "expected a schema error";
    return {};
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::path(::testing::TempDir()) / ("carma_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
    fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

// value column of the first row whose quantity (and, if given, parameters) match
double csv_value(const fs::path& file, const std::string& quantity, const std::string& params = "") {
    std::istringstream in(slurp(file));
    std::string line, header;
    std::getline(in, header);
    std::vector<std::string> cols;
    {
        std::istringstream hs(header.substr(0, header.find('\r')));
        for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
    }
    auto col = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin());
    };
    while (std::getline(in, line)) {
        line = line.substr(0, line.find('\r'));
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) f.push_back(c);
        if (f.empty() || f[0] != quantity) continue;
        if (!params.empty() && f[col("parameters")] != params) continue;
        return std::stod(f[col("value")]);
    }
    ADD_FAILURE() << "no row " << quantity << " " << params << " in " << file;
    return std::nan("");
}

}  // namespace

// Parsing.

TEST(Scenario, ReferenceFilesLoad) {
    for (auto name : {"car1_reference", "carma21_classical", "cone_carma21_grid32"}) {
        auto s = io::load_scenario(kScenarios + "/" + name + ".json");
        EXPECT_NO_THROW(s.model.build()) << name;
        EXPECT_EQ(s.hash.size(), 16u);
    }
}

TEST(Scenario, ReferenceModelReproducesMean) {
    auto s = io::load_scenario(kScenarios + "/car1_reference.json");
    auto m = s.model.build();
    EXPECT_NEAR(mean_output(m, 1.0, TestFunction::constant(m.grid(), 1.0), m.initial()), 0.632121, 5e-7);
    EXPECT_EQ(s.run.t_grid.size(), 11u);
    EXPECT_EQ(s.run.seed, 42u);
}

TEST(Scenario, QNotBelowPIsRejectedWithLine) {
    auto j = reference();
    j["model"]["q"] = 1;
    auto msg = parse_error(j.dump(2));
    EXPECT_NE(msg.find("/model/q"), std::string::npos) << msg;
    EXPECT_NE(msg.find("q < p"), std::string::npos) << msg;
    EXPECT_EQ(msg.rfind("config:", 0), 0u) << msg;
    // line of "q" in the pretty-printed document
    auto text = j.dump(2);
    auto pos = text.find("\"q\"");
    auto line = std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n') + 1;
    EXPECT_NE(msg.find("config:" + std::to_string(line) + ":"), std::string::npos) << msg;
}

TEST(Scenario, SchemaErrors) {
    auto j = reference();
    j["run"]["t_grid"] = json::array();
    EXPECT_NE(parse_error(j.dump()).find("time grid is empty"), std::string::npos);

    j = reference();
    j["model"]["driver"]["kind"] = "gamma_process";
    EXPECT_NE(parse_error(j.dump()).find("/model/driver/kind"), std::string::npos);

    j = reference();
    j["model"]["A"][0]["kind"] = "laplacian";
    EXPECT_NE(parse_error(j.dump()).find("/model/A/0/kind"), std::string::npos);

    j = reference();
    j["extra"] = 1;
    EXPECT_NE(parse_error(j.dump()).find("unknown top-level key"), std::string::npos);

    j = reference();
    j["schema_version"] = 2;
    EXPECT_NE(parse_error(j.dump()).find("schema_version"), std::string::npos);

    j = reference();
    j["model"]["A"][0] = {{"kind", "dense"}, {"matrix", {{1.0, 2.0}, {3.0, 4.0}}}};
    EXPECT_NE(parse_error(j.dump()).find("/model/A/0"), std::string::npos);

    j = reference();
    j["run"]["t_grid"] = {0.0, 0.5, 0.5};
    EXPECT_NE(parse_error(j.dump()).find("strictly increasing"), std::string::npos);

    j = reference();
    j["model"]["driver"].erase("intensity");
    EXPECT_NE(parse_error(j.dump()).find("/model/driver"), std::string::npos);
}

TEST(Scenario, SyntaxErrorHasLineAndColumn) {
    auto msg = parse_error("{\n  \"schema_version\": 1,\n  \"grid\": [1,,2]\n}");
    EXPECT_EQ(msg.rfind("config:3:", 0), 0u) << msg;
}

TEST(Scenario, ConeModeRejectsClassicalCompanion) {
    auto s = io::load_scenario(kScenarios + "/carma21_classical.json");
    EXPECT_THROW(s.model.build(true), Error);
}

TEST(Csv, FieldQuotingAndHash) {
    EXPECT_EQ(io::csv_field("plain"), "plain");
    EXPECT_EQ(io::csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(io::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

// Command line.

TEST(Cli, ValidateExitCodes) {
    auto dir = scratch("validate");
    EXPECT_EQ(run_cli("validate --config " + kScenarios + "/car1_reference.json --out " + dir.string()), 0);
    EXPECT_EQ(run_cli("validate --config " + kScenarios + "/carma21_classical.json --out " + dir.string()), 0);
    EXPECT_EQ(run_cli("validate --config " + kScenarios + "/cone_carma21_grid32.json --out " + dir.string()), 0);
    auto report = slurp(dir / "validate.csv");
    EXPECT_EQ(report.rfind("quantity,units,config_hash,", 0), 0u);

    auto j = reference();
    j["model"]["q"] = 3;
    EXPECT_EQ(run_cli("validate --config " + write_config(dir, j).string()), 1);
    EXPECT_EQ(run_cli("validate --config " + (dir / "missing.json").string()), 1);
    EXPECT_EQ(run_cli("validate"), 1);
}

TEST(Cli, ClassicalValidateReportsStationaryButNotQuasiMonotone) {
    auto dir = scratch("classical");
    ASSERT_EQ(run_cli("validate --config " + kScenarios + "/carma21_classical.json --out " + dir.string()), 0);
    auto report = slurp(dir / "validate.csv");
    auto row = [&](const std::string& check) {
        auto pos = report.find("," + check + ",");
        return pos == std::string::npos ? std::string() : report.substr(pos, report.find('\r', pos) - pos);
    };
    EXPECT_NE(row("spectral_bound").find(",true,true"), std::string::npos) << report;
    EXPECT_NE(row("quasi_monotone").find(",false,false"), std::string::npos) << report;
}

TEST(Cli, SimulateIsByteIdenticalAcrossRunsAndThreads) {
    auto a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
    auto cfg = kScenarios + "/cone_carma21_grid32.json";
    ASSERT_EQ(run_cli("simulate --config " + cfg + " --paths 60 --threads 1 --out " + a.string()), 0);
    ASSERT_EQ(run_cli("simulate --config " + cfg + " --paths 60 --threads 1 --out " + b.string()), 0);
    ASSERT_EQ(run_cli("simulate --config " + cfg + " --paths 60 --threads 3 --out " + c.string()), 0);
    for (const auto& entry : fs::directory_iterator(a)) {
        auto name = entry.path().filename();
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
        EXPECT_EQ(slurp(a / name), slurp(c / name)) << name;
    }
    auto summary = slurp(a / "summary.csv");
    EXPECT_EQ(summary.rfind("quantity,units,config_hash,", 0), 0u);
    EXPECT_NE(summary.find("\r\n"), std::string::npos);
    EXPECT_TRUE(fs::exists(a / "path_0.csv"));

    auto d = scratch("sim_d");
    ASSERT_EQ(run_cli("simulate --config " + cfg + " --paths 60 --seed 7 --out " + d.string()), 0);
    EXPECT_NE(slurp(a / "summary.csv"), slurp(d / "summary.csv"));
}

TEST(Cli, MomentsReferenceMean) {
    auto dir = scratch("moments");
    ASSERT_EQ(run_cli("moments --config " + kScenarios + "/car1_reference.json --out " + dir.string()), 0);
    EXPECT_NEAR(csv_value(dir / "moments.csv", "mean_output", "functional=x;t=1"), 0.632121, 5e-7);
}

TEST(Cli, PriceExpAffineEqualsLaplace) {
    auto dir = scratch("price");
    auto j = reference();
    j["run"]["price"] = {{"horizon", 1.0}, {"h", 1.0}, {"payoff", {{"kind", "exp_affine"}, {"a", -1.0}}}};
    auto cfg = write_config(dir, j).string();
    ASSERT_EQ(run_cli("price --config " + cfg + " --out " + dir.string()), 0);
    ASSERT_EQ(run_cli("laplace --config " + cfg + " --out " + dir.string()), 0);
    double price = csv_value(dir / "price.csv", "price");
    double laplace = csv_value(dir / "laplace.csv", "laplace_state", "t=1");
    EXPECT_NEAR(price, laplace, 1e-12);
}

TEST(Cli, PriceWithShortGridExitsWithConvergenceCode) {
    auto dir = scratch("price_short");
    auto j = reference();
    j["run"]["price"].erase("y_max");
    j["run"]["price"].erase("nodes");
    j["run"]["price"]["mc_paths"] = 0;
    EXPECT_EQ(run_cli("price --config " + write_config(dir, j).string() + " --out " + dir.string()), 3);
}

TEST(Cli, KernelColumnsAgree) {
    auto dir = scratch("kernel");
    ASSERT_EQ(run_cli("kernel --config " + kScenarios + "/carma21_classical.json --out " + dir.string()), 0);
    auto text = slurp(dir / "kernel.csv");
    auto pos = text.find("kernel_max_abs_diff");
    ASSERT_NE(pos, std::string::npos);
    auto line = text.substr(pos, text.find('\r', pos) - pos);
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) f.push_back(c);
    ASSERT_GE(f.size(), 9u);
    EXPECT_LE(std::stod(f[8]), 1e-6);
}

TEST(Cli, EsscherReportsDoubledIntensity) {
    auto dir = scratch("esscher");
    auto j = reference();
    j["run"]["paths"] = 2000;
    ASSERT_EQ(run_cli("esscher --config " + write_config(dir, j).string() + " --out " + dir.string()), 0);
    EXPECT_NEAR(csv_value(dir / "esscher.csv", "intensity", "measure=original"), 2.0, 1e-12);
    EXPECT_NEAR(csv_value(dir / "esscher.csv", "intensity", "measure=tilted"), 4.0, 1e-12);
    EXPECT_NEAR(csv_value(dir / "esscher.csv", "mgf"), 2.0, 1e-12);
}
