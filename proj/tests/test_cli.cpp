#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "nld/app.hpp"

using namespace nld;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("nld_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string config(const std::string& name) { return (fs::path(NLD_CONFIG_DIR) / name).string(); }

Outcome nldisp(const std::string& args, const fs::path& work) {
    const auto out = work / "stdout.txt", err = work / "stderr.txt";
    const std::string cmd = std::string(NLDISP_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

std::string manifest_value(const fs::path& manifest, const std::string& key) {
    std::ifstream in(manifest);
    const std::string prefix = key + " = ";
    for (std::string line; std::getline(in, line);)
        if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    return "";
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream s(line);
        for (std::string cell; std::getline(s, cell, ',');) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST(Cli, SpectrumScenario) {
    const auto dir = scratch("spectrum");
    const auto r = nldisp("spectrum --config " + config("spectrum_torus.cfg") + " --out " + (dir / "run").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv_rows(dir / "run" / "spectrum.csv");
    ASSERT_GT(rows.size(), 1u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"k", "beta_analytic", "beta_numeric", "abs_err", "class"}));
    std::size_t pairs = 0;
    double worst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LE(std::abs(std::stoi(rows[i][0])), 8);
        worst = std::max(worst, std::stod(rows[i][3]));
        ++pairs;
    }
    EXPECT_EQ(pairs, 17u);
    EXPECT_LE(worst, 1e-3);
    EXPECT_NEAR(std::stod(manifest_value(dir / "run" / "manifest", "result.max_abs_err")), worst, 1e-15);
    EXPECT_EQ(manifest_value(dir / "run" / "manifest", "exit_code"), "0");
    EXPECT_FALSE(manifest_value(dir / "run" / "manifest", "version.eigen").empty());
    EXPECT_FALSE(manifest_value(dir / "run" / "manifest", "wall_time_seconds").empty());
}

TEST(Cli, ZeroForceConservesMass) {
    const auto dir = scratch("mass");
    const auto r = nldisp("evolve --config " + config("evolve_random.cfg") + " --out " + (dir / "run").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LE(std::stod(manifest_value(dir / "run" / "manifest", "result.mass_drift")), 1e-12);
}

TEST(Cli, RerunsAreByteIdentical) {
    const auto dir = scratch("determinism");
    for (const char* run : {"a", "b"}) {
        const auto r = nldisp("evolve --config " + config("evolve_random.cfg") + " --seed 5 --out " + (dir / run).string(), dir);
        ASSERT_EQ(r.code, 0) << r.err;
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        if (entry.path().extension() != ".csv") continue;
        EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename())) << entry.path().filename();
        ++compared;
    }
    EXPECT_GE(compared, 1u);
    const auto r = nldisp("evolve --config " + config("evolve_random.cfg") + " --seed 6 --out " + (dir / "c").string(), dir);
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(slurp(dir / "a" / "trace.csv"), slurp(dir / "c" / "trace.csv"));
}

TEST(Cli, OutputsStayInsideOutputDirectory) {
    const auto dir = scratch("confined");
    const auto r = nldisp("steady --config " + config("steady_jump.cfg") + " --out " + (dir / "run").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    std::set<std::string> top;
    for (const auto& entry : fs::directory_iterator(dir)) top.insert(entry.path().filename().string());
    EXPECT_EQ(top, (std::set<std::string>{"run", "stdout.txt", "stderr.txt"}));
    std::set<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir / "run")) files.insert(entry.path().filename().string());
    EXPECT_EQ(files, (std::set<std::string>{"manifest", "steady.csv"}));
    const auto m = dir / "run" / "manifest";
    EXPECT_EQ(manifest_value(m, "result.certified"), "true");
    EXPECT_LE(std::stod(manifest_value(m, "result.residual_inf")), 1e-8);
    EXPECT_LT(std::stod(manifest_value(m, "result.gamma0")), 0.0);
    EXPECT_EQ(slurp(dir / "run" / "steady.csv").rfind("# residual_inf=", 0), 0u);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("codes");
    EXPECT_EQ(nldisp("steady --config " + config("steady_jump_strong.cfg") + " --out " + (dir / "s").string(), dir).code,
              app::kExitConfig);
    EXPECT_EQ(nldisp("spectrum --config /nonexistent.cfg", dir).code, app::kExitConfig);
    EXPECT_EQ(nldisp("spectrum", dir).code, app::kExitConfig);
    EXPECT_EQ(nldisp("frobnicate --config x", dir).code, app::kExitConfig);

    const auto bad = dir / "bad.cfg";
    std::ofstream(bad) << "kernel.shape = tent\nkernel.width = 2\n";
    const auto r = nldisp("spectrum --config " + bad.string(), dir);
    EXPECT_EQ(r.code, app::kExitConfig);
    EXPECT_NE(r.err.find("kernel.width"), std::string::npos) << r.err;

    // f = u^2 from u0 = 2 blows up before T
    const auto blow = dir / "blow.cfg";
    std::ofstream(blow) << "kernel.shape = tent\ndomain.kind = torus\ndomain.N = 16\nforce.shape = polynomial\n"
                           "force.coeffs = 0, 0, 1\nforce.zeros = 0\nic.kind = constant\nic.value = 2\n"
                           "evolve.dt = 0.001\nevolve.T = 2\n";
    const auto b = nldisp("evolve --config " + blow.string() + " --out " + (dir / "b").string(), dir);
    EXPECT_EQ(b.code, app::kExitNumerical) << b.err;
    EXPECT_NE(b.err.find("blew up"), std::string::npos);
    EXPECT_EQ(manifest_value(dir / "b" / "manifest", "exit_code"), "3");

    EXPECT_EQ(nldisp("--version", dir).code, 0);
}

TEST(Validate, StrongCouplingFlagsCertificate) {
    const auto dir = scratch("validate_strong");
    const auto r = nldisp("validate --config " + config("steady_jump_strong.cfg"), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("steady.certificate = fail"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("steady.cond1_margin = -"), std::string::npos);
    EXPECT_NE(r.out.find("operator.C_L = "), std::string::npos);
    const auto ok = nldisp("validate --config " + config("steady_jump.cfg"), dir);
    EXPECT_NE(ok.out.find("steady.certificate = pass"), std::string::npos) << ok.out;
}

TEST(Validate, TorusAndSigma) {
    auto c = Config::parse_file(config("evolve_logistic.cfg"));
    const auto m = app::validate(c, {});
    EXPECT_EQ(m.value("spectrum.essential_width"), "0");
    EXPECT_NEAR(std::stod(m.value("sigma.sigma")), -0.93452, 1e-4);
    EXPECT_EQ(m.value("sigma.criterion_holds"), "true");
    EXPECT_GT(std::stod(m.value("evolve.dt_bound")), 0.01);
}

TEST(Validate, StepAboveBoundIsRejected) {
    auto c = Config::parse_file(config("evolve_logistic.cfg"));
    c.set("evolve.dt", "5");
    try {
        app::validate(c, {});
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("stability bound"), std::string::npos) << msg;
    }
}

TEST(AppRun, BifurcateScenario) {
    const auto dir = scratch("bifurcate");
    auto c = Config::parse_file(config("bifurcate.cfg"));
    app::RunOptions o;
    o.out = dir;
    ASSERT_EQ(app::run("bifurcate", c, o), app::kExitOk);
    const auto rows = csv_rows(dir / "branch.csv");
    ASSERT_GT(rows.size(), 10u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"step", "lambda", "amplitude", "residual"}));
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][3]), 1e-8);
    EXPECT_NEAR(std::stod(manifest_value(dir / "manifest", "result.lambda_c")), 0.0, 1e-3);
    EXPECT_EQ(manifest_value(dir / "manifest", "result.critical.0.multiplicity"), "2");
    EXPECT_GE(std::stod(manifest_value(dir / "manifest", "result.r_squared")), 0.99);
}

TEST(AppRun, KernelAndAsymptoticsScenarios) {
    const auto dir = scratch("kernel");
    app::RunOptions o;
    o.out = dir / "k";
    EXPECT_EQ(app::run("kernel", Config::parse_file(config("kernel_gaussian.cfg")), o), app::kExitOk);
    EXPECT_TRUE(fs::exists(dir / "k" / "kernel.csv"));
    o.out = dir / "a";
    EXPECT_EQ(app::run("asymptotics", Config::parse_file(config("asymptotics.cfg")), o), app::kExitOk);
    const auto rows = csv_rows(dir / "a" / "asymptotics.csv");
    EXPECT_EQ(rows.size(), 4u);
    EXPECT_EQ(app::run_guarded([&] { return app::run("nope", Config{}, o); }), app::kExitConfig);
}
