#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sys/wait.h>

#include "json.hpp"
#include "qmem/errors.hpp"
#include "qmem/experiments.hpp"
#include "qmem/io.hpp"

using namespace qmem;
using namespace qmem::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qmem_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int shell(const std::string& cmd) {
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string cli() {
    const char* p = std::getenv("QMEM_CLI");
    return p ? p : "qmem";
}

ExperimentConfig small_errormap(const fs::path& out) {
    ExperimentConfig c;
    c.experiment = ExperimentKind::ErrormapAudit;
    c.output_dir = out.string();
    c.errormap.n_qubits = 5;
    c.errormap.site = 2;
    c.errormap.t_max = 4.0;
    c.errormap.dt = 0.1;
    c.errormap.correlation = "exponential";
    return c;
}

}  // namespace

TEST_CASE("config round trip") {
    ExperimentConfig c;
    CHECK(parse_config(dump_config(c)) == c);
    c.experiment = ExperimentKind::KitaevLifetime;
    c.seed = 18446744073709551615ULL;
    c.output_dir = "runs/a \"quoted\" dir";
    c.bath.beta = 0.1 + 0.2;
    c.bath.kind = "PowerAnsatz";
    c.bath.exponent = 2.0;
    c.davies.betas = {0.0, 1.0 / 3.0};
    c.lifetime.observables = {"dressed"};
    c.lifetime.t_cap = 1e-300;
    c.errormap.pauli = "Y";
    c.csv = false;
    const auto back = parse_config(dump_config(c));
    CHECK(back == c);
    CHECK(dump_config(back) == dump_config(c));
    CHECK(config_hash(back) == config_hash(c));
    c.seed = 3;
    CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("unknown keys are rejected by name") {
    try {
        parse_config("experiment: bath-audit\nbath:\n  betta: 1\n");
        FAIL("accepted unknown key");
    } catch (const ParameterError& e) {
        CHECK(std::string(e.what()).find("bath.betta") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("experiment: bath-audit\nextra: 1\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("experiment: nope\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("seed: 1\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("experiment: bath-audit\nseed: abc\n"), ParameterError);
}

TEST_CASE("validation names the offending key") {
    ExperimentConfig c;
    c.bath.beta = -1.0;
    c.output_dir = scratch("neg").string();
    const auto r = run(c);
    CHECK(r.exit_code == 2);
    CHECK(r.message.find("beta") != std::string::npos);
    c.bath.beta = 1.0;
    c.lifetime.sizes = {4, 4};
    const auto r2 = run(c);
    CHECK(r2.exit_code == 2);
    CHECK(r2.message.find("lifetime.sizes") != std::string::npos);
}

TEST_CASE("numerical failure maps to exit 3") {
    auto c = small_errormap(scratch("short"));
    c.errormap.n_qubits = 3;
    c.errormap.site = 1;
    CHECK(run(c).exit_code == 3);
}

TEST_CASE("runs are deterministic and stay inside the output directory") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    const auto ra = run(small_errormap(a));
    const auto rb = run(small_errormap(b));
    REQUIRE(ra.exit_code == 0);
    REQUIRE(rb.exit_code == 0);
    for (const auto& name : ra.outputs) {
        if (name.size() > 4 && name.substr(name.size() - 4) == ".csv") {
            CHECK(io::read_text((a / name).string()) == io::read_text((b / name).string()));
        }
    }
    std::set<std::string> listed(ra.outputs.begin(), ra.outputs.end()), found;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) found.insert(fs::relative(e.path(), a).string());
    }
    CHECK(listed == found);

    const auto m = nlohmann::json::parse(io::read_text((a / "manifest.json").string()));
    CHECK(m["experiment"] == "errormap-audit");
    CHECK(m["seed"] == 1);
    CHECK(m["config_hash"] == config_hash(small_errormap(a)));
    CHECK(m["versions"].contains("qmem"));
    CHECK(m["wall_time_s"].get<double>() >= 0.0);
    // the manifest alone reproduces the run
    auto again = parse_config(m["config"].get<std::string>());
    const auto c = scratch("det_c");
    again.output_dir = c.string();
    REQUIRE(run(again).exit_code == 0);
    CHECK(io::read_text((a / "error_weights.csv").string()) == io::read_text((c / "error_weights.csv").string()));
}

TEST_CASE("command line") {
    const auto dir = scratch("cmd");
    const auto cfg = dir / "bath.yaml";
    REQUIRE(shell(cli() + " default-config bath-audit > " + cfg.string()) == 0);
    CHECK(shell(cli() + " bath-audit --config " + cfg.string() + " --out " + (dir / "out").string() +
                " --seed 7 > /dev/null") == 0);
    const auto rep = nlohmann::json::parse(io::read_text((dir / "out" / "bath_report.json").string()));
    CHECK(rep["tail_exponent"].get<double>() == doctest::Approx(2.0).epsilon(0.1));
    const auto man = nlohmann::json::parse(io::read_text((dir / "out" / "manifest.json").string()));
    CHECK(man["seed"] == 7);

    std::string text = io::read_text(cfg.string());
    const auto pos = text.find("  beta: 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 9, "  beta: -2");
    io::write_text_atomic((dir / "bad.yaml").string(), text);
    CHECK(shell(cli() + " run --config " + (dir / "bad.yaml").string() + " --out " + (dir / "bad").string() +
                " 2> " + (dir / "err.txt").string()) == 2);
    CHECK(io::read_text((dir / "err.txt").string()).find("beta") != std::string::npos);
    CHECK(shell(cli() + " kitaev-gap --config " + cfg.string() + " 2> /dev/null") == 2);
    CHECK(shell(cli() + " run --config /nonexistent.yaml 2> /dev/null") == 2);
}
