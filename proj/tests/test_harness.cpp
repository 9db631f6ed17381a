#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedunlearn/config.hpp"
#include "fedunlearn/experiment.hpp"
#include "fedunlearn/report_json.hpp"

using namespace fedunlearn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "fedunlearn_harness_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string small_config(const std::string& output, const std::string& extra = "") {
    return "[task]\nclasses = 3\ndim = 4\ntrain_per_class = 20\ntest_per_class = 10\nl2_lambda = 0.01\n"
           "trigger_size = 1\n"
           "[federation]\nclients = 5\nrounds = 6\nlearning_rate = 0.2\n"
           "aggregators = [\"fedavg\", \"median\", \"trmean\"]\n"
           "[attack]\nfl = [\"none\", \"trim\", \"backdoor\"]\n"
           "[unlearn]\nmethods = [\"learned\", \"scratch\", \"historical\"]\n"
           "[run]\nseeds = [1]\noutput = \"" + output + "\"\n" + extra;
}

std::string error_of(const std::string& text) {
    try {
        (void)ExperimentConfig::from_document(ConfigDocument::parse(text, "cfg.toml"));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

ResultRow row(const std::string& method, const std::string& arr, std::uint64_t seed, double ter,
              std::optional<double> asr = std::nullopt, const std::string& fl = "trim") {
    ResultRow r;
    r.digest = "d";
    r.method = method;
    r.arr = arr;
    r.fl_attack = fl;
    r.fu_attack = "none";
    r.knowledge = "full";
    r.seed = seed;
    r.ter = ter;
    r.asr = asr;
    return r;
}

}  // namespace

TEST_CASE("config parser reads every value kind") {
    const auto doc = ConfigDocument::parse(
        "# comment\n[a]\nflag = true\nn = 12 # trailing\nx = -2.5e-1\ns = \"q\\\"uote\"\nlist = [1, 2, 3]\n");
    CHECK(std::get<bool>(std::get<ConfigValue::Scalar>(doc.find("a", "flag")->value)));
    CHECK(std::get<std::int64_t>(std::get<ConfigValue::Scalar>(doc.find("a", "n")->value)) == 12);
    CHECK(std::get<double>(std::get<ConfigValue::Scalar>(doc.find("a", "x")->value)) == -0.25);
    CHECK(std::get<std::string>(std::get<ConfigValue::Scalar>(doc.find("a", "s")->value)) == "q\"uote");
    CHECK(std::get<std::vector<ConfigValue::Scalar>>(doc.find("a", "list")->value).size() == 3);
    CHECK(doc.find("a", "n")->line == 4);
    CHECK(doc.find("a", "missing") == nullptr);
}

TEST_CASE("config diagnostics name the file, line and key") {
    CHECK(error_of("[federation]\nclients = 5\nrounds = \"ten\"\n").rfind("cfg.toml:3: federation.rounds", 0) == 0);
    CHECK(error_of("[federation]\n\nnoniid_q = 2.0\n").rfind("cfg.toml:3: federation.noniid_q", 0) == 0);
    CHECK(error_of("[task]\nbogus = 1\n").find("cfg.toml:2") != std::string::npos);
    CHECK(error_of("[task]\nbogus = 1\n").find("bogus") != std::string::npos);
    CHECK(error_of("[task]\ndim = 3\ndim = 4\n").find("cfg.toml:3") != std::string::npos);
    CHECK(error_of("dim = 3\n").find("outside any [section]") != std::string::npos);
    CHECK(error_of("[attack]\nfl = [\"bad_unlearn\"]\n").rfind("cfg.toml:2: attack.fl", 0) == 0);
    CHECK(error_of("[federation]\naggregators = [\"krum:x\"]\n").find("federation.aggregators") !=
          std::string::npos);
    CHECK(error_of("[federation]\nclients = -3\n").find("non-negative") != std::string::npos);
    CHECK(error_of("[task]\nspread = 1.0\n").empty());
}

TEST_CASE("canonical form and digest ignore layout and seeds but track settings") {
    const auto a = ExperimentConfig::from_document(ConfigDocument::parse(small_config("o")));
    const auto b = ExperimentConfig::from_document(
        ConfigDocument::parse("# reordered\n" + small_config("o") + "\n"));
    auto doc = ConfigDocument::parse(small_config("o"));
    doc.set("run", "seeds", "[4, 5]");
    const auto c = ExperimentConfig::from_document(doc);
    doc.set("federation", "learning_rate", "0.21");
    const auto d = ExperimentConfig::from_document(doc);
    CHECK(a.canonical() == b.canonical());
    CHECK(a.digest() == c.digest());
    CHECK(a.digest() != d.digest());
    CHECK(a.digest().size() == 16);
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("CSV rows round-trip with fixed formatting") {
    const auto dir = scratch_dir("csv");
    std::vector<ResultRow> rows{row("scratch", "median", 2, 0.123456), row("ug_dir", "krum:3", 7, 0.5, 0.25)};
    rows[1].exact_requests = 42;
    rows[1].bound_holds = true;
    CHECK(csv_line(rows[0]) == "d,-,-,scratch,median,trim,none,full,2,0.1235,NA,NA,NA");
    CHECK(csv_line(rows[1]) == "d,-,-,ug_dir,krum:3,trim,none,full,7,0.5000,0.2500,1,42");
    write_rows_csv(dir / "rows.csv", rows);
    const auto back = read_rows_csv(dir / "rows.csv");
    REQUIRE(back.size() == 2);
    CHECK(csv_line(back[0]) == csv_line(rows[0]));
    CHECK(csv_line(back[1]) == csv_line(rows[1]));
    std::ofstream(dir / "bad.csv") << "not,a,header\n";
    CHECK_THROWS(read_rows_csv(dir / "bad.csv"));
}

TEST_CASE("tables average over seeds and mark missing cells") {
    std::vector<ResultRow> rows{row("scratch", "fedavg", 1, 0.1), row("scratch", "fedavg", 2, 0.3),
                                row("historical", "fedavg", 1, 0.5), row("scratch", "median", 1, 0.2)};
    const auto t2 = emit_table(rows, TableTemplate::t2);
    CHECK(t2.csv ==
          "ARR / FL attack,scratch,historical\n"
          "fedavg / trim,0.2000,0.5000\n"
          "median / trim,0.2000,—\n");
    CHECK(t2.text.find("—") != std::string::npos);

    std::vector<ResultRow> bd{row("learned", "fedavg", 1, 0.1, 0.9, "backdoor"),
                              row("learned", "fedavg", 2, 0.2, 0.7, "backdoor")};
    CHECK(emit_table(bd, TableTemplate::t1).csv == "FL attack,fedavg\nbackdoor,0.1500 / 0.8000\n");
    CHECK_THROWS(table_template_from_string("t9"));
}

TEST_CASE("a 3x3x3 matrix yields 27 rows and re-runs byte for byte, threaded or not") {
    const auto dir = scratch_dir("matrix");
    auto cfg = ExperimentConfig::from_document(ConfigDocument::parse(small_config((dir / "a").string())));
    const auto first = run_experiment(cfg);
    CHECK(first.invariant_failures.empty());
    CHECK(first.rows.size() == 27);
    for (const auto& r : first.rows) {
        REQUIRE(r.ter.has_value());
        CHECK(r.asr.has_value());
    }
    cfg.run.output = (dir / "b").string();
    cfg.run.cell_threads = 3;
    cfg.federation.threads = 2;
    (void)run_experiment(cfg);
    CHECK(slurp(dir / "a" / "rows.csv") == slurp(dir / "b" / "rows.csv"));
    CHECK(slurp(dir / "a" / "config.canonical.txt").size() > 0);
}

TEST_CASE("unlearning reports are deterministic and reload for the bound checker") {
    const auto dir = scratch_dir("reports");
    const std::string extra =
        "[unlearn]\nmethods = [\"scratch\", \"ug_dist\", \"ug_dir\", \"fedrecover\"]\nbuffer_r = 2\n"
        "shared_init = true\n";
    std::string text = small_config((dir / "a").string());
    text = text.substr(0, text.find("[unlearn]")) + text.substr(text.find("[run]"));
    text += extra;
    auto doc = ConfigDocument::parse(text);
    doc.set("federation", "aggregators", "[\"fedavg\"]");
    doc.set("attack", "fl", "[\"trim\"]");
    doc.set("attack", "fu", "[\"none\", \"bad_unlearn\"]");
    doc.set("federation", "learning_rate", "0.05");
    auto cfg = ExperimentConfig::from_document(doc);
    const auto a = run_experiment(cfg);
    CHECK(a.invariant_failures.empty());
    CHECK(a.rows.size() == 8);
    cfg.run.output = (dir / "b").string();
    (void)run_experiment(cfg);
    std::size_t reports = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "reports")) {
        ++reports;
        CHECK(slurp(e.path()) == slurp(dir / "b" / "reports" / e.path().filename()));
        const auto rep = load_report(e.path());
        CHECK(rep.rounds == 6);
    }
    CHECK(reports == 6);
    bool bound_checked = false;
    for (const auto& r : a.rows) bound_checked = bound_checked || r.bound_holds.has_value();
    CHECK(bound_checked);
}

TEST_CASE("minimal one-client config runs") {
    const auto dir = scratch_dir("minimal");
    const std::string text = "[federation]\nclients = 1\nrounds = 2\nmalicious_fraction = 0.0\n"
                             "[task]\ntrain_per_class = 5\ntest_per_class = 2\n"
                             "[unlearn]\nmethods = [\"learned\", \"scratch\", \"historical\", \"ug_dist\"]\n"
                             "[run]\noutput = \"" + (dir / "out").string() + "\"\n";
    const auto res = run_experiment(ExperimentConfig::from_document(ConfigDocument::parse(text)));
    CHECK(res.invariant_failures.empty());
    CHECK(res.rows.size() == 4);
}

TEST_CASE("relative outputs resolve against the output root variable") {
    const auto dir = scratch_dir("root");
    auto cfg = ExperimentConfig::from_document(ConfigDocument::parse(small_config("rel/out")));
    ::setenv(kOutputRootEnv, dir.c_str(), 1);
    CHECK(resolve_output_dir(cfg) == dir / "rel" / "out");
    cfg.run.output = "/abs/out";
    CHECK(resolve_output_dir(cfg) == fs::path("/abs/out"));
    ::unsetenv(kOutputRootEnv);
    cfg.run.output = "rel/out";
    CHECK(resolve_output_dir(cfg) == fs::path("rel/out"));
}

TEST_CASE("sweeps label rows by axis value and average per method") {
    const auto dir = scratch_dir("sweep");
    auto doc = ConfigDocument::parse(small_config((dir / "s").string()));
    doc.set("federation", "aggregators", "[\"fedavg\"]");
    doc.set("attack", "fl", "[\"trim\"]");
    doc.set("unlearn", "methods", "[\"scratch\"]");
    const auto res = ablation_sweep(doc, SweepAxis::noniid_q, {"0.4", "0.9"});
    REQUIRE(res.rows.size() == 2);
    CHECK(res.rows[0].axis == "noniid_q");
    CHECK(res.rows[0].value == "0.4");
    CHECK(res.rows[1].value == "0.9");
    CHECK(res.plot_csv.rfind("x,method,ter\n0.4,scratch,", 0) == 0);
    CHECK(fs::exists(dir / "s" / "sweep_noniid_q" / "plot.csv"));
    CHECK_THROWS(sweep_axis_from_string("lr"));
}
