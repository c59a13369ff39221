#include "hbem/cli.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace hbem;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("hbem_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const json& j)
{
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string("\"") + HBEM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const fs::path& p)
{
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);)
        ++n;
    return n;
}

json strip_timings(json report)
{
    for (auto& r : report["runs"]) {
        r.erase("times_s");
        r.erase("mean_s");
        r.erase("stddev_s");
    }
    for (auto& s : report["speedups"])
        s.erase("speedup");
    return report;
}

BenchmarkConfig tiny_benchmark()
{
    BenchmarkConfig c;
    c.levels = {0, 1};
    c.repetitions = 2;
    c.workers = 1;
    c.operators = {OperatorKind::SLP, OperatorKind::HYPS};
    return c;
}

} // namespace

TEST_CASE("speedup arithmetic")
{
    CHECK(*speedup(2275.0, 1206.0) == Catch::Approx(1.886).margin(5e-4));
    CHECK(*speedup(3.5, 3.5) == 1.0);
    CHECK_FALSE(speedup(2275.0, std::nullopt).has_value());
    CHECK_FALSE(speedup(std::nullopt, 1.0).has_value());
    CHECK_THROWS_AS(speedup(0.0, 1.0), ConfigError);
}

TEST_CASE("mean and standard deviation")
{
    const auto one = mean_std({2.0});
    CHECK(one.mean == 2.0);
    CHECK(one.stddev == 0.0);
    const auto s = mean_std({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == Catch::Approx(2.5));
    CHECK(s.stddev == Catch::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("benchmark config: schema errors are descriptive")
{
    CHECK_THROWS_AS(benchmark_config_from_json(json{{"level", {1}}}), ConfigError);
    CHECK_THROWS_AS(benchmark_config_from_json(json{{"levels", "two"}}), ConfigError);
    CHECK_THROWS_AS(benchmark_config_from_json(json{{"operators", {"slp", "quadrupole"}}}), ConfigError);
    CHECK_THROWS_AS(benchmark_config_from_json(json{{"repetitions", 0}}), ConfigError);
    CHECK_THROWS_AS(benchmark_config_from_json(json{{"schema_version", 7}}), ConfigError);
    CHECK_THROWS_AS(benchmark_config_from_json(json{{"operators", {"hyps"}}, {"space", "P0"}}), ConfigError);
    try {
        benchmark_config_from_json(json{{"level", {1}}});
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("level") != std::string::npos);
    }
}

TEST_CASE("benchmark config: round trip with defaults materialized")
{
    const auto c = benchmark_config_from_json(json::object());
    const json j = to_json(c);
    for (const char* key : {"operators", "equations", "wavenumber", "levels", "modes", "precisions", "space",
                            "repetitions", "workers", "devices", "chunk_size", "aca_tolerance", "eta", "n_min",
                            "offload_threshold", "seed"})
        CHECK(j.contains(key));
    CHECK(j["repetitions"] == 5);
    CHECK(to_json(benchmark_config_from_json(j)) == j);
}

TEST_CASE("scatter config: validation and round trip")
{
    CHECK_THROWS_AS(scatter_run_from_json(json{{"frequency", 100.0}}), ConfigError);
    CHECK_THROWS_AS(scatter_run_from_json(json{{"sphere_level", 1}, {"mesh", "a.msh"}}), ConfigError);
    CHECK_THROWS_AS(scatter_run_from_json(json{{"sphere_level", 1}, {"frequency", 1.0}, {"wavenumber", 2.0}}),
                    ConfigError);
    CHECK_THROWS_AS(scatter_run_from_json(json{{"sphere_level", 1}, {"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(scatter_run_from_json(json{{"sphere_level", 1}, {"mode", "sparse"}}), ConfigError);
    CHECK_THROWS_AS(scatter_run_from_json(json{{"sphere_level", 1}, {"amplitude", 0.0}}), ConfigError);

    const auto run = scatter_run_from_json(json{{"sphere_level", 2}, {"wavenumber", 2.0}, {"mode", "hmatrix"}});
    CHECK(run.config.wavenumber() == Catch::Approx(2.0));
    CHECK(run.mode == SolveMode::HMatrix);
    const json j = to_json(run);
    CHECK(j["evaluation_points"] == 3600);
    CHECK(j["radius"] == 20000.0);
    const auto again = scatter_run_from_json(j);
    CHECK(again.config.wavenumber() == Catch::Approx(2.0));
    CHECK(again.sphere_level == 2);
    CHECK(to_json(again) == j);
}

TEST_CASE("benchmark report: complete and reproducible apart from timings")
{
    const auto cfg = tiny_benchmark();
    const auto a = run_benchmark(cfg);
    const auto b = run_benchmark(cfg);
    // operators x equations x levels x modes x paths x precisions
    CHECK(a.runs.size() == 2 * 2 * 2 * 2 * 2 * 1);
    CHECK(a.speedups.size() == a.runs.size() / 2);
    CHECK(a.all_valid());
    for (const auto& r : a.runs) {
        CHECK(r.times.size() == 2);
        for (double t : r.times)
            CHECK(t > 0.0);
        CHECK(r.probe_error.has_value() == (r.level == 0));
    }
    for (const auto& s : a.speedups)
        CHECK(s.value.has_value());
    const json ja = to_json(a), jb = to_json(b);
    CHECK(ja["config"] == to_json(cfg));
    CHECK(ja.contains("framing"));
    CHECK(strip_timings(ja) == strip_timings(jb));

    std::ostringstream csv;
    write_benchmark_csv(a, csv);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == benchmark_csv_header);
    std::size_t rows = 0;
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == a.runs.size());
}

TEST_CASE("far-field CSV layout")
{
    ScatterResult r;
    r.theta_deg = {0.0, 0.1};
    r.field = {{1e-4, -2e-4}, {0.0, 0.0}};
    r.ts_db = {target_strength(r.field[0], 1.0, 20000.0), target_strength(r.field[1], 1.0, 20000.0)};
    std::ostringstream os;
    write_far_field_csv(r, os);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == far_field_csv_header);
    std::getline(in, line);
    CHECK(line.rfind("0,0.0001,-0.0002,", 0) == 0);
    std::getline(in, line);
    CHECK(line == "0.1,0,0,0,-inf");
}

TEST_CASE("command line: exit codes and outputs")
{
    const fs::path dir = scratch_dir("exit");

    CHECK(run_cli("") == 2);
    CHECK(run_cli("scatter --config " + (dir / "missing.json").string()) == 2);

    std::ofstream(dir / "broken.json") << "{ \"levels\": [1, ";
    CHECK(run_cli("benchmark --config " + (dir / "broken.json").string()) == 2);

    write_config(dir, json{{"levels", {0}}, {"bogus", 1}});
    CHECK(run_cli("benchmark --config " + (dir / "config.json").string()) == 2);

    write_config(dir, json{{"levels", {0}}, {"repetitions", 1}, {"operators", {"slp"}}, {"equations", {"laplace"}}});
    CHECK(run_cli("benchmark --config " + (dir / "config.json").string() + " --out " + (dir / "bench").string()) == 0);
    CHECK(fs::exists(dir / "bench" / "benchmark.json"));
    CHECK(count_lines(dir / "bench" / "benchmark.csv") == 1 + 4);

    // level 1 at k = 2 resolves fewer than six elements per wavelength
    write_config(dir, json{{"sphere_level", 1}, {"wavenumber", 2.0}});
    CHECK(run_cli("scatter --config " + (dir / "config.json").string() + " --out " + (dir / "coarse").string()) == 2);
    CHECK_FALSE(fs::exists(dir / "coarse" / "far_field.csv"));

    write_config(dir, json{{"sphere_level", 3}, {"wavenumber", 2.0}});
    CHECK(run_cli("scatter --config " + (dir / "config.json").string() + " --mode dense --out " +
                  (dir / "dense").string()) == 0);
    CHECK(count_lines(dir / "dense" / "far_field.csv") == 1 + 3600);
    std::ifstream report(dir / "dense" / "solve_report.json");
    const json rep = json::parse(report);
    CHECK(rep["converged"] == true);
    CHECK(rep["config"]["mode"] == "dense");

    fs::remove_all(dir);
}
