#include "hbem/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

const char* csv_help = R"(Output files
  benchmark: <out>/benchmark.json and <out>/benchmark.csv
    CSV columns: operator, equation, level (icosphere refinement), N (unknowns),
    mode (dense|hmatrix), path (reference|batched-backend), precision,
    repetitions, mean_s, stddev_s, probe_error (smallest level only),
    valid (probe passed), speedup (t_ref/t_acc, on batched rows; empty if absent)
  scatter: <out>/far_field.csv and <out>/solve_report.json
    CSV columns: theta_deg (angle in the xy-plane), re, im, abs (scattered
    field), ts_db (bistatic target strength, -inf for a zero field)

Exit codes: 0 success, 2 configuration error, 3 numerical failure)";

struct Overrides {
    std::string config;
    std::string mode;
    std::string precision;
    unsigned workers = 0;
    int devices = 0;
    std::string out = ".";
    bool force = false;
};

void add_common(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--config", o.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--mode", o.mode, "dense or hmatrix (overrides the config)")
        ->check(CLI::IsMember({"dense", "hmatrix"}));
    cmd->add_option("--precision", o.precision, "single or double (overrides the config)")
        ->check(CLI::IsMember({"single", "double"}));
    cmd->add_option("--workers", o.workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
    cmd->add_option("--devices", o.devices, "batched backends to split work over")->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "output directory");
}

std::filesystem::path prepare_out(const std::string& dir)
{
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec)
        throw hbem::ConfigError("cannot create output directory " + dir + ": " + ec.message());
    return p;
}

int run_benchmark_cmd(const Overrides& o)
{
    hbem::json j = hbem::detail::load_json_file(o.config);
    if (!o.mode.empty())
        j["modes"] = {o.mode};
    if (!o.precision.empty())
        j["precisions"] = {o.precision};
    if (o.workers)
        j["workers"] = o.workers;
    if (o.devices)
        j["devices"] = o.devices;
    const hbem::BenchmarkConfig cfg = hbem::benchmark_config_from_json(j);
    const auto out = prepare_out(o.out);
    const hbem::BenchmarkReport rep = hbem::run_benchmark(cfg, [](const std::string& s) { std::cerr << s << '\n'; });
    std::ofstream(out / "benchmark.json") << hbem::to_json(rep).dump(2) << '\n';
    std::ofstream csv(out / "benchmark.csv");
    hbem::write_benchmark_csv(rep, csv);
    if (!rep.all_valid()) {
        std::cerr << "error: at least one run failed its correctness probe\n";
        return exit_numerical;
    }
    return exit_ok;
}

int run_scatter_cmd(const Overrides& o)
{
    hbem::json j = hbem::detail::load_json_file(o.config);
    if (!o.mode.empty())
        j["mode"] = o.mode;
    if (!o.precision.empty())
        j["precision"] = o.precision;
    if (o.workers)
        j["workers"] = o.workers;
    if (o.devices)
        j["devices"] = o.devices;
    if (o.force)
        j["force"] = true;
    const hbem::ScatterRun run = hbem::scatter_run_from_json(j);
    const auto out = prepare_out(o.out);
    const hbem::ScatterResult res = hbem::run_scatter(run);
    if (res.near_field_points > 0)
        std::cerr << "warning: " << res.near_field_points
                  << " evaluation points lie within three element diameters of the surface\n";
    std::ofstream csv(out / "far_field.csv");
    hbem::write_far_field_csv(res, csv);
    std::ofstream(out / "solve_report.json") << hbem::to_json(run, res).dump(2) << '\n';
    std::cerr << "solved " << res.solve.unknowns << " unknowns in " << res.solve.iterations
              << " iterations, residual " << res.solve.residual << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Galerkin boundary element assembly benchmarks and acoustic scattering"};
    app.footer(csv_help);
    app.require_subcommand(1);
    Overrides bench, scat;
    auto* b = app.add_subcommand("benchmark", "time dense and H-matrix assembly over an icosphere sweep");
    add_common(b, bench);
    auto* s = app.add_subcommand("scatter", "sound-hard plane-wave scattering and bistatic target strength");
    add_common(s, scat);
    s->add_flag("--force", scat.force, "accept meshes below 6 elements per wavelength");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    try {
        return b->parsed() ? run_benchmark_cmd(bench) : run_scatter_cmd(scat);
    } catch (const hbem::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const hbem::ParseError& e) {
        std::cerr << "mesh error: " << e.what() << '\n';
        return exit_config;
    } catch (const hbem::EmptyMeshError& e) {
        std::cerr << "mesh error: " << e.what() << '\n';
        return exit_config;
    } catch (const hbem::OrientationError& e) {
        std::cerr << "mesh error: " << e.what() << '\n';
        return exit_config;
    } catch (const hbem::GeometryError& e) {
        std::cerr << "mesh error: " << e.what() << '\n';
        return exit_config;
    } catch (const hbem::CapacityError& e) {
        std::cerr << "capacity error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    }
}
