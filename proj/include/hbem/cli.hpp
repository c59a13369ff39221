#pragma once

// Benchmark harness and scattering driver behind the command-line tool:
// JSON configuration, timing repetitions, correctness probes and report files.

#include "hbem/scatter.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace hbem {

using json = nlohmann::json;

inline constexpr int report_schema_version = 1;

// S = t_ref / t_acc; absent unless both timings exist.
inline std::optional<double> speedup(std::optional<double> t_ref, std::optional<double> t_acc)
{
    if (!t_ref || !t_acc)
        return std::nullopt;
    if (!(*t_ref > 0.0) || !(*t_acc > 0.0))
        throw ConfigError("timings must be positive");
    return *t_ref / *t_acc;
}

struct MeanStd {
    double mean = 0.0, stddev = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v)
{
    MeanStd r;
    if (v.empty())
        return r;
    for (double x : v)
        r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double s = 0.0;
        for (double x : v)
            s += (x - r.mean) * (x - r.mean);
        r.stddev = std::sqrt(s / static_cast<double>(v.size() - 1));
    }
    return r;
}

namespace detail {

template <class T>
T parse_enum(const std::string& key, const std::string& value, const std::vector<std::pair<std::string, T>>& options)
{
    for (const auto& [name, v] : options)
        if (name == value)
            return v;
    std::string allowed;
    for (const auto& o : options)
        allowed += (allowed.empty() ? "" : ", ") + o.first;
    throw ConfigError("\"" + key + "\": unknown value \"" + value + "\" (expected one of " + allowed + ")");
}

inline const std::vector<std::pair<std::string, OperatorKind>>& operator_names()
{
    static const std::vector<std::pair<std::string, OperatorKind>> v{
        {"slp", OperatorKind::SLP}, {"dlp", OperatorKind::DLP}, {"adlp", OperatorKind::ADLP}, {"hyps", OperatorKind::HYPS}};
    return v;
}
inline const std::vector<std::pair<std::string, Equation>>& equation_names()
{
    static const std::vector<std::pair<std::string, Equation>> v{{"laplace", Equation::Laplace},
                                                                  {"helmholtz", Equation::Helmholtz}};
    return v;
}
inline const std::vector<std::pair<std::string, Precision>>& precision_names()
{
    static const std::vector<std::pair<std::string, Precision>> v{{"single", Precision::Single},
                                                                   {"double", Precision::Double}};
    return v;
}
inline const std::vector<std::pair<std::string, SolveMode>>& mode_names()
{
    static const std::vector<std::pair<std::string, SolveMode>> v{{"dense", SolveMode::Dense},
                                                                   {"hmatrix", SolveMode::HMatrix}};
    return v;
}
inline const std::vector<std::pair<std::string, SpaceFamily>>& space_names()
{
    static const std::vector<std::pair<std::string, SpaceFamily>> v{
        {"P0", SpaceFamily::P0}, {"P1", SpaceFamily::P1Continuous}, {"DP1", SpaceFamily::P1Discontinuous}};
    return v;
}

template <class T>
std::string name_of(T value, const std::vector<std::pair<std::string, T>>& options)
{
    for (const auto& [n, v] : options)
        if (v == value)
            return n;
    return "?";
}

// Reads an optional key with type checking and a descriptive message.
template <class T>
void read(const json& j, const std::string& key, T& out)
{
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("\"" + key + "\": wrong type (" + std::string(j.at(key).type_name()) + ")");
    }
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where)
{
    if (!j.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.contains(k))
            throw ConfigError(where + ": unknown key \"" + k + "\"");
}

template <class T>
std::vector<T> read_enum_list(const json& j, const std::string& key, const std::vector<std::pair<std::string, T>>& opts,
                              std::vector<T> fallback)
{
    if (!j.contains(key))
        return fallback;
    std::vector<std::string> names;
    read(j, key, names);
    if (names.empty())
        throw ConfigError("\"" + key + "\": list must not be empty");
    std::vector<T> out;
    for (const auto& n : names)
        out.push_back(parse_enum(key, n, opts));
    return out;
}

template <class T>
json enum_list_json(const std::vector<T>& v, const std::vector<std::pair<std::string, T>>& opts)
{
    json a = json::array();
    for (T x : v)
        a.push_back(name_of(x, opts));
    return a;
}

inline json load_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

} // namespace detail

struct BenchmarkConfig {
    std::vector<OperatorKind> operators{OperatorKind::SLP, OperatorKind::DLP};
    std::vector<Equation> equations{Equation::Laplace, Equation::Helmholtz};
    double wavenumber = 2.0; // used for Helmholtz cells
    std::vector<int> levels{1, 2};
    std::vector<SolveMode> modes{SolveMode::Dense, SolveMode::HMatrix};
    std::vector<Precision> precisions{Precision::Double};
    SpaceFamily space = SpaceFamily::P1Continuous;
    int repetitions = 5;
    unsigned workers = hardware_workers();
    int devices = 1;
    std::size_t chunk_size = std::size_t{1} << 20;
    int regular_order = 4;
    int singular_order = 4;
    double aca_tolerance = 1e-5;
    double eta = 2.0;
    std::size_t n_min = 32;
    std::size_t offload_threshold = 10000;
    std::uint64_t seed = 42;

    void validate() const
    {
        if (levels.empty() || operators.empty() || equations.empty() || modes.empty() || precisions.empty())
            throw ConfigError("benchmark sweep lists must not be empty");
        for (int l : levels)
            if (l < 0 || l > max_sphere_level)
                throw ConfigError("\"levels\": sphere level " + std::to_string(l) + " outside 0.." +
                                  std::to_string(max_sphere_level));
        if (repetitions < 1)
            throw ConfigError("\"repetitions\" must be at least 1");
        if (workers < 1 || devices < 1 || chunk_size < 1)
            throw ConfigError("\"workers\", \"devices\" and \"chunk_size\" must be at least 1");
        if (!(wavenumber > 0.0))
            throw ConfigError("\"wavenumber\" must be positive");
        if (!(aca_tolerance > 0.0) || eta < 0.0 || n_min < 1 || offload_threshold < 1)
            throw ConfigError("invalid H-matrix parameters");
        for (OperatorKind k : operators)
            if (k == OperatorKind::HYPS && space != SpaceFamily::P1Continuous)
                throw ConfigError("\"operators\": hyps needs \"space\": \"P1\"");
    }
};

inline BenchmarkConfig benchmark_config_from_json(const json& j)
{
    using namespace detail;
    reject_unknown(j,
                   {"schema_version", "operators", "equations", "wavenumber", "levels", "modes", "precisions", "space",
                    "repetitions", "workers", "devices", "chunk_size", "regular_order", "singular_order",
                    "aca_tolerance", "eta", "n_min", "offload_threshold", "seed"},
                   "benchmark config");
    BenchmarkConfig c;
    if (j.contains("schema_version")) {
        int v = 0;
        read(j, "schema_version", v);
        if (v != report_schema_version)
            throw ConfigError("\"schema_version\": unsupported version " + std::to_string(v));
    }
    c.operators = read_enum_list(j, "operators", operator_names(), c.operators);
    c.equations = read_enum_list(j, "equations", equation_names(), c.equations);
    c.modes = read_enum_list(j, "modes", mode_names(), c.modes);
    c.precisions = read_enum_list(j, "precisions", precision_names(), c.precisions);
    if (j.contains("space")) {
        std::string s;
        read(j, "space", s);
        c.space = parse_enum("space", s, space_names());
    }
    read(j, "wavenumber", c.wavenumber);
    read(j, "levels", c.levels);
    read(j, "repetitions", c.repetitions);
    read(j, "workers", c.workers);
    read(j, "devices", c.devices);
    read(j, "chunk_size", c.chunk_size);
    read(j, "regular_order", c.regular_order);
    read(j, "singular_order", c.singular_order);
    read(j, "aca_tolerance", c.aca_tolerance);
    read(j, "eta", c.eta);
    read(j, "n_min", c.n_min);
    read(j, "offload_threshold", c.offload_threshold);
    read(j, "seed", c.seed);
    c.validate();
    return c;
}

inline json to_json(const BenchmarkConfig& c)
{
    using namespace detail;
    return json{{"schema_version", report_schema_version},
                {"operators", enum_list_json(c.operators, operator_names())},
                {"equations", enum_list_json(c.equations, equation_names())},
                {"wavenumber", c.wavenumber},
                {"levels", c.levels},
                {"modes", enum_list_json(c.modes, mode_names())},
                {"precisions", enum_list_json(c.precisions, precision_names())},
                {"space", name_of(c.space, space_names())},
                {"repetitions", c.repetitions},
                {"workers", c.workers},
                {"devices", c.devices},
                {"chunk_size", c.chunk_size},
                {"regular_order", c.regular_order},
                {"singular_order", c.singular_order},
                {"aca_tolerance", c.aca_tolerance},
                {"eta", c.eta},
                {"n_min", c.n_min},
                {"offload_threshold", c.offload_threshold},
                {"seed", c.seed}};
}

enum class RunPath { Reference, Batched };
inline const char* to_string(RunPath p) { return p == RunPath::Reference ? "reference" : "batched-backend"; }

struct BenchmarkRun {
    OperatorKind op = OperatorKind::SLP;
    Equation equation = Equation::Laplace;
    int level = 0;
    std::size_t unknowns = 0;
    SolveMode mode = SolveMode::Dense;
    RunPath path = RunPath::Reference;
    Precision precision = Precision::Double;
    std::vector<double> times; // seconds per repetition
    MeanStd stats;
    std::optional<double> probe_error; // only on the smallest level
    bool valid = true;
};

struct SpeedupEntry {
    OperatorKind op = OperatorKind::SLP;
    Equation equation = Equation::Laplace;
    int level = 0;
    std::size_t unknowns = 0;
    SolveMode mode = SolveMode::Dense;
    Precision precision = Precision::Double;
    std::optional<double> t_ref, t_acc, value;
};

struct BenchmarkReport {
    BenchmarkConfig config;
    std::vector<BenchmarkRun> runs;
    std::vector<SpeedupEntry> speedups;
    bool all_valid() const
    {
        return std::all_of(runs.begin(), runs.end(), [](const BenchmarkRun& r) { return r.valid; });
    }
};

inline double probe_tolerance(SolveMode mode, Precision p, double aca_tolerance)
{
    const double base = p == Precision::Double ? 1e-10 : 1e-3;
    return mode == SolveMode::HMatrix ? std::max(base, 10.0 * aca_tolerance) : base;
}

// Runs every cell of the sweep. `progress` (optional) receives one line per run.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg,
                                     const std::function<void(const std::string&)>& progress = {})
{
    cfg.validate();
    BenchmarkReport rep;
    rep.config = cfg;
    const int smallest = *std::min_element(cfg.levels.begin(), cfg.levels.end());

    for (int level : cfg.levels) {
        auto mesh = std::make_shared<const TriangleMesh>(refine_unit_sphere(level));
        const FunctionSpace space(mesh, cfg.space);
        const ElementGeometry geometry = precompute_geometry(*mesh, regular_rule(cfg.regular_order));

        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> nd;
        std::vector<complex_t> x(space.dof_count());
        for (auto& v : x)
            v = {nd(rng), nd(rng)};

        for (Equation eq : cfg.equations)
            for (OperatorKind op : cfg.operators) {
                OperatorSpec base = eq == Equation::Laplace ? OperatorSpec::laplace(op)
                                                            : OperatorSpec::helmholtz(cfg.wavenumber, op);
                // probe reference: per-pair host assembly in double precision
                std::vector<complex_t> reference_y;
                if (level == smallest) {
                    AssemblyConfig ac;
                    ac.workers = cfg.workers;
                    ac.singular_order = cfg.singular_order;
                    reference_y = assemble_dense_reference(base, space, space, geometry, ac).matvec(x);
                }
                for (Precision prec : cfg.precisions)
                    for (SolveMode mode : cfg.modes) {
                        SpeedupEntry sp{op, eq, level, space.dof_count(), mode, prec, {}, {}, {}};
                        for (RunPath path : {RunPath::Reference, RunPath::Batched}) {
                            OperatorSpec spec = base;
                            spec.precision = prec;
                            BenchmarkRun run{op, eq, level, space.dof_count(), mode, path, prec, {}, {}, {}, true};
                            std::vector<complex_t> y;
                            for (int r = 0; r < cfg.repetitions; ++r) {
                                const auto t0 = std::chrono::steady_clock::now();
                                if (mode == SolveMode::Dense) {
                                    AssemblyConfig ac;
                                    ac.workers = cfg.workers;
                                    ac.device_count = cfg.devices;
                                    ac.chunk_size = cfg.chunk_size;
                                    ac.precision = prec;
                                    ac.singular_order = cfg.singular_order;
                                    ac.regular_order = cfg.regular_order;
                                    DenseMatrix a;
                                    if (path == RunPath::Reference) {
                                        a = assemble_dense_reference(spec, space, space, geometry, ac);
                                    } else {
                                        const auto be = make_host_backends(spec, space, space, geometry, cfg.devices);
                                        a = assemble_dense(spec, space, space, geometry, ac, be);
                                    }
                                    run.times.push_back(std::max(detail::seconds_since(t0), 1e-9));
                                    if (r + 1 == cfg.repetitions && !reference_y.empty())
                                        y = a.matvec(x);
                                } else {
                                    HMatrixConfig hc;
                                    hc.eta = cfg.eta;
                                    hc.n_min = cfg.n_min;
                                    hc.aca.tolerance = cfg.aca_tolerance;
                                    hc.aca.offload_threshold = cfg.offload_threshold;
                                    hc.workers = cfg.workers;
                                    hc.chunk_size = cfg.chunk_size;
                                    hc.singular_order = cfg.singular_order;
                                    auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(space, cfg.n_min));
                                    auto block = std::make_shared<const BlockClusterTree>(tree, tree, cfg.eta);
                                    BackendList be;
                                    if (path == RunPath::Batched)
                                        be = make_host_backends(spec, space, space, geometry, cfg.devices);
                                    const HMatrix h = assemble_hmatrix(spec, space, space, geometry, block, hc, be);
                                    run.times.push_back(std::max(detail::seconds_since(t0), 1e-9));
                                    if (r + 1 == cfg.repetitions && !reference_y.empty())
                                        y = hmat_matvec(h, x);
                                }
                            }
                            run.stats = mean_std(run.times);
                            if (!reference_y.empty()) {
                                double num = 0.0, den = 0.0;
                                for (std::size_t i = 0; i < y.size(); ++i) {
                                    num += std::norm(y[i] - reference_y[i]);
                                    den += std::norm(reference_y[i]);
                                }
                                run.probe_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
                                run.valid = *run.probe_error <= probe_tolerance(mode, prec, cfg.aca_tolerance);
                            }
                            (path == RunPath::Reference ? sp.t_ref : sp.t_acc) = run.stats.mean;
                            if (progress) {
                                std::ostringstream os;
                                os << to_string(eq) << ' ' << to_string(op) << " level " << level << " N="
                                   << run.unknowns << ' ' << to_string(mode) << ' ' << to_string(path) << ' '
                                   << to_string(prec) << ": " << run.stats.mean << " s"
                                   << (run.valid ? "" : " [probe FAILED]");
                                progress(os.str());
                            }
                            rep.runs.push_back(std::move(run));
                        }
                        sp.value = speedup(sp.t_ref, sp.t_acc);
                        rep.speedups.push_back(sp);
                    }
            }
    }
    return rep;
}

inline json to_json(const BenchmarkReport& r)
{
    json runs = json::array();
    for (const auto& run : r.runs) {
        json j{{"operator", to_string(run.op)},
               {"equation", to_string(run.equation)},
               {"level", run.level},
               {"N", run.unknowns},
               {"mode", to_string(run.mode)},
               {"path", to_string(run.path)},
               {"precision", to_string(run.precision)},
               {"repetitions", run.times.size()},
               {"times_s", run.times},
               {"mean_s", run.stats.mean},
               {"stddev_s", run.stats.stddev},
               {"valid", run.valid}};
        if (run.probe_error)
            j["probe_error"] = *run.probe_error;
        runs.push_back(std::move(j));
    }
    json sps = json::array();
    for (const auto& s : r.speedups) {
        json j{{"operator", to_string(s.op)}, {"equation", to_string(s.equation)}, {"level", s.level},
               {"N", s.unknowns},             {"mode", to_string(s.mode)},        {"precision", to_string(s.precision)}};
        if (s.value)
            j["speedup"] = *s.value;
        sps.push_back(std::move(j));
    }
    return json{{"schema_version", report_schema_version},
                {"kind", "benchmark"},
                {"framing", "speed-up compares the per-pair host integrator (reference) with the batched backend "
                            "pipeline on the same CPU; it measures the architectural change, not accelerator hardware"},
                {"config", to_json(r.config)},
                {"runs", runs},
                {"speedups", sps},
                {"all_valid", r.all_valid()}};
}

inline constexpr const char* benchmark_csv_header =
    "operator,equation,level,N,mode,path,precision,repetitions,mean_s,stddev_s,probe_error,valid,speedup";

inline void write_benchmark_csv(const BenchmarkReport& r, std::ostream& out)
{
    out << benchmark_csv_header << '\n' << std::setprecision(10);
    for (const auto& run : r.runs) {
        std::optional<double> s;
        if (run.path == RunPath::Batched)
            for (const auto& sp : r.speedups)
                if (sp.op == run.op && sp.equation == run.equation && sp.level == run.level && sp.mode == run.mode &&
                    sp.precision == run.precision)
                    s = sp.value;
        out << to_string(run.op) << ',' << to_string(run.equation) << ',' << run.level << ',' << run.unknowns << ','
            << to_string(run.mode) << ',' << to_string(run.path) << ',' << to_string(run.precision) << ','
            << run.times.size() << ',' << run.stats.mean << ',' << run.stats.stddev << ',';
        if (run.probe_error)
            out << *run.probe_error;
        out << ',' << (run.valid ? "true" : "false") << ',';
        if (s)
            out << *s;
        out << '\n';
    }
}

// Scattering run description as read from JSON.
struct ScatterRun {
    ScatterConfig config;
    SolveMode mode = SolveMode::Dense;
    std::optional<int> sphere_level;
    std::optional<double> sphere_radius;
    std::string mesh_path;
};

inline ScatterRun scatter_run_from_json(const json& j)
{
    using namespace detail;
    reject_unknown(j,
                   {"schema_version", "frequency", "wavenumber", "sound_speed", "mesh", "sphere_level", "sphere_radius",
                    "mode", "precision", "tolerance", "restart", "max_iterations", "evaluation_points", "radius",
                    "incidence_deg", "amplitude", "force", "workers", "devices", "chunk_size", "aca_tolerance", "eta",
                    "n_min", "offload_threshold", "regular_order", "singular_order"},
                   "scatter config");
    ScatterRun run;
    ScatterConfig& c = run.config;
    read(j, "sound_speed", c.sound_speed);
    read(j, "frequency", c.frequency);
    if (j.contains("wavenumber")) {
        double k = 0.0;
        read(j, "wavenumber", k);
        if (!(k > 0.0))
            throw ConfigError("\"wavenumber\" must be positive");
        // a resolved report carries both; they must agree
        if (j.contains("frequency") && std::abs(c.wavenumber() - k) > 1e-12 * k)
            throw ConfigError("\"frequency\" and \"wavenumber\" disagree");
        c.frequency = k * c.sound_speed / (2.0 * std::numbers::pi);
    }
    if (j.contains("mesh") == j.contains("sphere_level"))
        throw ConfigError("give exactly one of \"mesh\" and \"sphere_level\"");
    if (j.contains("mesh"))
        read(j, "mesh", run.mesh_path);
    if (j.contains("sphere_level")) {
        int l = 0;
        read(j, "sphere_level", l);
        run.sphere_level = l;
    }
    if (j.contains("sphere_radius")) {
        double r = 1.0;
        read(j, "sphere_radius", r);
        if (!(r > 0.0))
            throw ConfigError("\"sphere_radius\" must be positive");
        run.sphere_radius = r;
    }
    if (j.contains("mode")) {
        std::string s;
        read(j, "mode", s);
        run.mode = parse_enum("mode", s, mode_names());
    }
    if (j.contains("precision")) {
        std::string s;
        read(j, "precision", s);
        c.assembly.precision = parse_enum("precision", s, precision_names());
    }
    read(j, "tolerance", c.tolerance);
    read(j, "restart", c.restart);
    read(j, "max_iterations", c.max_iterations);
    read(j, "evaluation_points", c.evaluation_points);
    read(j, "radius", c.radius);
    read(j, "incidence_deg", c.incidence_deg);
    read(j, "amplitude", c.amplitude);
    read(j, "force", c.force);
    unsigned workers = c.assembly.workers;
    read(j, "workers", workers);
    c.assembly.workers = c.hmatrix.workers = workers;
    read(j, "devices", c.assembly.device_count);
    read(j, "chunk_size", c.assembly.chunk_size);
    c.hmatrix.chunk_size = c.assembly.chunk_size;
    read(j, "aca_tolerance", c.hmatrix.aca.tolerance);
    read(j, "eta", c.hmatrix.eta);
    read(j, "n_min", c.hmatrix.n_min);
    read(j, "offload_threshold", c.hmatrix.aca.offload_threshold);
    read(j, "regular_order", c.assembly.regular_order);
    read(j, "singular_order", c.assembly.singular_order);
    if (!(c.tolerance > 0.0) || c.restart < 1 || c.max_iterations < 1)
        throw ConfigError("invalid solver settings");
    if (c.amplitude == 0.0)
        throw ConfigError("\"amplitude\" must be nonzero");
    return run;
}

inline json to_json(const ScatterRun& r)
{
    using namespace detail;
    const ScatterConfig& c = r.config;
    json j{{"schema_version", report_schema_version},
           {"frequency", c.frequency},
           {"wavenumber", c.wavenumber()},
           {"sound_speed", c.sound_speed},
           {"mode", to_string(r.mode)},
           {"precision", to_string(c.assembly.precision)},
           {"tolerance", c.tolerance},
           {"restart", c.restart},
           {"max_iterations", c.max_iterations},
           {"evaluation_points", c.evaluation_points},
           {"radius", c.radius},
           {"incidence_deg", c.incidence_deg},
           {"amplitude", c.amplitude},
           {"force", c.force},
           {"workers", c.assembly.workers},
           {"devices", c.assembly.device_count},
           {"chunk_size", c.assembly.chunk_size},
           {"aca_tolerance", c.hmatrix.aca.tolerance},
           {"eta", c.hmatrix.eta},
           {"n_min", c.hmatrix.n_min},
           {"offload_threshold", c.hmatrix.aca.offload_threshold},
           {"regular_order", c.assembly.regular_order},
           {"singular_order", c.assembly.singular_order}};
    if (r.sphere_level) {
        j["sphere_level"] = *r.sphere_level;
        j["sphere_radius"] = r.sphere_radius.value_or(1.0);
    } else {
        j["mesh"] = r.mesh_path;
    }
    return j;
}

struct ScatterResult {
    SolveReport solve;
    std::vector<double> theta_deg;
    std::vector<complex_t> field;
    std::vector<double> ts_db;
    std::size_t near_field_points = 0;
};

inline std::shared_ptr<const TriangleMesh> scatter_mesh(const ScatterRun& r)
{
    if (r.sphere_level) {
        TriangleMesh m = refine_unit_sphere(*r.sphere_level);
        if (r.sphere_radius)
            for (auto& v : m.vertices)
                v = *r.sphere_radius * v;
        return std::make_shared<const TriangleMesh>(std::move(m));
    }
    return std::make_shared<const TriangleMesh>(load_mesh(r.mesh_path));
}

inline ScatterResult run_scatter(ScatterRun run)
{
    if (!run.config.mesh)
        run.config.mesh = scatter_mesh(run);
    const PlaneWave wave = incident_wave(run.config);
    ScatterResult out;
    out.solve = burton_miller_solve(run.config, wave, run.mode);
    const auto t0 = std::chrono::steady_clock::now();
    const FunctionSpace p1(run.config.mesh, SpaceFamily::P1Continuous);
    const auto pts = evaluation_ring(run.config.evaluation_points, run.config.radius);
    out.field = evaluate_far_field(p1, out.solve.coefficients, pts, wave.wavenumber, &out.near_field_points,
                                   run.config.assembly.regular_order, run.config.assembly.workers);
    out.solve.timings.far_field = detail::seconds_since(t0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out.theta_deg.push_back(360.0 * static_cast<double>(i) / static_cast<double>(pts.size()));
        out.ts_db.push_back(target_strength(out.field[i], run.config.amplitude, run.config.radius));
    }
    return out;
}

inline constexpr const char* far_field_csv_header = "theta_deg,re,im,abs,ts_db";

inline void write_far_field_csv(const ScatterResult& r, std::ostream& out)
{
    out << far_field_csv_header << '\n' << std::setprecision(12);
    for (std::size_t i = 0; i < r.field.size(); ++i) {
        out << r.theta_deg[i] << ',' << r.field[i].real() << ',' << r.field[i].imag() << ',' << std::abs(r.field[i])
            << ',';
        if (std::isinf(r.ts_db[i]))
            out << "-inf";
        else
            out << r.ts_db[i];
        out << '\n';
    }
}

inline json to_json(const ScatterRun& run, const ScatterResult& r)
{
    return json{{"schema_version", report_schema_version},
                {"kind", "scatter"},
                {"config", to_json(run)},
                {"unknowns", r.solve.unknowns},
                {"elements_per_wavelength", r.solve.elements_per_wavelength},
                {"iterations", r.solve.iterations},
                {"residual", r.solve.residual},
                {"converged", r.solve.converged},
                {"residual_history", r.solve.residual_history},
                {"restart_residuals", r.solve.restart_residuals},
                {"near_field_points", r.near_field_points},
                {"timings_s",
                 {{"assembly", r.solve.timings.assembly},
                  {"solve", r.solve.timings.solve},
                  {"far_field", r.solve.timings.far_field}}}};
}

} // namespace hbem
