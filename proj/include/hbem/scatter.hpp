#pragma once

// Sound-hard acoustic scattering with a Burton-Miller formulation, solved by
// restarted GMRES, followed by far-field evaluation and target strength.

#include "hbem/gmres.hpp"
#include "hbem/hmatrix.hpp"

#include <chrono>
#include <limits>
#include <numbers>

namespace hbem {

inline double wavenumber_from_frequency(double f, double c)
{
    if (!(f > 0.0) || !(c > 0.0))
        throw ConfigError("frequency and sound speed must be positive");
    return 2.0 * std::numbers::pi * f / c;
}

struct PlaneWave {
    double amplitude = 1.0;
    Vec3 direction{1.0, 0.0, 0.0};
    double wavenumber = 1.0;

    void validate() const
    {
        if (std::abs(norm(direction) - 1.0) > 1e-12)
            throw ConfigError("plane wave direction must be a unit vector");
        if (!(wavenumber > 0.0))
            throw ConfigError("plane wave wavenumber must be positive");
    }

    complex_t value(const Vec3& x) const
    {
        return amplitude * std::exp(complex_t(0.0, wavenumber * dot(direction, x)));
    }
};

// Direction in the xy-plane at `theta_deg` from the x axis.
inline PlaneWave plane_wave_in_plane(double theta_deg, double k, double amplitude = 1.0)
{
    const double t = theta_deg * std::numbers::pi / 180.0;
    return {amplitude, {std::cos(t), std::sin(t), 0.0}, k};
}

struct IncidentTraces {
    std::vector<complex_t> dirichlet;
    std::vector<complex_t> neumann;
};

// Area-weighted vertex normals for a continuous P1 space.
inline std::vector<Vec3> vertex_normals(const FunctionSpace& space)
{
    if (space.family() != SpaceFamily::P1Continuous)
        throw UnsupportedError("vertex normals need a continuous P1 space");
    const TriangleMesh& mesh = space.mesh();
    std::vector<Vec3> out(space.dof_count());
    for (std::size_t d = 0; d < space.dof_count(); ++d) {
        Vec3 n{0.0, 0.0, 0.0};
        for (const LocalDof& ld : space.support(d)) {
            const auto e = static_cast<std::size_t>(ld.element);
            n = n + cross(mesh.corner(e, 1) - mesh.corner(e, 0), mesh.corner(e, 2) - mesh.corner(e, 0));
        }
        out[d] = (1.0 / norm(n)) * n;
    }
    return out;
}

inline IncidentTraces incident_trace(const PlaneWave& wave, const FunctionSpace& space)
{
    wave.validate();
    const auto normals = vertex_normals(space);
    const auto& centers = space.dof_centers();
    IncidentTraces t;
    t.dirichlet.resize(space.dof_count());
    t.neumann.resize(space.dof_count());
    for (std::size_t d = 0; d < space.dof_count(); ++d) {
        const complex_t u = wave.value(centers[d]);
        t.dirichlet[d] = u;
        t.neumann[d] = complex_t(0.0, wave.wavenumber * dot(wave.direction, normals[d])) * u;
    }
    return t;
}

enum class SolveMode { Dense, HMatrix };

inline const char* to_string(SolveMode m) { return m == SolveMode::Dense ? "dense" : "hmatrix"; }

struct ScatterConfig {
    double frequency = 1000.0;
    double sound_speed = 1500.0;
    std::shared_ptr<const TriangleMesh> mesh;
    AssemblyConfig assembly;
    HMatrixConfig hmatrix;
    double tolerance = 1e-5;
    std::size_t restart = 100;
    std::size_t max_iterations = 2000;
    std::size_t evaluation_points = 3600;
    double radius = 20000.0;
    double incidence_deg = 10.0;
    double amplitude = 1.0;
    double min_elements_per_wavelength = 6.0;
    bool force = false; // bypass the mesh-resolution guard

    double wavenumber() const { return wavenumber_from_frequency(frequency, sound_speed); }

    void validate() const
    {
        if (!(frequency > 0.0) || !(sound_speed > 0.0) || !(radius > 0.0))
            throw ConfigError("frequency, sound speed and radius must be positive");
        if (!mesh)
            throw ConfigError("scatter configuration has no mesh");
        if (evaluation_points < 1)
            throw ConfigError("at least one evaluation point is required");
        assembly.validate();
        hmatrix.validate();
    }
};

inline PlaneWave incident_wave(const ScatterConfig& cfg)
{
    return plane_wave_in_plane(cfg.incidence_deg, cfg.wavenumber(), cfg.amplitude);
}

class ResolutionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

inline double elements_per_wavelength(const TriangleMesh& mesh, double k)
{
    return (2.0 * std::numbers::pi / k) / mesh.mean_edge_length();
}

struct PhaseTimings {
    double assembly = 0.0, solve = 0.0, far_field = 0.0; // seconds
};

struct SolveReport {
    SolveMode mode = SolveMode::Dense;
    std::vector<complex_t> coefficients;
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;
    std::vector<double> restart_residuals;
    PhaseTimings timings;
    std::size_t unknowns = 0;
    double elements_per_wavelength = 0.0;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// Solves (½M − K − η D)Φ = M u_inc − η M ∂u_inc/∂n for the total surface field Φ
// on a sound-hard obstacle, with η = 1/(ik) and D = Σ Q_jᵀ Ŝ Q_j − k² Σ P_jᵀ Ŝ P_j.
inline SolveReport burton_miller_solve(const ScatterConfig& cfg, const PlaneWave& wave, SolveMode mode)
{
    cfg.validate();
    wave.validate();
    const double k = wave.wavenumber;
    const TriangleMesh& mesh = *cfg.mesh;
    SolveReport rep;
    rep.mode = mode;
    rep.elements_per_wavelength = elements_per_wavelength(mesh, k);
    if (!cfg.force && rep.elements_per_wavelength < cfg.min_elements_per_wavelength)
        throw ResolutionError("mesh resolves only " + std::to_string(rep.elements_per_wavelength) +
                              " elements per wavelength (minimum " + std::to_string(cfg.min_elements_per_wavelength) +
                              "); use the force option to override");
    check_closed_orientation(mesh);

    const auto t_asm = std::chrono::steady_clock::now();
    const FunctionSpace p1(cfg.mesh, SpaceFamily::P1Continuous);
    const FunctionSpace dp1(cfg.mesh, SpaceFamily::P1Discontinuous);
    const ElementGeometry geometry = precompute_geometry(mesh, regular_rule(cfg.assembly.regular_order));
    const SparseMatrix mass = assemble_mass(p1, p1, geometry, geometry.rule);
    const TransformMatrices tm = sparse_transform_matrices(p1, dp1, geometry);

    OperatorSpec dlp = OperatorSpec::helmholtz(k, OperatorKind::DLP);
    OperatorSpec slp = OperatorSpec::helmholtz(k, OperatorKind::SLP);
    dlp.precision = slp.precision = cfg.assembly.precision;

    using Apply = std::function<std::vector<complex_t>(std::span<const complex_t>)>;
    Apply apply_k, apply_s;
    std::shared_ptr<DenseMatrix> kd, sd;
    std::shared_ptr<HMatrix> kh, sh;
    if (mode == SolveMode::Dense) {
        const auto bk = make_host_backends(dlp, p1, p1, geometry, cfg.assembly.device_count, cfg.assembly.lanes);
        kd = std::make_shared<DenseMatrix>(assemble_dense(dlp, p1, p1, geometry, cfg.assembly, bk));
        const auto bs = make_host_backends(slp, dp1, dp1, geometry, cfg.assembly.device_count, cfg.assembly.lanes);
        sd = std::make_shared<DenseMatrix>(assemble_dense(slp, dp1, dp1, geometry, cfg.assembly, bs));
        apply_k = [kd](std::span<const complex_t> x) { return kd->matvec(x); };
        apply_s = [sd](std::span<const complex_t> x) { return sd->matvec(x); };
    } else {
        HMatrixConfig hc = cfg.hmatrix;
        hc.singular_order = cfg.assembly.singular_order;
        auto build = [&](const OperatorSpec& spec, const FunctionSpace& space) {
            auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(space, hc.n_min));
            auto block = std::make_shared<const BlockClusterTree>(tree, tree, hc.eta);
            const auto be = make_host_backends(spec, space, space, geometry, cfg.assembly.device_count, cfg.assembly.lanes);
            return std::make_shared<HMatrix>(assemble_hmatrix(spec, space, space, geometry, block, hc, be));
        };
        kh = build(dlp, p1);
        sh = build(slp, dp1);
        apply_k = [kh](std::span<const complex_t> x) { return hmat_matvec(*kh, x); };
        apply_s = [sh](std::span<const complex_t> x) { return hmat_matvec(*sh, x); };
    }
    rep.timings.assembly = detail::seconds_since(t_asm);

    const complex_t eta = 1.0 / complex_t(0.0, k);
    const double k2 = k * k;
    const LinearOperator op = [&](std::span<const complex_t> x) {
        std::vector<complex_t> y = mass.multiply<complex_t>(x);
        const std::vector<complex_t> kx = apply_k(x);
        std::vector<complex_t> dx(x.size(), complex_t{});
        for (int j = 0; j < 3; ++j) {
            const auto qx = tm.curl[j].multiply<complex_t>(x);
            const auto qt = tm.curl[j].transpose_multiply<complex_t>(apply_s(qx));
            const auto px = tm.normal[j].multiply<complex_t>(x);
            const auto pt = tm.normal[j].transpose_multiply<complex_t>(apply_s(px));
            for (std::size_t i = 0; i < dx.size(); ++i)
                dx[i] += qt[i] - k2 * pt[i];
        }
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = 0.5 * y[i] - kx[i] - eta * dx[i];
        return y;
    };

    const IncidentTraces inc = incident_trace(wave, p1);
    const auto mu = mass.multiply<complex_t>(inc.dirichlet);
    const auto mdu = mass.multiply<complex_t>(inc.neumann);
    std::vector<complex_t> rhs(mu.size());
    for (std::size_t i = 0; i < rhs.size(); ++i)
        rhs[i] = mu[i] - eta * mdu[i];

    const auto t_solve = std::chrono::steady_clock::now();
    GmresConfig gc;
    gc.tolerance = cfg.tolerance;
    gc.restart = cfg.restart;
    gc.max_iterations = cfg.max_iterations;
    GmresResult g = gmres(op, rhs, gc);
    rep.timings.solve = detail::seconds_since(t_solve);
    if (!g.converged)
        throw SolverError("GMRES did not reach tolerance " + std::to_string(cfg.tolerance) + " after " +
                              std::to_string(g.iterations) + " iterations (residual " + std::to_string(g.residual) + ")",
                          g.history);
    rep.coefficients = std::move(g.x);
    rep.iterations = g.iterations;
    rep.residual = g.residual;
    rep.converged = true;
    rep.residual_history = std::move(g.history);
    rep.restart_residuals = std::move(g.restart_residuals);
    rep.unknowns = p1.dof_count();
    return rep;
}

// Evaluation points on a circle of radius `radius` in the xy-plane; point i sits
// at angle 360·i/count degrees.
inline std::vector<Vec3> evaluation_ring(std::size_t count, double radius)
{
    std::vector<Vec3> pts(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
        pts[i] = {radius * std::cos(t), radius * std::sin(t), 0.0};
    }
    return pts;
}

// u(x) = ∫ ∂g(x,y)/∂n_y Φ(y) ds_y with regular quadrature on every element.
// Points closer than three element diameters to the surface are counted in
// `near_points` since the quadrature is not accurate there.
inline std::vector<complex_t> evaluate_far_field(const FunctionSpace& space, std::span<const complex_t> coefficients,
                                                 const std::vector<Vec3>& points, double k,
                                                 std::size_t* near_points = nullptr, int order = 4,
                                                 unsigned workers = hardware_workers())
{
    if (coefficients.size() != space.dof_count())
        throw DimensionError("coefficient vector does not match the space");
    const TriangleMesh& mesh = space.mesh();
    const ElementGeometry g = precompute_geometry(mesh, regular_rule(order));
    const BasisTable basis = evaluate_basis(space, g.rule);
    const OperatorSpec spec = k > 0.0 ? OperatorSpec::helmholtz(k, OperatorKind::DLP)
                                      : OperatorSpec::laplace(OperatorKind::DLP);
    const std::size_t nq = g.points_per_element;
    const int nl = space.local_dof_count();

    // density at every quadrature point
    std::vector<complex_t> density(mesh.element_count() * nq);
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
        for (std::size_t q = 0; q < nq; ++q) {
            complex_t s = 0.0;
            for (int l = 0; l < nl; ++l)
                s += coefficients[space.global_dof(e, l)] * basis.value(l, q);
            density[e * nq + q] = s * g.rule.weights[q] * g.jacobian[e];
        }

    double max_diam = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
        max_diam = std::max(max_diam, g.diameter[e]);

    std::vector<complex_t> out(points.size());
    std::atomic<std::size_t> near{0};
    parallel_ranges(points.size(), workers, [&](std::size_t b, std::size_t e_end) {
        for (std::size_t p = b; p < e_end; ++p) {
            const Vec3& x = points[p];
            complex_t s = 0.0;
            double dmin = std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < mesh.element_count(); ++e) {
                const Vec3 n = g.normal(e);
                dmin = std::min(dmin, norm(x - g.centroid(e)));
                for (std::size_t q = 0; q < nq; ++q) {
                    const complex_t w = density[e * nq + q];
                    if (w != 0.0)
                        s += green_dny(spec, x, g.point(e, q), n) * w;
                }
            }
            if (dmin < 3.0 * max_diam)
                near.fetch_add(1);
            out[p] = s;
        }
    });
    if (near_points)
        *near_points = near.load();
    return out;
}

// 20·log10(R·|u/u0|); −∞ for a vanishing field.
inline double target_strength(complex_t u_sct, double u0, double radius)
{
    if (u0 == 0.0 || !(radius > 0.0))
        throw ConfigError("target strength needs u0 != 0 and R > 0");
    const double a = std::abs(u_sct);
    if (a == 0.0)
        return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(radius * a / std::abs(u0));
}

class DivisionByZeroError : public Error {
public:
    explicit DivisionByZeroError(std::size_t index)
        : Error("reference sample " + std::to_string(index) + " has zero magnitude"), index_(index)
    {
    }
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

// Mean relative deviation of the magnitudes of u_a from those of u_b.
inline double deviation(std::span<const complex_t> u_a, std::span<const complex_t> u_b)
{
    if (u_a.size() != u_b.size() || u_a.empty())
        throw DimensionError("deviation needs two non-empty sample sets of equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < u_a.size(); ++i) {
        const double b = std::abs(u_b[i]);
        if (b == 0.0)
            throw DivisionByZeroError(i);
        s += std::abs(std::abs(u_a[i]) - b) / b;
    }
    return s / static_cast<double>(u_a.size());
}

} // namespace hbem
