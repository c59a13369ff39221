#pragma once

// Batched integrator contract. A DeviceContext caches everything a device
// needs (element geometry in structure-of-arrays layout, basis tables,
// quadrature weights); integrate_batch evaluates regular integrals for many
// disjoint element pairs in one call and returns the unassembled local blocks.
//
// The host implementation below follows the per-pair evaluation scheme of an
// accelerator kernel: load element data, evaluate the kernel at all pairs of
// quadrature points, then combine with weights and basis values for every
// local DOF combination. Accelerator backends implement BatchedIntegrator.

#include "hbem/kernels.hpp"
#include "hbem/parallel.hpp"

#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hbem {

// Mirrors the six-entry constant-memory weight table of the device kernel.
inline constexpr std::size_t max_device_weights = 6;

template <class Real>
struct ElementCache {
    std::vector<Real> nx, ny, nz, jacobian;
    std::vector<Real> px, py, pz;            // element * points + q
    std::vector<Real> weights;                // <= max_device_weights
    std::vector<Real> test_basis, trial_basis; // local * points + q
    std::vector<Real> curls;                   // element * 9 + local * 3 + component (HYPS only)
};

struct DeviceContext {
    int device_id = 0;
    OperatorSpec spec;
    std::size_t element_count = 0;
    std::size_t points = 0;
    int test_dofs = 0, trial_dofs = 0;
    // raw connectivity, used to reject non-disjoint pairs
    std::vector<std::array<int, 3>> elements;
    std::variant<ElementCache<double>, ElementCache<float>> cache;
};

struct BatchRequest {
    std::vector<std::pair<int, int>> pairs; // (test element, trial element)
    OperatorSpec spec;
};

// Unassembled local blocks, pair-major and DOF-combination-minor:
// index = pair * (test_dofs * trial_dofs) + test_local * trial_dofs + trial_local.
// Real and imaginary parts live in separate planes; `im` is empty for
// real-valued operators.
struct RawResultBuffer {
    std::size_t pair_count = 0;
    int test_dofs = 0, trial_dofs = 0;
    bool complex_valued = false;
    std::vector<double> re, im;

    std::size_t block_size() const { return static_cast<std::size_t>(test_dofs) * static_cast<std::size_t>(trial_dofs); }
    complex_t value(std::size_t pair, int i, int j) const
    {
        const std::size_t idx = pair * block_size() + static_cast<std::size_t>(i * trial_dofs + j);
        return {re[idx], complex_valued ? im[idx] : 0.0};
    }
};

namespace detail {

template <class Real>
ElementCache<Real> make_cache(const ElementGeometry& g, const BasisTable& test, const BasisTable& trial, bool curls)
{
    auto cast = [](const std::vector<double>& v) { return std::vector<Real>(v.begin(), v.end()); };
    ElementCache<Real> c;
    c.nx = cast(g.nx);
    c.ny = cast(g.ny);
    c.nz = cast(g.nz);
    c.jacobian = cast(g.jacobian);
    c.px = cast(g.px);
    c.py = cast(g.py);
    c.pz = cast(g.pz);
    c.weights = cast(g.rule.weights);
    c.test_basis = cast(test.values);
    c.trial_basis = cast(trial.values);
    if (curls) {
        c.curls.resize(g.element_count * 9);
        for (std::size_t e = 0; e < g.element_count; ++e)
            for (int l = 0; l < 3; ++l) {
                const Vec3 cv = element_curl(g, e, l);
                for (int d = 0; d < 3; ++d)
                    c.curls[e * 9 + l * 3 + d] = static_cast<Real>(cv[d]);
            }
    }
    return c;
}

} // namespace detail

inline DeviceContext init_device(const TriangleMesh& mesh, const ElementGeometry& geometry, const BasisTable& test_table,
                                 const BasisTable& trial_table, const OperatorSpec& spec, int device_id = 0)
{
    spec.validate();
    if (geometry.points_per_element > max_device_weights)
        throw CapacityError("quadrature rule has " + std::to_string(geometry.points_per_element) +
                                " points; the device weight table holds at most " +
                                std::to_string(max_device_weights),
                            geometry.points_per_element);
    if (geometry.element_count != mesh.element_count())
        throw DimensionError("geometry does not match the mesh");
    if (test_table.points != geometry.points_per_element || trial_table.points != geometry.points_per_element)
        throw DimensionError("basis tables were evaluated on a different quadrature rule");
    const bool hyps = spec.kind == OperatorKind::HYPS;
    if (hyps && (test_table.local_dofs != 3 || trial_table.local_dofs != 3))
        throw UnsupportedError("the hypersingular operator requires piecewise linear spaces");

    DeviceContext ctx;
    ctx.device_id = device_id;
    ctx.spec = spec;
    ctx.element_count = geometry.element_count;
    ctx.points = geometry.points_per_element;
    ctx.test_dofs = test_table.local_dofs;
    ctx.trial_dofs = trial_table.local_dofs;
    ctx.elements = mesh.elements;
    if (spec.precision == Precision::Single)
        ctx.cache = detail::make_cache<float>(geometry, test_table, trial_table, hyps);
    else
        ctx.cache = detail::make_cache<double>(geometry, test_table, trial_table, hyps);
    return ctx;
}

namespace detail {

inline bool shares_vertex(const std::array<int, 3>& a, const std::array<int, 3>& b)
{
    for (int i : a)
        for (int j : b)
            if (i == j)
                return true;
    return false;
}

// Integral evaluation for one element pair, written to `out_re`/`out_im`.
template <class Real>
void integrate_pair(const DeviceContext& ctx, const ElementCache<Real>& c, std::size_t a, std::size_t b, double* out_re,
                    double* out_im)
{
    constexpr std::size_t maxq = max_device_weights;
    const std::size_t nq = ctx.points;
    const int nt = ctx.test_dofs, ns = ctx.trial_dofs;
    const OperatorKind kind = ctx.spec.kind;
    const bool cplx = ctx.spec.is_complex();
    const Real k = static_cast<Real>(ctx.spec.wavenumber);

    // load element data into local storage
    Real xa[3][maxq], xb[3][maxq];
    for (std::size_t q = 0; q < nq; ++q) {
        xa[0][q] = c.px[a * nq + q];
        xa[1][q] = c.py[a * nq + q];
        xa[2][q] = c.pz[a * nq + q];
        xb[0][q] = c.px[b * nq + q];
        xb[1][q] = c.py[b * nq + q];
        xb[2][q] = c.pz[b * nq + q];
    }
    const Real nax = c.nx[a], nay = c.ny[a], naz = c.nz[a];
    const Real nbx = c.nx[b], nby = c.ny[b], nbz = c.nz[b];

    // kernel values at all pairs of quadrature points, pre-multiplied by weights
    Real kre[maxq][maxq], kim[maxq][maxq];
    for (std::size_t q = 0; q < nq; ++q)
        for (std::size_t p = 0; p < nq; ++p) {
            Real re, im;
            kernel_value<Real>(kind, k, xa[0][q] - xb[0][p], xa[1][q] - xb[1][p], xa[2][q] - xb[2][p], nax, nay, naz,
                               nbx, nby, nbz, cplx, re, im);
            const Real w = c.weights[q] * c.weights[p];
            kre[q][p] = w * re;
            kim[q][p] = w * im;
        }

    const Real jj = c.jacobian[a] * c.jacobian[b];
    if (kind == OperatorKind::HYPS) {
        Real gre = 0, gim = 0;
        for (std::size_t q = 0; q < nq; ++q)
            for (std::size_t p = 0; p < nq; ++p) {
                gre += kre[q][p];
                gim += kim[q][p];
            }
        const Real ndot = nax * nbx + nay * nby + naz * nbz;
        const Real k2 = k * k;
        for (int i = 0; i < nt; ++i)
            for (int j = 0; j < ns; ++j) {
                Real sre = 0, sim = 0;
                for (std::size_t q = 0; q < nq; ++q) {
                    const Real bi = c.test_basis[i * nq + q];
                    for (std::size_t p = 0; p < nq; ++p) {
                        const Real bf = bi * c.trial_basis[j * nq + p];
                        sre += bf * kre[q][p];
                        sim += bf * kim[q][p];
                    }
                }
                const Real* ca = &c.curls[a * 9 + i * 3];
                const Real* cb = &c.curls[b * 9 + j * 3];
                const Real cc = ca[0] * cb[0] + ca[1] * cb[1] + ca[2] * cb[2];
                out_re[i * ns + j] = static_cast<double>((cc * gre - k2 * ndot * sre) * jj);
                if (cplx)
                    out_im[i * ns + j] = static_cast<double>((cc * gim - k2 * ndot * sim) * jj);
            }
        return;
    }
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < ns; ++j) {
            Real sre = 0, sim = 0;
            for (std::size_t q = 0; q < nq; ++q) {
                const Real bi = c.test_basis[i * nq + q];
                for (std::size_t p = 0; p < nq; ++p) {
                    const Real bf = bi * c.trial_basis[j * nq + p];
                    sre += bf * kre[q][p];
                    sim += bf * kim[q][p];
                }
            }
            out_re[i * ns + j] = static_cast<double>(sre * jj);
            if (cplx)
                out_im[i * ns + j] = static_cast<double>(sim * jj);
        }
}

} // namespace detail

// Evaluates every pair of `req` on the host, optionally spreading pairs over
// `lanes` threads. Safe for concurrent calls on one context.
inline RawResultBuffer integrate_batch(const DeviceContext& ctx, const BatchRequest& req, unsigned lanes = 1)
{
    if (!(req.spec == ctx.spec))
        throw ContractError("batch operator spec does not match the device context");
    for (const auto& [a, b] : req.pairs) {
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= ctx.element_count ||
            static_cast<std::size_t>(b) >= ctx.element_count)
            throw ContractError("batch references an element outside the cached grid");
        if (detail::shares_vertex(ctx.elements[a], ctx.elements[b]))
            throw ContractError("batch contains non-disjoint pair (" + std::to_string(a) + ", " + std::to_string(b) +
                                "); singular pairs must be integrated on the host");
    }
    RawResultBuffer out;
    out.pair_count = req.pairs.size();
    out.test_dofs = ctx.test_dofs;
    out.trial_dofs = ctx.trial_dofs;
    out.complex_valued = ctx.spec.is_complex();
    const std::size_t bs = out.block_size();
    out.re.assign(out.pair_count * bs, 0.0);
    if (out.complex_valued)
        out.im.assign(out.pair_count * bs, 0.0);

    auto run = [&](std::size_t begin, std::size_t end) {
        std::visit(
            [&](const auto& cache) {
                for (std::size_t p = begin; p < end; ++p) {
                    const auto [a, b] = req.pairs[p];
                    detail::integrate_pair(ctx, cache, static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                           out.re.data() + p * bs, out.complex_valued ? out.im.data() + p * bs : nullptr);
                }
            },
            ctx.cache);
    };
    parallel_ranges(out.pair_count, lanes, run);
    return out;
}

// Capability interface for batched integrators ("devices").
class BatchedIntegrator {
public:
    virtual ~BatchedIntegrator() = default;
    virtual const DeviceContext& context() const = 0;
    virtual RawResultBuffer integrate_batch(const BatchRequest& req) const = 0;
    virtual std::string name() const = 0;

    std::size_t batches_submitted() const { return batches_.load(); }
    std::size_t pairs_submitted() const { return pairs_.load(); }

protected:
    void count(const BatchRequest& req) const
    {
        batches_.fetch_add(1);
        pairs_.fetch_add(req.pairs.size());
    }

private:
    mutable std::atomic<std::size_t> batches_{0};
    mutable std::atomic<std::size_t> pairs_{0};
};

// Reference implementation of the batched contract on the host CPU.
class HostBatchedIntegrator final : public BatchedIntegrator {
public:
    explicit HostBatchedIntegrator(DeviceContext ctx, unsigned lanes = 1) : ctx_(std::move(ctx)), lanes_(lanes) {}

    const DeviceContext& context() const override { return ctx_; }
    RawResultBuffer integrate_batch(const BatchRequest& req) const override
    {
        count(req);
        return hbem::integrate_batch(ctx_, req, lanes_);
    }
    std::string name() const override { return "host-batched:" + std::to_string(ctx_.device_id); }

private:
    DeviceContext ctx_;
    unsigned lanes_;
};

using BackendList = std::vector<std::shared_ptr<const BatchedIntegrator>>;

// One host backend per simulated device.
inline BackendList make_host_backends(const OperatorSpec& spec, const FunctionSpace& test, const FunctionSpace& trial,
                                      const ElementGeometry& geometry, int devices = 1, unsigned lanes = 1)
{
    const BasisTable tt = evaluate_basis(test, geometry.rule), tr = evaluate_basis(trial, geometry.rule);
    BackendList list;
    for (int d = 0; d < devices; ++d)
        list.push_back(std::make_shared<HostBatchedIntegrator>(init_device(test.mesh(), geometry, tt, tr, spec, d), lanes));
    return list;
}

} // namespace hbem
