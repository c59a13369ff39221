#pragma once

// Dense Galerkin assembly. Element pairs are split evenly over the available
// backends; each backend's range is processed in chunks through a two-stage
// pipeline in which chunk i+1 is integrated while chunk i is accumulated into
// the global matrix. Singular (non-disjoint) pairs are integrated on the host
// up front and override the corresponding pair contributions.

#include "hbem/backend.hpp"
#include "hbem/kernels.hpp"
#include "hbem/parallel.hpp"

#include <unistd.h>

#include <atomic>
#include <future>
#include <memory>
#include <span>
#include <thread>
#include <vector>

namespace hbem {

inline std::size_t default_memory_limit()
{
    const long pages = sysconf(_SC_PHYS_PAGES);
    const long page_size = sysconf(_SC_PAGE_SIZE);
    if (pages <= 0 || page_size <= 0)
        return std::size_t{8} << 30;
    return static_cast<std::size_t>(0.8 * static_cast<double>(pages) * static_cast<double>(page_size));
}

struct AssemblyConfig {
    std::size_t chunk_size = std::size_t{1} << 20; // max pairs per batch
    int device_count = 1;
    unsigned workers = hardware_workers();
    Precision precision = Precision::Double;
    int regular_order = 4;
    int singular_order = 4;
    std::size_t memory_limit = default_memory_limit(); // bytes
    unsigned lanes = 1; // threads inside each host backend

    void validate() const
    {
        if (chunk_size < 1)
            throw ConfigError("chunk size must be at least 1");
        if (device_count < 1)
            throw ConfigError("device count must be at least 1");
        if (workers < 1)
            throw ConfigError("worker count must be at least 1");
    }
};

// Row-major dense matrix with split real/imaginary storage. The imaginary
// plane is empty for real-valued operators.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, bool complex_valued)
        : rows_(rows), cols_(cols), complex_(complex_valued), re_(rows * cols, 0.0),
          im_(complex_valued ? rows * cols : 0, 0.0)
    {
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool is_complex() const { return complex_; }

    complex_t operator()(std::size_t i, std::size_t j) const
    {
        const std::size_t idx = i * cols_ + j;
        return {re_[idx], complex_ ? im_[idx] : 0.0};
    }
    void add(std::size_t i, std::size_t j, double re, double im)
    {
        const std::size_t idx = i * cols_ + j;
        re_[idx] += re;
        if (complex_)
            im_[idx] += im;
    }
    void set(std::size_t i, std::size_t j, complex_t v)
    {
        const std::size_t idx = i * cols_ + j;
        re_[idx] = v.real();
        if (complex_)
            im_[idx] = v.imag();
    }

    const std::vector<double>& real_plane() const { return re_; }
    const std::vector<double>& imag_plane() const { return im_; }

    std::vector<complex_t> matvec(std::span<const complex_t> x) const
    {
        if (x.size() != cols_)
            throw DimensionError("dense matvec dimension mismatch");
        std::vector<complex_t> y(rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* r = re_.data() + i * cols_;
            double sre = 0.0, sim = 0.0;
            if (complex_) {
                const double* m = im_.data() + i * cols_;
                for (std::size_t j = 0; j < cols_; ++j) {
                    sre += r[j] * x[j].real() - m[j] * x[j].imag();
                    sim += r[j] * x[j].imag() + m[j] * x[j].real();
                }
            } else {
                for (std::size_t j = 0; j < cols_; ++j) {
                    sre += r[j] * x[j].real();
                    sim += r[j] * x[j].imag();
                }
            }
            y[i] = {sre, sim};
        }
        return y;
    }

    double frobenius_norm() const
    {
        double s = 0.0;
        for (double v : re_)
            s += v * v;
        for (double v : im_)
            s += v * v;
        return std::sqrt(s);
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    bool complex_ = false;
    std::vector<double> re_, im_;
};

// ||A - B||_F / ||B||_F
inline double relative_frobenius(const DenseMatrix& a, const DenseMatrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("matrix dimensions differ");
    double num = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            num += std::norm(a(i, j) - b(i, j));
    return std::sqrt(num) / b.frobenius_norm();
}

struct IndexRange {
    std::size_t begin = 0, end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const IndexRange&) const = default;
};

// Contiguous partition of [0, total) into `devices` ranges whose sizes differ by at most one.
inline std::vector<IndexRange> split_work(std::size_t total, std::size_t devices)
{
    if (devices < 1)
        throw ConfigError("at least one device is required");
    std::vector<IndexRange> out;
    const std::size_t base = total / devices, extra = total % devices;
    std::size_t begin = 0;
    for (std::size_t d = 0; d < devices; ++d) {
        const std::size_t len = base + (d < extra ? 1 : 0);
        out.push_back({begin, begin + len});
        begin += len;
    }
    return out;
}

struct AssemblyStats {
    std::size_t total_pairs = 0;
    std::size_t regular_pairs = 0;
    std::size_t singular_pairs = 0;
    std::size_t overridden_pairs = 0; // singular contributions written from the host cache
    std::size_t chunks = 0;
};

// Elements sharing at least one vertex with each element (itself included), sorted.
class ElementNeighbours {
public:
    explicit ElementNeighbours(const TriangleMesh& mesh)
    {
        std::vector<std::vector<int>> by_vertex(mesh.vertex_count());
        for (std::size_t e = 0; e < mesh.element_count(); ++e)
            for (int v : mesh.elements[e])
                by_vertex[v].push_back(static_cast<int>(e));
        offsets_.push_back(0);
        for (std::size_t e = 0; e < mesh.element_count(); ++e) {
            std::vector<int> nb;
            for (int v : mesh.elements[e])
                nb.insert(nb.end(), by_vertex[v].begin(), by_vertex[v].end());
            std::sort(nb.begin(), nb.end());
            nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
            list_.insert(list_.end(), nb.begin(), nb.end());
            offsets_.push_back(list_.size());
        }
    }

    std::span<const int> of(std::size_t e) const { return {list_.data() + offsets_[e], offsets_[e + 1] - offsets_[e]}; }
    std::size_t total() const { return list_.size(); }
    std::size_t offset(std::size_t e) const { return offsets_[e]; }

    // Index into the flattened neighbour list, or -1 when the pair is disjoint.
    std::ptrdiff_t find(std::size_t a, std::size_t b) const
    {
        const auto nb = of(a);
        const auto it = std::lower_bound(nb.begin(), nb.end(), static_cast<int>(b));
        if (it == nb.end() || *it != static_cast<int>(b))
            return -1;
        return static_cast<std::ptrdiff_t>(offsets_[a] + static_cast<std::size_t>(it - nb.begin()));
    }

private:
    std::vector<std::size_t> offsets_;
    std::vector<int> list_;
};

// Local blocks of every non-disjoint element pair, computed once.
class SingularCache {
public:
    SingularCache(const TriangleMesh& mesh, const PairIntegrator& host, unsigned workers)
        : neighbours_(mesh), blocks_(neighbours_.total())
    {
        WorkerPool pool(workers);
        pool.for_each(mesh.element_count(), [&](std::size_t a) {
            const auto nb = neighbours_.of(a);
            for (std::size_t i = 0; i < nb.size(); ++i)
                blocks_[neighbours_.offset(a) + i] = host.local_matrix(a, static_cast<std::size_t>(nb[i]));
        });
    }

    const ElementNeighbours& neighbours() const { return neighbours_; }
    const LocalBlock& block(std::size_t index) const { return blocks_[index]; }
    std::size_t size() const { return blocks_.size(); }

private:
    ElementNeighbours neighbours_;
    std::vector<LocalBlock> blocks_;
};

namespace detail {

// Accumulates local blocks into a DenseMatrix. When both spaces have
// element-local DOFs every entry belongs to exactly one element pair and no
// locking is needed; otherwise each entry has its own spin lock.
class DenseAccumulator {
public:
    DenseAccumulator(DenseMatrix& m, const FunctionSpace& test, const FunctionSpace& trial)
        : m_(m), test_(test), trial_(trial), locked_(!(test.element_local_dofs() && trial.element_local_dofs()))
    {
        if (locked_)
            locks_ = std::make_unique<std::atomic_flag[]>(m.rows() * m.cols());
    }

    template <class Get>
    void add_block(std::size_t a, std::size_t b, Get&& value)
    {
        const int nt = test_.local_dof_count(), ns = trial_.local_dof_count();
        for (int i = 0; i < nt; ++i) {
            const auto row = static_cast<std::size_t>(test_.global_dof(a, i));
            for (int j = 0; j < ns; ++j) {
                const auto col = static_cast<std::size_t>(trial_.global_dof(b, j));
                const complex_t v = value(i, j);
                if (locked_) {
                    std::atomic_flag& f = locks_[row * m_.cols() + col];
                    while (f.test_and_set(std::memory_order_acquire))
                        std::this_thread::yield();
                    m_.add(row, col, v.real(), v.imag());
                    f.clear(std::memory_order_release);
                } else {
                    m_.add(row, col, v.real(), v.imag());
                }
            }
        }
    }

    bool locked() const { return locked_; }

private:
    DenseMatrix& m_;
    const FunctionSpace& test_;
    const FunctionSpace& trial_;
    bool locked_;
    std::unique_ptr<std::atomic_flag[]> locks_;
};

inline void check_dense_capacity(const FunctionSpace& test, const FunctionSpace& trial, const OperatorSpec& spec,
                                 const AssemblyConfig& config)
{
    const double entries = static_cast<double>(test.dof_count()) * static_cast<double>(trial.dof_count());
    double bytes = entries * (spec.is_complex() ? 16.0 : 8.0);
    if (!(test.element_local_dofs() && trial.element_local_dofs()))
        bytes += entries; // one lock byte per entry
    if (bytes > static_cast<double>(config.memory_limit))
        throw CapacityError("dense matrix needs " + std::to_string(static_cast<std::size_t>(bytes)) +
                                " bytes, above the limit of " + std::to_string(config.memory_limit),
                            static_cast<std::size_t>(bytes));
}

} // namespace detail

// Dense assembly through the batched backends. `geometry` must be the
// geometry the backends were initialised with.
inline DenseMatrix assemble_dense(const OperatorSpec& spec, const FunctionSpace& test, const FunctionSpace& trial,
                                  const ElementGeometry& geometry, const AssemblyConfig& config,
                                  const BackendList& backends, AssemblyStats* stats = nullptr)
{
    spec.validate();
    config.validate();
    if (!test.same_mesh(trial))
        throw ConfigError("test and trial spaces must live on the same mesh");
    if (backends.empty())
        throw ConfigError("dense assembly needs at least one backend");
    for (const auto& be : backends) {
        const auto& ctx = be->context();
        if (!(ctx.spec == spec))
            throw ConfigError("backend " + be->name() + " was initialised for a different operator");
        if (ctx.test_dofs != test.local_dof_count() || ctx.trial_dofs != trial.local_dof_count() ||
            ctx.element_count != test.element_count())
            throw ConfigError("backend " + be->name() + " was initialised for different spaces");
    }
    detail::check_dense_capacity(test, trial, spec, config);

    const TriangleMesh& mesh = test.mesh();
    const std::size_t m = mesh.element_count();
    const PairIntegrator host(spec, test, trial, geometry, config.singular_order);
    const SingularCache singular(mesh, host, config.workers);
    const ElementNeighbours& neighbours = singular.neighbours();

    DenseMatrix result(test.dof_count(), trial.dof_count(), spec.is_complex());
    detail::DenseAccumulator acc(result, test, trial);

    const std::size_t total = m * m;
    const auto ranges = split_work(total, backends.size());
    std::atomic<std::size_t> regular_count{0}, overridden{0}, chunk_count{0};
    const unsigned workers_per_device = std::max(1u, config.workers / static_cast<unsigned>(backends.size()));

    struct Chunk {
        std::vector<std::pair<int, int>> pairs;     // disjoint, sent to the backend
        std::vector<std::pair<int, int>> singular;  // (test element, cache index)
        std::vector<int> singular_trial;
        RawResultBuffer buffer;
    };

    auto run_device = [&](std::size_t d) {
        const BatchedIntegrator& backend = *backends[d];
        const IndexRange range = ranges[d];
        WorkerPool pool(workers_per_device);

        auto integrate = [&](std::size_t begin, std::size_t end) {
            Chunk c;
            BatchRequest req;
            req.spec = spec;
            req.pairs.reserve(end - begin);
            for (std::size_t p = begin; p < end; ++p) {
                const std::size_t a = p / m, b = p % m;
                const auto idx = neighbours.find(a, b);
                if (idx >= 0) {
                    c.singular.emplace_back(static_cast<int>(a), static_cast<int>(idx));
                    c.singular_trial.push_back(static_cast<int>(b));
                } else {
                    req.pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
                }
            }
            c.buffer = backend.integrate_batch(req);
            c.pairs = std::move(req.pairs);
            return c;
        };

        auto assemble = [&](const Chunk& c) {
            pool.for_ranges(c.pairs.size(), 256, [&](std::size_t b0, std::size_t e0) {
                for (std::size_t i = b0; i < e0; ++i) {
                    const auto [a, b] = c.pairs[i];
                    acc.add_block(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                  [&](int r, int s) { return c.buffer.value(i, r, s); });
                }
            });
            // singular pairs: overridden with the cached host results
            for (std::size_t i = 0; i < c.singular.size(); ++i) {
                const auto [a, idx] = c.singular[i];
                const LocalBlock& blk = singular.block(static_cast<std::size_t>(idx));
                acc.add_block(static_cast<std::size_t>(a), static_cast<std::size_t>(c.singular_trial[i]),
                              [&](int r, int s) { return blk.at(r, s); });
            }
            regular_count.fetch_add(c.pairs.size());
            overridden.fetch_add(c.singular.size());
            chunk_count.fetch_add(1);
        };

        std::size_t begin = range.begin;
        if (begin >= range.end)
            return;
        std::size_t end = std::min(range.end, begin + config.chunk_size);
        auto pending = std::async(std::launch::async, integrate, begin, end);
        for (;;) {
            Chunk current = pending.get(); // barrier: chunk fully integrated
            begin = end;
            const bool more = begin < range.end;
            if (more) {
                end = std::min(range.end, begin + config.chunk_size);
                pending = std::async(std::launch::async, integrate, begin, end);
            }
            assemble(current);
            if (!more)
                break;
        }
    };

    if (backends.size() == 1) {
        run_device(0);
    } else {
        std::vector<std::thread> coordinators;
        std::vector<std::exception_ptr> errors(backends.size());
        for (std::size_t d = 0; d < backends.size(); ++d)
            coordinators.emplace_back([&, d] {
                try {
                    run_device(d);
                } catch (...) {
                    errors[d] = std::current_exception();
                }
            });
        for (auto& t : coordinators)
            t.join();
        for (auto& e : errors)
            if (e)
                std::rethrow_exception(e);
    }

    if (stats) {
        stats->total_pairs = total;
        stats->regular_pairs = regular_count.load();
        stats->overridden_pairs = overridden.load();
        stats->singular_pairs = neighbours.total();
        stats->chunks = chunk_count.load();
    }
    return result;
}

// Convenience overload: builds the geometry and one host backend per device.
inline DenseMatrix assemble_dense(const OperatorSpec& spec, const FunctionSpace& test, const FunctionSpace& trial,
                                  const AssemblyConfig& config, AssemblyStats* stats = nullptr)
{
    OperatorSpec s = spec;
    s.precision = config.precision;
    const ElementGeometry geometry = precompute_geometry(test.mesh(), regular_rule(config.regular_order));
    const auto backends = make_host_backends(s, test, trial, geometry, config.device_count, config.lanes);
    return assemble_dense(s, test, trial, geometry, config, backends, stats);
}

// Reference path: every pair through the per-pair host integrator, no
// batching and no pipeline.
inline DenseMatrix assemble_dense_reference(const OperatorSpec& spec, const FunctionSpace& test,
                                            const FunctionSpace& trial, const ElementGeometry& geometry,
                                            const AssemblyConfig& config)
{
    spec.validate();
    config.validate();
    detail::check_dense_capacity(test, trial, spec, config);
    const PairIntegrator host(spec, test, trial, geometry, config.singular_order);
    DenseMatrix result(test.dof_count(), trial.dof_count(), spec.is_complex());
    detail::DenseAccumulator acc(result, test, trial);
    const std::size_t m = test.element_count();
    WorkerPool pool(config.workers);
    pool.for_each(m, [&](std::size_t a) {
        for (std::size_t b = 0; b < m; ++b) {
            const LocalBlock blk = host.local_matrix(a, b);
            acc.add_block(a, b, [&](int r, int s) { return blk.at(r, s); });
        }
    });
    return result;
}

} // namespace hbem
