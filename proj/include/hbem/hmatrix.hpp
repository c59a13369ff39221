#pragma once

// Hierarchical matrices: geometric cluster trees, admissibility-based block
// trees, adaptive cross approximation and the compressed assembly driver.

#include "hbem/assembly.hpp"

#include <functional>
#include <map>
#include <numeric>

namespace hbem {

struct ClusterNode {
    std::size_t begin = 0, end = 0; // range in tree ordering
    BoundingBox box;
    int children[2] = {-1, -1};
    int depth = 0;

    bool is_leaf() const { return children[0] < 0; }
    std::size_t size() const { return end - begin; }
};

class ClusterTree {
public:
    // `boxes` (optional) are the extents used for admissibility, e.g. DOF supports;
    // the split itself always uses the centers.
    ClusterTree(const std::vector<Vec3>& centers, std::size_t n_min, const std::vector<BoundingBox>* boxes = nullptr)
        : n_min_(std::max<std::size_t>(n_min, 1))
    {
        if (centers.empty())
            throw ConfigError("cluster tree needs at least one point");
        if (boxes && boxes->size() != centers.size())
            throw DimensionError("bounding box count does not match point count");
        perm_.resize(centers.size());
        std::iota(perm_.begin(), perm_.end(), 0);
        build(centers, boxes, 0, centers.size(), 0);
        iperm_.resize(perm_.size());
        for (std::size_t t = 0; t < perm_.size(); ++t)
            iperm_[perm_[t]] = t;
    }

    const std::vector<ClusterNode>& nodes() const { return nodes_; }
    const ClusterNode& node(std::size_t i) const { return nodes_[i]; }
    std::size_t size() const { return perm_.size(); }
    std::size_t n_min() const { return n_min_; }
    // perm[tree index] = original index; iperm is its inverse
    const std::vector<std::size_t>& perm() const { return perm_; }
    const std::vector<std::size_t>& iperm() const { return iperm_; }

    std::vector<std::size_t> leaves() const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].is_leaf())
                out.push_back(i);
        return out;
    }

private:
    int build(const std::vector<Vec3>& c, const std::vector<BoundingBox>* boxes, std::size_t b, std::size_t e, int depth)
    {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        BoundingBox centre_box, box;
        for (std::size_t i = b; i < e; ++i) {
            centre_box.extend(c[perm_[i]]);
            if (boxes)
                box.extend((*boxes)[perm_[i]]);
        }
        nodes_[id].begin = b;
        nodes_[id].end = e;
        nodes_[id].box = boxes ? box : centre_box;
        nodes_[id].depth = depth;
        if (e - b <= n_min_)
            return id;

        const Vec3 ext = centre_box.hi - centre_box.lo;
        const int axis = ext[0] >= ext[1] ? (ext[0] >= ext[2] ? 0 : 2) : (ext[1] >= ext[2] ? 1 : 2);
        const std::size_t mid = b + (e - b) / 2;
        std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(b), perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                         perm_.begin() + static_cast<std::ptrdiff_t>(e), [&](std::size_t x, std::size_t y) {
                             if (c[x][axis] != c[y][axis])
                                 return c[x][axis] < c[y][axis];
                             return x < y;
                         });
        // keep each half in ascending original order so the layout is reproducible
        std::sort(perm_.begin() + static_cast<std::ptrdiff_t>(b), perm_.begin() + static_cast<std::ptrdiff_t>(mid));
        std::sort(perm_.begin() + static_cast<std::ptrdiff_t>(mid), perm_.begin() + static_cast<std::ptrdiff_t>(e));
        const int l = build(c, boxes, b, mid, depth + 1);
        const int r = build(c, boxes, mid, e, depth + 1);
        nodes_[id].children[0] = l;
        nodes_[id].children[1] = r;
        return id;
    }

    std::size_t n_min_;
    std::vector<ClusterNode> nodes_;
    std::vector<std::size_t> perm_, iperm_;
};

inline ClusterTree build_cluster_tree(const std::vector<Vec3>& centers, std::size_t n_min = 32)
{
    return ClusterTree(centers, n_min);
}

// Cluster tree over a function space; admissibility uses the support extents.
inline ClusterTree build_cluster_tree(const FunctionSpace& space, std::size_t n_min = 32)
{
    return ClusterTree(space.dof_centers(), n_min, &space.dof_bounds());
}

struct BlockLeaf {
    std::size_t row_node = 0, col_node = 0;
    bool admissible = false;
};

class BlockClusterTree {
public:
    BlockClusterTree(std::shared_ptr<const ClusterTree> rows, std::shared_ptr<const ClusterTree> cols, double eta)
        : rows_(std::move(rows)), cols_(std::move(cols)), eta_(eta)
    {
        if (!rows_ || !cols_)
            throw ConfigError("block tree needs row and column trees");
        if (eta < 0.0)
            throw ConfigError("admissibility parameter must be non-negative");
        descend(0, 0);
    }

    bool admissible(std::size_t r, std::size_t c) const
    {
        if (eta_ <= 0.0)
            return false;
        const BoundingBox& a = rows_->node(r).box;
        const BoundingBox& b = cols_->node(c).box;
        const double dist = a.distance(b);
        return dist > 0.0 && std::min(a.diameter(), b.diameter()) <= eta_ * dist;
    }

    const std::vector<BlockLeaf>& leaves() const { return leaves_; }
    const ClusterTree& rows() const { return *rows_; }
    const ClusterTree& cols() const { return *cols_; }
    const std::shared_ptr<const ClusterTree>& row_tree() const { return rows_; }
    const std::shared_ptr<const ClusterTree>& col_tree() const { return cols_; }
    double eta() const { return eta_; }

private:
    void descend(std::size_t r, std::size_t c)
    {
        if (admissible(r, c)) {
            leaves_.push_back({r, c, true});
            return;
        }
        const ClusterNode& rn = rows_->node(r);
        const ClusterNode& cn = cols_->node(c);
        if (rn.is_leaf() && cn.is_leaf()) {
            leaves_.push_back({r, c, false});
        } else if (rn.is_leaf()) {
            for (int cc : cn.children)
                descend(r, static_cast<std::size_t>(cc));
        } else if (cn.is_leaf()) {
            for (int rc : rn.children)
                descend(static_cast<std::size_t>(rc), c);
        } else {
            for (int rc : rn.children)
                for (int cc : cn.children)
                    descend(static_cast<std::size_t>(rc), static_cast<std::size_t>(cc));
        }
    }

    std::shared_ptr<const ClusterTree> rows_, cols_;
    double eta_;
    std::vector<BlockLeaf> leaves_;
};

inline BlockClusterTree build_block_tree(std::shared_ptr<const ClusterTree> rows, std::shared_ptr<const ClusterTree> cols,
                                         double eta = 2.0)
{
    return BlockClusterTree(std::move(rows), std::move(cols), eta);
}

// A ≈ U Vᵀ with U stored column by column (u[l] has m entries, v[l] has n).
struct LowRankBlock {
    std::size_t rows = 0, cols = 0;
    std::vector<std::vector<complex_t>> u, v;
    double residual_estimate = 0.0; // last ‖u_k‖‖v_k‖ / ‖S_k‖_F
    bool converged = false;
    bool exhausted = false;        // every row was used or vanished
    std::vector<std::size_t> pivot_rows;

    std::size_t rank() const { return u.size(); }

    complex_t entry(std::size_t i, std::size_t j) const
    {
        complex_t s = 0.0;
        for (std::size_t l = 0; l < u.size(); ++l)
            s += u[l][i] * v[l][j];
        return s;
    }

    // y += U (Vᵀ x)
    void apply_add(const complex_t* x, complex_t* y) const
    {
        for (std::size_t l = 0; l < u.size(); ++l) {
            complex_t t = 0.0;
            for (std::size_t j = 0; j < cols; ++j)
                t += v[l][j] * x[j];
            for (std::size_t i = 0; i < rows; ++i)
                y[i] += u[l][i] * t;
        }
    }
};

struct AcaConfig {
    double tolerance = 1e-5;
    std::size_t max_rank = 0;          // 0: min(m, n)
    std::size_t offload_threshold = 10000; // element pairs per row/column job

    void validate() const
    {
        if (!(tolerance > 0.0))
            throw ConfigError("ACA tolerance must be positive");
        if (offload_threshold < 1)
            throw ConfigError("offload threshold must be at least 1");
    }
};

using RowFunction = std::function<std::vector<complex_t>(std::size_t)>;

// Adaptive cross approximation with partial pivoting. row_fn(i) returns row i
// (n values) and col_fn(j) column j (m values) of the original block.
inline LowRankBlock aca(const RowFunction& row_fn, const RowFunction& col_fn, std::size_t m, std::size_t n,
                        const AcaConfig& cfg)
{
    cfg.validate();
    LowRankBlock out;
    out.rows = m;
    out.cols = n;
    if (m == 0 || n == 0) {
        out.converged = out.exhausted = true;
        return out;
    }
    const std::size_t kmax = std::min(cfg.max_rank == 0 ? std::min(m, n) : cfg.max_rank, std::min(m, n));

    std::vector<char> used(m, 0); // the pivot set Z
    std::size_t n_used = 0;
    double s_norm2 = 0.0;
    std::size_t next_row = 0;

    auto first_unused = [&]() -> std::size_t {
        for (std::size_t i = 0; i < m; ++i)
            if (!used[i])
                return i;
        return m;
    };

    for (;;) {
        if (n_used == m) {
            out.exhausted = true;
            out.converged = true;
            break;
        }
        const std::size_t i = next_row;
        used[i] = 1;
        ++n_used;
        out.pivot_rows.push_back(i);

        std::vector<complex_t> row = row_fn(i);
        if (row.size() != n)
            throw DimensionError("ACA row function returned a row of wrong length");
        double orig_max = 0.0;
        for (const auto& x : row)
            orig_max = std::max(orig_max, std::abs(x));
        for (std::size_t l = 0; l < out.u.size(); ++l) {
            const complex_t ul = out.u[l][i];
            if (ul != 0.0)
                for (std::size_t j = 0; j < n; ++j)
                    row[j] -= ul * out.v[l][j];
        }
        std::size_t jp = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(row[j]) > best) {
                best = std::abs(row[j]);
                jp = j;
            }
        // vanishing residual row: keep it in Z and move on
        if (best == 0.0 || best <= 1e-14 * orig_max) {
            next_row = first_unused();
            continue;
        }

        const complex_t pivot = row[jp];
        std::vector<complex_t> vk(n);
        for (std::size_t j = 0; j < n; ++j)
            vk[j] = row[j] / pivot;
        std::vector<complex_t> uk = col_fn(jp);
        if (uk.size() != m)
            throw DimensionError("ACA column function returned a column of wrong length");
        for (std::size_t l = 0; l < out.u.size(); ++l) {
            const complex_t vl = out.v[l][jp];
            if (vl != 0.0)
                for (std::size_t r = 0; r < m; ++r)
                    uk[r] -= vl * out.u[l][r];
        }

        double nu2 = 0.0, nv2 = 0.0;
        for (const auto& x : uk)
            nu2 += std::norm(x);
        for (const auto& x : vk)
            nv2 += std::norm(x);
        double cross_terms = 0.0;
        for (std::size_t l = 0; l < out.u.size(); ++l) {
            complex_t uu = 0.0, vv = 0.0;
            for (std::size_t r = 0; r < m; ++r)
                uu += std::conj(out.u[l][r]) * uk[r];
            for (std::size_t j = 0; j < n; ++j)
                vv += std::conj(out.v[l][j]) * vk[j];
            cross_terms += 2.0 * (uu * vv).real();
        }
        const double step = std::sqrt(nu2 * nv2);
        const double new_norm2 = std::max(0.0, s_norm2 + nu2 * nv2 + cross_terms);

        if (!out.u.empty() && step <= cfg.tolerance * std::sqrt(new_norm2)) {
            // this update is already below the tolerance and is not needed
            out.residual_estimate = step / std::sqrt(new_norm2);
            out.converged = true;
            break;
        }
        out.u.push_back(std::move(uk));
        out.v.push_back(std::move(vk));
        s_norm2 = new_norm2;
        out.residual_estimate = s_norm2 > 0.0 ? step / std::sqrt(s_norm2) : 0.0;

        if (out.u.size() >= kmax) {
            out.converged = false;
            break;
        }

        // next row: largest entry of the new column among the unused rows
        const auto& ul = out.u.back();
        double big = -1.0;
        next_row = m;
        for (std::size_t r = 0; r < m; ++r)
            if (!used[r] && std::abs(ul[r]) > big) {
                big = std::abs(ul[r]);
                next_row = r;
            }
        if (next_row == m) {
            out.exhausted = true;
            out.converged = true;
            break;
        }
    }
    return out;
}

struct HMatrixConfig {
    double eta = 2.0;
    std::size_t n_min = 32;
    AcaConfig aca;
    unsigned workers = hardware_workers();
    std::size_t chunk_size = std::size_t{1} << 20; // max pairs per backend batch
    int singular_order = 4;

    void validate() const
    {
        aca.validate();
        if (eta < 0.0)
            throw ConfigError("admissibility parameter must be non-negative");
        if (workers < 1)
            throw ConfigError("worker count must be at least 1");
        if (chunk_size < 1)
            throw ConfigError("chunk size must be at least 1");
    }
};

// Thrown when assembling one block fails; carries the block's tree ranges.
class BlockError : public Error {
public:
    BlockError(const std::string& msg, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
               std::size_t col_end)
        : Error("block rows [" + std::to_string(row_begin) + "," + std::to_string(row_end) + ") cols [" +
                std::to_string(col_begin) + "," + std::to_string(col_end) + "): " + msg)
    {
    }
};

struct LeafPayload {
    bool dense = true;
    bool fallback = false; // admissible but ACA did not converge
    std::vector<complex_t> values; // row-major, dense payload
    LowRankBlock low_rank;
};

struct RoutingCounters {
    std::atomic<std::size_t> backend_jobs{0}, host_jobs{0};
    std::atomic<std::size_t> backend_pairs{0}, host_pairs{0};
};

class HMatrix {
public:
    HMatrix(std::shared_ptr<const BlockClusterTree> tree, std::vector<LeafPayload> payloads)
        : tree_(std::move(tree)), payloads_(std::move(payloads))
    {
        if (payloads_.size() != tree_->leaves().size())
            throw DimensionError("payload count does not match leaf count");
    }

    const BlockClusterTree& tree() const { return *tree_; }
    const std::vector<LeafPayload>& payloads() const { return payloads_; }
    std::size_t rows() const { return tree_->rows().size(); }
    std::size_t cols() const { return tree_->cols().size(); }

private:
    std::shared_ptr<const BlockClusterTree> tree_;
    std::vector<LeafPayload> payloads_;
};

namespace detail {

// Evaluates sub-blocks of the Galerkin matrix by summing element-pair
// contributions over the supports of the requested DOFs.
class SubmatrixEvaluator {
public:
    SubmatrixEvaluator(const FunctionSpace& test, const FunctionSpace& trial, const PairIntegrator& host,
                       const SingularCache& singular, const BackendList& backends, const HMatrixConfig& cfg,
                       RoutingCounters& counters)
        : test_(test), trial_(trial), host_(host), singular_(singular), backends_(backends), cfg_(cfg),
          counters_(counters)
    {
    }

    // Entries (rows × cols) in row-major order. `allow_offload` enables backend
    // routing for large jobs.
    std::vector<complex_t> evaluate(std::span<const std::size_t> rows, std::span<const std::size_t> cols,
                                    bool allow_offload) const
    {
        thread_local std::vector<int> row_pos, col_pos;
        if (row_pos.size() < test_.dof_count())
            row_pos.assign(test_.dof_count(), -1);
        if (col_pos.size() < trial_.dof_count())
            col_pos.assign(trial_.dof_count(), -1);
        for (std::size_t i = 0; i < rows.size(); ++i)
            row_pos[rows[i]] = static_cast<int>(i);
        for (std::size_t j = 0; j < cols.size(); ++j)
            col_pos[cols[j]] = static_cast<int>(j);
        auto reset = [&] {
            for (std::size_t d : rows)
                row_pos[d] = -1;
            for (std::size_t d : cols)
                col_pos[d] = -1;
        };

        const std::vector<int> ea = support_elements(test_, rows);
        const std::vector<int> eb = support_elements(trial_, cols);
        std::vector<complex_t> out(rows.size() * cols.size());
        const std::size_t pair_count = ea.size() * eb.size();
        const int nt = test_.local_dof_count(), ns = trial_.local_dof_count();
        const TriangleMesh& mesh = test_.mesh();

        auto host_block = [&](int a, int b) {
            const auto idx = singular_.neighbours().find(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            if (idx >= 0)
                return singular_.block(static_cast<std::size_t>(idx));
            return host_.local_matrix(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        };
        auto scatter = [&](int a, int b, auto&& value) {
            for (int i = 0; i < nt; ++i) {
                const int r = row_pos[test_.global_dof(static_cast<std::size_t>(a), i)];
                if (r < 0)
                    continue;
                for (int j = 0; j < ns; ++j) {
                    const int c = col_pos[trial_.global_dof(static_cast<std::size_t>(b), j)];
                    if (c >= 0)
                        out[static_cast<std::size_t>(r) * cols.size() + static_cast<std::size_t>(c)] += value(i, j);
                }
            }
        };

        try {
            if (allow_offload && !backends_.empty() && pair_count >= cfg_.aca.offload_threshold) {
                counters_.backend_jobs.fetch_add(1);
                counters_.backend_pairs.fetch_add(pair_count);
                const BatchedIntegrator& be = *backends_[next_backend_.fetch_add(1) % backends_.size()];
                BatchRequest req;
                req.spec = be.context().spec;
                std::vector<std::pair<int, int>> near;
                auto flush = [&] {
                    const RawResultBuffer buf = be.integrate_batch(req);
                    for (std::size_t p = 0; p < req.pairs.size(); ++p)
                        scatter(req.pairs[p].first, req.pairs[p].second,
                                [&](int i, int j) { return buf.value(p, i, j); });
                    req.pairs.clear();
                };
                for (int a : ea)
                    for (int b : eb) {
                        if (shares_vertex(mesh.elements[static_cast<std::size_t>(a)],
                                          mesh.elements[static_cast<std::size_t>(b)]))
                            near.emplace_back(a, b);
                        else
                            req.pairs.emplace_back(a, b);
                        if (req.pairs.size() >= cfg_.chunk_size)
                            flush();
                    }
                if (!req.pairs.empty())
                    flush();
                for (const auto& [a, b] : near) {
                    const LocalBlock blk = host_block(a, b);
                    scatter(a, b, [&](int i, int j) { return blk.at(i, j); });
                }
            } else {
                counters_.host_jobs.fetch_add(1);
                counters_.host_pairs.fetch_add(pair_count);
                for (int a : ea)
                    for (int b : eb) {
                        const LocalBlock blk = host_block(a, b);
                        scatter(a, b, [&](int i, int j) { return blk.at(i, j); });
                    }
            }
        } catch (...) {
            reset();
            throw;
        }
        reset();
        return out;
    }

private:
    static std::vector<int> support_elements(const FunctionSpace& s, std::span<const std::size_t> dofs)
    {
        std::vector<int> els;
        for (std::size_t d : dofs)
            for (const LocalDof& ld : s.support(d))
                els.push_back(ld.element);
        std::sort(els.begin(), els.end());
        els.erase(std::unique(els.begin(), els.end()), els.end());
        return els;
    }

    const FunctionSpace& test_;
    const FunctionSpace& trial_;
    const PairIntegrator& host_;
    const SingularCache& singular_;
    const BackendList& backends_;
    const HMatrixConfig& cfg_;
    RoutingCounters& counters_;
    mutable std::atomic<std::size_t> next_backend_{0};
};

} // namespace detail

struct HMatrixStats {
    std::size_t admissible_leaves = 0, dense_leaves = 0, fallback_leaves = 0;
    std::size_t backend_jobs = 0, host_jobs = 0, backend_pairs = 0, host_pairs = 0;
};

// Compressed assembly: dense host evaluation of inadmissible leaves, ACA on
// admissible ones. One worker owns each leaf from start to finish.
inline HMatrix assemble_hmatrix(const OperatorSpec& spec, const FunctionSpace& test, const FunctionSpace& trial,
                                const ElementGeometry& geometry, std::shared_ptr<const BlockClusterTree> tree,
                                const HMatrixConfig& cfg, const BackendList& backends, HMatrixStats* stats = nullptr)
{
    spec.validate();
    cfg.validate();
    if (!test.same_mesh(trial))
        throw ConfigError("test and trial spaces must live on the same mesh");
    if (tree->rows().size() != test.dof_count() || tree->cols().size() != trial.dof_count())
        throw DimensionError("block tree does not match the space dimensions");
    for (const auto& be : backends)
        if (!(be->context().spec == spec))
            throw ConfigError("backend " + be->name() + " was initialised for a different operator");

    const PairIntegrator host(spec, test, trial, geometry, cfg.singular_order);
    const SingularCache singular(test.mesh(), host, cfg.workers);
    RoutingCounters counters;
    const detail::SubmatrixEvaluator eval(test, trial, host, singular, backends, cfg, counters);
    const auto& leaves = tree->leaves();
    const auto& rperm = tree->rows().perm();
    const auto& cperm = tree->cols().perm();
    std::vector<LeafPayload> payloads(leaves.size());

    WorkerPool pool(cfg.workers);
    pool.for_each(leaves.size(), [&](std::size_t li) {
        const BlockLeaf& leaf = leaves[li];
        const ClusterNode& rn = tree->rows().node(leaf.row_node);
        const ClusterNode& cn = tree->cols().node(leaf.col_node);
        const std::span<const std::size_t> rows(rperm.data() + rn.begin, rn.size());
        const std::span<const std::size_t> cols(cperm.data() + cn.begin, cn.size());
        LeafPayload& p = payloads[li];
        try {
            if (!leaf.admissible) {
                p.values = eval.evaluate(rows, cols, false);
                return;
            }
            LowRankBlock lr = aca([&](std::size_t i) { return eval.evaluate(rows.subspan(i, 1), cols, true); },
                                  [&](std::size_t j) { return eval.evaluate(rows, cols.subspan(j, 1), true); },
                                  rows.size(), cols.size(), cfg.aca);
            if (!lr.converged) {
                p.fallback = true;
                p.values = eval.evaluate(rows, cols, false);
                return;
            }
            p.dense = false;
            p.low_rank = std::move(lr);
        } catch (const std::exception& e) {
            throw BlockError(e.what(), rn.begin, rn.end, cn.begin, cn.end);
        }
    });

    if (stats) {
        *stats = {};
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            if (leaves[i].admissible)
                ++stats->admissible_leaves;
            if (payloads[i].dense)
                ++stats->dense_leaves;
            if (payloads[i].fallback)
                ++stats->fallback_leaves;
        }
        stats->backend_jobs = counters.backend_jobs.load();
        stats->host_jobs = counters.host_jobs.load();
        stats->backend_pairs = counters.backend_pairs.load();
        stats->host_pairs = counters.host_pairs.load();
    }
    return HMatrix(std::move(tree), std::move(payloads));
}

// Convenience: builds geometry, trees and backends from scratch.
inline HMatrix assemble_hmatrix(const OperatorSpec& spec, const FunctionSpace& test, const FunctionSpace& trial,
                                const HMatrixConfig& cfg, int devices = 1, HMatrixStats* stats = nullptr,
                                int regular_order = 4)
{
    const ElementGeometry geometry = precompute_geometry(test.mesh(), regular_rule(regular_order));
    auto rows = std::make_shared<const ClusterTree>(build_cluster_tree(test, cfg.n_min));
    auto cols = std::make_shared<const ClusterTree>(build_cluster_tree(trial, cfg.n_min));
    auto tree = std::make_shared<const BlockClusterTree>(rows, cols, cfg.eta);
    const auto backends = make_host_backends(spec, test, trial, geometry, devices);
    return assemble_hmatrix(spec, test, trial, geometry, std::move(tree), cfg, backends, stats);
}

// y = H x in the original DOF ordering.
inline std::vector<complex_t> hmat_matvec(const HMatrix& h, std::span<const complex_t> x)
{
    if (x.size() != h.cols())
        throw DimensionError("H-matrix matvec dimension mismatch");
    const auto& rt = h.tree().rows();
    const auto& ct = h.tree().cols();
    std::vector<complex_t> xt(x.size()), yt(h.rows(), complex_t{});
    for (std::size_t t = 0; t < xt.size(); ++t)
        xt[t] = x[ct.perm()[t]];
    const auto& leaves = h.tree().leaves();
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const ClusterNode& rn = rt.node(leaves[li].row_node);
        const ClusterNode& cn = ct.node(leaves[li].col_node);
        const LeafPayload& p = h.payloads()[li];
        if (p.dense) {
            const std::size_t nc = cn.size();
            for (std::size_t i = 0; i < rn.size(); ++i) {
                complex_t s = 0.0;
                const complex_t* row = p.values.data() + i * nc;
                for (std::size_t j = 0; j < nc; ++j)
                    s += row[j] * xt[cn.begin + j];
                yt[rn.begin + i] += s;
            }
        } else {
            p.low_rank.apply_add(xt.data() + cn.begin, yt.data() + rn.begin);
        }
    }
    std::vector<complex_t> y(h.rows());
    for (std::size_t t = 0; t < yt.size(); ++t)
        y[rt.perm()[t]] = yt[t];
    return y;
}

struct CompressionReport {
    std::size_t stored_entries = 0;
    std::size_t dense_entries = 0;
    double ratio = 1.0;
    std::map<std::size_t, std::size_t> rank_histogram; // rank -> low-rank leaf count
};

inline CompressionReport compression_stats(const HMatrix& h)
{
    CompressionReport r;
    r.dense_entries = h.rows() * h.cols();
    const auto& leaves = h.tree().leaves();
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const std::size_t m = h.tree().rows().node(leaves[li].row_node).size();
        const std::size_t n = h.tree().cols().node(leaves[li].col_node).size();
        const LeafPayload& p = h.payloads()[li];
        if (p.dense) {
            r.stored_entries += m * n;
        } else {
            r.stored_entries += p.low_rank.rank() * (m + n);
            ++r.rank_histogram[p.low_rank.rank()];
        }
    }
    r.ratio = r.dense_entries ? static_cast<double>(r.stored_entries) / static_cast<double>(r.dense_entries) : 1.0;
    return r;
}

} // namespace hbem
