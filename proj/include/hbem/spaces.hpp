#pragma once

// Piecewise constant and piecewise linear function spaces on triangle meshes,
// their basis tables, surface curls, sparse mass matrices and the sparse
// transforms that express the hypersingular operator through a single-layer
// operator on the discontinuous linear space.

#include "hbem/geometry.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

namespace hbem {

enum class SpaceFamily { P0, P1Continuous, P1Discontinuous };

inline const char* to_string(SpaceFamily f)
{
    switch (f) {
    case SpaceFamily::P0: return "P0";
    case SpaceFamily::P1Continuous: return "P1";
    case SpaceFamily::P1Discontinuous: return "DP1";
    }
    return "?";
}

struct BoundingBox {
    Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max()};
    Vec3 hi{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
            std::numeric_limits<double>::lowest()};

    void extend(const Vec3& p)
    {
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], p[d]);
            hi[d] = std::max(hi[d], p[d]);
        }
    }
    void extend(const BoundingBox& b)
    {
        extend(b.lo);
        extend(b.hi);
    }
    double diameter() const { return norm(hi - lo); }
    double distance(const BoundingBox& o) const
    {
        double s = 0.0;
        for (int d = 0; d < 3; ++d) {
            const double gap = std::max({0.0, lo[d] - o.hi[d], o.lo[d] - hi[d]});
            s += gap * gap;
        }
        return std::sqrt(s);
    }
};

struct LocalDof {
    int element;
    int local;
};

class FunctionSpace {
public:
    FunctionSpace(std::shared_ptr<const TriangleMesh> mesh, SpaceFamily family) : mesh_(std::move(mesh)), family_(family)
    {
        if (!mesh_)
            throw ConfigError("function space requires a mesh");
        const std::size_t m = mesh_->element_count();
        const int nl = local_dof_count();
        local_to_global_.resize(m * nl);
        switch (family_) {
        case SpaceFamily::P0:
            std::iota(local_to_global_.begin(), local_to_global_.end(), 0);
            dof_count_ = m;
            break;
        case SpaceFamily::P1Discontinuous:
            std::iota(local_to_global_.begin(), local_to_global_.end(), 0);
            dof_count_ = 3 * m;
            break;
        case SpaceFamily::P1Continuous: {
            // vertices not referenced by any element receive no DOF
            std::vector<int> vertex_dof(mesh_->vertex_count(), -1);
            int next = 0;
            for (std::size_t e = 0; e < m; ++e)
                for (int i = 0; i < 3; ++i) {
                    int& d = vertex_dof[mesh_->elements[e][i]];
                    if (d < 0)
                        d = next++;
                }
            for (std::size_t e = 0; e < m; ++e)
                for (int i = 0; i < 3; ++i)
                    local_to_global_[e * 3 + i] = vertex_dof[mesh_->elements[e][i]];
            dof_count_ = static_cast<std::size_t>(next);
            break;
        }
        }

        support_offsets_.assign(dof_count_ + 1, 0);
        for (int d : local_to_global_)
            ++support_offsets_[d + 1];
        std::partial_sum(support_offsets_.begin(), support_offsets_.end(), support_offsets_.begin());
        support_.resize(local_to_global_.size());
        std::vector<std::size_t> fill(support_offsets_.begin(), support_offsets_.end() - 1);
        for (std::size_t e = 0; e < m; ++e)
            for (int l = 0; l < nl; ++l)
                support_[fill[global_dof(e, l)]++] = {static_cast<int>(e), l};

        centers_.resize(dof_count_);
        bounds_.resize(dof_count_);
        for (std::size_t d = 0; d < dof_count_; ++d) {
            const auto sup = support(d);
            const LocalDof first = sup.front();
            if (family_ == SpaceFamily::P0) {
                const auto e = static_cast<std::size_t>(first.element);
                centers_[d] = (1.0 / 3.0) * (mesh_->corner(e, 0) + mesh_->corner(e, 1) + mesh_->corner(e, 2));
            } else {
                centers_[d] = mesh_->corner(static_cast<std::size_t>(first.element), first.local);
            }
            for (const auto& ld : sup)
                for (int i = 0; i < 3; ++i)
                    bounds_[d].extend(mesh_->corner(static_cast<std::size_t>(ld.element), i));
        }
    }

    SpaceFamily family() const { return family_; }
    const TriangleMesh& mesh() const { return *mesh_; }
    const std::shared_ptr<const TriangleMesh>& mesh_ptr() const { return mesh_; }
    std::size_t dof_count() const { return dof_count_; }
    std::size_t element_count() const { return mesh_->element_count(); }
    int local_dof_count() const { return family_ == SpaceFamily::P0 ? 1 : 3; }
    bool is_linear() const { return family_ != SpaceFamily::P0; }
    // True when every DOF is supported on exactly one element.
    bool element_local_dofs() const { return family_ != SpaceFamily::P1Continuous; }

    int global_dof(std::size_t element, int local) const
    {
        return local_to_global_[element * static_cast<std::size_t>(local_dof_count()) + local];
    }
    std::span<const int> local_to_global() const { return local_to_global_; }

    // Elements (with local index) on which basis function `dof` is nonzero.
    std::span<const LocalDof> support(std::size_t dof) const
    {
        return {support_.data() + support_offsets_[dof], support_offsets_[dof + 1] - support_offsets_[dof]};
    }
    const std::vector<Vec3>& dof_centers() const { return centers_; }
    const std::vector<BoundingBox>& dof_bounds() const { return bounds_; }

    bool same_mesh(const FunctionSpace& other) const { return mesh_ == other.mesh_; }

private:
    std::shared_ptr<const TriangleMesh> mesh_;
    SpaceFamily family_;
    std::size_t dof_count_ = 0;
    std::vector<int> local_to_global_;
    std::vector<std::size_t> support_offsets_;
    std::vector<LocalDof> support_;
    std::vector<Vec3> centers_;
    std::vector<BoundingBox> bounds_;
};

inline FunctionSpace build_space(std::shared_ptr<const TriangleMesh> mesh, SpaceFamily family)
{
    return FunctionSpace(std::move(mesh), family);
}

// Reference shape functions: constant 1 (P0) or (1 - xi - eta, xi, eta) (P1).
inline std::array<double, 3> shape_values(SpaceFamily family, double xi, double eta)
{
    if (family == SpaceFamily::P0)
        return {1.0, 0.0, 0.0};
    return {1.0 - xi - eta, xi, eta};
}

inline std::array<std::array<double, 2>, 3> reference_gradients()
{
    return {{{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}}};
}

struct BasisTable {
    SpaceFamily family = SpaceFamily::P0;
    int local_dofs = 0;
    std::size_t points = 0;
    std::vector<double> values; // local_dof * points + q
    std::vector<std::array<double, 2>> gradients; // per local dof, reference coordinates

    double value(int local, std::size_t q) const { return values[static_cast<std::size_t>(local) * points + q]; }
};

inline BasisTable evaluate_basis(SpaceFamily family, const QuadratureRule& rule)
{
    BasisTable t;
    t.family = family;
    t.local_dofs = family == SpaceFamily::P0 ? 1 : 3;
    t.points = rule.size();
    t.values.resize(static_cast<std::size_t>(t.local_dofs) * t.points);
    for (std::size_t q = 0; q < t.points; ++q) {
        const auto v = shape_values(family, rule.points[q][0], rule.points[q][1]);
        for (int l = 0; l < t.local_dofs; ++l)
            t.values[l * t.points + q] = v[l];
    }
    if (family == SpaceFamily::P0)
        t.gradients = {{0.0, 0.0}};
    else {
        const auto g = reference_gradients();
        t.gradients.assign(g.begin(), g.end());
    }
    return t;
}

inline BasisTable evaluate_basis(const FunctionSpace& space, const QuadratureRule& rule)
{
    return evaluate_basis(space.family(), rule);
}

// Surface gradient of the local P1 shape function `local` on element `e`.
inline Vec3 surface_gradient(const ElementGeometry& g, std::size_t e, int local)
{
    const Vec3 e1 = g.edge1(e), e2 = g.edge2(e);
    const double g11 = dot(e1, e1), g12 = dot(e1, e2), g22 = dot(e2, e2);
    const double det = g11 * g22 - g12 * g12;
    const auto rg = reference_gradients()[local];
    // G^{-1} * reference gradient
    const double a = (g22 * rg[0] - g12 * rg[1]) / det;
    const double b = (-g12 * rg[0] + g11 * rg[1]) / det;
    return a * e1 + b * e2;
}

// curl_G phi = n x grad_G phi, constant per element for P1 functions.
inline Vec3 element_curl(const ElementGeometry& g, std::size_t e, int local)
{
    return cross(g.normal(e), surface_gradient(g, e, local));
}

inline Vec3 surface_curl(const FunctionSpace& space, const ElementGeometry& geometry, std::size_t element, int local_dof)
{
    if (!space.is_linear())
        throw UnsupportedError("surface curl requires a piecewise linear space");
    if (local_dof < 0 || local_dof > 2)
        throw DimensionError("local DOF index out of range");
    return element_curl(geometry, element, local_dof);
}

// Triplet sparse matrix; duplicates are summed by finalize().
struct SparseMatrix {
    struct Triplet {
        std::size_t row, col;
        double value;
    };
    std::size_t rows = 0, cols = 0;
    std::vector<Triplet> triplets;

    void add(std::size_t r, std::size_t c, double v)
    {
        if (r >= rows || c >= cols)
            throw DimensionError("sparse triplet index out of range");
        triplets.push_back({r, c, v});
    }

    void finalize()
    {
        std::sort(triplets.begin(), triplets.end(),
                  [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
        std::vector<Triplet> merged;
        merged.reserve(triplets.size());
        for (const auto& t : triplets) {
            if (!merged.empty() && merged.back().row == t.row && merged.back().col == t.col)
                merged.back().value += t.value;
            else
                merged.push_back(t);
        }
        triplets = std::move(merged);
    }

    std::size_t nonzeros() const { return triplets.size(); }

    template <class T>
    std::vector<T> multiply(std::span<const T> x) const
    {
        if (x.size() != cols)
            throw DimensionError("sparse matvec dimension mismatch");
        std::vector<T> y(rows, T{});
        for (const auto& t : triplets)
            y[t.row] += t.value * x[t.col];
        return y;
    }

    template <class T>
    std::vector<T> transpose_multiply(std::span<const T> x) const
    {
        if (x.size() != rows)
            throw DimensionError("sparse transposed matvec dimension mismatch");
        std::vector<T> y(cols, T{});
        for (const auto& t : triplets)
            y[t.col] += t.value * x[t.row];
        return y;
    }

    double at(std::size_t r, std::size_t c) const
    {
        double s = 0.0;
        for (const auto& t : triplets)
            if (t.row == r && t.col == c)
                s += t.value;
        return s;
    }
};

// Q_j (curl components) and P_j (basis times normal components), each mapping
// continuous P1 coefficients to discontinuous P1 coefficients.
struct TransformMatrices {
    std::array<SparseMatrix, 3> curl;
    std::array<SparseMatrix, 3> normal;
};

inline TransformMatrices sparse_transform_matrices(const FunctionSpace& continuous, const FunctionSpace& discontinuous,
                                                   const ElementGeometry& geometry)
{
    if (!continuous.same_mesh(discontinuous))
        throw ConfigError("transform matrices require both spaces on the same mesh");
    if (continuous.family() != SpaceFamily::P1Continuous || discontinuous.family() != SpaceFamily::P1Discontinuous)
        throw UnsupportedError("transform matrices map P1 (continuous) to DP1 (discontinuous)");
    if (geometry.element_count != continuous.element_count())
        throw DimensionError("geometry does not match the mesh");

    TransformMatrices t;
    for (int j = 0; j < 3; ++j) {
        for (auto* s : {&t.curl[j], &t.normal[j]}) {
            s->rows = discontinuous.dof_count();
            s->cols = continuous.dof_count();
        }
    }
    for (std::size_t e = 0; e < continuous.element_count(); ++e) {
        const Vec3 n = geometry.normal(e);
        std::array<Vec3, 3> curls{};
        for (int b = 0; b < 3; ++b)
            curls[b] = element_curl(geometry, e, b);
        for (int a = 0; a < 3; ++a) {
            const auto row = static_cast<std::size_t>(discontinuous.global_dof(e, a));
            for (int j = 0; j < 3; ++j) {
                // constant curl component represented in the DP1 basis: same value at every local node
                for (int b = 0; b < 3; ++b)
                    t.curl[j].add(row, static_cast<std::size_t>(continuous.global_dof(e, b)), curls[b][j]);
                if (n[j] != 0.0)
                    t.normal[j].add(row, static_cast<std::size_t>(continuous.global_dof(e, a)), n[j]);
            }
        }
    }
    for (int j = 0; j < 3; ++j) {
        t.curl[j].finalize();
        t.normal[j].finalize();
    }
    return t;
}

// Galerkin mass matrix M[i, j] = int psi_i phi_j ds.
inline SparseMatrix assemble_mass(const FunctionSpace& test, const FunctionSpace& trial, const ElementGeometry& geometry,
                                  const QuadratureRule& rule)
{
    if (!test.same_mesh(trial))
        throw ConfigError("mass matrix requires both spaces on the same mesh");
    const BasisTable tt = evaluate_basis(test, rule), tr = evaluate_basis(trial, rule);
    SparseMatrix m;
    m.rows = test.dof_count();
    m.cols = trial.dof_count();
    for (std::size_t e = 0; e < test.element_count(); ++e) {
        const double j = geometry.jacobian[e];
        for (int a = 0; a < tt.local_dofs; ++a)
            for (int b = 0; b < tr.local_dofs; ++b) {
                double s = 0.0;
                for (std::size_t q = 0; q < rule.size(); ++q)
                    s += rule.weights[q] * tt.value(a, q) * tr.value(b, q);
                m.add(static_cast<std::size_t>(test.global_dof(e, a)), static_cast<std::size_t>(trial.global_dof(e, b)),
                      s * j);
            }
    }
    m.finalize();
    return m;
}

} // namespace hbem
