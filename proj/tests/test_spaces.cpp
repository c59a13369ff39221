#include "hbem/spaces.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace hbem;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::shared_ptr<const TriangleMesh> sphere(int level)
{
    return std::make_shared<const TriangleMesh>(refine_unit_sphere(level));
}

// n x n grid of squares in the z = 0 plane, two triangles each, normal +z
std::shared_ptr<const TriangleMesh> plane(int n)
{
    TriangleMesh m;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            m.vertices.push_back({static_cast<double>(i), static_cast<double>(j), 0.0});
    auto id = [&](int i, int j) { return i * (n + 1) + j; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            m.elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.elements.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return std::make_shared<const TriangleMesh>(std::move(m));
}

Vec3 bary_point(const TriangleMesh& m, std::size_t e, double xi, double eta)
{
    return (1.0 - xi - eta) * m.corner(e, 0) + xi * m.corner(e, 1) + eta * m.corner(e, 2);
}

// value of a continuous P1 function on element e at a global point lying on it
double evaluate_on(const FunctionSpace& s, const std::vector<double>& c, std::size_t e, const Vec3& p)
{
    const TriangleMesh& m = s.mesh();
    const Vec3 a = m.corner(e, 0), e1 = m.corner(e, 1) - a, e2 = m.corner(e, 2) - a;
    // solve p - a = xi e1 + eta e2 in the least-squares sense
    const double g11 = dot(e1, e1), g12 = dot(e1, e2), g22 = dot(e2, e2);
    const double r1 = dot(p - a, e1), r2 = dot(p - a, e2);
    const double det = g11 * g22 - g12 * g12;
    const double xi = (r1 * g22 - r2 * g12) / det, eta = (g11 * r2 - g12 * r1) / det;
    const auto v = shape_values(SpaceFamily::P1Continuous, xi, eta);
    double s_ = 0.0;
    for (int l = 0; l < 3; ++l)
        s_ += c[static_cast<std::size_t>(s.global_dof(e, l))] * v[l];
    return s_;
}

} // namespace

TEST_CASE("build_space: DOF counts on the icosahedron")
{
    const auto m = sphere(0);
    CHECK(build_space(m, SpaceFamily::P0).dof_count() == 20);
    CHECK(build_space(m, SpaceFamily::P1Continuous).dof_count() == 12);
    CHECK(build_space(m, SpaceFamily::P1Discontinuous).dof_count() == 60);
}

TEST_CASE("build_space: DOF map invariants")
{
    const auto m = sphere(2);
    const auto p0 = build_space(m, SpaceFamily::P0);
    for (std::size_t e = 0; e < m->element_count(); ++e)
        CHECK(p0.global_dof(e, 0) == static_cast<int>(e));

    const auto dp1 = build_space(m, SpaceFamily::P1Discontinuous);
    std::set<int> seen;
    for (std::size_t e = 0; e < m->element_count(); ++e)
        for (int l = 0; l < 3; ++l)
            CHECK(seen.insert(dp1.global_dof(e, l)).second);
    CHECK(seen.size() == dp1.dof_count());

    const auto p1 = build_space(m, SpaceFamily::P1Continuous);
    CHECK(p1.dof_count() == m->vertex_count());
    std::set<int> hit;
    for (std::size_t e = 0; e < m->element_count(); ++e)
        for (int l = 0; l < 3; ++l) {
            const int d = p1.global_dof(e, l);
            CHECK(d >= 0);
            CHECK(d < static_cast<int>(p1.dof_count()));
            hit.insert(d);
        }
    CHECK(hit.size() == p1.dof_count());
    CHECK_FALSE(p1.element_local_dofs());
    CHECK(dp1.element_local_dofs());
    CHECK(p0.element_local_dofs());
}

TEST_CASE("P1 continuity across shared edges")
{
    const auto m = sphere(2);
    const auto p1 = build_space(m, SpaceFamily::P1Continuous);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> c(p1.dof_count());
    for (auto& x : c)
        x = nd(rng);
    std::size_t checked = 0;
    for (std::size_t a = 0; a < m->element_count(); ++a)
        for (std::size_t b = a + 1; b < m->element_count(); ++b) {
            std::vector<int> shared;
            for (int v : m->elements[a])
                for (int w : m->elements[b])
                    if (v == w)
                        shared.push_back(v);
            if (shared.size() != 2)
                continue;
            for (double t : {0.25, 0.5, 0.8}) {
                const Vec3 p = (1.0 - t) * m->vertices[shared[0]] + t * m->vertices[shared[1]];
                CHECK_THAT(evaluate_on(p1, c, a, p), WithinAbs(evaluate_on(p1, c, b, p), 1e-12));
            }
            ++checked;
        }
    CHECK(checked == 3 * m->element_count() / 2);
}

TEST_CASE("evaluate_basis: nodal values and partition of unity")
{
    const auto v = shape_values(SpaceFamily::P1Continuous, 0.0, 0.0);
    CHECK(v == std::array<double, 3>{1.0, 0.0, 0.0});
    const auto m = sphere(0);
    for (int order = 1; order <= 4; ++order) {
        const auto rule = regular_rule(order);
        const auto t1 = evaluate_basis(build_space(m, SpaceFamily::P1Discontinuous), rule);
        const auto t0 = evaluate_basis(build_space(m, SpaceFamily::P0), rule);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            CHECK_THAT(t1.value(0, q) + t1.value(1, q) + t1.value(2, q), WithinAbs(1.0, 1e-14));
            CHECK(t0.value(0, q) == 1.0);
            CHECK_THAT(t1.value(1, q), WithinAbs(rule.points[q][0], 1e-15));
            CHECK_THAT(t1.value(2, q), WithinAbs(rule.points[q][1], 1e-15));
        }
    }
}

TEST_CASE("surface_curl: right triangle, tangency, sum zero")
{
    TriangleMesh one;
    one.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    one.elements = {{0, 1, 2}};
    const auto m1 = std::make_shared<const TriangleMesh>(one);
    const auto g1 = precompute_geometry(*m1, regular_rule(1));
    const auto s1 = build_space(m1, SpaceFamily::P1Continuous);
    const Vec3 c0 = surface_curl(s1, g1, 0, 0);
    CHECK_THAT(c0[0], WithinAbs(1.0, 1e-14));
    CHECK_THAT(c0[1], WithinAbs(-1.0, 1e-14));
    CHECK_THAT(c0[2], WithinAbs(0.0, 1e-14));

    const auto m = sphere(2);
    const auto g = precompute_geometry(*m, regular_rule(1));
    const auto p1 = build_space(m, SpaceFamily::P1Continuous);
    for (std::size_t e = 0; e < m->element_count(); ++e) {
        Vec3 sum{0, 0, 0};
        for (int l = 0; l < 3; ++l) {
            const Vec3 c = surface_curl(p1, g, e, l);
            CHECK(std::abs(dot(c, g.normal(e))) < 1e-12 * norm(c));
            sum = sum + c;
        }
        CHECK(norm(sum) < 1e-12);
    }
    CHECK_THROWS_AS(surface_curl(build_space(m, SpaceFamily::P0), g, 0, 0), UnsupportedError);
}

TEST_CASE("transform matrices: planar mesh normals")
{
    const auto m = plane(3);
    const auto g = precompute_geometry(*m, regular_rule(4));
    const auto p1 = build_space(m, SpaceFamily::P1Continuous);
    const auto dp1 = build_space(m, SpaceFamily::P1Discontinuous);
    const auto t = sparse_transform_matrices(p1, dp1, g);
    CHECK(t.normal[0].nonzeros() == 0);
    CHECK(t.normal[1].nonzeros() == 0);
    CHECK(t.normal[2].nonzeros() == dp1.dof_count());
    for (const auto& tr : t.normal[2].triplets) {
        CHECK(tr.value == 1.0);
        CHECK(norm(dp1.dof_centers()[tr.row] - p1.dof_centers()[tr.col]) == 0.0);
    }
}

TEST_CASE("transform matrices: constants have zero curl, sparsity")
{
    const auto m = sphere(2);
    const auto g = precompute_geometry(*m, regular_rule(4));
    const auto p1 = build_space(m, SpaceFamily::P1Continuous);
    const auto dp1 = build_space(m, SpaceFamily::P1Discontinuous);
    const auto t = sparse_transform_matrices(p1, dp1, g);
    const std::vector<double> ones(p1.dof_count(), 1.0);
    const std::size_t M = m->element_count();
    for (int j = 0; j < 3; ++j) {
        CHECK(t.curl[j].rows == dp1.dof_count());
        CHECK(t.curl[j].cols == p1.dof_count());
        for (double v : t.curl[j].multiply<double>(ones))
            CHECK(std::abs(v) < 1e-12);
        CHECK(t.normal[j].nonzeros() <= 3 * M);
        // a constant curl per element needs all three DP1 coefficients
        CHECK(t.curl[j].nonzeros() <= 9 * M);
        // P_j · 1 reproduces n_j at every DP1 node
        const auto pn = t.normal[j].multiply<double>(ones);
        for (std::size_t e = 0; e < M; ++e)
            for (int l = 0; l < 3; ++l)
                CHECK_THAT(pn[static_cast<std::size_t>(dp1.global_dof(e, l))], WithinAbs(g.normal(e)[j], 1e-15));
    }
    // Q_j c reproduces the j-th curl component of a random continuous function
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    std::vector<double> c(p1.dof_count());
    for (auto& x : c)
        x = nd(rng);
    for (int j = 0; j < 3; ++j) {
        const auto qc = t.curl[j].multiply<double>(c);
        for (std::size_t e = 0; e < M; ++e) {
            double expect = 0.0;
            for (int l = 0; l < 3; ++l)
                expect += c[static_cast<std::size_t>(p1.global_dof(e, l))] * surface_curl(p1, g, e, l)[j];
            for (int l = 0; l < 3; ++l)
                CHECK_THAT(qc[static_cast<std::size_t>(dp1.global_dof(e, l))], WithinAbs(expect, 1e-12));
        }
    }
}

TEST_CASE("transform matrices: mismatched meshes")
{
    const auto a = sphere(1), b = sphere(1);
    const auto g = precompute_geometry(*a, regular_rule(4));
    CHECK_THROWS_AS(sparse_transform_matrices(build_space(a, SpaceFamily::P1Continuous),
                                              build_space(b, SpaceFamily::P1Discontinuous), g),
                    ConfigError);
}

TEST_CASE("mass matrix: P0 diagonal, totals, unit triangle")
{
    const auto m = sphere(2);
    const auto g = precompute_geometry(*m, regular_rule(4));
    const auto p0 = build_space(m, SpaceFamily::P0);
    const auto mass0 = assemble_mass(p0, p0, g, g.rule);
    CHECK(mass0.nonzeros() == m->element_count());
    double total_area = 0.0;
    for (const auto& t : mass0.triplets) {
        CHECK(t.row == t.col);
        CHECK_THAT(t.value, WithinRel(m->element_area(t.row), 1e-14));
        total_area += m->element_area(t.row);
    }
    for (auto fam : {SpaceFamily::P1Continuous, SpaceFamily::P1Discontinuous}) {
        const auto s = build_space(m, fam);
        const auto mass = assemble_mass(s, s, g, g.rule);
        double sum = 0.0;
        for (const auto& t : mass.triplets)
            sum += t.value;
        CHECK_THAT(sum, WithinRel(total_area, 1e-12));
    }

    TriangleMesh one;
    one.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    one.elements = {{0, 1, 2}};
    const auto m1 = std::make_shared<const TriangleMesh>(one);
    const auto g1 = precompute_geometry(*m1, regular_rule(2));
    const auto s1 = build_space(m1, SpaceFamily::P1Continuous);
    const auto mass1 = assemble_mass(s1, s1, g1, g1.rule);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK_THAT(mass1.at(i, j), WithinAbs(0.5 / 12.0 * (i == j ? 2.0 : 1.0), 1e-15));
}

TEST_CASE("mass matrix: symmetric positive definite")
{
    const auto m = sphere(2);
    const auto g = precompute_geometry(*m, regular_rule(4));
    const auto p1 = build_space(m, SpaceFamily::P1Continuous);
    const auto mass = assemble_mass(p1, p1, g, g.rule);
    for (const auto& t : mass.triplets)
        CHECK_THAT(mass.at(t.col, t.row), WithinAbs(t.value, 1e-15));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int k = 0; k < 10; ++k) {
        std::vector<double> x(p1.dof_count());
        for (auto& v : x)
            v = nd(rng);
        const auto mx = mass.multiply<double>(x);
        double q = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            q += x[i] * mx[i];
        CHECK(q > 0.0);
    }
}

TEST_CASE("sparse matrix: duplicates and bounds")
{
    SparseMatrix s;
    s.rows = 2;
    s.cols = 3;
    s.add(1, 2, 1.5);
    s.add(1, 2, 2.0);
    s.add(0, 0, -1.0);
    s.finalize();
    CHECK(s.nonzeros() == 2);
    CHECK(s.at(1, 2) == 3.5);
    CHECK_THROWS_AS(s.add(2, 0, 1.0), DimensionError);
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto y = s.multiply<double>(x);
    CHECK(y == std::vector<double>{-1.0, 10.5});
    const auto z = s.transpose_multiply<double>(std::vector<double>{1.0, 1.0});
    CHECK(z == std::vector<double>{-1.0, 0.0, 3.5});
}
