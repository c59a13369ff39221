#include "hbem/geometry.hpp"
#include "hbem/quadrature.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

using namespace hbem;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const char* minimal_gmsh = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
1
1 2 2 0 1 1 2 3
$EndElements
)";

TriangleMesh parse(const std::string& s)
{
    std::istringstream in(s);
    return parse_gmsh(in);
}

TriangleMesh single(const Vec3& a, const Vec3& b, const Vec3& c)
{
    TriangleMesh m;
    m.vertices = {a, b, c};
    m.elements = {{0, 1, 2}};
    return m;
}

} // namespace

TEST_CASE("gmsh: minimal triangle file")
{
    const auto m = parse(minimal_gmsh);
    CHECK(m.vertex_count() == 3);
    CHECK(m.element_count() == 1);
    CHECK(m.skipped_elements == 0);
    CHECK(m.elements[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("gmsh: line elements are skipped and counted")
{
    std::string s = minimal_gmsh;
    s.replace(s.find("1\n1 2 2"), 7, "2\n7 1 2 0 1 1 2\n1 2 2");
    const auto m = parse(s);
    CHECK(m.element_count() == 1);
    CHECK(m.skipped_elements == 1);
}

TEST_CASE("gmsh: unknown sections are ignored")
{
    std::string s = minimal_gmsh;
    s.insert(s.find("$Nodes"), "$PhysicalNames\n1\n2 1 \"hull\"\n$EndPhysicalNames\n");
    CHECK(parse(s).element_count() == 1);
}

TEST_CASE("gmsh: missing $EndNodes names the section")
{
    std::string s = minimal_gmsh;
    s.erase(s.find("$EndNodes"), 10);
    try {
        parse(s);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("$Nodes") != std::string::npos);
        CHECK(e.line() > 0);
    }
}

TEST_CASE("gmsh: malformed header and sections")
{
    CHECK_THROWS_AS(parse("$Mesh\n"), ParseError);
    CHECK_THROWS_AS(parse("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n"), ParseError);
    try {
        parse("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n$EndNodes\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("$Elements") != std::string::npos);
    }
    std::string bad = minimal_gmsh;
    bad.replace(bad.find("2 1 0 0"), 7, "2 1 zero 0");
    try {
        parse(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
    }
}

TEST_CASE("gmsh: no triangles gives an empty-mesh error")
{
    std::string s = minimal_gmsh;
    s.replace(s.find("1 2 2 0 1 1 2 3"), 15, "1 1 2 0 1 1 2");
    CHECK_THROWS_AS(parse(s), EmptyMeshError);
}

TEST_CASE("gmsh: out-of-range node reference")
{
    std::string s = minimal_gmsh;
    s.replace(s.find("1 2 3\n$EndElements"), 5, "1 2 9");
    CHECK_THROWS_AS(parse(s), ParseError);
}

TEST_CASE("gmsh: save/load round trip is the identity")
{
    const auto m = refine_unit_sphere(2);
    const auto path = std::filesystem::temp_directory_path() / "hbem_roundtrip.msh";
    save_mesh(m, path.string());
    const auto back = load_mesh(path.string());
    std::filesystem::remove(path);
    REQUIRE(back.vertex_count() == m.vertex_count());
    CHECK(back.elements == m.elements);
    for (std::size_t i = 0; i < m.vertex_count(); ++i)
        CHECK(back.vertices[i] == m.vertices[i]);
}

TEST_CASE("load_mesh: missing file")
{
    CHECK_THROWS_AS(load_mesh("/nonexistent/file.msh"), ParseError);
}

TEST_CASE("icosphere: counts and projection")
{
    for (int level = 0; level <= 4; ++level) {
        const auto m = refine_unit_sphere(level);
        const std::size_t p = std::size_t{1} << (2 * level);
        CHECK(m.element_count() == 20 * p);
        CHECK(m.vertex_count() == 10 * p + 2);
        double worst = 0.0;
        for (const auto& v : m.vertices)
            worst = std::max(worst, std::abs(norm(v) - 1.0));
        CHECK(worst < 1e-12);
        CHECK_NOTHROW(check_closed_orientation(m));
    }
    CHECK(refine_unit_sphere(0).vertex_count() == 12);
    CHECK(refine_unit_sphere(2).element_count() == 320);
}

TEST_CASE("icosphere: level limits")
{
    CHECK_THROWS_AS(refine_unit_sphere(9), CapacityError);
    CHECK_THROWS_AS(refine_unit_sphere(-1), ConfigError);
}

TEST_CASE("icosphere: area increases toward 4 pi")
{
    double prev = 0.0;
    for (int level = 0; level <= 4; ++level) {
        const auto m = refine_unit_sphere(level);
        double area = 0.0;
        for (std::size_t e = 0; e < m.element_count(); ++e)
            area += m.element_area(e);
        CHECK(area > prev);
        CHECK(area < 4.0 * std::numbers::pi);
        prev = area;
        if (level == 4)
            CHECK(std::abs(area - 4.0 * std::numbers::pi) / (4.0 * std::numbers::pi) < 5e-3);
    }
}

TEST_CASE("orientation: flipped and open meshes are reported")
{
    auto m = refine_unit_sphere(1);
    std::swap(m.elements[3][1], m.elements[3][2]);
    CHECK_THROWS_AS(check_closed_orientation(m), OrientationError);

    auto inward = refine_unit_sphere(1);
    for (auto& e : inward.elements)
        std::swap(e[1], e[2]);
    CHECK_THROWS_AS(check_closed_orientation(inward), OrientationError);

    auto open = refine_unit_sphere(1);
    open.elements.pop_back();
    CHECK_THROWS_AS(check_closed_orientation(open), OrientationError);

    CHECK_NOTHROW(check_closed_orientation(oracle::torus(25, 10)));
}

TEST_CASE("validate_mesh: bad index and degenerate element")
{
    auto m = single({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    m.elements[0][2] = 5;
    CHECK_THROWS_AS(validate_mesh(m), GeometryError);
    auto d = single({0, 0, 0}, {1, 0, 0}, {1, 0, 0});
    try {
        validate_mesh(d);
        FAIL("expected a geometry error");
    } catch (const GeometryError& e) {
        CHECK(e.element() == 0);
    }
}

TEST_CASE("geometry: right triangle and translation invariance")
{
    const auto rule = regular_rule(4);
    const auto g = precompute_geometry(single({0, 0, 0}, {1, 0, 0}, {0, 1, 0}), rule);
    CHECK(g.normal(0) == Vec3{0, 0, 1});
    CHECK_THAT(g.area[0], WithinAbs(0.5, 1e-15));
    CHECK_THAT(g.jacobian[0], WithinAbs(1.0, 1e-15));
    const auto t = precompute_geometry(single({5, 5, 5}, {6, 5, 5}, {5, 6, 5}), rule);
    CHECK_THAT(t.nz[0], WithinAbs(1.0, 1e-15));
    CHECK_THAT(t.area[0], WithinAbs(0.5, 1e-12));
    CHECK_THAT(t.jacobian[0], WithinAbs(1.0, 1e-12));
}

TEST_CASE("geometry: degenerate element is named")
{
    try {
        precompute_geometry(single({0, 0, 0}, {1, 1, 1}, {1, 1, 1}), regular_rule(1));
        FAIL("expected a geometry error");
    } catch (const GeometryError& e) {
        CHECK(e.element() == 0);
    }
}

TEST_CASE("geometry: invariants on random meshes")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const auto rule = regular_rule(4);
    for (int trial = 0; trial < 50; ++trial) {
        TriangleMesh m;
        for (int i = 0; i < 3; ++i)
            m.vertices.push_back({u(rng), u(rng), u(rng)});
        m.elements = {{0, 1, 2}};
        const auto g = precompute_geometry(m, rule);
        const Vec3 n = g.normal(0);
        CHECK(std::abs(norm(n) - 1.0) < 1e-12);
        CHECK(std::abs(g.jacobian[0] - 2.0 * m.element_area(0)) < 1e-12);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec3 p = g.point(0, q);
            CHECK(std::abs(dot(p - m.vertices[0], n)) < 1e-12 * g.diameter[0]);
            // barycentric reconstruction
            const double xi = rule.points[q][0], eta = rule.points[q][1];
            const Vec3 b = (1.0 - xi - eta) * m.vertices[0] + xi * m.vertices[1] + eta * m.vertices[2];
            CHECK(norm(b - p) < 1e-12 * g.diameter[0]);
        }
    }
}

TEST_CASE("geometry: structure-of-arrays layout")
{
    const auto m = refine_unit_sphere(1);
    const auto g = precompute_geometry(m, regular_rule(4));
    CHECK(g.nx.size() == m.element_count());
    CHECK(g.jacobian.size() == m.element_count());
    CHECK(g.px.size() == m.element_count() * 6);
    CHECK(g.points_per_element == 6);
}
