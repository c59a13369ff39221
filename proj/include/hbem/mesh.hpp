#pragma once

// Triangular surface meshes: Gmsh 2.2 ASCII I/O, icosphere generation and
// topological checks (closedness, consistent outward orientation).

#include "hbem/common.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace hbem {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> elements;
    // Number of non-triangle elements skipped while loading.
    std::size_t skipped_elements = 0;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t element_count() const { return elements.size(); }

    Vec3 corner(std::size_t e, int i) const { return vertices[static_cast<std::size_t>(elements[e][i])]; }

    double bounding_box_diagonal() const
    {
        if (vertices.empty())
            return 0.0;
        Vec3 lo = vertices.front(), hi = vertices.front();
        for (const auto& v : vertices)
            for (int d = 0; d < 3; ++d) {
                lo[d] = std::min(lo[d], v[d]);
                hi[d] = std::max(hi[d], v[d]);
            }
        return norm(hi - lo);
    }

    double element_area(std::size_t e) const
    {
        return 0.5 * norm(cross(corner(e, 1) - corner(e, 0), corner(e, 2) - corner(e, 0)));
    }

    double mean_edge_length() const
    {
        double sum = 0.0;
        for (std::size_t e = 0; e < elements.size(); ++e)
            for (int i = 0; i < 3; ++i)
                sum += norm(corner(e, (i + 1) % 3) - corner(e, i));
        return elements.empty() ? 0.0 : sum / (3.0 * static_cast<double>(elements.size()));
    }
};

// Index-range and degeneracy checks. Elements with area below
// 1e-14 * (bounding-box diagonal)^2 are rejected.
inline void validate_mesh(const TriangleMesh& mesh)
{
    const auto nv = static_cast<int>(mesh.vertex_count());
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
        for (int i : mesh.elements[e])
            if (i < 0 || i >= nv)
                throw GeometryError("vertex index " + std::to_string(i) + " out of range", e);
    const double diag = mesh.bounding_box_diagonal();
    const double min_area = 1e-14 * diag * diag;
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
        if (!(mesh.element_area(e) > min_area))
            throw GeometryError("degenerate element", e);
}

// Signed enclosed volume (positive for outward-oriented closed meshes).
inline double signed_volume(const TriangleMesh& mesh)
{
    double v = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
        v += dot(mesh.corner(e, 0), cross(mesh.corner(e, 1), mesh.corner(e, 2)));
    return v / 6.0;
}

// Checks that the mesh is closed (every edge shared by exactly two elements),
// consistently oriented (each shared edge traversed once in each direction)
// and outward oriented (positive enclosed volume). Orientation problems are
// reported, never repaired.
inline void check_closed_orientation(const TriangleMesh& mesh)
{
    std::map<std::pair<int, int>, int> directed;
    for (std::size_t e = 0; e < mesh.element_count(); ++e)
        for (int i = 0; i < 3; ++i)
            ++directed[{mesh.elements[e][i], mesh.elements[e][(i + 1) % 3]}];
    for (const auto& [edge, count] : directed) {
        if (count != 1)
            throw OrientationError("edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) +
                                   ") traversed " + std::to_string(count) +
                                   " times in the same direction: inconsistent orientation or non-manifold edge");
        auto it = directed.find({edge.second, edge.first});
        if (it == directed.end())
            throw OrientationError("edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) +
                                   ") is not shared by exactly two elements: mesh is not closed");
    }
    if (!(signed_volume(mesh) > 0.0))
        throw OrientationError("closed mesh has inward-pointing normals");
}

namespace detail {

inline bool next_content_line(std::istream& in, std::string& line, std::size_t& lineno)
{
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos)
            return true;
    }
    return false;
}

inline std::string trimmed(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

} // namespace detail

// Parses a Gmsh 2.2 ASCII mesh. Only 3-node triangles (type 2) are kept;
// other element types are counted in `skipped_elements`.
inline TriangleMesh parse_gmsh(std::istream& in)
{
    std::string line;
    std::size_t lineno = 0;
    auto expect_line = [&](const std::string& what) {
        if (!detail::next_content_line(in, line, lineno))
            throw ParseError("unexpected end of file, expected " + what, lineno + 1);
        return detail::trimmed(line);
    };

    if (expect_line("$MeshFormat") != "$MeshFormat")
        throw ParseError("missing $MeshFormat header", lineno);
    {
        std::istringstream ss(expect_line("format line"));
        std::string version;
        int file_type = -1, data_size = 0;
        if (!(ss >> version >> file_type >> data_size))
            throw ParseError("malformed $MeshFormat line", lineno);
        if (version.rfind("2.", 0) != 0)
            throw ParseError("unsupported Gmsh version " + version + " (expected 2.2)", lineno);
        if (file_type != 0)
            throw ParseError("binary Gmsh files are not supported", lineno);
    }
    if (expect_line("$EndMeshFormat") != "$EndMeshFormat")
        throw ParseError("missing $EndMeshFormat", lineno);

    TriangleMesh mesh;
    std::unordered_map<long long, int> node_index;
    bool have_nodes = false, have_elements = false;

    while (detail::next_content_line(in, line, lineno)) {
        const std::string section = detail::trimmed(line);
        if (section.empty() || section[0] != '$')
            throw ParseError("expected a section header, got '" + section + "'", lineno);
        const std::string name = section.substr(1);
        const std::string end_tag = "$End" + name;

        if (name == "Nodes") {
            std::size_t count = 0;
            {
                std::istringstream ss(expect_line("node count"));
                if (!(ss >> count))
                    throw ParseError("malformed node count in $Nodes", lineno);
            }
            mesh.vertices.reserve(count);
            for (std::size_t n = 0; n < count; ++n) {
                std::istringstream ss(expect_line("node line"));
                long long id;
                Vec3 x;
                if (!(ss >> id >> x[0] >> x[1] >> x[2]))
                    throw ParseError("malformed node line in $Nodes", lineno);
                node_index[id] = static_cast<int>(mesh.vertices.size());
                mesh.vertices.push_back(x);
            }
            if (!detail::next_content_line(in, line, lineno) || detail::trimmed(line) != end_tag)
                throw ParseError("missing $EndNodes closing the $Nodes section", lineno);
            have_nodes = true;
        } else if (name == "Elements") {
            if (!have_nodes)
                throw ParseError("$Elements section before $Nodes", lineno);
            std::size_t count = 0;
            {
                std::istringstream ss(expect_line("element count"));
                if (!(ss >> count))
                    throw ParseError("malformed element count in $Elements", lineno);
            }
            for (std::size_t n = 0; n < count; ++n) {
                std::istringstream ss(expect_line("element line"));
                long long id;
                int type = 0, ntags = 0;
                if (!(ss >> id >> type >> ntags) || ntags < 0)
                    throw ParseError("malformed element line in $Elements", lineno);
                for (int t = 0; t < ntags; ++t) {
                    long long tag;
                    if (!(ss >> tag))
                        throw ParseError("missing element tag in $Elements", lineno);
                }
                if (type != 2) {
                    ++mesh.skipped_elements;
                    continue;
                }
                std::array<int, 3> tri{};
                for (int i = 0; i < 3; ++i) {
                    long long node;
                    if (!(ss >> node))
                        throw ParseError("triangle with fewer than 3 nodes", lineno);
                    auto it = node_index.find(node);
                    if (it == node_index.end())
                        throw ParseError("element references unknown node " + std::to_string(node), lineno);
                    tri[i] = it->second;
                }
                mesh.elements.push_back(tri);
            }
            if (!detail::next_content_line(in, line, lineno) || detail::trimmed(line) != end_tag)
                throw ParseError("missing $EndElements closing the $Elements section", lineno);
            have_elements = true;
        } else {
            // Unknown section ($PhysicalNames, $NodeData, ...): skip to its end tag.
            bool closed = false;
            while (detail::next_content_line(in, line, lineno))
                if (detail::trimmed(line) == end_tag) {
                    closed = true;
                    break;
                }
            if (!closed)
                throw ParseError("missing " + end_tag + " closing the " + section + " section", lineno);
        }
    }
    if (!have_nodes)
        throw ParseError("missing $Nodes section", lineno);
    if (!have_elements)
        throw ParseError("missing $Elements section", lineno);
    if (mesh.elements.empty())
        throw EmptyMeshError("mesh contains no 3-node triangle elements");
    validate_mesh(mesh);
    return mesh;
}

inline TriangleMesh load_mesh(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open mesh file '" + path + "'", 0);
    return parse_gmsh(in);
}

inline void write_gmsh(const TriangleMesh& mesh, std::ostream& out)
{
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << mesh.vertex_count() << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        const auto& v = mesh.vertices[i];
        out << i + 1 << ' ' << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    }
    out << "$EndNodes\n$Elements\n" << mesh.element_count() << '\n';
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto& t = mesh.elements[e];
        out << e + 1 << " 2 2 1 1 " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
    out << "$EndElements\n";
}

inline void save_mesh(const TriangleMesh& mesh, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write mesh file '" + path + "'");
    write_gmsh(mesh, out);
}

inline constexpr int max_sphere_level = 8;

// Icosahedron subdivided `level` times with every vertex projected onto the
// unit sphere; 20 * 4^level outward-oriented elements.
inline TriangleMesh refine_unit_sphere(int level)
{
    if (level < 0)
        throw ConfigError("refinement level must be nonnegative");
    if (level > max_sphere_level)
        throw CapacityError("refinement level " + std::to_string(level) + " exceeds the maximum of " +
                            std::to_string(max_sphere_level));
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh mesh;
    mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                     {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    mesh.elements = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                     {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                     {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    auto project = [](Vec3 v) { return (1.0 / norm(v)) * v; };
    for (auto& v : mesh.vertices)
        v = project(v);

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end())
                return it->second;
            const int idx = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back(project(0.5 * (mesh.vertices[a] + mesh.vertices[b])));
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> refined;
        refined.reserve(mesh.elements.size() * 4);
        for (const auto& [a, b, c] : mesh.elements) {
            const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
            refined.push_back({a, ab, ca});
            refined.push_back({b, bc, ab});
            refined.push_back({c, ca, bc});
            refined.push_back({ab, bc, ca});
        }
        mesh.elements = std::move(refined);
    }
    return mesh;
}

} // namespace hbem
