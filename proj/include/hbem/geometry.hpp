#pragma once

#include "hbem/mesh.hpp"
#include "hbem/quadrature.hpp"

#include <vector>

namespace hbem {

// Per-element geometric data in structure-of-arrays layout: one contiguous
// array per field, ordered by element index. Mapped quadrature points are
// stored element-major (element * points_per_element + q).
struct ElementGeometry {
    std::size_t element_count = 0;
    std::size_t points_per_element = 0;
    QuadratureRule rule;

    std::vector<double> nx, ny, nz;
    std::vector<double> jacobian;  // 2 * area
    std::vector<double> area;
    std::vector<double> cx, cy, cz; // centroid
    std::vector<double> diameter;  // longest edge

    // Affine map x(xi, eta) = v0 + xi * e1 + eta * e2.
    std::vector<double> v0x, v0y, v0z;
    std::vector<double> e1x, e1y, e1z;
    std::vector<double> e2x, e2y, e2z;

    std::vector<double> px, py, pz;

    Vec3 normal(std::size_t e) const { return {nx[e], ny[e], nz[e]}; }
    Vec3 centroid(std::size_t e) const { return {cx[e], cy[e], cz[e]}; }
    Vec3 point(std::size_t e, std::size_t q) const
    {
        const std::size_t i = e * points_per_element + q;
        return {px[i], py[i], pz[i]};
    }
    Vec3 map(std::size_t e, double xi, double eta) const
    {
        return {v0x[e] + xi * e1x[e] + eta * e2x[e], v0y[e] + xi * e1y[e] + eta * e2y[e],
                v0z[e] + xi * e1z[e] + eta * e2z[e]};
    }
    Vec3 edge1(std::size_t e) const { return {e1x[e], e1y[e], e1z[e]}; }
    Vec3 edge2(std::size_t e) const { return {e2x[e], e2y[e], e2z[e]}; }
};

inline ElementGeometry precompute_geometry(const TriangleMesh& mesh, const QuadratureRule& rule)
{
    if (rule.size() == 0)
        throw ConfigError("quadrature rule is empty");
    const std::size_t m = mesh.element_count();
    const std::size_t nq = rule.size();
    const double diag = mesh.bounding_box_diagonal();
    const double min_area = 1e-14 * diag * diag;

    ElementGeometry g;
    g.element_count = m;
    g.points_per_element = nq;
    g.rule = rule;
    for (auto* v : {&g.nx, &g.ny, &g.nz, &g.jacobian, &g.area, &g.cx, &g.cy, &g.cz, &g.diameter, &g.v0x, &g.v0y,
                    &g.v0z, &g.e1x, &g.e1y, &g.e1z, &g.e2x, &g.e2y, &g.e2z})
        v->resize(m);
    g.px.resize(m * nq);
    g.py.resize(m * nq);
    g.pz.resize(m * nq);

    for (std::size_t e = 0; e < m; ++e) {
        for (int i : mesh.elements[e])
            if (i < 0 || static_cast<std::size_t>(i) >= mesh.vertex_count())
                throw GeometryError("vertex index out of range", e);
        const Vec3 a = mesh.corner(e, 0), b = mesh.corner(e, 1), c = mesh.corner(e, 2);
        const Vec3 e1 = b - a, e2 = c - a;
        const Vec3 nn = cross(e1, e2);
        const double j = norm(nn);
        if (!(0.5 * j > min_area) || !std::isfinite(j))
            throw GeometryError("degenerate element", e);
        g.nx[e] = nn[0] / j;
        g.ny[e] = nn[1] / j;
        g.nz[e] = nn[2] / j;
        g.jacobian[e] = j;
        g.area[e] = 0.5 * j;
        g.cx[e] = (a[0] + b[0] + c[0]) / 3.0;
        g.cy[e] = (a[1] + b[1] + c[1]) / 3.0;
        g.cz[e] = (a[2] + b[2] + c[2]) / 3.0;
        g.diameter[e] = std::max({norm(e1), norm(e2), norm(c - b)});
        g.v0x[e] = a[0], g.v0y[e] = a[1], g.v0z[e] = a[2];
        g.e1x[e] = e1[0], g.e1y[e] = e1[1], g.e1z[e] = e1[2];
        g.e2x[e] = e2[0], g.e2y[e] = e2[1], g.e2z[e] = e2[2];
        for (std::size_t q = 0; q < nq; ++q) {
            const Vec3 p = g.map(e, rule.points[q][0], rule.points[q][1]);
            g.px[e * nq + q] = p[0];
            g.py[e * nq + q] = p[1];
            g.pz[e * nq + q] = p[2];
        }
    }
    return g;
}

} // namespace hbem
