#pragma once

// Quadrature on the reference triangle {(xi, eta) : xi, eta >= 0, xi + eta <= 1}:
// symmetric Gauss rules for regular integrals and Sauter-Schwab regularising
// tensor rules for pairs of triangles that share a vertex, an edge, or coincide.

#include "hbem/common.hpp"
#include "hbem/mesh.hpp"

#include <array>
#include <numbers>
#include <vector>

namespace hbem {

struct QuadratureRule {
    std::vector<std::array<double, 2>> points;
    std::vector<double> weights;
    int order = 0;

    std::size_t size() const { return weights.size(); }
};

inline constexpr int max_regular_order = 4;

// Symmetric rule exact for polynomials of total degree <= order.
// Orders 3 and 4 share the 6-point degree-4 rule.
inline QuadratureRule regular_rule(int order)
{
    QuadratureRule r;
    r.order = order;
    if (order < 1)
        throw UnsupportedError("quadrature order must be positive");
    if (order > max_regular_order)
        throw UnsupportedError("regular quadrature order " + std::to_string(order) +
                               " unsupported: at most six points (order 4) are available");
    if (order == 1) {
        r.points = {{1.0 / 3.0, 1.0 / 3.0}};
        r.weights = {0.5};
    } else if (order == 2) {
        r.points = {{1.0 / 6.0, 1.0 / 6.0}, {2.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 2.0 / 3.0}};
        r.weights = {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
    } else {
        const double a = 0.445948490915965, wa = 0.223381589678011 / 2.0;
        const double b = 0.091576213509771, wb = 0.109951743655322 / 2.0;
        r.points = {{a, a}, {a, 1.0 - 2.0 * a}, {1.0 - 2.0 * a, a}, {b, b}, {b, 1.0 - 2.0 * b}, {1.0 - 2.0 * b, b}};
        r.weights = {wa, wa, wa, wb, wb, wb};
        // Renormalise the tabulated weights so they sum to 1/2 to machine precision.
        const double s = 3.0 * (wa + wb);
        for (auto& w : r.weights)
            w *= 0.5 / s;
    }
    return r;
}

// Gauss-Legendre nodes and weights on [0, 1] (Newton iteration on P_n).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n)
{
    if (n < 1)
        throw UnsupportedError("Gauss-Legendre order must be positive");
    std::vector<double> x(n), w(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16)
                break;
        }
        // recompute derivative at the converged root
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double wt = 1.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = w[n - 1 - i] = wt;
    }
    return {x, w};
}

enum class SingularityKind { Disjoint, SharedVertex, SharedEdge, Identical };

inline const char* to_string(SingularityKind k)
{
    switch (k) {
    case SingularityKind::Disjoint: return "Disjoint";
    case SingularityKind::SharedVertex: return "SharedVertex";
    case SingularityKind::SharedEdge: return "SharedEdge";
    case SingularityKind::Identical: return "Identical";
    }
    return "?";
}

// Relationship between a test and a trial element. `test_perm[i]` and
// `trial_perm[i]` give the element-local vertex index that plays the role of
// aligned vertex i: shared vertices come first, coincide pairwise and are
// ordered by global vertex index. When `swap_slots` is set the test element
// takes the second slot of the tensor rule, so (a, b) and (b, a) are
// evaluated on the same physical point pairs.
struct SingularityClass {
    SingularityKind kind = SingularityKind::Disjoint;
    std::array<int, 3> test_perm{0, 1, 2};
    std::array<int, 3> trial_perm{0, 1, 2};
    bool swap_slots = false;
};

inline SingularityClass classify_pair(std::size_t a, std::size_t b, const TriangleMesh& mesh)
{
    SingularityClass c;
    if (a == b) {
        c.kind = SingularityKind::Identical;
        return c;
    }
    const auto& ta = mesh.elements[a];
    const auto& tb = mesh.elements[b];
    std::array<int, 3> shared_a{}, shared_b{};
    int shared = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (ta[i] == tb[j]) {
                shared_a[shared] = i;
                shared_b[shared] = j;
                ++shared;
            }
    for (int i = 1; i < shared; ++i)
        for (int j = i; j > 0 && ta[shared_a[j]] < ta[shared_a[j - 1]]; --j) {
            std::swap(shared_a[j], shared_a[j - 1]);
            std::swap(shared_b[j], shared_b[j - 1]);
        }
    c.swap_slots = a > b;
    auto complete = [](std::array<int, 3>& perm, int fixed) {
        int next = fixed;
        for (int i = 0; i < 3; ++i) {
            bool used = false;
            for (int k = 0; k < fixed; ++k)
                used = used || perm[k] == i;
            if (!used)
                perm[next++] = i;
        }
    };
    if (shared == 0) {
        c.kind = SingularityKind::Disjoint;
    } else if (shared == 1) {
        c.kind = SingularityKind::SharedVertex;
        c.test_perm = {shared_a[0], 0, 0};
        c.trial_perm = {shared_b[0], 0, 0};
        complete(c.test_perm, 1);
        complete(c.trial_perm, 1);
    } else if (shared == 2) {
        c.kind = SingularityKind::SharedEdge;
        c.test_perm = {shared_a[0], shared_a[1], 0};
        c.trial_perm = {shared_b[0], shared_b[1], 0};
        complete(c.test_perm, 2);
        complete(c.trial_perm, 2);
    } else {
        // distinct elements over the same three vertices
        c.kind = SingularityKind::Identical;
        c.test_perm = shared_a;
        c.trial_perm = shared_b;
    }
    return c;
}

// Four-dimensional rule over (test triangle) x (trial triangle). Each point
// holds (xi, eta) on the aligned test triangle followed by (xi, eta) on the
// aligned trial triangle; weights include every transformation Jacobian and
// sum to 1/4 (the product of the reference areas).
struct TensorRule {
    SingularityKind kind = SingularityKind::Disjoint;
    int base_order = 0;
    int subdomains = 0;
    std::vector<std::array<double, 4>> points;
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
};

// Number of regular subdomains produced by the Sauter-Schwab splitting.
inline int sauter_schwab_subdomains(SingularityKind kind)
{
    switch (kind) {
    case SingularityKind::Identical: return 6;
    case SingularityKind::SharedEdge: return 5;
    case SingularityKind::SharedVertex: return 2;
    default: return 0;
    }
}

// Sauter-Schwab rule with `base_order` Gauss-Legendre points in each of the
// four hypercube directions, i.e. subdomains * base_order^4 points.
inline TensorRule singular_rule(SingularityKind kind, int base_order)
{
    if (kind == SingularityKind::Disjoint)
        throw ContractError("singular_rule called for a disjoint pair; use the regular tensor rule");
    // the subdomain Jacobians are cubic in the radial variable; one Gauss
    // point cannot integrate them exactly
    if (base_order < 2)
        throw UnsupportedError("singular base order must be at least 2");
    TensorRule rule;
    rule.kind = kind;
    rule.base_order = base_order;
    rule.subdomains = sauter_schwab_subdomains(kind);
    const auto [x, w] = gauss_legendre(base_order);
    const std::size_t n = x.size();
    rule.points.reserve(rule.subdomains * n * n * n * n);
    rule.weights.reserve(rule.points.capacity());

    // Points are generated in Sauter-Schwab coordinates (s1, s2), 0 <= s2 <= s1 <= 1,
    // then mapped to the standard reference triangle via (xi, eta) = (s1 - s2, s2).
    auto push = [&](double tx1, double tx2, double ty1, double ty2, double weight) {
        rule.points.push_back({tx1 - tx2, tx2, ty1 - ty2, ty2});
        rule.weights.push_back(weight);
    };

    for (std::size_t i0 = 0; i0 < n; ++i0)
        for (std::size_t i1 = 0; i1 < n; ++i1)
            for (std::size_t i2 = 0; i2 < n; ++i2)
                for (std::size_t i3 = 0; i3 < n; ++i3) {
                    const double s = x[i0], e1 = x[i1], e2 = x[i2], e3 = x[i3];
                    const double w4 = w[i0] * w[i1] * w[i2] * w[i3];
                    switch (kind) {
                    case SingularityKind::Identical: {
                        const double wt = w4 * s * s * s * e1 * e1 * e2;
                        push(s, s * (1 - e1 + e1 * e2), s * (1 - e1 * e2 * e3), s * (1 - e1), wt);
                        push(s * (1 - e1 * e2 * e3), s * (1 - e1), s, s * (1 - e1 + e1 * e2), wt);
                        push(s, s * e1 * (1 - e2 + e2 * e3), s * (1 - e1 * e2), s * e1 * (1 - e2), wt);
                        push(s * (1 - e1 * e2), s * e1 * (1 - e2), s, s * e1 * (1 - e2 + e2 * e3), wt);
                        push(s * (1 - e1 * e2 * e3), s * e1 * (1 - e2 * e3), s, s * e1 * (1 - e2), wt);
                        push(s, s * e1 * (1 - e2), s * (1 - e1 * e2 * e3), s * e1 * (1 - e2 * e3), wt);
                        break;
                    }
                    case SingularityKind::SharedEdge: {
                        const double wt = w4 * s * s * s * e1 * e1;
                        push(s, s * e1 * e3, s * (1 - e1 * e2), s * e1 * (1 - e2), wt);
                        push(s, s * e1, s * (1 - e1 * e2 * e3), s * e1 * e2 * (1 - e3), wt * e2);
                        push(s * (1 - e1 * e2), s * e1 * (1 - e2), s, s * e1 * e2 * e3, wt * e2);
                        push(s * (1 - e1 * e2 * e3), s * e1 * e2 * (1 - e3), s, s * e1, wt * e2);
                        push(s * (1 - e1 * e2 * e3), s * e1 * (1 - e2 * e3), s, s * e1 * e2, wt * e2);
                        break;
                    }
                    case SingularityKind::SharedVertex: {
                        const double wt = w4 * s * s * s * e2;
                        push(s, s * e1, s * e2, s * e2 * e3, wt);
                        push(s * e2, s * e2 * e3, s, s * e1, wt);
                        break;
                    }
                    default: break;
                    }
                }
    return rule;
}

// Maps a point given on the aligned triangle (aligned vertex i is element-local
// vertex perm[i]) back to element-local reference coordinates.
inline std::array<double, 2> unalign(double xi, double eta, const std::array<int, 3>& perm)
{
    std::array<double, 3> bary_aligned{1.0 - xi - eta, xi, eta};
    std::array<double, 3> bary{};
    for (int i = 0; i < 3; ++i)
        bary[perm[i]] = bary_aligned[i];
    return {bary[1], bary[2]};
}

// Element-local reference coordinates of tensor point q for the test and the
// trial element of `cls`.
inline std::array<std::array<double, 2>, 2> pair_point(const TensorRule& rule, std::size_t q,
                                                       const SingularityClass& cls)
{
    const auto& p = rule.points[q];
    if (cls.swap_slots)
        return {unalign(p[2], p[3], cls.test_perm), unalign(p[0], p[1], cls.trial_perm)};
    return {unalign(p[0], p[1], cls.test_perm), unalign(p[2], p[3], cls.trial_perm)};
}

} // namespace hbem
