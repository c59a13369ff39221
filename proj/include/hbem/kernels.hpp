#pragma once

// Laplace/Helmholtz Green's functions and the reference per-pair Galerkin
// integrator for the single-layer, double-layer, adjoint double-layer and
// hypersingular operators. Hot loops keep real and imaginary parts in
// separate variables.

#include "hbem/geometry.hpp"
#include "hbem/quadrature.hpp"
#include "hbem/spaces.hpp"

#include <array>
#include <numbers>
#include <string>

namespace hbem {

enum class Equation { Laplace, Helmholtz };
enum class OperatorKind { SLP, DLP, ADLP, HYPS };
enum class Precision { Single, Double };

inline const char* to_string(Equation e) { return e == Equation::Laplace ? "laplace" : "helmholtz"; }
inline const char* to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }
inline const char* to_string(OperatorKind k)
{
    switch (k) {
    case OperatorKind::SLP: return "SLP";
    case OperatorKind::DLP: return "DLP";
    case OperatorKind::ADLP: return "ADLP";
    case OperatorKind::HYPS: return "HYPS";
    }
    return "?";
}

struct OperatorSpec {
    Equation equation = Equation::Laplace;
    double wavenumber = 0.0;
    OperatorKind kind = OperatorKind::SLP;
    Precision precision = Precision::Double;

    static OperatorSpec laplace(OperatorKind kind, Precision p = Precision::Double)
    {
        return {Equation::Laplace, 0.0, kind, p};
    }
    static OperatorSpec helmholtz(double k, OperatorKind kind, Precision p = Precision::Double)
    {
        return {Equation::Helmholtz, k, kind, p};
    }

    bool is_complex() const { return equation == Equation::Helmholtz; }

    void validate() const
    {
        if (equation == Equation::Laplace && wavenumber != 0.0)
            throw ConfigError("Laplace operators require wavenumber 0");
        if (equation == Equation::Helmholtz && !(wavenumber > 0.0))
            throw ConfigError("Helmholtz operators require a positive wavenumber");
    }

    bool operator==(const OperatorSpec&) const = default;
};

inline std::string describe(const OperatorSpec& s)
{
    std::string d = std::string(to_string(s.equation)) + " " + to_string(s.kind);
    if (s.is_complex())
        d += " k=" + std::to_string(s.wavenumber);
    return d + " (" + to_string(s.precision) + ")";
}

inline constexpr double inv_four_pi = 0.25 / std::numbers::pi;

namespace detail {

inline double checked_distance(const Vec3& x, const Vec3& y)
{
    const double r = norm(x - y);
    if (r < 1e-300)
        throw SingularityError("Green's function evaluated at coincident points");
    return r;
}

} // namespace detail

// exp(ik|x-y|) / (4 pi |x-y|); real for Laplace.
inline complex_t green(const OperatorSpec& spec, const Vec3& x, const Vec3& y)
{
    const double r = detail::checked_distance(x, y);
    const double k = spec.equation == Equation::Laplace ? 0.0 : spec.wavenumber;
    return std::polar(inv_four_pi / r, k * r);
}

// <grad_y g(x, y), n_y> with grad_y g = (x - y)(1 - ikr) e^{ikr} / (4 pi r^3).
inline complex_t green_dny(const OperatorSpec& spec, const Vec3& x, const Vec3& y, const Vec3& ny)
{
    const double r = detail::checked_distance(x, y);
    const double k = spec.equation == Equation::Laplace ? 0.0 : spec.wavenumber;
    const double proj = dot(x - y, ny);
    return proj * inv_four_pi / (r * r * r) * complex_t(1.0, -k * r) * std::polar(1.0, k * r);
}

// <grad_x g(x, y), n_x> = -<grad_y g(x, y), n_x>.
inline complex_t green_dnx(const OperatorSpec& spec, const Vec3& x, const Vec3& y, const Vec3& nx)
{
    return -green_dny(spec, x, y, nx);
}

// Kernel value for SLP/DLP/ADLP (HYPS uses the SLP kernel) at a single point
// pair, in precision Real, returned as separate real and imaginary parts.
template <class Real>
inline void kernel_value(OperatorKind kind, Real k, Real dx, Real dy, Real dz, Real nxx, Real nxy, Real nxz, Real nyx,
                         Real nyy, Real nyz, bool complex_valued, Real& re, Real& im)
{
    const Real r2 = dx * dx + dy * dy + dz * dz;
    const Real r = std::sqrt(r2);
    const Real c4pi = static_cast<Real>(inv_four_pi);
    Real c = Real(1), s = Real(0);
    if (complex_valued) {
        c = std::cos(k * r);
        s = std::sin(k * r);
    }
    switch (kind) {
    case OperatorKind::SLP:
    case OperatorKind::HYPS: {
        const Real g = c4pi / r;
        re = g * c;
        im = g * s;
        break;
    }
    case OperatorKind::DLP:
    case OperatorKind::ADLP: {
        const Real proj = kind == OperatorKind::DLP ? (dx * nyx + dy * nyy + dz * nyz) : -(dx * nxx + dy * nxy + dz * nxz);
        const Real f = proj * c4pi / (r2 * r);
        if (complex_valued) {
            const Real kr = k * r;
            re = f * (c + kr * s);
            im = f * (s - kr * c);
        } else {
            re = f;
            im = Real(0);
        }
        break;
    }
    }
}

// Dense local block, test local DOFs x trial local DOFs (at most 3 x 3).
struct LocalBlock {
    int rows = 0, cols = 0;
    std::array<double, 9> re{};
    std::array<double, 9> im{};

    complex_t at(int i, int j) const { return {re[i * 3 + j], im[i * 3 + j]}; }
};

// Reference integrator: one (test element, trial element) pair at a time.
// Disjoint pairs use the tensor product of the geometry's regular rule;
// adjacent and identical pairs use Sauter-Schwab rules of `singular_order`.
class PairIntegrator {
public:
    PairIntegrator(const OperatorSpec& spec, const FunctionSpace& test, const FunctionSpace& trial,
                   const ElementGeometry& geometry, int singular_order = 4)
        : spec_(spec), test_(test), trial_(trial), geometry_(geometry),
          test_table_(evaluate_basis(test, geometry.rule)), trial_table_(evaluate_basis(trial, geometry.rule)),
          vertex_rule_(singular_rule(SingularityKind::SharedVertex, singular_order)),
          edge_rule_(singular_rule(SingularityKind::SharedEdge, singular_order)),
          identical_rule_(singular_rule(SingularityKind::Identical, singular_order))
    {
        spec_.validate();
        if (!test.same_mesh(trial))
            throw ConfigError("test and trial spaces must live on the same mesh");
        if (geometry.element_count != test.element_count())
            throw DimensionError("geometry does not match the mesh");
        if (spec_.kind == OperatorKind::HYPS) {
            if (!test.is_linear() || !trial.is_linear())
                throw UnsupportedError("the hypersingular operator requires piecewise linear spaces");
            curls_.resize(geometry.element_count);
            for (std::size_t e = 0; e < geometry.element_count; ++e)
                for (int l = 0; l < 3; ++l)
                    curls_[e][l] = element_curl(geometry, e, l);
        }
    }

    const OperatorSpec& spec() const { return spec_; }
    const FunctionSpace& test_space() const { return test_; }
    const FunctionSpace& trial_space() const { return trial_; }
    const ElementGeometry& geometry() const { return geometry_; }
    int singular_order() const { return identical_rule_.base_order; }

    SingularityClass classify(std::size_t a, std::size_t b) const { return classify_pair(a, b, test_.mesh()); }

    LocalBlock local_matrix(std::size_t a, std::size_t b) const { return local_matrix(a, b, classify(a, b)); }

    LocalBlock local_matrix(std::size_t a, std::size_t b, const SingularityClass& cls) const
    {
        if (spec_.precision == Precision::Single)
            return compute<float>(a, b, cls);
        return compute<double>(a, b, cls);
    }

    const TensorRule& rule_for(SingularityKind kind) const
    {
        switch (kind) {
        case SingularityKind::SharedVertex: return vertex_rule_;
        case SingularityKind::SharedEdge: return edge_rule_;
        case SingularityKind::Identical: return identical_rule_;
        default: throw ContractError("no singular rule for disjoint pairs");
        }
    }

private:
    template <class Real>
    LocalBlock compute(std::size_t a, std::size_t b, const SingularityClass& cls) const
    {
        const int na = test_table_.local_dofs, nb = trial_table_.local_dofs;
        const bool cplx = spec_.is_complex();
        const Real k = static_cast<Real>(spec_.wavenumber);
        const Vec3 nav = geometry_.normal(a), nbv = geometry_.normal(b);
        const Real nax = static_cast<Real>(nav[0]), nay = static_cast<Real>(nav[1]), naz = static_cast<Real>(nav[2]);
        const Real nbx = static_cast<Real>(nbv[0]), nby = static_cast<Real>(nbv[1]), nbz = static_cast<Real>(nbv[2]);

        std::array<Real, 9> acc_re{}, acc_im{};
        Real g_re = 0, g_im = 0; // plain kernel integral (HYPS curl term)

        auto accumulate = [&](const Vec3& x, const Vec3& y, const std::array<double, 3>& pa,
                              const std::array<double, 3>& pb, Real w) {
            Real re, im;
            kernel_value<Real>(spec_.kind, k, static_cast<Real>(x[0]) - static_cast<Real>(y[0]),
                               static_cast<Real>(x[1]) - static_cast<Real>(y[1]),
                               static_cast<Real>(x[2]) - static_cast<Real>(y[2]), nax, nay, naz, nbx, nby, nbz, cplx,
                               re, im);
            re *= w;
            im *= w;
            g_re += re;
            g_im += im;
            for (int i = 0; i < na; ++i)
                for (int j = 0; j < nb; ++j) {
                    const Real bf = static_cast<Real>(pa[i]) * static_cast<Real>(pb[j]);
                    acc_re[i * 3 + j] += bf * re;
                    acc_im[i * 3 + j] += bf * im;
                }
        };

        if (cls.kind == SingularityKind::Disjoint) {
            const std::size_t nq = geometry_.points_per_element;
            for (std::size_t q = 0; q < nq; ++q) {
                const Vec3 x = geometry_.point(a, q);
                std::array<double, 3> pa{};
                for (int i = 0; i < na; ++i)
                    pa[i] = test_table_.value(i, q);
                for (std::size_t p = 0; p < nq; ++p) {
                    std::array<double, 3> pb{};
                    for (int j = 0; j < nb; ++j)
                        pb[j] = trial_table_.value(j, p);
                    accumulate(x, geometry_.point(b, p), pa, pb,
                               static_cast<Real>(geometry_.rule.weights[q]) *
                                   static_cast<Real>(geometry_.rule.weights[p]));
                }
            }
        } else {
            const TensorRule& rule = rule_for(cls.kind);
            for (std::size_t t = 0; t < rule.size(); ++t) {
                const auto [la, lb] = pair_point(rule, t, cls);
                accumulate(geometry_.map(a, la[0], la[1]), geometry_.map(b, lb[0], lb[1]),
                           shape_values(test_.family(), la[0], la[1]), shape_values(trial_.family(), lb[0], lb[1]),
                           static_cast<Real>(rule.weights[t]));
            }
        }

        const Real jj = static_cast<Real>(geometry_.jacobian[a]) * static_cast<Real>(geometry_.jacobian[b]);
        LocalBlock out;
        out.rows = na;
        out.cols = nb;
        if (spec_.kind == OperatorKind::HYPS) {
            const Real ndot = nax * nbx + nay * nby + naz * nbz;
            const Real k2 = k * k;
            for (int i = 0; i < na; ++i)
                for (int j = 0; j < nb; ++j) {
                    const Vec3& ca = curls_[a][i];
                    const Vec3& cb = curls_[b][j];
                    const Real cc = static_cast<Real>(ca[0]) * static_cast<Real>(cb[0]) +
                                    static_cast<Real>(ca[1]) * static_cast<Real>(cb[1]) +
                                    static_cast<Real>(ca[2]) * static_cast<Real>(cb[2]);
                    out.re[i * 3 + j] = static_cast<double>((cc * g_re - k2 * ndot * acc_re[i * 3 + j]) * jj);
                    out.im[i * 3 + j] = static_cast<double>((cc * g_im - k2 * ndot * acc_im[i * 3 + j]) * jj);
                }
        } else {
            for (int i = 0; i < na; ++i)
                for (int j = 0; j < nb; ++j) {
                    out.re[i * 3 + j] = static_cast<double>(acc_re[i * 3 + j] * jj);
                    out.im[i * 3 + j] = static_cast<double>(acc_im[i * 3 + j] * jj);
                }
        }
        return out;
    }

    OperatorSpec spec_;
    const FunctionSpace& test_;
    const FunctionSpace& trial_;
    const ElementGeometry& geometry_;
    BasisTable test_table_, trial_table_;
    TensorRule vertex_rule_, edge_rule_, identical_rule_;
    std::vector<std::array<Vec3, 3>> curls_;
};

// Convenience wrapper building a one-off integrator.
inline LocalBlock local_matrix(const OperatorSpec& spec, std::size_t test_elem, std::size_t trial_elem,
                               const FunctionSpace& test, const FunctionSpace& trial, const ElementGeometry& geometry,
                               int singular_order = 4)
{
    return PairIntegrator(spec, test, trial, geometry, singular_order).local_matrix(test_elem, trial_elem);
}

} // namespace hbem
