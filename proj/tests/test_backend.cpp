#include "hbem/backend.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <future>

using namespace hbem;

namespace {

struct Setup {
    std::shared_ptr<const TriangleMesh> mesh;
    ElementGeometry geometry;
    FunctionSpace test, trial;

    Setup(int level, SpaceFamily ft, SpaceFamily fr)
        : mesh(std::make_shared<const TriangleMesh>(refine_unit_sphere(level))),
          geometry(precompute_geometry(*mesh, regular_rule(4))), test(build_space(mesh, ft)),
          trial(build_space(mesh, fr))
    {
    }
};

std::vector<std::pair<int, int>> disjoint_pairs(const TriangleMesh& m, std::size_t count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(m.element_count()) - 1);
    std::vector<std::pair<int, int>> out;
    while (out.size() < count) {
        const int a = pick(rng), b = pick(rng);
        if (classify_pair(a, b, m).kind == SingularityKind::Disjoint)
            out.emplace_back(a, b);
    }
    return out;
}

double max_relative_deviation(const RawResultBuffer& buf, const PairIntegrator& oracle_integrator,
                              const std::vector<std::pair<int, int>>& pairs)
{
    double worst = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto blk = oracle_integrator.local_matrix(pairs[p].first, pairs[p].second);
        double scale = 0.0, diff = 0.0;
        for (int i = 0; i < buf.test_dofs; ++i)
            for (int j = 0; j < buf.trial_dofs; ++j) {
                scale = std::max(scale, std::abs(blk.at(i, j)));
                diff = std::max(diff, std::abs(buf.value(p, i, j) - blk.at(i, j)));
            }
        worst = std::max(worst, diff / scale);
    }
    return worst;
}

bool identical(const RawResultBuffer& a, const RawResultBuffer& b)
{
    return a.pair_count == b.pair_count && a.re == b.re && a.im == b.im;
}

} // namespace

TEST_CASE("backend: 10^4 random disjoint pairs match the per-pair integrator")
{
    const Setup s(3, SpaceFamily::P1Continuous, SpaceFamily::P1Continuous);
    const auto pairs = disjoint_pairs(*s.mesh, 10000, 11);
    for (auto kind : {OperatorKind::SLP, OperatorKind::DLP, OperatorKind::ADLP, OperatorKind::HYPS})
        for (auto precision : {Precision::Double, Precision::Single}) {
            auto spec = OperatorSpec::helmholtz(2.0, kind);
            spec.precision = precision;
            const auto backends = make_host_backends(spec, s.test, s.trial, s.geometry);
            const auto buf = backends[0]->integrate_batch({pairs, spec});
            auto dspec = spec;
            dspec.precision = Precision::Double;
            const double dev = max_relative_deviation(buf, PairIntegrator(dspec, s.test, s.trial, s.geometry), pairs);
            INFO(to_string(kind) << " " << to_string(precision) << " deviation " << dev);
            CHECK(dev <= (precision == Precision::Double ? 1e-12 : 5e-4));
        }
}

TEST_CASE("backend: Laplace and mixed spaces")
{
    const Setup s(2, SpaceFamily::P0, SpaceFamily::P1Discontinuous);
    const auto pairs = disjoint_pairs(*s.mesh, 500, 12);
    for (auto kind : {OperatorKind::SLP, OperatorKind::DLP, OperatorKind::ADLP}) {
        const auto spec = OperatorSpec::laplace(kind);
        const auto buf = make_host_backends(spec, s.test, s.trial, s.geometry)[0]->integrate_batch({pairs, spec});
        CHECK_FALSE(buf.complex_valued);
        CHECK(buf.im.empty());
        CHECK(buf.test_dofs == 1);
        CHECK(buf.trial_dofs == 3);
        CHECK(max_relative_deviation(buf, PairIntegrator(spec, s.test, s.trial, s.geometry), pairs) <= 1e-12);
    }
}

TEST_CASE("backend: single pair")
{
    const Setup s(1, SpaceFamily::P1Continuous, SpaceFamily::P1Continuous);
    const auto spec = OperatorSpec::helmholtz(1.0, OperatorKind::SLP);
    const auto pairs = disjoint_pairs(*s.mesh, 1, 13);
    const auto buf = make_host_backends(spec, s.test, s.trial, s.geometry)[0]->integrate_batch({pairs, spec});
    CHECK(buf.pair_count == 1);
    CHECK(max_relative_deviation(buf, PairIntegrator(spec, s.test, s.trial, s.geometry), pairs) <= 1e-12);
}

TEST_CASE("backend: batch splitting and concurrent submission are bit-exact")
{
    const Setup s(2, SpaceFamily::P1Continuous, SpaceFamily::P1Continuous);
    const auto spec = OperatorSpec::helmholtz(2.0, OperatorKind::DLP);
    const auto backend = make_host_backends(spec, s.test, s.trial, s.geometry)[0];
    const auto pairs = disjoint_pairs(*s.mesh, 3000, 14);
    const auto whole = backend->integrate_batch({pairs, spec});

    for (std::size_t split : {std::size_t{1}, std::size_t{777}, std::size_t{1500}, std::size_t{2999}}) {
        const std::vector<std::pair<int, int>> first(pairs.begin(), pairs.begin() + split);
        const std::vector<std::pair<int, int>> second(pairs.begin() + split, pairs.end());
        const auto b1 = backend->integrate_batch({first, spec});
        const auto b2 = backend->integrate_batch({second, spec});
        RawResultBuffer joined = b1;
        joined.pair_count += b2.pair_count;
        joined.re.insert(joined.re.end(), b2.re.begin(), b2.re.end());
        joined.im.insert(joined.im.end(), b2.im.begin(), b2.im.end());
        CHECK(identical(joined, whole));
    }

    std::vector<std::future<RawResultBuffer>> futures;
    for (int t = 0; t < 4; ++t)
        futures.push_back(std::async(std::launch::async, [&] { return backend->integrate_batch({pairs, spec}); }));
    for (auto& f : futures)
        CHECK(identical(f.get(), whole));

    // lanes inside one batch do not change the numbers either
    const auto laned = make_host_backends(spec, s.test, s.trial, s.geometry, 1, 3)[0]->integrate_batch({pairs, spec});
    CHECK(identical(laned, whole));
}

TEST_CASE("backend: empty batch")
{
    const Setup s(1, SpaceFamily::P0, SpaceFamily::P0);
    const auto spec = OperatorSpec::laplace(OperatorKind::SLP);
    const auto backend = make_host_backends(spec, s.test, s.trial, s.geometry)[0];
    const auto buf = backend->integrate_batch({{}, spec});
    CHECK(buf.pair_count == 0);
    CHECK(buf.re.empty());
    CHECK(backend->batches_submitted() == 1);
    CHECK(backend->pairs_submitted() == 0);
}

TEST_CASE("backend: contract violations")
{
    const Setup s(1, SpaceFamily::P1Continuous, SpaceFamily::P1Continuous);
    const auto spec = OperatorSpec::laplace(OperatorKind::SLP);
    const auto backend = make_host_backends(spec, s.test, s.trial, s.geometry)[0];
    CHECK_THROWS_AS(backend->integrate_batch({{{0, 0}}, spec}), ContractError);
    int neighbour = -1;
    for (std::size_t e = 1; e < s.mesh->element_count() && neighbour < 0; ++e)
        if (classify_pair(0, e, *s.mesh).kind == SingularityKind::SharedEdge)
            neighbour = static_cast<int>(e);
    REQUIRE(neighbour > 0);
    CHECK_THROWS_AS(backend->integrate_batch({{{0, neighbour}}, spec}), ContractError);
    CHECK_THROWS_AS(backend->integrate_batch({{{0, 100000}}, spec}), ContractError);
    CHECK_THROWS_AS(backend->integrate_batch({{{0, 50}}, OperatorSpec::laplace(OperatorKind::DLP)}), ContractError);
}

TEST_CASE("backend: the weight table holds six points")
{
    const auto mesh = std::make_shared<const TriangleMesh>(refine_unit_sphere(1));
    QuadratureRule seven = regular_rule(4);
    seven.points.push_back({1.0 / 3.0, 1.0 / 3.0});
    for (auto& w : seven.weights)
        w *= 0.9;
    seven.weights.push_back(0.05);
    const auto g = precompute_geometry(*mesh, seven);
    const auto p0 = build_space(mesh, SpaceFamily::P0);
    CHECK_THROWS_AS(make_host_backends(OperatorSpec::laplace(OperatorKind::SLP), p0, p0, g), CapacityError);
}

TEST_CASE("backend: single precision is honoured")
{
    const Setup s(2, SpaceFamily::P0, SpaceFamily::P0);
    auto spec = OperatorSpec::helmholtz(3.0, OperatorKind::SLP);
    spec.precision = Precision::Single;
    const auto backend = make_host_backends(spec, s.test, s.trial, s.geometry)[0];
    CHECK(std::holds_alternative<ElementCache<float>>(backend->context().cache));
    const auto pairs = disjoint_pairs(*s.mesh, 200, 15);
    const auto buf = backend->integrate_batch({pairs, spec});
    // every value is exactly representable in float
    for (double v : buf.re)
        CHECK(static_cast<double>(static_cast<float>(v)) == v);
}
