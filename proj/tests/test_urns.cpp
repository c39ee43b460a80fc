#include <doctest.h>

#include <cmath>

#include "efs/audit.hpp"
#include "efs/errors.hpp"
#include "helpers.hpp"

using namespace efs;
using verify::Oracle;

namespace {

UrnEnvironment two_point_env(double a, double b)
{
    // Urn j is a point mass on outcome j.
    return UrnEnvironment::from_table({{{0}, {1.0}}, {{1}, {1.0}}}, {{0, {a, b}}});
}

Session session(std::uint64_t seed) { return Session(derive_stream({seed}, "urns"), std::make_shared<SampleLedger>()); }

} // namespace

TEST_CASE("scaling law holds exactly")
{
    auto env = two_urn_example();
    Stream s = derive_stream({41}, "scale");
    for (int n = 0; n < 1000; ++n) {
        const double l = s.uniform();
        const AgentType t{static_cast<std::size_t>(s.below(2)), 1.0};
        const std::size_t o = s.below(3);
        CHECK(env.value(UrnEnvironment::scale_type(l, t), o) == l * env.value(t, o));
    }
    CHECK_THROWS_AS(UrnEnvironment::scale_type(1.5, {0, 1.0}), InvalidParameter);
}

TEST_CASE("valuation outside [0,1] is a contract violation")
{
    UrnEnvironment env({{{0}, {1.0}}}, [](std::size_t, std::size_t) { return 2.0; });
    CHECK_THROWS_AS(env.value({0, 1.0}, 0), ContractViolation);
    auto s = session(42);
    auto c = urn_value_coin(env, {0, 1.0}, 0, s);
    CHECK_THROWS_AS(c->flip(), ContractViolation);
}

TEST_CASE("urn value coins")
{
    auto s = session(43);
    auto ones = UrnEnvironment::from_table({{{0}, {1.0}}}, {{0, {1.0}}});
    auto zeros = UrnEnvironment::from_table({{{0}, {1.0}}}, {{0, {0.0}}});
    auto split = UrnEnvironment::from_table({{{0, 1}, {0.5, 0.5}}}, {{0, {0.2, 0.8}}});
    CHECK(testing::count_heads(*urn_value_coin(ones, {0, 1.0}, 0, s), 1000) == 1000);
    CHECK(testing::count_heads(*urn_value_coin(zeros, {0, 1.0}, 0, s), 1000) == 0);
    auto c = urn_value_coin(split, {0, 1.0}, 0, s);
    const auto before = s.ledger->total();
    CHECK(testing::consistent_with(testing::count_heads(*c, 200000), 200000, 0.5));
    CHECK(s.ledger->total() - before == 200000);
    CHECK(Oracle::urn_values(split, {0, 1.0})[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(urn_value_coin(split, {0, 1.0}, 1, s), InvalidParameter);
}

TEST_CASE("allocate")
{
    auto s = session(44);
    auto single = UrnEnvironment::from_table({{{0}, {1.0}}}, {{0, {0.4}}});
    for (int n = 0; n < 10; ++n)
        CHECK(allocate(single, {0, 1.0}, 0.3, s).urn == 0);
    CHECK(s.ledger->total() == 0);

    auto sym = two_point_env(0.5, 0.5);
    std::vector<std::uint64_t> counts(2, 0);
    for (int n = 0; n < 20000; ++n)
        ++counts[allocate(sym, {0, 1.0}, 0.3, s).urn];
    CHECK(verify::distribution_report(counts, {0.5, 0.5}).pass);

    auto env = two_point_env(0.3, 0.9);
    CHECK(urn_lambda(2, 0.2) == doctest::Approx(3.4657359027997265));
    // exp(lambda v) normalised: e^{1.0397} : e^{3.1192}.
    const std::vector<double> target{0.11111111111111112, 0.88888888888888884};
    CHECK(verify::exact_urn_marginals(env, {0, 1.0}, 0.2)[0] == doctest::Approx(target[0]).epsilon(1e-12));
    auto audit = verify::urn_welfare_audit(env, {0, 1.0}, 0.2, 100000, derive_stream({44}, "w"));
    CHECK(audit.allocation.pass);
    CHECK(audit.welfare.pass);
}

TEST_CASE("allocate through the fast race")
{
    Stream rng = derive_stream({45}, "fast");
    auto env = UrnEnvironment::from_table({{{0}, {1.0}}, {{1}, {1.0}}, {{2, 3}, {0.5, 0.5}}},
                                          {{0, {0.2, 0.5, 0.1, 0.9}}});
    // lambda = ln 3 / 0.2 > 4.
    auto audit = verify::urn_welfare_audit(env, {0, 1.0}, 0.2, 30000, rng);
    CHECK(audit.allocation.pass);
    CHECK(audit.welfare.pass);
}

TEST_CASE("charge")
{
    auto s = session(46);
    auto single = UrnEnvironment::from_table({{{0}, {1.0}}}, {{0, {0.7}}});
    auto rule1 = exp_weights_rule(single, 0.2);
    for (int n = 0; n < 20; ++n)
        CHECK(charge(single, {0, 1.0}, rule1, s).payment == 0.0);

    auto same = UrnEnvironment::from_table({{{0, 1}, {0.3, 0.7}}, {{0, 1}, {0.3, 0.7}}}, {{0, {0.1, 0.9}}});
    CHECK(verify::exact_urn_payment(same, {0, 1.0}, 0.2) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(verify::payment_identity_audit(same, {0, 1.0}, 0.2, 20000, derive_stream({46}, "same")).pass);

    auto env = two_point_env(0.3, 0.9);
    auto report = verify::payment_identity_audit(env, {0, 1.0}, 0.2, 100000, derive_stream({46}, "pi"));
    INFO("mean " << report.estimate << " target " << report.threshold << " se " << report.standard_error);
    CHECK(report.pass);
    CHECK(report.threshold > 0.0);
}

TEST_CASE("naive allocation")
{
    auto s = session(47);
    auto single = UrnEnvironment::from_table({{{0}, {1.0}}}, {{0, {0.4}}});
    CHECK(naive_allocate(single, {0, 1.0}, 5, s) == 0);
    CHECK(naive_allocate(two_point_env(0.0, 1.0), {0, 1.0}, 3, s) == 1);
    CHECK(naive_allocate(two_point_env(0.5, 0.5), {0, 1.0}, 3, s) == 0);
    CHECK_THROWS_AS(naive_allocate(single, {0, 1.0}, 0, s), InvalidParameter);

    auto ex = two_urn_example();
    int urn_b = 0;
    for (int n = 0; n < 2000; ++n)
        urn_b += naive_allocate(ex, {0, 1.0}, 20, s) == 1 ? 1 : 0;
    CHECK(urn_b > 0);
    for (int n = 0; n < 2000; ++n)
        CHECK(naive_allocate(ex, {1, 1.0}, 20, s) == 0);
}

TEST_CASE("the two-urn example: naive is manipulable, exponential weights is not")
{
    auto env = two_urn_example();
    const std::vector<AgentType> truth{{0, 1.0}};
    const std::vector<AgentType> lies{{1, 1.0}, {0, 0.5}};
    auto naive = verify::ic_audit(env, verify::naive_mechanism(env, 20), truth, lies, 5000, derive_stream({48}, "n"));
    INFO("naive margin " << naive.worst.estimate << " se " << naive.worst.standard_error);
    CHECK(naive.worst.estimate < 0.0);
    CHECK(naive.worst.p_value < 1e-3);

    auto ew = verify::ic_audit(env, verify::exp_weights_mechanism(env, 0.1), truth, lies, 5000,
                               derive_stream({48}, "e"));
    INFO("exp-weights margin " << ew.worst.estimate << " se " << ew.worst.standard_error);
    CHECK(ew.worst.pass);
}

TEST_CASE("constant mechanism has zero regret")
{
    auto env = two_urn_example();
    verify::SingleAgentMechanism fixed = [](const AgentType&, Session&) { return verify::SingleAgentOutcome{0, 0.0}; };
    auto r = verify::ic_audit(env, fixed, {{0, 1.0}}, {{1, 1.0}}, 10, derive_stream({49}, "c"));
    CHECK(r.worst.estimate == 0.0);
    CHECK(r.worst.pass);
}

TEST_CASE("exact marginals maximise the entropy-regularised welfare")
{
    // Projected gradient ascent on the simplex as an independent maximiser.
    Stream rng = derive_stream({50}, "mir");
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 2 + rng.below(5);
        std::vector<double> v(m);
        for (auto& x : v)
            x = rng.uniform();
        const double eps = 0.1 + 0.1 * rng.uniform();
        const double tau = eps / std::log(static_cast<double>(m));
        auto objective = [&](const std::vector<double>& x) {
            double f = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                f += v[j] * x[j] - (x[j] > 0.0 ? tau * x[j] * std::log(x[j]) : 0.0);
            return f;
        };
        // Mirror ascent with a small step converges to the unique maximiser.
        std::vector<double> x(m, 1.0 / static_cast<double>(m));
        for (int it = 0; it < 20000; ++it) {
            double total = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double grad = v[j] - tau * (std::log(x[j]) + 1.0);
                x[j] *= std::exp(0.5 * grad / tau);
                total += x[j];
            }
            for (auto& xj : x)
                xj /= total;
        }
        const auto exact = verify::exact_exp_weights(v, 1.0 / tau);
        CHECK(objective(exact) >= objective(x) - 1e-12);
        for (std::size_t j = 0; j < m; ++j)
            CHECK(std::abs(exact[j] - x[j]) <= 1e-8);
    }
}
