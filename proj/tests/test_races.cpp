#include <doctest.h>

#include <cmath>

#include "efs/errors.hpp"
#include "helpers.hpp"

using namespace efs;
using efs::testing::Bench;

namespace {

template <class Race>
verify::DistributionReport run(Race&& race, const std::vector<double>& target, std::uint64_t n)
{
    std::vector<std::uint64_t> counts(target.size(), 0);
    for (std::uint64_t t = 0; t < n; ++t)
        ++counts[race().winner];
    return verify::distribution_report(counts, target, 1e-3);
}

} // namespace

TEST_CASE("bernoulli race on one coin")
{
    Bench b(31);
    auto coins = b.coins({0.3});
    Stream aux = b.stream();
    for (int t = 0; t < 100; ++t)
        CHECK(bernoulli_race(coins, aux, *b.ledger).winner == 0);
}

TEST_CASE("bernoulli race matches linear weights")
{
    Bench b(32);
    const std::vector<double> v{0.2, 0.6};
    auto coins = b.coins(v);
    Stream aux = b.stream();
    const std::vector<double> target{0.25, 0.75};
    auto r = run([&] { return bernoulli_race(coins, aux, *b.ledger); }, target, 100000);
    CHECK(r.pass);
    RaceOptions clocks;
    clocks.impl = LinearRaceImpl::exp_clock;
    auto r2 = run([&] { return bernoulli_race(coins, aux, *b.ledger, clocks); }, target, 100000);
    CHECK(r2.pass);
    auto half = b.coins({0.5, 0.5});
    auto r3 = run([&] { return bernoulli_race(half, aux, *b.ledger); }, {0.5, 0.5}, 100000);
    CHECK(r3.pass);
}

TEST_CASE("bernoulli race cost is m / sum v")
{
    Bench b(33);
    const std::vector<double> v{0.1, 0.25, 0.05, 0.3, 0.2};
    auto coins = b.coins(v);
    Stream aux = b.stream();
    verify::RunningStats cost;
    for (int t = 0; t < 100000; ++t)
        cost.add(static_cast<double>(bernoulli_race(coins, aux, *b.ledger).base_draws));
    CHECK(cost.mean() == doctest::Approx(5.0 / 0.9).epsilon(0.05));
}

TEST_CASE("race budget")
{
    Bench b(34);
    auto coins = b.coins({0.0, 0.0});
    Stream aux = b.stream();
    RaceOptions opts;
    opts.max_draws = 1000;
    CHECK_THROWS_AS(bernoulli_race(coins, aux, *b.ledger, opts), BudgetExceeded);
    opts.impl = LinearRaceImpl::exp_clock;
    CHECK_THROWS_AS(bernoulli_race(coins, aux, *b.ledger, opts), BudgetExceeded);
}

TEST_CASE("basic exponential race")
{
    Bench b(35);
    Stream aux = b.stream();
    auto equal = b.coins({1.0, 1.0});
    CHECK(run([&] { return basic_exp_race(equal, 3.0, aux, *b.ledger); }, {0.5, 0.5}, 20000).pass);

    auto coins = b.coins({0.2, 0.8});
    // e / (e + e^4), e^4 / (e + e^4).
    const std::vector<double> target{0.047425873177566781, 0.95257412682243322};
    CHECK(run([&] { return basic_exp_race(coins, 5.0, aux, *b.ledger); }, target, 100000).pass);
    CHECK_THROWS_AS(basic_exp_race(coins, 0.0, aux, *b.ledger), InvalidParameter);
}

TEST_CASE("basic exponential race cost law")
{
    Bench b(36);
    Stream aux = b.stream();
    RaceOptions eager;
    eager.lazy_exponentiation = false;
    for (double lambda : {2.0, 5.0, 8.0}) {
        INFO("all equal");
        auto flat = b.coins({0.6, 0.6, 0.6});
        verify::RunningStats flat_cost;
        for (int t = 0; t < 20000; ++t)
            flat_cost.add(static_cast<double>(basic_exp_race(flat, lambda, aux, *b.ledger, eager).base_draws));
        const double flat_bound = lambda * 3.0 * std::exp(lambda * 0.4);
        CHECK(flat_cost.mean() <= 2.0 * flat_bound);
        // With equal biases the exact mean is the bound divided by m.
        CHECK(flat_cost.mean() == doctest::Approx(flat_bound / 3.0).epsilon(0.05));

        const std::vector<double> v{0.3, 0.6, 0.45};
        auto coins = b.coins(v);
        verify::RunningStats cost;
        for (int t = 0; t < 20000; ++t)
            cost.add(static_cast<double>(basic_exp_race(coins, lambda, aux, *b.ledger, eager).base_draws));
        const double bound = lambda * 3.0 * std::exp(lambda * (1.0 - 0.6));
        // Each round costs lambda flips and succeeds with probability mean_i exp(lambda (v_i - 1)).
        double success = 0.0;
        for (double x : v)
            success += std::exp(lambda * (x - 1.0)) / 3.0;
        const double exact = lambda / success;
        INFO("lambda " << lambda << " mean " << cost.mean() << " exact " << exact << " bound " << bound);
        CHECK(cost.mean() <= 2.0 * bound);
        CHECK(cost.mean() == doctest::Approx(exact).epsilon(0.05));
    }
}

TEST_CASE("v_max estimate")
{
    Bench b(37);
    Stream aux = b.stream();
    CHECK(estimate_vmax_coin(b.coins({1.0}), 0.2, aux).estimate == 1.0);
    CHECK(estimate_vmax_coin(b.coins({0.0}), 0.2, aux).estimate == 0.0);
    CHECK(vmax_samples_per_coin(3, 0.1) == 1915);  // ceil(400 ln 120), 400 ln 120 = 1914.99...
    int close = 0;
    for (int t = 0; t < 500; ++t) {
        auto coins = b.coins({0.2, 0.5, 0.8});
        auto e = estimate_vmax_coin(coins, 0.1, aux);
        close += std::abs(e.estimate - 0.8) < 0.05 ? 1 : 0;
    }
    CHECK(close >= 475);
    auto ties = estimate_vmax_coin(b.coins({1.0, 1.0}), 0.5, aux);
    CHECK(ties.argmax == 0);
}

TEST_CASE("fast exponential race")
{
    Bench b(38);
    Stream aux = b.stream();
    CHECK_THROWS_AS(FastExpRace(b.coins({0.5}), 4.0, b.stream(), *b.ledger), InvalidParameter);

    auto equal = b.coins({0.5, 0.5, 0.5});
    FastExpRace eq(equal, 6.0, b.stream(), *b.ledger);
    CHECK(run([&] { return eq.sample(); }, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 30000).pass);

    auto coins = b.coins({0.2, 0.8});
    // e^2 / (e^2 + e^8).
    const std::vector<double> target{0.0024726231566347743, 0.99752737684336523};
    FastExpRace race(coins, 10.0, b.stream(), *b.ledger);
    CHECK(race.eps() == doctest::Approx(0.1));
    CHECK(race.shifted_lambda() == doctest::Approx(12.5));
    CHECK(run([&] { return race.sample(); }, target, 50000).pass);
    for (const auto& c : race.shifted_coins())
        CHECK(verify::Oracle::precondition_violations(*c).empty());
}

TEST_CASE("fast race includes the estimate in its draw count")
{
    Bench b(39);
    Stream aux = b.stream();
    auto coins = b.coins({0.4, 0.5});
    const auto before = b.ledger->total();
    auto r = fast_exp_race(coins, 5.0, aux, *b.ledger);
    CHECK(b.ledger->total() - before == r.base_draws);
    CHECK(r.base_draws >= 2 * vmax_samples_per_coin(2, 0.2));
}

TEST_CASE("fast race is far cheaper than the basic race at lambda 20")
{
    Bench b(40);
    auto coins = b.coins({0.5, 0.5, 0.5, 0.5, 0.5});
    FastExpRace race(coins, 20.0, b.stream(), *b.ledger);
    verify::RunningStats cost;
    for (int t = 0; t < 300; ++t)
        cost.add(static_cast<double>(race.sample().base_draws));
    const double basic = 20.0 * 5.0 * std::exp(10.0);
    INFO("fast " << cost.mean() << " + setup " << race.setup_draws() << " vs basic " << basic);
    CHECK(cost.mean() + static_cast<double>(race.setup_draws()) < 0.1 * basic);
}
