#include <doctest.h>

#include <cmath>

#include "efs/errors.hpp"
#include "efs/factory.hpp"
#include "helpers.hpp"

using namespace efs;
using efs::testing::Bench;
using efs::testing::consistent_with;
using efs::testing::count_heads;
using verify::Oracle;

namespace {

constexpr std::uint64_t kFlips = 200'000;

void check_bias(Coin& c, double expected, std::uint64_t n = kFlips)
{
    const auto heads = count_heads(c, n);
    INFO("expected " << expected << " got " << static_cast<double>(heads) / static_cast<double>(n));
    CHECK(consistent_with(heads, n, expected));
}

} // namespace

TEST_CASE("continuous to bernoulli")
{
    Bench b(11);
    auto point0 = std::make_shared<DiscreteValueSource>("z0", std::vector<double>{0.0}, std::vector<double>{1.0},
                                                        b.ledger, b.stream());
    auto point1 = std::make_shared<DiscreteValueSource>("z1", std::vector<double>{1.0}, std::vector<double>{1.0},
                                                        b.ledger, b.stream());
    auto two = std::make_shared<DiscreteValueSource>("two", std::vector<double>{0.2, 0.8},
                                                     std::vector<double>{0.5, 0.5}, b.ledger, b.stream());
    auto c0 = continuous_to_bernoulli(point0, b.stream());
    auto c1 = continuous_to_bernoulli(point1, b.stream());
    auto c2 = continuous_to_bernoulli(two, b.stream());
    CHECK(count_heads(*c0, 1000) == 0);
    CHECK(count_heads(*c1, 1000) == 1000);
    const auto before = b.ledger->count("two");
    check_bias(*c2, 0.5);
    CHECK(b.ledger->count("two") - before == kFlips);
    CHECK(Oracle::closed_form_bias(*c2) == doctest::Approx(0.5));
}

TEST_CASE("value sources reject values outside [0,1]")
{
    Bench b(12);
    auto bad = std::make_shared<FunctionValueSource>("bad", [](Stream&) { return 1.5; }, std::nullopt, b.ledger,
                                                     b.stream());
    CHECK_THROWS_AS(bad->draw(), ContractViolation);
    auto c = continuous_to_bernoulli(bad, b.stream());
    CHECK_THROWS_AS(c->flip(), ContractViolation);
    CHECK_THROWS_AS(Oracle::closed_form_bias(*c), InvalidParameter);
}

TEST_CASE("scale")
{
    Bench b(13);
    CHECK(count_heads(*scale(b.coin(0.6), 0.0, b.stream()), 1000) == 0);
    check_bias(*scale(b.coin(0.6), 1.0, b.stream()), 0.6);
    check_bias(*scale(b.coin(0.6), 0.5, b.stream()), 0.3);
    CHECK_THROWS_AS(scale(b.coin(0.5), 1.5, b.stream()), InvalidParameter);
    CHECK_THROWS_AS(scale(b.coin(0.5), -0.1, b.stream()), InvalidParameter);
}

TEST_CASE("complement")
{
    Bench b(14);
    CHECK(count_heads(*complement(b.coin(1.0)), 1000) == 0);
    CHECK(count_heads(*complement(b.coin(0.0)), 1000) == 1000);
    check_bias(*complement(b.coin(0.3)), 0.7);
}

TEST_CASE("double")
{
    Bench b(15);
    CHECK(count_heads(*double_bias(b.coin(0.0), 0.1, b.stream()), 1000) == 0);
    check_bias(*double_bias(b.coin(0.25), 0.1, b.stream()), 0.5);
    check_bias(*double_bias(b.coin(0.4), 0.05, b.stream()), 0.8);
    check_bias(*double_bias(b.coin(0.1), 0.3, b.stream()), 0.2);
    CHECK_THROWS_AS(double_bias(b.coin(0.2), 0.0, b.stream()), InvalidParameter);
    CHECK_THROWS_AS(double_bias(b.coin(0.2), -1.0, b.stream()), InvalidParameter);
}

TEST_CASE("double flags a violated slack precondition")
{
    Bench b(16);
    auto ok = double_bias(b.coin(0.35), 0.1, b.stream());
    auto bad = double_bias(b.coin(0.45), 0.1, b.stream());
    CHECK(Oracle::precondition_violations(*ok).empty());
    CHECK(Oracle::precondition_violations(*bad).size() == 1);
}

TEST_CASE("double respects its step cap")
{
    Bench b(17);
    DoublingOptions opts;
    opts.max_steps = 3;
    auto c = double_bias(b.coin(0.45), 0.01, b.stream(), opts);
    bool threw = false;
    for (int i = 0; i < 100 && !threw; ++i) {
        try {
            c->flip();
        } catch (const BudgetExceeded&) {
            threw = true;
        }
    }
    CHECK(threw);
}

TEST_CASE("double cost grows at most linearly in 1/delta")
{
    // Same distance to the boundary in both runs: p = 1/2 - delta.
    auto mean_cost = [](double delta) {
        Bench b(18);
        auto c = double_bias(b.coin(0.5 - delta), delta, b.stream());
        const int n = 20000;
        count_heads(*c, n);
        return static_cast<double>(b.ledger->total()) / n;
    };
    const double c1 = mean_cost(0.05);
    const double c2 = mean_cost(0.025);
    INFO("cost at delta " << c1 << ", at delta/2 " << c2);
    CHECK(c2 <= 3.0 * c1);
    CHECK(c2 > c1);
}

TEST_CASE("pgf")
{
    Bench b(19);
    auto zero = std::make_shared<ConstantDistribution>(0);
    auto two = std::make_shared<ConstantDistribution>(2);
    CHECK(count_heads(*pgf(b.coin(0.1), zero, b.stream()), 1000) == 1000);
    check_bias(*pgf(b.coin(0.7), two, b.stream()), 0.49);
    check_bias(*pgf(b.coin(0.7), two, b.stream(), true), 0.49);
    auto geo = std::make_shared<GeometricDistribution>(0.5);
    // E[p^K] = (1 - q) / (1 - q p) = 0.5 / 0.8.
    check_bias(*pgf(b.coin(0.4), geo, b.stream()), 0.625);
    auto poisson = std::make_shared<PoissonDistribution>(1.5);
    // exp(1.5 (0.6 - 1)) = exp(-0.6).
    check_bias(*pgf(b.coin(0.6), poisson, b.stream()), 0.54881163609402639);
}

TEST_CASE("pgf draws E[K] per flip")
{
    Bench b(20);
    auto poisson = std::make_shared<PoissonDistribution>(3.0);
    auto c = pgf(b.coin(0.5), poisson, b.stream());
    const int n = 100000;
    count_heads(*c, n);
    CHECK(static_cast<double>(b.ledger->total()) / n == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("exponentiate")
{
    Bench b(21);
    CHECK(count_heads(*exponentiate(b.coin(0.3), 0.0, b.stream()), 1000) == 1000);
    CHECK(count_heads(*exponentiate(b.coin(1.0), 5.0, b.stream()), 1000) == 1000);
    check_bias(*exponentiate(b.coin(0.5), 2.0, b.stream()), 0.36787944117144233);
    // Large rate exercises the rejection branch of the Poisson sampler.
    check_bias(*exponentiate(b.coin(0.98), 40.0, b.stream()), 0.44932896411722156, 50'000);
    CHECK_THROWS_AS(exponentiate(b.coin(0.5), -1.0, b.stream()), InvalidParameter);
}

TEST_CASE("poisson sampler matches its mean and variance")
{
    Stream s = derive_stream({22}, "poisson");
    for (double lambda : {0.5, 7.0, 29.0, 31.0, 200.0}) {
        PoissonDistribution d(lambda);
        verify::RunningStats st;
        for (int i = 0; i < 200000; ++i)
            st.add(static_cast<double>(d.sample(s)));
        INFO("lambda " << lambda);
        CHECK(std::abs(st.mean() - lambda) < 5.0 * std::sqrt(lambda / 200000.0));
        CHECK(st.variance() == doctest::Approx(lambda).epsilon(0.03));
    }
}

TEST_CASE("average and mix")
{
    Bench b(23);
    check_bias(*average(b.coin(0.3), b.coin(0.3), b.stream()), 0.3);
    check_bias(*average(b.coin(0.0), b.coin(1.0), b.stream()), 0.5);
    check_bias(*average(b.coin(0.2), b.coin(0.6), b.stream()), 0.4);
    check_bias(*mix(b.coin(0.2), b.coin(0.6), 0.25, b.stream()), 0.5);
    CHECK_THROWS_AS(mix(b.coin(0.2), b.coin(0.6), 1.25, b.stream()), InvalidParameter);
}

TEST_CASE("add")
{
    Bench b(24);
    CHECK(count_heads(*add(b.coin(0.0), b.coin(0.0), 0.1, b.stream()), 1000) == 0);
    check_bias(*add(b.coin(0.3), b.coin(0.4), 0.1, b.stream()), 0.7);
    check_bias(*add(b.coin(0.1), b.coin(0.1), 0.5, b.stream()), 0.2);
    CHECK_THROWS_AS(add(b.coin(0.1), b.coin(0.1), 0.0, b.stream()), InvalidParameter);
    auto over = add(b.coin(0.5), b.coin(0.45), 0.1, b.stream());
    CHECK(Oracle::precondition_violations(*over).size() == 1);
}

TEST_CASE("one base draw per flip for scale, complement and average")
{
    Bench b(25);
    auto x = b.coin(0.4);
    auto y = b.coin(0.7);
    std::vector<CoinPtr> nodes{scale(x, 0.3, b.stream()), complement(x), average(x, y, b.stream()),
                               scale(complement(y), 0.9, b.stream())};
    for (auto& c : nodes) {
        const auto before = b.ledger->total();
        count_heads(*c, 5000);
        CHECK(b.ledger->total() - before == 5000);
    }
}

TEST_CASE("constant coins cost nothing")
{
    Bench b(26);
    auto c = constant_coin(0.3, b.stream());
    CHECK(consistent_with(count_heads(*c, kFlips), kFlips, 0.3));
    CHECK(b.ledger->total() == 0);
    CHECK_THROWS_AS(constant_coin(1.1, b.stream()), InvalidParameter);
}

namespace {

struct Built {
    CoinPtr coin;
    double bias;
};

// Independent evaluation of the tree being built, kept apart from the oracle.
Built random_tree(Bench& b, Stream& pick, int depth)
{
    if (depth == 0 || pick.uniform() < 0.25) {
        const double p = 0.05 + 0.9 * pick.uniform();
        return {b.coin(p), p};
    }
    switch (pick.below(7)) {
    case 0: {
        auto c = random_tree(b, pick, depth - 1);
        const double l = pick.uniform();
        return {scale(c.coin, l, b.stream()), l * c.bias};
    }
    case 1: {
        auto c = random_tree(b, pick, depth - 1);
        return {complement(c.coin), 1.0 - c.bias};
    }
    case 2: {
        auto c = random_tree(b, pick, depth - 1);
        const double l = 3.0 * pick.uniform();
        return {exponentiate(c.coin, l, b.stream()), std::exp(l * (c.bias - 1.0))};
    }
    case 3: {
        auto c = random_tree(b, pick, depth - 1);
        auto d = random_tree(b, pick, depth - 1);
        return {average(c.coin, d.coin, b.stream()), 0.5 * (c.bias + d.bias)};
    }
    case 4: {
        auto c = random_tree(b, pick, depth - 1);
        if (c.bias > 0.4)
            return {scale(c.coin, 0.5, b.stream()), 0.5 * c.bias};
        const double delta = 0.5 - c.bias;
        return {double_bias(c.coin, delta, b.stream()), 2.0 * c.bias};
    }
    case 5: {
        auto c = random_tree(b, pick, depth - 1);
        auto d = random_tree(b, pick, depth - 1);
        if (c.bias + d.bias > 0.85)
            return {average(c.coin, d.coin, b.stream()), 0.5 * (c.bias + d.bias)};
        return {add(c.coin, d.coin, 1.0 - c.bias - d.bias, b.stream()), c.bias + d.bias};
    }
    default: {
        auto c = random_tree(b, pick, depth - 1);
        auto k = std::make_shared<ConstantDistribution>(2);
        return {pgf(c.coin, k, b.stream()), c.bias * c.bias};
    }
    }
}

} // namespace

TEST_CASE("random composite trees match their closed form")
{
    Bench b(27);
    Stream pick = derive_stream({27}, "shape");
    for (int t = 0; t < 40; ++t) {
        auto tree = random_tree(b, pick, 3);
        INFO("tree " << t);
        CHECK(Oracle::closed_form_bias(*tree.coin) == doctest::Approx(tree.bias).epsilon(1e-12));
        CHECK(Oracle::precondition_violations(*tree.coin).empty());
        check_bias(*tree.coin, tree.bias, 40'000);
    }
}
