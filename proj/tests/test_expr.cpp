#include <doctest.h>

#include <cmath>

#include "efs/errors.hpp"
#include "efs/expr.hpp"
#include "helpers.hpp"

using namespace efs;
using efs::testing::consistent_with;
using efs::testing::count_heads;
using verify::Oracle;

namespace {

double bias_of(const std::string& text, const std::map<std::string, double>& leaves)
{
    auto coin = build_coin(parse_expression(text), leaves, std::make_shared<SampleLedger>(), Stream());
    return Oracle::closed_form_bias(*coin);
}

} // namespace

TEST_CASE("parse round trip")
{
    const Expression e = parse_expression("exp 2 (scale 0.5 leaf:A)");
    CHECK(e.op == "exp");
    REQUIRE(e.args.size() == 1);
    CHECK(e.args[0].op == "scale");
    CHECK(to_string(e) == "(exp 2 (scale 0.5 leaf:A))");
    CHECK(to_string(parse_expression(to_string(e))) == to_string(e));
    CHECK(to_string(parse_expression("mix 0.25 leaf:A const 0.1")) == "(mix 0.25 leaf:A (const 0.1))");
    CHECK(leaf_names(parse_expression("add 0.1 leaf:B (average leaf:A leaf:B)")) == std::set<std::string>{"A", "B"});
}

TEST_CASE("closed forms")
{
    CHECK(bias_of("exp 2.0 (scale 0.5 leaf:A)", {{"A", 1.0}}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(bias_of("complement leaf:A", {{"A", 0.3}}) == doctest::Approx(0.7));
    CHECK(bias_of("double 0.1 leaf:A", {{"A", 0.2}}) == doctest::Approx(0.4));
    CHECK(bias_of("pgf geom:0.5 leaf:A", {{"A", 0.5}}) == doctest::Approx(0.5 / (1 - 0.25)));
    CHECK(bias_of("pgf const:3 leaf:A", {{"A", 0.5}}) == doctest::Approx(0.125));
    CHECK(bias_of("pgf poisson:2 leaf:A", {{"A", 0.5}}) == doctest::Approx(std::exp(-1.0)));
    CHECK(bias_of("average leaf:A leaf:B", {{"A", 0.2}, {"B", 0.6}}) == doctest::Approx(0.4));
    CHECK(bias_of("add 0.1 leaf:A leaf:B", {{"A", 0.2}, {"B", 0.6}}) == doctest::Approx(0.8));
    CHECK(bias_of("exp-lazy 3 leaf:A", {{"A", 0.5}}) == doctest::Approx(std::exp(-1.5)));
}

TEST_CASE("shared leaves")
{
    auto ledger = std::make_shared<SampleLedger>();
    auto coin = build_coin(parse_expression("average leaf:A leaf:A"), {{"A", 0.3}}, ledger, derive_stream({4}, "expr"));
    const std::uint64_t n = 100'000;
    CHECK(consistent_with(count_heads(*coin, n), n, 0.3));
    CHECK(ledger->sources() == 1);
    CHECK(ledger->total() == n);
}

TEST_CASE("malformed expressions")
{
    for (const char* bad : {"", "scale 0.5", "scale x leaf:A", "frob leaf:A", "(scale 0.5 leaf:A", "leaf:", "leaf:A leaf:B",
                            "pgf zeta:1 leaf:A", "mix 0.5 leaf:A"})
        CHECK_THROWS_AS(parse_expression(bad), InvalidParameter);
    CHECK_THROWS_AS(bias_of("leaf:A", {}), InvalidParameter);
}
