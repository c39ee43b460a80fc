#include <doctest.h>

#include <cmath>

#include "efs/audit.hpp"
#include "efs/errors.hpp"
#include "efs/matching.hpp"
#include "helpers.hpp"

using namespace efs;

namespace {

Eigen::MatrixXd random_values(Stream& s, Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXd v(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            v(i, j) = s.uniform();
    return v;
}

MatchingInstance constant_instance(std::size_t m, std::size_t k, double c, std::shared_ptr<SampleLedger> ledger)
{
    return MatchingInstance(m, k, [c](std::size_t, std::size_t, Stream&) { return c; }, std::move(ledger),
                            derive_stream({1}, "const"));
}

FinitePrior three_types() { return {{{0, 1.0}, {1, 1.0}, {2, 1.0}}, {0.5, 0.3, 0.2}}; }

// Outcome o is valued table[type][o]; A picks the outcome a type likes best.
BayesianSetting table_setting(FinitePrior prior, std::vector<std::vector<double>> table)
{
    BayesianSetting b;
    b.priors = {std::move(prior)};
    b.valuation = [table](std::size_t id, std::size_t o) { return table.at(id).at(o); };
    b.algorithm = [table](const std::vector<AgentType>& p, Stream&) {
        const auto& row = table.at(p.at(0).id);
        return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    };
    return b;
}

} // namespace

TEST_CASE("derived parameters")
{
    const auto p = reduction_params(3, 0.5);
    CHECK(p.delta == doctest::Approx(0.15170653777113957).epsilon(1e-15));
    CHECK(p.eta == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(p.k == 119);
    CHECK(reduction_params(1, 0.5).k == 1);
    CHECK(reduction_params(4, 0.3, 2.0).eta == doctest::Approx(0.05));
    CHECK_THROWS_AS(reduction_params(3, 1.0), InvalidParameter);

    CHECK(gamma_sample_size(2, 8, 0.2, 0.1) == 745);
    CHECK(gamma_min_load(2, 0.2, 0.1) == doctest::Approx(3648.2457245402443));

    CHECK(market_size_for_doubling_dim(2, 0.5) == 4);
    CHECK(market_size_for_doubling_dim(2, 0.1) == 500);
    CHECK(market_size_for_doubling_dim(3, 0.5) == 8);
    CHECK_THROWS_AS(market_size_for_doubling_dim(1.5, 0.5), InvalidParameter);
}

TEST_CASE("offline solver: trivial instances")
{
    Eigen::MatrixXd one(4, 1);
    one << 0.1, 0.2, 0.3, 0.4;
    auto s1 = solve_offline(one, 0.3, 4);
    CHECK(s1.opt == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((s1.x.array() == 1.0).all());

    const double c = 0.37;
    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(12, 3, c);
    auto s2 = solve_offline(flat, 0.2, 4);
    CHECK(s2.opt == doctest::Approx(12 * c + 0.2 * 12 * std::log(3.0)).epsilon(1e-12));
    CHECK((s2.x.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(solve_offline(flat, 0.0, 4), InvalidParameter);
    CHECK_THROWS_AS(solve_offline(flat, 0.2, 3), InvalidParameter);
}

TEST_CASE("offline solver agrees with Sinkhorn and satisfies KKT")
{
    Stream s = derive_stream({60}, "kkt");
    {
        Eigen::MatrixXd v = random_values(s, 4, 2);
        auto sol = solve_offline(v, 0.1, 2);
        CHECK(std::abs(sol.opt - verify::sinkhorn_matching_opt(v, 0.1, 2)) <= 1e-6);
    }
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 1 + s.below(4);
        const std::size_t k = 1 + s.below(12 / m);
        const double delta = 0.05 + 0.5 * s.uniform();
        Eigen::MatrixXd v = random_values(s, static_cast<Eigen::Index>(k * m), static_cast<Eigen::Index>(m));
        auto sol = solve_offline(v, delta, k);
        INFO("m " << m << " k " << k << " delta " << delta);
        CHECK(sol.kkt_residual <= 1e-8);
        CHECK(sol.capacity_residual <= 1e-9);
        CHECK(sol.opt >= delta * static_cast<double>(m * k) * std::log(static_cast<double>(m)) - 1e-12);
        CHECK(std::abs(sol.opt - verify::sinkhorn_matching_opt(v, delta, k)) <= 1e-6);
        CHECK(sol.alpha.minCoeff() == 0.0);
        for (Eigen::Index i = 0; i < sol.x.rows(); ++i)
            CHECK(std::abs(sol.x.row(i).sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("offline solver handles sharp regularisation")
{
    Stream s = derive_stream({61}, "sharp");
    Eigen::MatrixXd v = random_values(s, 20, 4);
    auto sol = solve_offline(v, 0.005, 5);
    CHECK(sol.capacity_residual <= 1e-9);
    // Approaches the unregularised optimum.
    const auto exact = verify::max_weight_k_matching(v, 5);
    CHECK(sol.opt >= exact.value - 1e-9);
    CHECK(sol.opt <= exact.value + 0.005 * 20 * std::log(4.0) + 1e-9);
}

TEST_CASE("matching instance meters edge draws per surrogate")
{
    auto ledger = std::make_shared<SampleLedger>();
    Eigen::MatrixXd means(2, 2);
    means << 0.2, 0.9, 0.5, 0.5;
    auto inst = MatchingInstance::bernoulli(means, 1, ledger, derive_stream({62}, "inst"));
    for (int n = 0; n < 10; ++n)
        inst.sample(0, 1);
    auto c = inst.edge_coin(1, 0);
    CHECK(testing::consistent_with(testing::count_heads(*c, 100000), 100000, 0.5));
    CHECK(ledger->count(surrogate_source_name(1)) == 10);
    CHECK(ledger->count(surrogate_source_name(0)) == 100000);
    CHECK(verify::Oracle::true_means(inst)->isApprox(means));
    CHECK_THROWS_AS(inst.sample(2, 0), InvalidParameter);

    MatchingInstance bad(1, 1, [](std::size_t, std::size_t, Stream&) { return 1.5; }, ledger, Stream{});
    CHECK_THROWS_AS(bad.sample(0, 0), ContractViolation);
}

TEST_CASE("gamma estimate")
{
    auto ledger = std::make_shared<SampleLedger>();
    GammaOptions desk{true, 3};
    auto flat = constant_instance(3, 4, 0.4, ledger);
    const auto g = estimate_gamma(flat, 0.1, 0.2, desk);
    CHECK(g.gamma == doctest::Approx(6.1183347464017315).epsilon(1e-12));
    CHECK(g.draws == 3 * 12 * 3);

    auto single = constant_instance(1, 5, 0.6, ledger);
    CHECK(estimate_gamma(single, 0.1, 0.2, desk).gamma == doctest::Approx(4.0 * 5 * 0.6 / 5).epsilon(1e-15));

    // k = 4 is far below the load the bound needs.
    CHECK_THROWS_AS(estimate_gamma(flat, 0.1, 0.2), InvalidParameter);
    CHECK_THROWS_AS(estimate_gamma(flat, 0.1, 0.2, {false, 3}), InvalidParameter);
}

TEST_CASE("gamma brackets OPT / k")
{
    Stream s = derive_stream({63}, "gamma");
    const Eigen::MatrixXd v = random_values(s, 16, 2);
    const double opt = solve_offline(v, 0.2, 8).opt;
    int inside = 0;
    for (int rep = 0; rep < 200; ++rep) {
        auto inst = MatchingInstance::bernoulli(v, 8, std::make_shared<SampleLedger>(), s.split());
        const auto g = estimate_gamma(inst, 0.2, 0.1, {true, std::nullopt});
        CHECK(g.samples_per_edge == 745);
        inside += (opt / 8 <= g.gamma && g.gamma <= 12 * opt / 8) ? 1 : 0;
    }
    CHECK(inside >= 180);
}

TEST_CASE("step duals")
{
    OnlineMatchState st(2, 5);
    CHECK(step_duals(st, 0.5) == std::vector<double>{0.5, 0.5});
    st.loads = {3, 0};
    const auto a = step_duals(st, 0.5);
    CHECK(a[0] == doctest::Approx(0.8175744761936437).epsilon(1e-14));
    CHECK(a[1] == doctest::Approx(0.18242552380635635).epsilon(1e-14));

    OnlineMatchState three(3, 2);
    three.loads = {2, 1, 0};
    const auto b = step_duals(three, 0.3);
    CHECK(b[0] == 0.0);
    CHECK(b[1] + b[2] == doctest::Approx(1.0));

    three.loads = {2, 2, 2};
    CHECK_THROWS_AS(step_duals(three, 0.3), InvariantViolation);
}

TEST_CASE("match_replica marginals")
{
    Eigen::MatrixXd means(2, 2);
    means << 0.6, 0.4, 0.5, 0.5;
    const std::vector<double> target{0.7310585786300048, 1.0 - 0.7310585786300048};
    const std::vector<double> alpha{0.5, 0.5};
    auto ledger = std::make_shared<SampleLedger>();
    auto inst = MatchingInstance::bernoulli(means, 1, ledger, derive_stream({64}, "mr"));
    Stream aux = derive_stream({64}, "aux");

    SUBCASE("basic race")
    {
        MatchOptions basic;
        basic.allow_fast_race = false;
        auto report = verify::chi_square_check(
            [&] { return match_replica(inst, 0, alpha, 0.4, 0.2, {0, 1}, aux, basic).surrogate; }, target, 100000);
        CHECK(report.pass);
    }
    SUBCASE("fast race")
    {
        const auto step = match_replica(inst, 0, alpha, 0.4, 0.2, {0, 1}, aux);
        CHECK(step.lambda == doctest::Approx(7.0));
        auto report = verify::chi_square_check(
            [&] { return match_replica(inst, 0, alpha, 0.4, 0.2, {0, 1}, aux).surrogate; }, target, 20000);
        CHECK(report.pass);
    }
    SUBCASE("zero prices give plain exponential weights")
    {
        const auto w = verify::exact_exp_weights({0.6, 0.4}, 1.0 / 0.5);
        auto report = verify::chi_square_check(
            [&] { return match_replica(inst, 0, alpha, 0.0, 0.5, {0, 1}, aux).surrogate; }, w, 50000);
        CHECK(report.pass);
    }
    SUBCASE("single available surrogate")
    {
        const auto before = ledger->total();
        for (int n = 0; n < 100; ++n)
            CHECK(match_replica(inst, 0, {0.0, 1.0}, 3.0, 0.1, {1}, aux).surrogate == 1);
        CHECK(ledger->total() == before);
    }
    CHECK_THROWS_AS(match_replica(inst, 0, {0.5, 0.5}, -1.0, 0.1, {0, 1}, aux), InvalidParameter);
    CHECK_THROWS_AS(match_replica(inst, 0, {0.5, 0.5}, 1.0, 0.1, {}, aux), InvalidParameter);
}

TEST_CASE("online matching always ends perfect")
{
    Stream s = derive_stream({65}, "perfect");
    for (int run = 0; run < 200; ++run) {
        const std::size_t m = 1 + s.below(4);
        const std::size_t k = 1 + s.below(5);
        const Eigen::MatrixXd v = random_values(s, static_cast<Eigen::Index>(m * k), static_cast<Eigen::Index>(m));
        auto inst = MatchingInstance::bernoulli(v, k, std::make_shared<SampleLedger>(), s.split());
        Stream aux = s.split();
        const auto r = online_regularized_match(inst, {0.5, 0.3, 1.0, 0.0}, aux);
        REQUIRE(r.assignment.size() == m * k);
        for (auto load : r.loads)
            CHECK(load == k);
        std::vector<std::size_t> count(m, 0);
        for (auto j : r.assignment)
            ++count[j];
        CHECK(count == r.loads);
        CHECK(r.total_edge_samples == inst.ledger()->total());
        for (const auto& step : r.steps) {
            double total = 0.0;
            for (double a : step.alpha)
                total += a;
            CHECK(total == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("online matching examples")
{
    auto ledger = std::make_shared<SampleLedger>();
    Stream aux = derive_stream({66}, "aux");
    auto single = MatchingInstance::bernoulli(Eigen::MatrixXd::Constant(4, 1, 0.5), 4, ledger, Stream{});
    const auto r1 = online_regularized_match(single, {0.1, 0.5, 2.0, 0.0}, aux);
    CHECK(r1.assignment == std::vector<std::size_t>(4, 0));
    CHECK(r1.total_edge_samples == 0);

    Eigen::MatrixXd rows(2, 2);
    rows << 1.0, 0.0, 1.0, 0.0;
    int first_on_zero = 0;
    for (int n = 0; n < 200; ++n) {
        auto inst = MatchingInstance::bernoulli(rows, 1, ledger, aux.split());
        const auto r = online_regularized_match(inst, {0.1, 0.5, 0.0, 0.0}, aux);
        CHECK(r.loads == std::vector<std::size_t>{1, 1});
        first_on_zero += r.assignment[0] == 0 ? 1 : 0;
    }
    // P = e^10 / (e^10 + 1).
    CHECK(first_on_zero >= 198);

    CHECK_THROWS_AS(online_regularized_match(single, {0.1, 1.5, 0.0, 0.0}, aux), InvalidParameter);
}

TEST_CASE("online regularised welfare on a desk instance")
{
    Stream s = derive_stream({67}, "desk");
    verify::RunningStats ratio;
    for (int seed = 0; seed < 5; ++seed) {
        const Eigen::MatrixXd v = random_values(s, 60, 3);
        auto ledger = std::make_shared<SampleLedger>();
        auto fresh = MatchingInstance::bernoulli(v, 20, ledger, s.split());
        const double gamma = estimate_gamma(fresh, 0.15, 0.25, {true, std::nullopt}).gamma;
        auto live = MatchingInstance::bernoulli(v, 20, ledger, s.split());
        Stream aux = s.split();
        const auto r = online_regularized_match(live, {0.15, 0.25, gamma, 0.0}, aux);
        ratio.add(regularized_welfare(v, r, gamma, 0.15) / solve_offline(v, 0.15, 20).opt);
    }
    CHECK(ratio.mean() >= 0.8);
}

TEST_CASE("step distribution reconstructs the row law")
{
    Eigen::MatrixXd v(3, 3);
    v << 0.6, 0.4, 0.1, 0.2, 0.2, 0.2, 0.9, 0.0, 0.5;
    StepLog step;
    step.available = {0, 2};
    step.alpha = {0.3, 0.0, 0.7};
    const auto p = step_distribution(v, 2, step, 2.0, 0.25);
    // (0.9 - 0.6) / 0.25 = 1.2 and (0.5 - 1.4) / 0.25 = -3.6.
    const double w = std::exp(1.2) / (std::exp(1.2) + std::exp(-3.6));
    CHECK(p[0] == doctest::Approx(w).epsilon(1e-14));
    CHECK(p[1] == 0.0);
    CHECK(p[2] == doctest::Approx(1.0 - w).epsilon(1e-12));
}

TEST_CASE("surrogate selection: degenerate cases")
{
    Session s(derive_stream({68}, "sel"), std::make_shared<SampleLedger>());
    auto setting = table_setting(three_types(), {{1.0, 0.0, 0.2}, {0.0, 1.0, 0.2}, {0.3, 0.3, 1.0}});

    SelectOptions one;
    one.m = 1;
    one.k = 1;
    for (int n = 0; n < 50; ++n) {
        const auto c = surrogate_select(setting, 0, {0, 1.0}, one, s);
        CHECK(c.surrogate == 0);
        CHECK(c.real_index == 0);
    }

    auto point = table_setting({{{1, 1.0}}, {1.0}}, {{1.0, 0.0}, {0.2, 0.7}});
    SelectOptions opts;
    opts.m = 2;
    opts.k = 3;
    opts.delta = 0.5;
    opts.eta = 0.3;
    opts.gamma_options = {true, 20};
    for (int n = 0; n < 20; ++n) {
        const auto c = surrogate_select(point, 0, {0, 1.0}, opts, s);
        CHECK(c.type.id == 1);
        CHECK(c.outcome == 1);
        CHECK(c.real_index < 6);
    }
}

TEST_CASE("surrogate selection preserves the prior")
{
    Session s(derive_stream({69}, "stat"), std::make_shared<SampleLedger>());
    const auto prior = three_types();
    auto setting = table_setting(prior, {{1.0, 0.0, 0.2}, {0.0, 1.0, 0.2}, {0.3, 0.3, 1.0}});
    SelectOptions opts;
    opts.m = 2;
    opts.k = 10;
    opts.delta = 0.5;
    opts.eta = 0.25;
    opts.gamma = 1.0;
    std::vector<std::uint64_t> types(3, 0);
    std::vector<std::uint64_t> index(2, 0);
    for (int n = 0; n < 3000; ++n) {
        const AgentType t = prior.sample(s.rng);
        const auto c = surrogate_select(setting, 0, t, opts, s);
        ++types[prior.index_of(c.type)];
        ++index[c.surrogate];
    }
    CHECK(verify::distribution_report(types, prior.probs).pass);
    CHECK(verify::distribution_report(index, {0.5, 0.5}).pass);
}

TEST_CASE("reduction with one surrogate is A on a prior draw")
{
    auto setting = table_setting(three_types(), {{1.0, 0.0, 0.2}, {0.0, 1.0, 0.2}, {0.3, 0.3, 1.0}});
    ReductionOptions opts;
    opts.m = 1;
    opts.eps = 0.3;
    auto mech = reduce_to_bic(setting, opts);
    CHECK(mech.params().k == 1);
    Session s(derive_stream({70}, "m1"), std::make_shared<SampleLedger>());
    verify::RunningStats pay;
    std::vector<std::uint64_t> outcomes(3, 0);
    for (int n = 0; n < 6000; ++n) {
        const auto r = mech.run({{0, 1.0}}, s);
        pay.add(r.payments[0]);
        ++outcomes[r.outcome];
    }
    CHECK(verify::within("payment", pay.mean(), pay.standard_error(), 0.0).pass);
    // The best outcome of each prior type, with the prior's weights.
    CHECK(verify::distribution_report(outcomes, {0.5, 0.3, 0.2}).pass);
    CHECK(s.ledger->total() == 0);
}

TEST_CASE("reduction parameter overrides need the desk flag")
{
    auto setting = table_setting(three_types(), {{1.0, 0.0, 0.2}, {0.0, 1.0, 0.2}, {0.3, 0.3, 1.0}});
    ReductionOptions opts;
    opts.m = 3;
    opts.eps = 0.5;
    opts.k = 4;
    CHECK_THROWS_AS(reduce_to_bic(setting, opts), InvalidParameter);
    opts.desk_override = true;
    CHECK(reduce_to_bic(setting, opts).params().k == 4);

    ReductionOptions derived;
    derived.m = 3;
    derived.eps = 0.5;
    auto mech = reduce_to_bic(setting, derived);
    CHECK(mech.select_options().k == 119);
    CHECK(mech.select_options().delta == doctest::Approx(0.15170653777113957));
}

TEST_CASE("reduction on the two-urn example is incentive compatible")
{
    auto env = std::make_shared<const UrnEnvironment>(two_urn_example());
    const FinitePrior prior{{{0, 1.0}, {1, 1.0}}, {0.5, 0.5}};
    auto naive = [env](const AgentType& t, Stream& rng) {
        Session inner(rng.split(), std::make_shared<SampleLedger>());
        return naive_allocate(*env, t, 20, inner);
    };
    ReductionOptions opts;
    opts.m = 2;
    opts.eps = 0.5;
    opts.k = 4;
    opts.gamma = 1.0;
    opts.delta = 0.5;
    opts.desk_override = true;
    auto mech = reduce_to_bic(urn_setting(env, prior, naive), opts);
    // Utilities from realised outcomes: paired runs share a stream.
    const std::vector<AgentType> truths{{0, 1.0}, {1, 1.0}};
    double worst = 1.0;
    double worst_se = 0.0;
    for (const auto& t : truths)
        for (const auto& lie : truths) {
            if (t.id == lie.id)
                continue;
            verify::RunningStats margin;
            Stream root = derive_stream({71}, "ic").derive(t.id);
            for (int n = 0; n < 1500; ++n) {
                Stream trial = root.derive(static_cast<std::uint64_t>(n));
                Session a(trial, std::make_shared<SampleLedger>());
                Session b(trial, std::make_shared<SampleLedger>());
                const auto honest = mech.run({t}, a);
                const auto other = mech.run({lie}, b);
                const auto& set = mech.setting();
                margin.add((set.value(t, honest.outcome) - honest.payments[0]) -
                           (set.value(t, other.outcome) - other.payments[0]));
            }
            if (margin.mean() < worst) {
                worst = margin.mean();
                worst_se = margin.standard_error();
            }
        }
    INFO("worst margin " << worst << " se " << worst_se);
    CHECK(verify::at_least("ic", worst, worst_se, 0.0).pass);
}
