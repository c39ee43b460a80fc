#include "efs/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>

#include "efs/audit.hpp"
#include "efs/errors.hpp"
#include "efs/matching_audit.hpp"

namespace efs::suites {

using nlohmann::json;
using verify::Oracle;

namespace {

std::uint64_t scaled(double scale, std::uint64_t n, std::uint64_t floor = 1)
{
    return std::max<std::uint64_t>(floor, static_cast<std::uint64_t>(std::llround(scale * static_cast<double>(n))));
}

json report_json(const verify::DistributionReport& r)
{
    return {{"target", r.target}, {"empirical", r.empirical}, {"trials", r.trials}, {"chi2", r.chi2},
            {"dof", r.dof},       {"p_value", r.p_value},     {"tv", r.tv},         {"significance", r.significance}};
}

json audit_json(const verify::AuditReport& r)
{
    return {{"quantity", r.name},       {"estimate", r.estimate}, {"standard_error", r.standard_error},
            {"threshold", r.threshold}, {"direction", r.direction}, {"p_value", r.p_value}};
}

struct Context {
    std::string suite;
    SuiteOptions opts;
    Stream root;
    std::vector<Check> out;
    std::chrono::steady_clock::time_point last = std::chrono::steady_clock::now();

    Context(std::string name, const SuiteOptions& o) : suite(std::move(name)), opts(o), root(derive_stream({o.seed}, suite)) {}

    Stream stream(const std::string& label) const { return root.derive(label); }
    std::uint64_t n(std::uint64_t full, std::uint64_t floor = 1) const { return scaled(opts.scale, full, floor); }
    void add(std::string name, int criterion, bool pass, json metrics)
    {
        const auto now = std::chrono::steady_clock::now();
        out.push_back({suite, std::move(name), criterion, pass, std::move(metrics),
                       std::chrono::duration<double>(now - last).count()});
        last = now;
    }
};

// ---------------------------------------------------------------- factory

void factory_exactness(Context& cx)
{
    using Build = std::function<CoinPtr(const std::shared_ptr<SampleLedger>&, Stream&)>;
    struct Point {
        std::string name;
        double target;
        Build build;
    };
    auto leaf = [](double p, const std::shared_ptr<SampleLedger>& l, Stream& s) {
        return make_bernoulli_source("leaf-" + std::to_string(l->sources()), p, l, s.split());
    };
    std::vector<Point> grid;
    auto point = [&](std::string name, double target, Build f) { grid.push_back({std::move(name), target, std::move(f)}); };
    for (double p : {0.1, 0.5, 0.9})
        point(nlohmann::json(p).dump().insert(0, "leaf(p=") + ")", p, [=](auto& l, Stream& s) { return leaf(p, l, s); });
    point("constant(0.3)", 0.3, [](auto&, Stream& s) { return constant_coin(0.3, s.split()); });
    point("continuous_to_bernoulli(uniform)", 0.5, [](auto& l, Stream& s) {
        auto src = std::make_shared<FunctionValueSource>("uniform", [](Stream& r) { return r.uniform(); }, 0.5, l, s.split());
        return continuous_to_bernoulli(src, s.split());
    });
    point("continuous_to_bernoulli(discrete)", 0.35, [](auto& l, Stream& s) {
        auto src = std::make_shared<DiscreteValueSource>("discrete", std::vector<double>{0.0, 0.5, 1.0},
                                                         std::vector<double>{0.5, 0.3, 0.2}, l, s.split());
        return continuous_to_bernoulli(src, s.split());
    });
    point("scale(p=0.8,l=0.5)", 0.4, [=](auto& l, Stream& s) { return scale(leaf(0.8, l, s), 0.5, s.split()); });
    point("scale(p=0.5,l=0.3)", 0.15, [=](auto& l, Stream& s) { return scale(leaf(0.5, l, s), 0.3, s.split()); });
    point("complement(p=0.2)", 0.8, [=](auto& l, Stream& s) { return complement(leaf(0.2, l, s)); });
    point("complement(p=0.7)", 0.3, [=](auto& l, Stream& s) { return complement(leaf(0.7, l, s)); });
    point("double(p=0.2,d=0.1)", 0.4, [=](auto& l, Stream& s) { return double_bias(leaf(0.2, l, s), 0.1, s.split()); });
    point("double(p=0.35,d=0.1)", 0.7, [=](auto& l, Stream& s) { return double_bias(leaf(0.35, l, s), 0.1, s.split()); });
    point("double(p=0.05,d=0.2)", 0.1, [=](auto& l, Stream& s) { return double_bias(leaf(0.05, l, s), 0.2, s.split()); });
    point("pgf(p=0.6,geometric(0.5))", 0.5 / (1.0 - 0.5 * 0.6), [=](auto& l, Stream& s) {
        return pgf(leaf(0.6, l, s), std::make_shared<GeometricDistribution>(0.5), s.split());
    });
    point("pgf(p=0.7,constant(3))", 0.7 * 0.7 * 0.7, [=](auto& l, Stream& s) {
        return pgf(leaf(0.7, l, s), std::make_shared<ConstantDistribution>(3), s.split());
    });
    point("exponentiate(p=0.5,l=2)", std::exp(-1.0),
        [=](auto& l, Stream& s) { return exponentiate(leaf(0.5, l, s), 2.0, s.split()); });
    point("exponentiate(p=0.9,l=5)", std::exp(-0.5),
        [=](auto& l, Stream& s) { return exponentiate(leaf(0.9, l, s), 5.0, s.split()); });
    point("exponentiate(p=0.3,l=0.5,lazy)", std::exp(-0.35),
        [=](auto& l, Stream& s) { return exponentiate(leaf(0.3, l, s), 0.5, s.split(), true); });
    point("average(0.2,0.8)", 0.5, [=](auto& l, Stream& s) { return average(leaf(0.2, l, s), leaf(0.8, l, s), s.split()); });
    point("mix(0.1,0.9,w=0.3)", 0.3 * 0.1 + 0.7 * 0.9,
        [=](auto& l, Stream& s) { return mix(leaf(0.1, l, s), leaf(0.9, l, s), 0.3, s.split()); });
    point("add(0.2,0.3,d=0.1)", 0.5, [=](auto& l, Stream& s) { return add(leaf(0.2, l, s), leaf(0.3, l, s), 0.1, s.split()); });
    point("add(0.1,0.6,d=0.2)", 0.7, [=](auto& l, Stream& s) { return add(leaf(0.1, l, s), leaf(0.6, l, s), 0.2, s.split()); });
    point("exponentiate(add(scale(0.6,0.5),0.2),3)", std::exp(3.0 * (0.3 + 0.2 - 1.0)), [=](auto& l, Stream& s) {
        return exponentiate(add(scale(leaf(0.6, l, s), 0.5, s.split()), leaf(0.2, l, s), 0.2, s.split()), 3.0, s.split());
    });

    const std::uint64_t flips = cx.n(200000, 1000);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto ledger = std::make_shared<SampleLedger>();
        Stream s = cx.stream("factory").derive(g);
        CoinPtr coin = grid[g].build(ledger, s);
        std::uint64_t heads = 0;
        for (std::uint64_t i = 0; i < flips; ++i)
            heads += coin->flip() ? 1 : 0;
        const auto ci = verify::binomial_interval(heads, flips, 0.999);
        const double oracle = Oracle::closed_form_bias(*coin);
        const bool pass = ci.contains(grid[g].target) && std::abs(oracle - grid[g].target) <= 1e-12;
        cx.add(grid[g].name, 1, pass,
               {{"target", grid[g].target}, {"oracle_bias", oracle}, {"empirical", double(heads) / double(flips)},
                {"flips", flips}, {"ci_lo", ci.lo}, {"ci_hi", ci.hi},
                {"base_draws_per_flip", double(ledger->total()) / double(flips)}});
    }
}

// ---------------------------------------------------------------- races

std::vector<double> vmax_half_instance(std::size_t m)
{
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i)
        v[i] = m == 1 ? 0.5 : 0.5 - 0.1 * static_cast<double>(i) / static_cast<double>(m - 1);
    return v;
}

std::vector<CoinPtr> leaf_coins(const std::vector<double>& v, const std::shared_ptr<SampleLedger>& ledger, Stream s)
{
    std::vector<CoinPtr> coins;
    for (std::size_t i = 0; i < v.size(); ++i)
        coins.push_back(make_bernoulli_source("coin-" + std::to_string(i), v[i], ledger, s.derive(i)));
    return coins;
}

std::vector<double> random_biases(Stream& s, std::size_t m)
{
    std::vector<double> v(m);
    for (auto& x : v)
        x = 0.1 + 0.8 * s.uniform();
    return v;
}

void race_exactness(Context& cx)
{
    const std::vector<std::size_t> ms{2, 5, 10};
    const std::vector<double> lambdas{5.0, 10.0, 20.0};
    const double sig = cx.opts.significance / 3.0;  // Bernoulli race, exp-clock variant, basic exp race

    Stream bs = cx.stream("bernoulli");
    const auto v = random_biases(bs, 5);
    const auto target = verify::exact_linear_weights(v);
    const std::uint64_t races = cx.n(100000, 500);
    for (auto impl : {LinearRaceImpl::uniform_pick, LinearRaceImpl::exp_clock}) {
        auto ledger = std::make_shared<SampleLedger>();
        const auto coins = leaf_coins(v, ledger, bs.split());
        Stream aux = bs.split();
        RaceOptions ro;
        ro.impl = impl;
        std::vector<std::uint64_t> counts(5, 0);
        for (std::uint64_t n = 0; n < races; ++n)
            ++counts[bernoulli_race(coins, aux, *ledger, ro).winner];
        const auto r = verify::distribution_report(counts, target, sig);
        const bool primary = impl == LinearRaceImpl::uniform_pick;
        cx.add(primary ? "bernoulli_race_distribution" : "bernoulli_race_distribution_exp_clock", primary ? 2 : 0,
               r.pass, report_json(r));
    }

    {
        auto ledger = std::make_shared<SampleLedger>();
        const std::vector<double> w{0.2, 0.7, 0.5};
        const auto coins = leaf_coins(w, ledger, bs.split());
        Stream aux = bs.split();
        std::vector<std::uint64_t> counts(3, 0);
        for (std::uint64_t n = 0; n < cx.n(50000, 500); ++n)
            ++counts[basic_exp_race(coins, 3.0, aux, *ledger).winner];
        const auto r = verify::distribution_report(counts, verify::exact_exp_weights(w, 3.0), sig);
        cx.add("basic_exp_race_distribution(l=3)", 0, r.pass, report_json(r));
    }

    const std::uint64_t total = cx.n(200000, 1000);
    const std::uint64_t session = std::min<std::uint64_t>(1000, total);
    for (auto m : ms)
        for (double lambda : lambdas) {
            const auto vm = vmax_half_instance(m);
            auto ledger = std::make_shared<SampleLedger>();
            const auto coins = leaf_coins(vm, ledger, cx.stream("exp").derive(m).derive(static_cast<std::uint64_t>(lambda)));
            Stream aux = cx.stream("exp-aux").derive(m).derive(static_cast<std::uint64_t>(lambda));
            std::vector<std::uint64_t> counts(m, 0);
            for (std::uint64_t done = 0; done < total; done += session) {
                FastExpRace race(coins, lambda, aux.split(), *ledger);
                for (std::uint64_t n = 0; n < std::min(session, total - done); ++n)
                    ++counts[race.sample().winner];
            }
            const auto r = verify::distribution_report(counts, verify::exact_exp_weights(vm, lambda), cx.opts.significance);
            json j = report_json(r);
            j["m"] = m;
            j["lambda"] = lambda;
            j["session_size"] = session;
            j["tv_limit"] = 0.01;
            cx.add("fast_exp_race_tv(m=" + std::to_string(m) + ",l=" + std::to_string(int(lambda)) + ")", 3,
                   r.tv <= 0.01, j);
        }

    Stream ss = cx.stream("shift");
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
        const std::size_t m = 1 + ss.below(10);
        std::vector<double> a(m);
        for (auto& x : a)
            x = ss.uniform();
        const double c = 20.0 * ss.uniform() - 10.0;
        const double lambda = 20.0 * ss.uniform();
        std::vector<double> b(a);
        for (auto& x : b)
            x += c;
        const auto pa = verify::exact_exp_weights(a, lambda);
        const auto pb = verify::exact_exp_weights(b, lambda);
        for (std::size_t i = 0; i < m; ++i)
            worst = std::max(worst, std::abs(pa[i] - pb[i]));
    }
    cx.add("exp_weights_shift_invariance", 4, worst <= 1e-12, {{"cases", 1000}, {"max_abs_diff", worst}, {"limit", 1e-12}});
}

void race_cost(Context& cx)
{
    {
        Stream bs = cx.stream("bernoulli");
        const auto v = random_biases(bs, 5);
        auto ledger = std::make_shared<SampleLedger>();
        const auto coins = leaf_coins(v, ledger, bs.split());
        Stream aux = bs.split();
        verify::RunningStats draws;
        for (std::uint64_t n = 0; n < cx.n(100000, 500); ++n)
            draws.add(static_cast<double>(bernoulli_race(coins, aux, *ledger).base_draws));
        double sum = 0.0;
        for (double x : v)
            sum += x;
        const double expected = 5.0 / sum;
        const double rel = std::abs(draws.mean() - expected) / expected;
        cx.add("bernoulli_race_mean_draws", 2, rel <= 0.05,
               {{"mean_draws", draws.mean()}, {"standard_error", draws.standard_error()}, {"expected", expected},
                {"relative_error", rel}, {"limit", 0.05}});
    }

    {
        // Basic race cost against lambda / mean_i exp(lambda (v_i - 1)) and the bound lambda m e^{lambda(1 - vmax)}.
        const std::vector<double> v{0.6, 0.8, 0.7};
        const double lambda = 4.0;
        auto ledger = std::make_shared<SampleLedger>();
        const auto coins = leaf_coins(v, ledger, cx.stream("basic"));
        Stream aux = cx.stream("basic-aux");
        verify::RunningStats draws;
        RaceOptions ro;
        ro.lazy_exponentiation = false;
        for (std::uint64_t n = 0; n < cx.n(20000, 500); ++n)
            draws.add(static_cast<double>(basic_exp_race(coins, lambda, aux, *ledger, ro).base_draws));
        double mean_w = 0.0;
        for (double x : v)
            mean_w += std::exp(lambda * (x - 1.0)) / 3.0;
        const double exact = lambda / mean_w;
        const double bound = lambda * 3.0 * std::exp(lambda * 0.2);
        const auto r = verify::within("basic_race_draws", draws.mean(), draws.standard_error(), exact);
        cx.add("basic_exp_race_cost", 0, r.pass && draws.mean() <= 2.0 * bound,
               {{"audit", audit_json(r)}, {"cost_bound", bound}});

        // Lazy products stop at the first tails: sum_j P(K >= j) p^(j-1) flips per attempt.
        const std::vector<double> w{0.3, 0.66, 0.5};
        const double lam = 12.0;
        const auto lazy_coins = leaf_coins(w, ledger, cx.stream("basic-lazy"));
        verify::RunningStats lazy_draws;
        for (std::uint64_t n = 0; n < cx.n(20000, 500); ++n)
            lazy_draws.add(static_cast<double>(basic_exp_race(lazy_coins, lam, aux, *ledger).base_draws));
        double cost = 0.0, accept = 0.0;
        for (double p : w) {
            double tail = 1.0 - std::exp(-lam), pmf = std::exp(-lam), pj = 1.0;
            for (int j = 1; j <= 200; ++j) {
                cost += tail * pj / 3.0;
                pmf *= lam / j;
                tail -= pmf;
                pj *= p;
            }
            accept += std::exp(lam * (p - 1.0)) / 3.0;
        }
        const double series = cost / accept;
        const double formula = basic_exp_race_expected_draws(w, lam);
        const auto lr = verify::within("lazy_basic_race_draws", lazy_draws.mean(), lazy_draws.standard_error(), series);
        cx.add("basic_exp_race_cost_lazy", 0, lr.pass && std::abs(formula - series) <= 1e-9 * series,
               {{"audit", audit_json(lr)}, {"library_formula", formula}});
    }

    const std::uint64_t invocations = cx.n(200, 10);
    for (std::size_t m : {2u, 5u, 10u}) {
        const auto v = vmax_half_instance(m);
        std::map<int, double> mean_at;
        for (int lambda : {10, 20}) {
            auto ledger = std::make_shared<SampleLedger>();
            const auto coins = leaf_coins(v, ledger, cx.stream("fast").derive(m).derive(lambda));
            Stream aux = cx.stream("fast-aux").derive(m).derive(lambda);
            verify::RunningStats per_invocation;
            verify::RunningStats per_race;
            std::uint64_t setup = 0;
            for (std::uint64_t n = 0; n < invocations; ++n) {
                FastExpRace race(coins, lambda, aux.split(), *ledger);
                const RaceResult r = race.sample();
                setup = race.setup_draws();
                per_race.add(static_cast<double>(r.base_draws));
                per_invocation.add(static_cast<double>(r.base_draws + race.setup_draws()));
            }
            mean_at[lambda] = per_invocation.mean();
            if (lambda != 20)
                continue;
            const double basic = lambda * static_cast<double>(m) * std::exp(lambda * 0.5);
            const double limit = 0.01 * basic;
            cx.add("fast_race_cost(m=" + std::to_string(m) + ",l=20)", 3, per_invocation.mean() < limit,
                   {{"mean_draws_per_invocation", per_invocation.mean()},
                    {"standard_error", per_invocation.standard_error()},
                    {"setup_draws", setup},
                    {"mean_draws_excluding_setup", per_race.mean()},
                    {"basic_predicted", basic},
                    {"limit", limit},
                    {"ratio_to_basic", per_invocation.mean() / basic},
                    {"amortized_ratio_to_basic", per_race.mean() / basic},
                    {"invocations", invocations}});
        }
        const double growth = mean_at[20] / mean_at[10];
        cx.add("fast_race_lambda_doubling(m=" + std::to_string(m) + ")", 0, growth <= 32.0,
               {{"mean_draws_l10", mean_at[10]}, {"mean_draws_l20", mean_at[20]}, {"growth", growth}, {"limit", 32.0}});
    }
}

// ---------------------------------------------------------------- urns

UrnEnvironment random_environment(Stream& s, std::size_t m)
{
    std::vector<Urn> urns;
    std::vector<double> values;
    for (std::size_t j = 0; j < m; ++j) {
        Urn u;
        const std::size_t outcomes = 1 + s.below(3);
        for (std::size_t o = 0; o < outcomes; ++o) {
            u.outcomes.push_back(values.size());
            u.probs.push_back(0.1 + s.uniform());
            values.push_back(s.uniform());
        }
        urns.push_back(std::move(u));
    }
    return UrnEnvironment::from_table(std::move(urns), {{0, values}});
}

void urns_welfare(Context& cx)
{
    const std::size_t envs = 10;
    const double sig = cx.opts.significance / static_cast<double>(envs);
    const std::uint64_t trials = cx.n(100000, 1000);
    for (std::size_t e = 0; e < envs; ++e) {
        Stream s = cx.stream("env").derive(e);
        const std::size_t m = 2 + s.below(7);
        const double eps = e % 2 == 0 ? 0.1 : 0.2;
        const auto env = random_environment(s, m);
        const auto audit = verify::urn_welfare_audit(env, {0, 1.0}, eps, trials, s.derive("audit"), 1000, sig);
        json j{{"m", m}, {"eps", eps}, {"lambda", urn_lambda(m, eps)}, {"values", Oracle::urn_values(env, {0, 1.0})}};
        j["allocation"] = report_json(audit.allocation);
        j["welfare"] = audit_json(audit.welfare);
        j["mean_draws"] = audit.mean_draws;
        j["fast_sessions"] = audit.fast_sessions;
        cx.add("urn_env_" + std::to_string(e), 5, audit.allocation.pass && audit.welfare.pass, j);
    }
}

void urns_ic(Context& cx)
{
    const auto env = two_urn_example();
    const std::vector<AgentType> grid{{0, 1.0}, {1, 1.0}, {0, 0.5}};
    const std::uint64_t trials = cx.n(5000, 200);
    const auto naive = verify::ic_audit(env, verify::naive_mechanism(env, 20), grid, grid, trials, cx.stream("naive"));
    const auto ew = verify::ic_audit(env, verify::exp_weights_mechanism(env, 0.1), grid, grid, trials, cx.stream("ew"));
    auto pairs = [&](const verify::IcAudit& a) {
        json out = json::array();
        for (const auto& p : a.pairs)
            out.push_back({{"truth", p.truth}, {"report", p.report}, {"margin", p.margin.mean()},
                           {"standard_error", p.margin.standard_error()}});
        return out;
    };
    const bool naive_manipulable = naive.worst.estimate < 0.0 && naive.worst.p_value < 1e-3;
    cx.add("naive_has_profitable_misreport", 6, naive_manipulable,
           {{"worst", audit_json(naive.worst)}, {"pairs", pairs(naive)}, {"n_samples", 20}});
    cx.add("exp_weights_no_profitable_misreport", 6, ew.worst.pass,
           {{"worst", audit_json(ew.worst)}, {"pairs", pairs(ew)}, {"eps", 0.1}});
}

void payment_identity(Context& cx)
{
    const std::uint64_t trials = cx.n(50000, 500);
    for (std::size_t e = 0; e < 5; ++e) {
        Stream s = cx.stream("env").derive(e);
        const std::size_t m = 2 + s.below(3);
        const auto env = random_environment(s, m);
        // eps = 0.4 keeps lambda <= 4, so both race variants are exercised.
        const double eps = e % 2 == 0 ? 0.2 : 0.4;
        const auto r = verify::payment_identity_audit(env, {0, 1.0}, eps, trials, s.derive("audit"));
        cx.add("payment_env_" + std::to_string(e), 7, r.pass,
               {{"m", m}, {"eps", eps}, {"lambda", urn_lambda(m, eps)}, {"audit", audit_json(r)}, {"trials", trials}});
    }
}

// ---------------------------------------------------------------- matching

void matching_kkt(Context& cx)
{
    const auto cases = verify::kkt_audit(20, cx.stream("kkt"));
    for (std::size_t n = 0; n < cases.size(); ++n) {
        const auto& c = cases[n];
        const double gap = std::abs(c.opt - c.oracle_opt);
        const bool pass = c.kkt_residual <= 1e-8 && c.opt >= c.lower_bound - 1e-12 && gap <= 1e-6;
        cx.add("instance_" + std::to_string(n), 8, pass,
               {{"m", c.m}, {"k", c.k}, {"delta", c.delta}, {"opt", c.opt}, {"oracle_opt", c.oracle_opt},
                {"opt_gap", gap}, {"kkt_residual", c.kkt_residual}, {"capacity_residual", c.capacity_residual},
                {"lower_bound", c.lower_bound}});
    }
}

void gamma_bounds(Context& cx)
{
    Stream s = cx.stream("means");
    Eigen::MatrixXd v(16, 2);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            v(i, j) = s.uniform();
    const std::size_t reps = cx.n(200, 20);
    const auto a = verify::gamma_bounds_audit(v, 8, 0.2, 0.1, reps, cx.stream("reps"));
    const auto [lo, hi] = std::minmax_element(a.gammas.begin(), a.gammas.end());
    cx.add("gamma_within_bounds", 9, a.fraction() >= 0.9,
           {{"m", 2}, {"k", 8}, {"delta", 0.2}, {"eta", 0.1}, {"opt", a.opt}, {"lower", a.opt / 8},
            {"upper", 12 * a.opt / 8}, {"fraction_inside", a.fraction()}, {"repetitions", reps},
            {"gamma_min", *lo}, {"gamma_max", *hi}, {"samples_per_edge", gamma_sample_size(2, 8, 0.2, 0.1)}});
}

void online_welfare(Context& cx)
{
    const auto perfect = verify::perfect_matching_audit(cx.n(1000, 50), cx.stream("perfect"));
    cx.add("perfect_matching", 10, perfect.perfect == perfect.runs, {{"runs", perfect.runs}, {"perfect", perfect.perfect}});

    const std::size_t seeds = cx.n(50, 5);
    const auto a = verify::online_welfare_audit(3, 20, 0.15, 0.25, seeds, cx.stream("desk"));
    const auto r = verify::at_least("regularized_welfare_ratio", a.ratio.mean(), a.ratio.standard_error(), 0.8);
    cx.add("regularized_welfare_ratio", 10, r.pass,
           {{"m", 3}, {"k", 20}, {"delta", 0.15}, {"eta", 0.25}, {"seeds", seeds}, {"audit", audit_json(r)},
            {"mean_edge_samples", a.edge_samples.mean()}});
    cx.add("welfare_loss_decomposition", 0, true,
           {{"value_per_replica", a.value_per_replica.mean()}, {"opt_per_replica", a.opt_per_replica.mean()},
            {"entropy_term", 0.15 * std::log(3.0)}, {"slack", a.slack.mean()},
            {"slack_standard_error", a.slack.standard_error()}});
}

BayesianSetting three_type_setting()
{
    const std::vector<std::vector<double>> table{{1.0, 0.0, 0.2}, {0.0, 1.0, 0.2}, {0.3, 0.3, 1.0}};
    BayesianSetting b;
    b.priors = {FinitePrior{{{0, 1.0}, {1, 1.0}, {2, 1.0}}, {0.5, 0.3, 0.2}}};
    b.valuation = [table](std::size_t id, std::size_t o) { return table.at(id).at(o); };
    b.algorithm = [table](const std::vector<AgentType>& p, Stream&) {
        const auto& row = table.at(p.at(0).id);
        return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    };
    return b;
}

void stationarity(Context& cx)
{
    const auto setting = three_type_setting();
    SelectOptions opts;
    opts.m = 2;
    opts.k = 10;
    opts.delta = 0.5;
    opts.eta = 0.25;
    opts.gamma_options.desk_override = true;
    auto selector = [&](const AgentType& t, Session& s) { return surrogate_select(setting, 0, t, opts, s); };
    const std::size_t trials = cx.n(10000, 200);
    const auto r = verify::stationarity_audit(selector, setting.priors[0], opts.m, trials, cx.stream("select"), 0.02,
                                              cx.opts.significance / 2.0);
    cx.add("selected_index_uniform", 11, r.index.pass, report_json(r.index));
    json types = report_json(r.types);
    types["tv_limit"] = 0.02;
    cx.add("selected_type_tv", 11, r.tv.pass, types);
}

void monotone_k(Context& cx)
{
    Stream s = cx.stream("instance");
    const std::size_t types = 4;
    FinitePrior prior;
    for (std::size_t t = 0; t < types; ++t) {
        prior.types.push_back({t, 1.0});
        prior.probs.push_back(0.2 + s.uniform());
    }
    Eigen::MatrixXd w(types, types);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            w(i, j) = s.uniform();
    const std::size_t draws = cx.n(500, 50);
    const auto a = verify::monotone_load_audit(w, prior, 3, {1, 2, 4}, draws, cx.stream("draws"));
    json welfare = json::array();
    for (std::size_t i = 0; i < a.loads.size(); ++i)
        welfare.push_back({{"k", a.loads[i]}, {"mean", a.welfare[i].mean()}, {"standard_error", a.welfare[i].standard_error()}});
    for (const auto& step : a.steps)
        cx.add(step.name, 12, step.pass, {{"audit", audit_json(step)}, {"tolerance_se", 2}, {"welfare", welfare}, {"draws", draws}});
}

using SuiteFn = void (*)(Context&);

const std::map<std::string, SuiteFn>& registry()
{
    static const std::map<std::string, SuiteFn> r{
        {"factory-exactness", factory_exactness}, {"race-exactness", race_exactness},
        {"race-cost", race_cost},                 {"urns-welfare", urns_welfare},
        {"urns-ic", urns_ic},                     {"matching-kkt", matching_kkt},
        {"gamma-bounds", gamma_bounds},           {"online-welfare", online_welfare},
        {"stationarity", stationarity},           {"monotone-k", monotone_k},
        {"payment-identity", payment_identity},
    };
    return r;
}

} // namespace

const std::vector<std::string>& suite_names()
{
    static const std::vector<std::string> names{
        "factory-exactness", "race-exactness", "race-cost",    "urns-welfare", "urns-ic",         "matching-kkt",
        "gamma-bounds",      "online-welfare", "stationarity", "monotone-k",   "payment-identity"};
    return names;
}

std::vector<Check> run_suite(const std::string& name, const SuiteOptions& opts)
{
    const auto it = registry().find(name);
    if (it == registry().end())
        throw InvalidParameter("unknown suite '" + name + "'");
    if (!(opts.scale > 0.0) || !(opts.significance > 0.0 && opts.significance < 1.0))
        throw InvalidParameter("suite scale must be positive and significance in (0,1)");
    Context cx(name, opts);
    it->second(cx);
    return std::move(cx.out);
}

json to_json(const Check& c)
{
    return {{"suite", c.suite}, {"check", c.name}, {"criterion", c.criterion}, {"pass", c.pass}, {"metrics", c.metrics}};
}

} // namespace efs::suites
