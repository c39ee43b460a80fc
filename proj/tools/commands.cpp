#include "commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "efs/audit.hpp"
#include "efs/errors.hpp"
#include "efs/expr.hpp"
#include "efs/suites.hpp"
#include "instances.hpp"

namespace efs::cli {

using nlohmann::json;

namespace {

double parse_double(const std::string& s, const std::string& what)
{
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end)
        throw InvalidParameter(what + ": '" + s + "' is not a number");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        out.push_back(cur);
    return out;
}

std::vector<double> parse_biases(const std::string& s)
{
    std::vector<double> v;
    for (const auto& tok : split(s, ','))
        v.push_back(parse_double(tok, "--biases"));
    if (v.empty())
        throw InvalidParameter("--biases needs at least one value");
    for (double x : v)
        if (!(x >= 0.0 && x <= 1.0))
            throw InvalidParameter("--biases entries must lie in [0,1]");
    return v;
}

// "ID" or "ID:SCALE".
AgentType parse_type_spec(const std::string& s)
{
    const auto parts = split(s, ':');
    if (parts.empty() || parts.size() > 2)
        throw InvalidParameter("type '" + s + "' must be ID or ID:SCALE");
    const double id = parse_double(parts[0], "type id");
    if (id < 0.0 || id != std::floor(id))
        throw InvalidParameter("type id must be a non-negative integer");
    const double scale = parts.size() == 2 ? parse_double(parts[1], "type scale") : 1.0;
    if (!(scale >= 0.0 && scale <= 1.0))
        throw InvalidParameter("type scale must lie in [0,1]");
    return {static_cast<std::size_t>(id), scale};
}

json type_json(const AgentType& t) { return {{"id", t.id}, {"scale", t.scale}}; }

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidParameter("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidParameter("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::shared_ptr<SampleLedger> ledger_for(const Common& c)
{
    return std::make_shared<SampleLedger>(c.budget ? SampleBudget::of(*c.budget) : SampleBudget::unlimited());
}

RaceOptions race_options(const std::string& impl)
{
    RaceOptions o;
    if (impl == "uniform-pick")
        o.impl = LinearRaceImpl::uniform_pick;
    else if (impl == "exp-clock")
        o.impl = LinearRaceImpl::exp_clock;
    else
        throw InvalidParameter("--impl must be uniform-pick or exp-clock");
    return o;
}

std::vector<CoinPtr> bias_coins(const std::vector<double>& v, const std::shared_ptr<SampleLedger>& ledger, Stream s)
{
    std::vector<CoinPtr> coins;
    for (std::size_t i = 0; i < v.size(); ++i)
        coins.push_back(make_bernoulli_source("coin-" + std::to_string(i), v[i], ledger, s.derive(i)));
    return coins;
}

void require_chi_square_trials(std::uint64_t trials, std::size_t cells)
{
    if (trials < 50 * cells)
        throw InvalidParameter("--trials must be at least 50 per outcome for the chi-square test");
}

json distribution_json(const verify::DistributionReport& r)
{
    return {{"target_probs", r.target}, {"empirical_probs", r.empirical}, {"chi2_stat", r.chi2},
            {"dof", r.dof},             {"p_value", r.p_value},           {"tv", r.tv}};
}

json audit_json(const verify::AuditReport& r)
{
    return {{"quantity", r.name},       {"estimate", r.estimate}, {"standard_error", r.standard_error},
            {"threshold", r.threshold}, {"direction", r.direction}, {"p_value", r.p_value}, {"pass", r.pass}};
}

} // namespace

Output run_factory(const Common& c, const FactoryArgs& a)
{
    const Expression e = parse_expression(a.expr);
    std::map<std::string, double> biases;
    for (const auto& l : a.leaves) {
        const auto eq = l.find('=');
        if (eq == std::string::npos || eq == 0)
            throw InvalidParameter("--leaf must be NAME=BIAS, got '" + l + "'");
        const double p = parse_double(l.substr(eq + 1), "--leaf");
        if (!(p >= 0.0 && p <= 1.0))
            throw InvalidParameter("leaf biases must lie in [0,1]");
        biases[l.substr(0, eq)] = p;
    }
    const std::uint64_t flips = c.trials.value_or(100000);
    if (flips == 0)
        throw InvalidParameter("--trials must be positive");
    auto ledger = ledger_for(c);
    CoinPtr coin = build_coin(e, biases, ledger, derive_stream({c.seed}, "factory"));
    const double closed = verify::Oracle::closed_form_bias(*coin);
    const auto violations = verify::Oracle::precondition_violations(*coin);

    std::uint64_t heads = 0;
    for (std::uint64_t n = 0; n < flips; ++n)
        heads += coin->flip() ? 1 : 0;
    const auto ci = verify::binomial_interval(heads, flips, 0.999);
    json ledger_json = json::object();
    for (const auto& [name, count] : ledger->snapshot())
        ledger_json[name] = count;

    Output out;
    out.pass = ci.contains(closed) && violations.empty();
    out.records.push_back({{"record", "factory"},
                           {"expression", to_string(e)},
                           {"closed_form_bias", closed},
                           {"empirical_bias", double(heads) / double(flips)},
                           {"flips", flips},
                           {"base_draws", ledger->total()},
                           {"ledger", ledger_json},
                           {"ci_999", {ci.lo, ci.hi}},
                           {"precondition_violations", violations},
                           {"pass", out.pass}});
    return out;
}

Output run_race(const Common& c, const RaceArgs& a)
{
    const auto v = parse_biases(a.biases);
    const RaceOptions ro = race_options(a.impl);
    const auto target = verify::exact_linear_weights(v);
    const std::uint64_t trials = c.trials.value_or(100000);
    require_chi_square_trials(trials, v.size());

    auto ledger = ledger_for(c);
    Stream root = derive_stream({c.seed}, "race");
    const auto coins = bias_coins(v, ledger, root.derive("coins"));
    Stream aux = root.derive("aux");
    std::vector<std::uint64_t> counts(v.size(), 0);
    for (std::uint64_t n = 0; n < trials; ++n)
        ++counts[bernoulli_race(coins, aux, *ledger, ro).winner];
    const auto r = verify::distribution_report(counts, target);
    double sum = 0.0;
    for (double x : v)
        sum += x;

    Output out;
    out.pass = r.pass;
    json rec = distribution_json(r);
    rec["record"] = "race";
    rec["biases"] = v;
    rec["impl"] = a.impl;
    rec["trials"] = trials;
    rec["counts"] = counts;
    rec["mean_draws"] = double(ledger->total()) / double(trials);
    rec["predicted_draws"] = double(v.size()) / sum;
    rec["pass"] = r.pass;
    out.records.push_back(rec);
    return out;
}

Output run_exprace(const Common& c, const ExpRaceArgs& a)
{
    const auto v = parse_biases(a.biases);
    if (!(a.lambda > 0.0) || !std::isfinite(a.lambda))
        throw InvalidParameter("--lambda must be positive");
    RaceOptions ro = race_options(a.impl);
    if (a.method != "auto" && a.method != "basic" && a.method != "fast")
        throw InvalidParameter("--method must be auto, basic or fast");
    const bool fast = a.method == "fast" || (a.method == "auto" && a.lambda > 4.0);
    if (fast && !(a.lambda > 4.0))
        throw InvalidParameter("the fast race needs lambda > 4");
    if (a.session == 0)
        throw InvalidParameter("--session must be positive");
    const std::uint64_t trials = c.trials.value_or(100000);
    require_chi_square_trials(trials, v.size());

    auto ledger = ledger_for(c);
    Stream root = derive_stream({c.seed}, "exprace");
    const auto coins = bias_coins(v, ledger, root.derive("coins"));
    Stream aux = root.derive("aux");
    std::vector<std::uint64_t> counts(v.size(), 0);
    std::uint64_t setup = 0;
    std::uint64_t sessions = 0;
    if (fast) {
        for (std::uint64_t done = 0; done < trials; done += a.session) {
            FastExpRace race(coins, a.lambda, aux.split(), *ledger, ro);
            setup += race.setup_draws();
            ++sessions;
            for (std::uint64_t n = 0; n < std::min(a.session, trials - done); ++n)
                ++counts[race.sample().winner];
        }
    } else {
        for (std::uint64_t n = 0; n < trials; ++n)
            ++counts[basic_exp_race(coins, a.lambda, aux, *ledger, ro).winner];
    }
    const auto r = verify::distribution_report(counts, verify::exact_exp_weights(v, a.lambda));
    double vmax = 0.0;
    for (double x : v)
        vmax = std::max(vmax, x);

    Output out;
    out.pass = r.pass;
    json rec = distribution_json(r);
    rec["record"] = "exprace";
    rec["biases"] = v;
    rec["lambda"] = a.lambda;
    rec["method"] = fast ? "fast" : "basic";
    rec["impl"] = a.impl;
    rec["trials"] = trials;
    rec["counts"] = counts;
    rec["mean_draws"] = double(ledger->total()) / double(trials);
    rec["setup_draws_per_session"] = sessions ? double(setup) / double(sessions) : 0.0;
    rec["session"] = fast ? json(a.session) : json(nullptr);
    // Expected cost of the basic race.
    rec["predicted_draws"] = a.lambda * double(v.size()) * std::exp(a.lambda * (1.0 - vmax));
    rec["pass"] = r.pass;
    out.records.push_back(rec);
    return out;
}

Output run_urns(const Common& c, const UrnsArgs& a)
{
    const json spec = read_json_file(a.env);
    const UrnEnvironment env = load_environment(spec);
    const AgentType t = parse_type_spec(a.type);
    const double lambda = urn_lambda(env.size(), a.epsilon);
    Stream root = derive_stream({c.seed}, "urns");
    Output out;

    if (a.audit == "welfare") {
        const std::uint64_t trials = c.trials.value_or(100000);
        require_chi_square_trials(trials, env.size());
        const auto r = verify::urn_welfare_audit(env, t, a.epsilon, trials, root, a.session);
        out.pass = r.allocation.pass && r.welfare.pass;
        json rec = distribution_json(r.allocation);
        rec["record"] = "urns-welfare";
        rec["type"] = type_json(t);
        rec["epsilon"] = a.epsilon;
        rec["lambda"] = lambda;
        rec["trials"] = trials;
        rec["values"] = verify::Oracle::urn_values(env, t);
        rec["allocation_pass"] = r.allocation.pass;
        rec["welfare"] = audit_json(r.welfare);
        rec["pass"] = out.pass;
        out.records.push_back(rec);
    } else if (a.audit == "payment") {
        const std::uint64_t trials = c.trials.value_or(50000);
        const auto r = verify::payment_identity_audit(env, t, a.epsilon, trials, root);
        out.pass = r.pass;
        json rec = audit_json(r);
        rec["record"] = "urns-payment";
        rec["type"] = type_json(t);
        rec["epsilon"] = a.epsilon;
        rec["trials"] = trials;
        out.records.push_back(rec);
    } else if (a.audit == "ic" || a.audit == "naive-ic") {
        std::vector<AgentType> grid;
        if (a.grid.empty()) {
            for (auto id : environment_type_ids(spec))
                grid.push_back({id, 1.0});
        } else {
            for (const auto& tok : split(a.grid, ','))
                grid.push_back(parse_type_spec(tok));
        }
        const std::uint64_t trials = c.trials.value_or(5000);
        const bool naive = a.audit == "naive-ic";
        const auto mech = naive ? verify::naive_mechanism(env, a.naive_samples)
                                : verify::exp_weights_mechanism(env, a.epsilon);
        const auto r = verify::ic_audit(env, mech, grid, grid, trials, root);
        for (const auto& p : r.pairs)
            out.records.push_back({{"record", "urns-ic-pair"},
                                   {"mechanism", naive ? "naive" : "exp-weights"},
                                   {"truth", type_json(grid[p.truth])},
                                   {"report", type_json(grid[p.report])},
                                   {"margin", p.margin.mean()},
                                   {"standard_error", p.margin.standard_error()}});
        out.pass = r.worst.pass;
        json rec = audit_json(r.worst);
        rec["record"] = "urns-ic";
        rec["mechanism"] = naive ? "naive" : "exp-weights";
        rec["epsilon"] = naive ? json(nullptr) : json(a.epsilon);
        rec["naive_samples"] = naive ? json(a.naive_samples) : json(nullptr);
        rec["trials"] = trials;
        out.records.push_back(rec);
    } else {
        throw InvalidParameter("--audit must be welfare, ic, naive-ic or payment");
    }
    return out;
}

Output run_reduce(const Common& c, const ReduceArgs& a)
{
    const json spec = read_json_file(a.instance);
    const ReductionInstance inst(spec);
    ReductionOptions ro;
    ro.eps = a.epsilon;
    ro.c = a.c;
    ro.m = a.m;
    ro.k = a.k;
    ro.delta = a.delta;
    ro.eta = a.eta;
    ro.samples_per_edge = a.samples_per_edge;
    ro.desk_override = c.desk_override;
    if (a.gamma != "auto") {
        ro.gamma = parse_double(a.gamma, "--gamma");
        if (!(*ro.gamma >= 0.0))
            throw InvalidParameter("--gamma must be non-negative");
    }
    const BicReduction red(inst.setting(), ro);
    const auto& sel = red.select_options();
    if (!ro.gamma && sel.m > 1 && !c.desk_override &&
        static_cast<double>(sel.k) < gamma_min_load(sel.m, sel.delta, sel.eta))
        throw InvalidParameter("load k = " + std::to_string(sel.k) + " is below the gamma estimate's minimum " +
                               std::to_string(gamma_min_load(sel.m, sel.delta, sel.eta)) +
                               "; pass --desk-override or a fixed --gamma");
    const std::uint64_t runs = c.trials.value_or(10);

    struct Agg {
        verify::RunningStats welfare, opt, gamma, samples, payment, utility;
    };
    std::vector<Agg> agg(inst.setting().agents());
    Output out;
    out.records.push_back({{"record", "reduce-params"},
                           {"m", sel.m},
                           {"k", sel.k},
                           {"delta", sel.delta},
                           {"eta", sel.eta},
                           {"epsilon", a.epsilon},
                           {"gamma", ro.gamma ? json(*ro.gamma) : json("auto")}});
    Stream root = derive_stream({c.seed}, "reduce");
    for (std::uint64_t run = 0; run < runs; ++run) {
        Session s(root.derive(run), ledger_for(c));
        std::vector<AgentType> reports;
        for (const auto& p : inst.setting().priors)
            reports.push_back(p.sample(s.rng));
        const ReducedRun r = red.run(reports, s);
        for (std::size_t ag = 0; ag < reports.size(); ++ag) {
            const auto& choice = r.selections[ag];
            const std::size_t rows = choice.replicas.size();
            Eigen::MatrixXd v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(sel.m));
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < sel.m; ++j)
                    v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        inst.interim_value(ag, choice.replicas[i], choice.surrogates[j]);
            double welfare = 0.0;
            for (std::size_t i = 0; i < rows; ++i)
                welfare += v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(choice.assignment[i]));
            const double opt = solve_offline(v, sel.delta, sel.k).opt;
            const double value = inst.setting().value(reports[ag], r.outcome);
            json surrogates = json::array();
            for (const auto& st : choice.surrogates)
                surrogates.push_back(type_json(st));
            out.records.push_back({{"record", "reduce"},
                                   {"run", run},
                                   {"agent", ag},
                                   {"report", type_json(reports[ag])},
                                   {"real_index", choice.real_index},
                                   {"surrogate", choice.surrogate},
                                   {"surrogate_type", type_json(choice.type)},
                                   {"surrogates", surrogates},
                                   {"assignment", choice.assignment},
                                   {"welfare", welfare},
                                   {"opt_offline", opt},
                                   {"gamma", choice.gamma},
                                   {"opt_hat", choice.opt_hat ? json(*choice.opt_hat) : json(nullptr)},
                                   {"total_edge_samples", choice.edge_samples},
                                   {"outcome", r.outcome},
                                   {"payment", r.payments[ag]},
                                   {"lambda_draw", r.lambda_draw}});
            const double km = static_cast<double>(rows);
            agg[ag].welfare.add(welfare / km);
            agg[ag].opt.add(opt / km);
            agg[ag].gamma.add(choice.gamma);
            agg[ag].samples.add(static_cast<double>(choice.edge_samples));
            agg[ag].payment.add(r.payments[ag]);
            agg[ag].utility.add(value - r.payments[ag]);
        }
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "agent,runs,mean_welfare_per_replica,mean_opt_offline_per_replica,mean_gamma,mean_edge_samples,"
           "mean_payment,mean_utility\n";
    for (std::size_t ag = 0; ag < agg.size(); ++ag)
        csv << ag << ',' << runs << ',' << agg[ag].welfare.mean() << ',' << agg[ag].opt.mean() << ','
            << agg[ag].gamma.mean() << ',' << agg[ag].samples.mean() << ',' << agg[ag].payment.mean() << ','
            << agg[ag].utility.mean() << '\n';
    out.csv = csv.str();
    return out;
}

Output run_verify(const Common& c, const VerifyArgs& a)
{
    std::vector<std::string> names;
    for (const auto& s : a.suites) {
        if (s == "all") {
            names = suites::suite_names();
            break;
        }
        const auto& known = suites::suite_names();
        if (std::find(known.begin(), known.end(), s) == known.end())
            throw InvalidParameter("unknown suite '" + s + "'");
        names.push_back(s);
    }
    if (names.empty())
        throw InvalidParameter("--suite is required (a suite name or all)");
    if (!(a.scale > 0.0) || !(a.significance > 0.0 && a.significance < 1.0))
        throw InvalidParameter("--scale must be positive and --significance in (0,1)");

    Output out;
    std::size_t checks = 0;
    std::size_t failed = 0;
    for (const auto& name : names) {
        for (const auto& check : suites::run_suite(name, {c.seed, a.scale, a.significance})) {
            json rec = suites::to_json(check);
            rec["record"] = "check";
            out.records.push_back(rec);
            ++checks;
            failed += check.pass ? 0 : 1;
        }
    }
    out.pass = failed == 0;
    out.records.push_back({{"record", "summary"}, {"suites", names}, {"checks", checks}, {"failed", failed},
                           {"pass", out.pass}});
    return out;
}

Output run_params(const Common&, const ParamsArgs& a)
{
    if (a.m == 0)
        throw InvalidParameter("--m must be positive");
    const ReductionParams p = reduction_params(a.m, a.epsilon, a.c);
    json rec{{"record", "params"}, {"m", p.m},         {"epsilon", p.eps}, {"c", p.c},
             {"lambda", urn_lambda(a.m, a.epsilon)},    {"delta", p.delta}, {"eta", p.eta}, {"k", p.k}};
    if (a.m > 1) {
        rec["gamma_samples_per_edge"] = gamma_sample_size(p.m, p.k, p.delta, p.eta);
        rec["gamma_min_load"] = gamma_min_load(p.m, p.delta, p.eta);
    } else {
        rec["gamma_samples_per_edge"] = nullptr;
        rec["gamma_min_load"] = nullptr;
    }
    if (a.dimension) {
        rec["dimension"] = *a.dimension;
        rec["market_size"] = market_size_for_doubling_dim(*a.dimension, a.epsilon);
    }
    Output out;
    out.records.push_back(rec);
    return out;
}

} // namespace efs::cli
