#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "efs/audit.hpp"
#include "efs/errors.hpp"
#include "efs/expr.hpp"
#include "efs/matching.hpp"
#include "efs/suites.hpp"

namespace py = pybind11;
using namespace efs;

namespace {

std::vector<CoinPtr> bias_coins(const std::vector<double>& v, const std::shared_ptr<SampleLedger>& ledger, Stream s)
{
    std::vector<CoinPtr> coins;
    for (std::size_t i = 0; i < v.size(); ++i)
        coins.push_back(make_bernoulli_source("coin-" + std::to_string(i), v[i], ledger, s.derive(i)));
    return coins;
}

std::shared_ptr<SampleLedger> ledger_for(std::optional<std::uint64_t> budget)
{
    return std::make_shared<SampleLedger>(budget ? SampleBudget::of(*budget) : SampleBudget::unlimited());
}

UrnEnvironment make_environment(const std::vector<std::pair<std::vector<std::size_t>, std::vector<double>>>& urns,
                                const std::map<std::size_t, std::vector<double>>& values)
{
    std::vector<Urn> u;
    for (const auto& [outcomes, probs] : urns)
        u.push_back({outcomes, probs});
    return UrnEnvironment::from_table(std::move(u), values);
}

py::dict flip_expression(const std::string& expr, const std::map<std::string, double>& leaves, std::uint64_t flips,
                         std::uint64_t seed, std::optional<std::uint64_t> budget)
{
    auto ledger = ledger_for(budget);
    CoinPtr coin = build_coin(parse_expression(expr), leaves, ledger, derive_stream({seed}, "factory"));
    std::uint64_t heads = 0;
    {
        py::gil_scoped_release release;
        for (std::uint64_t n = 0; n < flips; ++n)
            heads += coin->flip() ? 1 : 0;
    }
    py::dict d;
    d["closed_form_bias"] = verify::Oracle::closed_form_bias(*coin);
    d["heads"] = heads;
    d["flips"] = flips;
    d["base_draws"] = ledger->total();
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Exact sampling from expectations: factories, races, urn mechanisms and matching.";

    py::register_exception<InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
    py::register_exception<BudgetExceeded>(m, "BudgetExceeded", PyExc_RuntimeError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);
    py::register_exception<SolverFailure>(m, "SolverFailure", PyExc_RuntimeError);

    m.def("exact_linear_weights", &verify::exact_linear_weights, py::arg("v"));
    m.def("exact_exp_weights", &verify::exact_exp_weights, py::arg("v"), py::arg("lam"));

    m.def(
        "closed_form_bias",
        [](const std::string& expr, const std::map<std::string, double>& leaves) {
            auto coin = build_coin(parse_expression(expr), leaves, std::make_shared<SampleLedger>(), Stream());
            return verify::Oracle::closed_form_bias(*coin);
        },
        py::arg("expr"), py::arg("leaves"));
    m.def("flip_expression", &flip_expression, py::arg("expr"), py::arg("leaves"), py::arg("flips"),
          py::arg("seed") = 1, py::arg("budget") = py::none(),
          "Flips a prefix factory expression; returns heads, flips, base_draws and the closed-form bias.");

    m.def(
        "bernoulli_race",
        [](const std::vector<double>& biases, std::uint64_t races, std::uint64_t seed, const std::string& impl,
           std::optional<std::uint64_t> budget) {
            RaceOptions ro;
            if (impl == "exp-clock")
                ro.impl = LinearRaceImpl::exp_clock;
            else if (impl != "uniform-pick")
                throw InvalidParameter("impl must be uniform-pick or exp-clock");
            auto ledger = ledger_for(budget);
            Stream root = derive_stream({seed}, "race");
            const auto coins = bias_coins(biases, ledger, root.derive("coins"));
            Stream aux = root.derive("aux");
            std::vector<std::uint64_t> counts(biases.size(), 0);
            py::gil_scoped_release release;
            for (std::uint64_t n = 0; n < races; ++n)
                ++counts[bernoulli_race(coins, aux, *ledger, ro).winner];
            return std::make_pair(counts, ledger->total());
        },
        py::arg("biases"), py::arg("races"), py::arg("seed") = 1, py::arg("impl") = "uniform-pick",
        py::arg("budget") = py::none(), "Winner counts and total base draws of repeated Bernoulli races.");

    m.def(
        "exp_race",
        [](const std::vector<double>& biases, double lam, std::uint64_t races, std::uint64_t seed,
           const std::string& method, std::uint64_t session, std::optional<std::uint64_t> budget) {
            const bool fast = method == "fast" || (method == "auto" && lam > 4.0);
            if (method != "auto" && method != "basic" && method != "fast")
                throw InvalidParameter("method must be auto, basic or fast");
            if (session == 0)
                throw InvalidParameter("session must be positive");
            auto ledger = ledger_for(budget);
            Stream root = derive_stream({seed}, "exprace");
            const auto coins = bias_coins(biases, ledger, root.derive("coins"));
            Stream aux = root.derive("aux");
            std::vector<std::uint64_t> counts(biases.size(), 0);
            py::gil_scoped_release release;
            if (fast) {
                for (std::uint64_t done = 0; done < races; done += session) {
                    FastExpRace race(coins, lam, aux.split(), *ledger);
                    for (std::uint64_t n = 0; n < std::min(session, races - done); ++n)
                        ++counts[race.sample().winner];
                }
            } else {
                for (std::uint64_t n = 0; n < races; ++n)
                    ++counts[basic_exp_race(coins, lam, aux, *ledger).winner];
            }
            return std::make_pair(counts, ledger->total());
        },
        py::arg("biases"), py::arg("lam"), py::arg("races"), py::arg("seed") = 1, py::arg("method") = "auto",
        py::arg("session") = 1000, py::arg("budget") = py::none(),
        "Winner counts and base draws of exponential races; fast races share a v_max estimate per session.");

    py::class_<AgentType>(m, "AgentType")
        .def(py::init([](std::size_t id, double scale) { return AgentType{id, scale}; }), py::arg("id"),
             py::arg("scale") = 1.0)
        .def_readwrite("id", &AgentType::id)
        .def_readwrite("scale", &AgentType::scale)
        .def("__repr__", [](const AgentType& t) {
            return "AgentType(" + std::to_string(t.id) + ", " + std::to_string(t.scale) + ")";
        });

    py::class_<UrnEnvironment, std::shared_ptr<UrnEnvironment>>(m, "UrnEnvironment")
        .def(py::init(&make_environment), py::arg("urns"), py::arg("values"),
             "urns: list of (outcomes, probs); values: {type id: per-outcome values}.")
        .def("__len__", &UrnEnvironment::size)
        .def("exact_values", [](const UrnEnvironment& env, const AgentType& t) {
            return verify::Oracle::urn_values(env, t);
        });
    m.def("two_urn_example", [] { return std::make_shared<UrnEnvironment>(two_urn_example()); });
    m.def("urn_lambda", &urn_lambda, py::arg("m"), py::arg("eps"));
    m.def("exact_urn_marginals", &verify::exact_urn_marginals, py::arg("env"), py::arg("t"), py::arg("eps"));
    m.def("exact_urn_payment", &verify::exact_urn_payment, py::arg("env"), py::arg("t"), py::arg("eps"),
          py::arg("grid") = 1001);
    m.def(
        "allocate",
        [](const UrnEnvironment& env, const AgentType& t, double eps, std::uint64_t trials, std::uint64_t seed) {
            Session s(derive_stream({seed}, "allocate"), std::make_shared<SampleLedger>());
            std::vector<std::uint64_t> counts(env.size(), 0);
            py::gil_scoped_release release;
            UrnAllocator alloc(env, t, eps, s);
            for (std::uint64_t n = 0; n < trials; ++n)
                ++counts[alloc.sample().urn];
            return std::make_pair(counts, s.ledger->total());
        },
        py::arg("env"), py::arg("t"), py::arg("eps"), py::arg("trials"), py::arg("seed") = 1,
        "Urn counts and base draws of repeated exponential-weights allocations.");
    m.def(
        "charges",
        [](const UrnEnvironment& env, const AgentType& t, double eps, std::uint64_t trials, std::uint64_t seed) {
            Session s(derive_stream({seed}, "charge"), std::make_shared<SampleLedger>());
            const auto rule = exp_weights_rule(env, eps);
            std::vector<double> payments;
            py::gil_scoped_release release;
            for (std::uint64_t n = 0; n < trials; ++n)
                payments.push_back(charge(env, t, rule, s).payment);
            return payments;
        },
        py::arg("env"), py::arg("t"), py::arg("eps"), py::arg("trials"), py::arg("seed") = 1,
        "Samples of the implicit payment.");

    m.def(
        "solve_offline",
        [](const Eigen::MatrixXd& values, double delta, std::size_t k) {
            const auto s = solve_offline(values, delta, k);
            py::dict d;
            d["alpha"] = s.alpha;
            d["x"] = s.x;
            d["opt"] = s.opt;
            d["kkt_residual"] = s.kkt_residual;
            d["capacity_residual"] = s.capacity_residual;
            d["iterations"] = s.iterations;
            return d;
        },
        py::arg("values"), py::arg("delta"), py::arg("k"));
    m.def("sinkhorn_matching_opt", &verify::sinkhorn_matching_opt, py::arg("values"), py::arg("delta"), py::arg("k"));
    m.def(
        "max_weight_k_matching",
        [](const Eigen::MatrixXd& values, std::size_t k) {
            const auto r = verify::max_weight_k_matching(values, k);
            return std::make_pair(r.value, r.assignment);
        },
        py::arg("values"), py::arg("k"));
    m.def(
        "online_match",
        [](const Eigen::MatrixXd& means, std::size_t k, double delta, double eta, double gamma, std::uint64_t seed) {
            Stream root = derive_stream({seed}, "online");
            auto inst = MatchingInstance::bernoulli(means, k, std::make_shared<SampleLedger>(), root.derive("edges"));
            Stream aux = root.derive("aux");
            const auto run = online_regularized_match(inst, {delta, eta, gamma, 0.0}, aux);
            py::dict d;
            d["assignment"] = run.assignment;
            d["loads"] = run.loads;
            d["total_edge_samples"] = run.total_edge_samples;
            d["regularized_welfare"] = regularized_welfare(means, run, gamma, delta);
            return d;
        },
        py::arg("means"), py::arg("k"), py::arg("delta"), py::arg("eta"), py::arg("gamma"), py::arg("seed") = 1,
        "Online regularised matching on Bernoulli edges with the given means.");
    m.def(
        "estimate_gamma",
        [](const Eigen::MatrixXd& means, std::size_t k, double delta, double eta, bool desk_override,
           std::optional<std::uint64_t> samples_per_edge, std::uint64_t seed) {
            auto inst = MatchingInstance::bernoulli(means, k, std::make_shared<SampleLedger>(),
                                                    derive_stream({seed}, "gamma"));
            const auto g = estimate_gamma(inst, delta, eta, {desk_override, samples_per_edge});
            py::dict d;
            d["gamma"] = g.gamma;
            d["opt_hat"] = g.opt_hat;
            d["samples_per_edge"] = g.samples_per_edge;
            d["draws"] = g.draws;
            return d;
        },
        py::arg("means"), py::arg("k"), py::arg("delta"), py::arg("eta"), py::arg("desk_override") = false,
        py::arg("samples_per_edge") = py::none(), py::arg("seed") = 1);

    m.def(
        "reduction_params",
        [](std::size_t mm, double eps, double c) {
            const auto p = reduction_params(mm, eps, c);
            py::dict d;
            d["m"] = p.m;
            d["eps"] = p.eps;
            d["c"] = p.c;
            d["delta"] = p.delta;
            d["eta"] = p.eta;
            d["k"] = p.k;
            return d;
        },
        py::arg("m"), py::arg("eps"), py::arg("c") = 1.0);
    m.def("gamma_sample_size", &gamma_sample_size, py::arg("m"), py::arg("k"), py::arg("delta"), py::arg("eta"));
    m.def("gamma_min_load", &gamma_min_load, py::arg("m"), py::arg("delta"), py::arg("eta"));
    m.def("market_size_for_doubling_dim", &market_size_for_doubling_dim, py::arg("dimension"), py::arg("eps"));

    m.def("suite_names", &suites::suite_names);
    m.def(
        "run_suite_json",
        [](const std::string& name, std::uint64_t seed, double scale, double significance) {
            std::vector<suites::Check> checks;
            {
                py::gil_scoped_release release;
                checks = suites::run_suite(name, {seed, scale, significance});
            }
            std::vector<std::string> out;
            for (const auto& c : checks)
                out.push_back(suites::to_json(c).dump());
            return out;
        },
        py::arg("name"), py::arg("seed") = 7, py::arg("scale") = 1.0, py::arg("significance") = 1e-3);
}
