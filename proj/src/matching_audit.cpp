#include "efs/matching_audit.hpp"

#include <cmath>

#include "efs/errors.hpp"

namespace efs::verify {

namespace {

Eigen::MatrixXd uniform_matrix(Stream& s, std::size_t rows, std::size_t cols)
{
    Eigen::MatrixXd v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            v(i, j) = s.uniform();
    return v;
}

} // namespace

std::vector<KktCase> kkt_audit(std::size_t instances, Stream rng, std::size_t max_replicas, std::size_t max_m)
{
    if (max_m == 0 || max_replicas < max_m)
        throw InvalidParameter("KKT audit needs 1 <= max_m <= max_replicas");
    std::vector<KktCase> out;
    for (std::size_t n = 0; n < instances; ++n) {
        Stream s = rng.derive(n);
        KktCase c;
        c.m = 1 + s.below(max_m);
        c.k = 1 + s.below(max_replicas / c.m);
        c.delta = 0.05 + 0.45 * s.uniform();
        const Eigen::MatrixXd v = uniform_matrix(s, c.m * c.k, c.m);
        const auto sol = solve_offline(v, c.delta, c.k);
        c.opt = sol.opt;
        c.oracle_opt = sinkhorn_matching_opt(v, c.delta, c.k);
        c.kkt_residual = sol.kkt_residual;
        c.capacity_residual = sol.capacity_residual;
        c.lower_bound = c.delta * static_cast<double>(c.m * c.k) * std::log(static_cast<double>(c.m));
        out.push_back(c);
    }
    return out;
}

GammaBoundsAudit gamma_bounds_audit(const Eigen::MatrixXd& means, std::size_t k, double delta, double eta,
                                    std::size_t repetitions, Stream rng)
{
    GammaBoundsAudit out;
    out.opt = solve_offline(means, delta, k).opt;
    const double kd = static_cast<double>(k);
    for (std::size_t r = 0; r < repetitions; ++r) {
        auto inst = MatchingInstance::bernoulli(means, k, std::make_shared<SampleLedger>(), rng.derive(r));
        const double g = estimate_gamma(inst, delta, eta, {true, std::nullopt}).gamma;
        out.gammas.push_back(g);
        if (out.opt / kd <= g && g <= 12.0 * out.opt / kd)
            ++out.inside;
    }
    return out;
}

OnlineWelfareAudit online_welfare_audit(std::size_t m, std::size_t k, double delta, double eta, std::size_t seeds,
                                        Stream rng, const MatchOptions& opts)
{
    OnlineWelfareAudit out;
    const double km = static_cast<double>(m * k);
    for (std::size_t n = 0; n < seeds; ++n) {
        Stream s = rng.derive(n);
        const Eigen::MatrixXd v = uniform_matrix(s, m * k, m);
        auto ledger = std::make_shared<SampleLedger>();
        auto fresh = MatchingInstance::bernoulli(v, k, ledger, s.derive("gamma"));
        const double gamma = estimate_gamma(fresh, delta, eta, {true, std::nullopt}).gamma;
        auto live = MatchingInstance::bernoulli(v, k, ledger, s.derive("live"));
        Stream aux = s.derive("race");
        const auto run = online_regularized_match(live, {delta, eta, gamma, 0.0}, aux, opts);

        const double opt = solve_offline(v, delta, k).opt;
        double value = 0.0;
        for (std::size_t i = 0; i < run.assignment.size(); ++i)
            value += v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(run.assignment[i]));
        out.ratio.add(regularized_welfare(v, run, gamma, delta) / opt);
        out.value_per_replica.add(value / km);
        out.opt_per_replica.add(opt / km);
        out.slack.add(opt / km - delta * std::log(static_cast<double>(m)) - value / km);
        out.edge_samples.add(static_cast<double>(run.total_edge_samples));
    }
    return out;
}

PerfectMatchingAudit perfect_matching_audit(std::size_t runs, Stream rng)
{
    PerfectMatchingAudit out;
    for (std::size_t n = 0; n < runs; ++n) {
        Stream s = rng.derive(n);
        const std::size_t m = 1 + s.below(4);
        const std::size_t k = 1 + s.below(5);
        const Eigen::MatrixXd v = uniform_matrix(s, m * k, m);
        auto inst = MatchingInstance::bernoulli(v, k, std::make_shared<SampleLedger>(), s.derive("live"));
        Stream aux = s.derive("race");
        const RegularizedParams params{0.3 + 0.7 * s.uniform(), 0.1 + 0.8 * s.uniform(), 2.0 * s.uniform(), 0.0};
        ++out.runs;
        try {
            const auto run = online_regularized_match(inst, params, aux);
            std::vector<std::size_t> loads(m, 0);
            for (auto j : run.assignment)
                ++loads[j];
            if (run.assignment.size() == m * k && loads == std::vector<std::size_t>(m, k))
                ++out.perfect;
        } catch (const InvariantViolation&) {
        }
    }
    return out;
}

StationarityReport stationarity_audit(const std::function<SurrogateChoice(const AgentType&, Session&)>& selector,
                                      const FinitePrior& prior, std::size_t m, std::size_t trials, Stream rng,
                                      double tv_limit, double significance)
{
    if (m == 0 || trials == 0)
        throw InvalidParameter("stationarity audit needs m >= 1 and trials >= 1");
    std::vector<std::uint64_t> index(m, 0);
    std::vector<std::uint64_t> types(prior.types.size(), 0);
    Session s(rng, std::make_shared<SampleLedger>());
    for (std::size_t n = 0; n < trials; ++n) {
        const AgentType t = prior.sample(s.rng);
        const auto c = selector(t, s);
        ++index.at(c.surrogate);
        ++types[prior.index_of(c.type)];
    }
    double total = 0.0;
    for (double p : prior.probs)
        total += p;
    std::vector<double> target;
    for (double p : prior.probs)
        target.push_back(p / total);
    StationarityReport out;
    out.index = distribution_report(index, std::vector<double>(m, 1.0 / static_cast<double>(m)), significance);
    out.types = distribution_report(types, target, significance);
    out.tv = at_most("selected_type_tv", out.types.tv, 0.0, tv_limit);
    return out;
}

MonotoneLoadAudit monotone_load_audit(const Eigen::MatrixXd& values, const FinitePrior& prior, std::size_t m,
                                      const std::vector<std::size_t>& loads, std::size_t draws, Stream rng)
{
    if (values.rows() != values.cols() || static_cast<std::size_t>(values.rows()) != prior.types.size())
        throw InvalidParameter("edge value table must be square over the prior's support");
    MonotoneLoadAudit out;
    out.loads = loads;
    for (std::size_t li = 0; li < loads.size(); ++li) {
        const std::size_t k = loads[li];
        RunningStats w;
        for (std::size_t d = 0; d < draws; ++d) {
            Stream s = rng.derive(li).derive(d);
            std::vector<std::size_t> surrogates(m);
            for (auto& x : surrogates)
                x = prior.index_of(prior.sample(s));
            Eigen::MatrixXd v(static_cast<Eigen::Index>(m * k), static_cast<Eigen::Index>(m));
            for (Eigen::Index i = 0; i < v.rows(); ++i) {
                const std::size_t r = prior.index_of(prior.sample(s));
                for (Eigen::Index j = 0; j < v.cols(); ++j)
                    v(i, j) = values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(surrogates[j]));
            }
            w.add(max_weight_k_matching(v, k).value / static_cast<double>(m * k));
        }
        out.welfare.push_back(w);
    }
    for (std::size_t li = 1; li < loads.size(); ++li) {
        const auto& a = out.welfare[li - 1];
        const auto& b = out.welfare[li];
        const double se = std::sqrt(a.standard_error() * a.standard_error() + b.standard_error() * b.standard_error());
        AuditReport r = at_least("welfare_k" + std::to_string(loads[li]) + "_minus_k" + std::to_string(loads[li - 1]),
                                 b.mean() - a.mean(), se, 0.0);
        r.pass = r.estimate >= -2.0 * se;
        out.steps.push_back(r);
    }
    return out;
}

} // namespace efs::verify
