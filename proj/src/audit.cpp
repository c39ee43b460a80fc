#include "efs/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "efs/errors.hpp"

namespace efs::verify {

std::vector<double> Oracle::urn_values(const UrnEnvironment& env, const AgentType& t)
{
    std::vector<double> out;
    for (const auto& urn : env.urns_) {
        double total = 0.0;
        double acc = 0.0;
        for (double p : urn.probs)
            total += p;
        for (std::size_t k = 0; k < urn.outcomes.size(); ++k)
            acc += urn.probs[k] / total * env.value(t, urn.outcomes[k]);
        out.push_back(acc);
    }
    return out;
}

std::vector<double> exact_urn_marginals(const UrnEnvironment& env, const AgentType& t, double eps)
{
    const double lambda = urn_lambda(env.size(), eps);
    return exact_exp_weights(Oracle::urn_values(env, t), lambda);
}

double exact_urn_payment(const UrnEnvironment& env, const AgentType& t, double eps, std::size_t grid)
{
    if (grid < 2)
        throw InvalidParameter("quadrature needs at least two grid points");
    if (env.size() == 1)
        return 0.0;
    const auto v = Oracle::urn_values(env, t);
    const double lambda = urn_lambda(env.size(), eps);
    auto welfare_at = [&](double s) {
        std::vector<double> scaled(v.size());
        for (std::size_t j = 0; j < v.size(); ++j)
            scaled[j] = s * v[j];
        const auto x = exact_exp_weights(scaled, lambda);
        double w = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j)
            w += x[j] * v[j];
        return w;
    };
    const double h = 1.0 / static_cast<double>(grid - 1);
    double integral = 0.0;
    for (std::size_t k = 0; k < grid; ++k) {
        const double weight = (k == 0 || k + 1 == grid) ? 0.5 : 1.0;
        integral += weight * welfare_at(static_cast<double>(k) * h);
    }
    integral *= h;
    return welfare_at(1.0) - integral;
}

SingleAgentMechanism exp_weights_mechanism(const UrnEnvironment& env, double eps)
{
    auto rule = exp_weights_rule(env, eps);
    return [&env, rule](const AgentType& report, Session& s) {
        Charge c = charge(env, report, rule, s);
        return SingleAgentOutcome{c.urn, c.payment};
    };
}

SingleAgentMechanism naive_mechanism(const UrnEnvironment& env, std::uint64_t n)
{
    return [&env, n](const AgentType& report, Session& s) {
        return SingleAgentOutcome{naive_allocate(env, report, n, s), 0.0};
    };
}

IcAudit ic_audit(const UrnEnvironment& env, const SingleAgentMechanism& mech, const std::vector<AgentType>& types,
                 const std::vector<AgentType>& misreports, std::uint64_t trials, Stream rng)
{
    if (types.empty() || misreports.empty() || trials < 2)
        throw InvalidParameter("IC audit needs non-empty grids and at least two trials");
    IcAudit out;
    for (std::size_t a = 0; a < types.size(); ++a) {
        const auto values = Oracle::urn_values(env, types[a]);
        for (std::size_t b = 0; b < misreports.size(); ++b) {
            IcPair pair{a, b, {}};
            Stream pair_rng = rng.derive(a * misreports.size() + b);
            for (std::uint64_t n = 0; n < trials; ++n) {
                Stream trial = pair_rng.derive(n);
                Session truthful(trial, std::make_shared<SampleLedger>());
                Session lying(trial, std::make_shared<SampleLedger>());
                const auto honest = mech(types[a], truthful);
                const auto other = mech(misreports[b], lying);
                const double u_truth = values[honest.urn] - honest.payment;
                const double u_lie = values[other.urn] - other.payment;
                pair.margin.add(u_truth - u_lie);
            }
            out.pairs.push_back(std::move(pair));
        }
    }
    const auto worst = std::min_element(out.pairs.begin(), out.pairs.end(), [](const IcPair& x, const IcPair& y) {
        return x.margin.mean() < y.margin.mean();
    });
    out.worst = at_least("ic_margin", worst->margin.mean(), worst->margin.standard_error(), 0.0);
    return out;
}

AuditReport payment_identity_audit(const UrnEnvironment& env, const AgentType& t, double eps, std::uint64_t trials,
                                   Stream rng, std::size_t grid)
{
    const double target = exact_urn_payment(env, t, eps, grid);
    auto rule = exp_weights_rule(env, eps);
    Session s(rng, std::make_shared<SampleLedger>());
    RunningStats stats;
    for (std::uint64_t n = 0; n < trials; ++n)
        stats.add(charge(env, t, rule, s).payment);
    return within("payment_identity", stats.mean(), stats.standard_error(), target);
}

UrnWelfareAudit urn_welfare_audit(const UrnEnvironment& env, const AgentType& t, double eps, std::uint64_t trials,
                                  Stream rng, std::uint64_t session_size, double significance)
{
    if (session_size == 0)
        throw InvalidParameter("session size must be positive");
    const auto values = Oracle::urn_values(env, t);
    std::vector<std::uint64_t> counts(env.size(), 0);
    RunningStats welfare;
    Session s(rng, std::make_shared<SampleLedger>());
    std::uint64_t fast_sessions = 0;
    for (std::uint64_t done = 0; done < trials;) {
        UrnAllocator alloc(env, t, eps, s);
        fast_sessions += alloc.uses_fast_race() ? 1 : 0;
        const std::uint64_t batch = std::min(session_size, trials - done);
        for (std::uint64_t n = 0; n < batch; ++n) {
            const auto c = alloc.sample();
            ++counts[c.urn];
            welfare.add(values[c.urn]);
        }
        done += batch;
    }
    UrnWelfareAudit out;
    out.allocation = distribution_report(counts, exact_urn_marginals(env, t, eps), significance);
    const double best = *std::max_element(values.begin(), values.end());
    out.welfare = at_least("urn_welfare", welfare.mean(), welfare.standard_error(), best - eps);
    out.mean_draws = static_cast<double>(s.ledger->total()) / static_cast<double>(trials);
    out.fast_sessions = fast_sessions;
    return out;
}

} // namespace efs::verify
