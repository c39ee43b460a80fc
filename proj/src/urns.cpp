#include "efs/urns.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "efs/errors.hpp"

namespace efs {

UrnEnvironment::UrnEnvironment(std::vector<Urn> urns, Valuation valuation)
: urns_(std::move(urns)), valuation_(std::move(valuation))
{
    if (urns_.empty())
        throw InvalidParameter("an urn environment needs at least one urn");
    if (!valuation_)
        throw InvalidParameter("an urn environment needs a valuation oracle");
    for (const auto& u : urns_) {
        if (u.outcomes.empty() || u.outcomes.size() != u.probs.size())
            throw InvalidParameter("each urn needs matching non-empty outcomes and probs");
        const double total = std::accumulate(u.probs.begin(), u.probs.end(), 0.0);
        if (!(total > 0.0) || std::any_of(u.probs.begin(), u.probs.end(), [](double p) { return p < 0.0; }))
            throw InvalidParameter("urn probabilities must be non-negative with a positive sum");
        Sampler s{u.outcomes, {}};
        double acc = 0.0;
        for (double p : u.probs) {
            acc += p / total;
            s.cumulative.push_back(acc);
        }
        s.cumulative.back() = 1.0;
        samplers_.push_back(std::move(s));
    }
}

UrnEnvironment UrnEnvironment::from_table(std::vector<Urn> urns, std::map<std::size_t, std::vector<double>> values)
{
    for (const auto& [id, row] : values)
        for (double v : row)
            if (!(v >= 0.0 && v <= 1.0))
                throw InvalidParameter("valuation table entries must lie in [0,1]");
    auto table = std::make_shared<const std::map<std::size_t, std::vector<double>>>(std::move(values));
    return UrnEnvironment(std::move(urns), [table](std::size_t type_id, std::size_t outcome) {
        auto it = table->find(type_id);
        if (it == table->end() || outcome >= it->second.size())
            throw ContractViolation("no value for type " + std::to_string(type_id) + " and outcome " +
                                    std::to_string(outcome));
        return it->second[outcome];
    });
}

std::size_t UrnEnvironment::sample_outcome(std::size_t j, Stream& rng) const
{
    const auto& s = samplers_.at(j);
    const double u = rng.uniform();
    auto it = std::upper_bound(s.cumulative.begin(), s.cumulative.end(), u);
    return s.outcomes[static_cast<std::size_t>(it - s.cumulative.begin())];
}

double UrnEnvironment::value(const AgentType& t, std::size_t outcome) const
{
    const double base = valuation_(t.id, outcome);
    if (!(base >= 0.0 && base <= 1.0))
        throw ContractViolation("valuation oracle returned " + std::to_string(base) + " outside [0,1]");
    return t.scale * base;
}

AgentType UrnEnvironment::scale_type(double lambda, const AgentType& t)
{
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidParameter("type scaling must lie in [0,1]");
    return {t.id, lambda * t.scale};
}

UrnEnvironment two_urn_example()
{
    std::vector<Urn> urns{{{1}, {1.0}}, {{0, 2}, {0.55, 0.45}}};
    std::map<std::size_t, std::vector<double>> values{{0, {1.0 / 3, 2.0 / 3, 1.0}}, {1, {1.0 / 3, 2.0 / 3, 0.0}}};
    return UrnEnvironment::from_table(std::move(urns), std::move(values));
}

std::string urn_source_name(std::size_t j) { return "urn-" + std::to_string(j); }

CoinPtr urn_value_coin(const UrnEnvironment& env, const AgentType& t, std::size_t j, Session& s)
{
    if (j >= env.size())
        throw InvalidParameter("urn index out of range");
    auto sampler = [&env, t, j](Stream& rng) { return env.value(t, env.sample_outcome(j, rng)); };
    auto src = std::make_shared<FunctionValueSource>(urn_source_name(j), sampler, std::nullopt, s.ledger,
                                                     s.rng.split());
    return continuous_to_bernoulli(std::move(src), s.rng.split());
}

double urn_lambda(std::size_t m, double eps)
{
    if (!(eps > 0.0 && eps < 1.0))
        throw InvalidParameter("urn accuracy eps must lie in (0,1)");
    if (m == 0)
        throw InvalidParameter("an urn environment needs at least one urn");
    return std::log(static_cast<double>(m)) / eps;
}

UrnAllocator::UrnAllocator(const UrnEnvironment& env, const AgentType& t, double eps, Session& s)
: session_(&s), lambda_(urn_lambda(env.size(), eps))
{
    if (env.size() == 1)
        return;
    for (std::size_t j = 0; j < env.size(); ++j)
        coins_.push_back(urn_value_coin(env, t, j, s));
    if (lambda_ > 4.0) {
        fast_.emplace(coins_, lambda_, s.rng.split(), *s.ledger, s.race);
        basic_ = basic_exp_race_expected_draws(fast_->coin_means(), lambda_, s.race.lazy_exponentiation) <=
                 25.0 * lambda_ * lambda_;
    }
}

UrnChoice UrnAllocator::sample()
{
    if (coins_.empty())
        return {0, 0};
    RaceResult r = uses_fast_race() ? fast_->sample() : basic_exp_race(coins_, lambda_, session_->rng, *session_->ledger,
                                                            session_->race);
    return {r.winner, r.base_draws};
}

std::uint64_t UrnAllocator::setup_draws() const { return fast_ ? fast_->setup_draws() : 0; }

UrnChoice allocate(const UrnEnvironment& env, const AgentType& t, double eps, Session& s)
{
    UrnAllocator a(env, t, eps, s);
    UrnChoice c = a.sample();
    c.base_draws += a.setup_draws();
    return c;
}

UrnRule exp_weights_rule(const UrnEnvironment& env, double eps)
{
    return [&env, eps](const AgentType& t, Session& s) { return allocate(env, t, eps, s).urn; };
}

std::size_t realize_outcome(const UrnEnvironment& env, std::size_t j, Session& s)
{
    s.ledger->record(s.ledger->register_source(urn_source_name(j)));
    return env.sample_outcome(j, s.rng);
}

Charge charge(const UrnEnvironment& env, const AgentType& t, const UrnRule& rule, Session& s)
{
    Charge c;
    c.lambda_draw = s.rng.uniform();
    c.urn = rule(t, s);
    c.outcome = realize_outcome(env, c.urn, s);
    c.scaled_urn = rule(UrnEnvironment::scale_type(c.lambda_draw, t), s);
    c.scaled_outcome = realize_outcome(env, c.scaled_urn, s);
    c.payment = env.value(t, c.outcome) - env.value(t, c.scaled_outcome);
    return c;
}

std::size_t naive_allocate(const UrnEnvironment& env, const AgentType& t, std::uint64_t n, Session& s)
{
    if (n == 0)
        throw InvalidParameter("naive allocation needs at least one sample per urn");
    std::size_t best = 0;
    double best_total = -1.0;
    for (std::size_t j = 0; j < env.size(); ++j) {
        const SourceId id = s.ledger->register_source(urn_source_name(j));
        double total = 0.0;
        for (std::uint64_t k = 0; k < n; ++k) {
            s.ledger->record(id);
            total += env.value(t, env.sample_outcome(j, s.rng));
        }
        if (total > best_total) {
            best_total = total;
            best = j;
        }
    }
    return best;
}

} // namespace efs
