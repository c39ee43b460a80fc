#include "efs/races.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "efs/errors.hpp"

namespace efs {

namespace {

void require_coins(const std::vector<CoinPtr>& coins)
{
    if (coins.empty())
        throw InvalidParameter("a race needs at least one coin");
    for (const auto& c : coins)
        if (!c)
            throw InvalidParameter("null coin in race");
}

class DrawGuard {
public:
    DrawGuard(const SampleLedger& ledger, std::uint64_t cap) : ledger_(ledger), start_(ledger.total()), cap_(cap) {}

    void check() const
    {
        if (used() > cap_)
            throw BudgetExceeded("race exceeded its budget of " + std::to_string(cap_) + " base draws");
    }
    std::uint64_t used() const { return ledger_.total() - start_; }

private:
    const SampleLedger& ledger_;
    std::uint64_t start_;
    std::uint64_t cap_;
};

RaceResult uniform_pick_race(const std::vector<CoinPtr>& coins, Stream& aux, const DrawGuard& guard)
{
    const std::uint64_t m = coins.size();
    for (;;) {
        const auto i = static_cast<std::size_t>(aux.below(m));
        if (coins[i]->flip())
            return {i, guard.used()};
        guard.check();
    }
}

// Coin i's first heads arrives after an Exp(v_i) amount of clock time when each
// flip costs an Exp(1) tick, so the earliest clock wins with probability
// v_i / sum v. Clocks that pass the current leader are abandoned.
RaceResult exp_clock_race(const std::vector<CoinPtr>& coins, Stream& aux, const DrawGuard& guard)
{
    double best = std::numeric_limits<double>::infinity();
    std::size_t winner = coins.size();
    for (std::size_t i = 0; i < coins.size(); ++i) {
        double t = 0.0;
        for (;;) {
            t += aux.exponential();
            if (t >= best)
                break;
            const bool heads = coins[i]->flip();
            guard.check();
            if (heads) {
                best = t;
                winner = i;
                break;
            }
        }
    }
    return {winner, guard.used()};
}

std::vector<CoinPtr> exponentiated(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, bool lazy)
{
    Stream session = aux.split();
    std::vector<CoinPtr> out;
    out.reserve(coins.size());
    for (std::size_t i = 0; i < coins.size(); ++i)
        out.push_back(exponentiate(coins[i], lambda, session.derive(i), lazy));
    return out;
}

} // namespace

RaceResult bernoulli_race(const std::vector<CoinPtr>& coins, Stream& aux, const SampleLedger& ledger,
                          const RaceOptions& opts)
{
    require_coins(coins);
    DrawGuard guard(ledger, opts.max_draws);
    if (opts.impl == LinearRaceImpl::exp_clock)
        return exp_clock_race(coins, aux, guard);
    return uniform_pick_race(coins, aux, guard);
}

RaceResult basic_exp_race(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, const SampleLedger& ledger,
                          const RaceOptions& opts)
{
    require_coins(coins);
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw InvalidParameter("exponential race needs a finite positive lambda");
    return bernoulli_race(exponentiated(coins, lambda, aux, opts.lazy_exponentiation), aux, ledger, opts);
}

std::uint64_t vmax_samples_per_coin(std::size_t m, double eps)
{
    if (!(eps > 0.0 && eps <= 1.0))
        throw InvalidParameter("v_max estimation accuracy must lie in (0,1]");
    const double n = 4.0 / (eps * eps) * std::log(4.0 * static_cast<double>(m) / eps);
    return static_cast<std::uint64_t>(std::ceil(n));
}

double basic_exp_race_expected_draws(const std::vector<double>& v, double lambda, bool lazy)
{
    if (v.empty() || !(lambda > 0.0))
        throw InvalidParameter("expected draws need coins and lambda > 0");
    double cost = 0.0, accept = 0.0;
    for (double p : v) {
        if (!(p >= 0.0 && p <= 1.0))
            throw InvalidParameter("biases must lie in [0,1]");
        const double a = std::exp(lambda * (p - 1.0));
        accept += a;
        cost += (!lazy || p == 1.0) ? lambda : -std::expm1(lambda * (p - 1.0)) / (1.0 - p);
    }
    return cost / accept;
}

VmaxEstimate estimate_vmax_coin(const std::vector<CoinPtr>& coins, double eps, Stream& aux)
{
    require_coins(coins);
    VmaxEstimate out;
    out.samples_per_coin = vmax_samples_per_coin(coins.size(), eps);
    std::uint64_t best = 0;
    for (std::size_t i = 0; i < coins.size(); ++i) {
        std::uint64_t heads = 0;
        for (std::uint64_t n = 0; n < out.samples_per_coin; ++n)
            heads += coins[i]->flip() ? 1 : 0;
        out.means.push_back(static_cast<double>(heads) / static_cast<double>(out.samples_per_coin));
        if (i == 0 || heads > best) {
            best = heads;
            out.argmax = i;
        }
    }
    out.estimate = static_cast<double>(best) / static_cast<double>(out.samples_per_coin);
    out.coin = constant_coin(out.estimate, aux.split());
    return out;
}

FastExpRace::FastExpRace(const std::vector<CoinPtr>& coins, double lambda, Stream aux, const SampleLedger& ledger,
                         RaceOptions opts)
: lambda_(lambda), aux_(aux), ledger_(&ledger), opts_(opts)
{
    require_coins(coins);
    if (!(lambda > 4.0) || !std::isfinite(lambda))
        throw InvalidParameter("fast exponential race requires lambda > 4");
    eps_ = 1.0 / lambda;
    shifted_lambda_ = lambda / (1.0 - 2.0 * eps_);

    const std::uint64_t before = ledger.total();
    Stream build = aux_.derive("build");
    vmax_ = estimate_vmax_coin(coins, eps_, build);
    setup_draws_ = ledger.total() - before;

    const double shrink = 1.0 - 2.0 * eps_;
    auto gap = scale(complement(vmax_.coin), shrink, build.derive("gap"));
    shifted_.reserve(coins.size());
    for (std::size_t i = 0; i < coins.size(); ++i) {
        Stream s = build.derive(i);
        shifted_.push_back(add(scale(coins[i], shrink, s.derive("scale")), gap, eps_, s.derive("add"), opts_.doubling));
    }
}

RaceResult FastExpRace::sample() { return basic_exp_race(shifted_, shifted_lambda_, aux_, *ledger_, opts_); }

RaceResult fast_exp_race(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, const SampleLedger& ledger,
                         const RaceOptions& opts)
{
    FastExpRace race(coins, lambda, aux.split(), ledger, opts);
    RaceResult r = race.sample();
    r.base_draws += race.setup_draws();
    return r;
}

RaceResult exp_race(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, const SampleLedger& ledger,
                    const RaceOptions& opts)
{
    if (lambda > 4.0)
        return fast_exp_race(coins, lambda, aux, ledger, opts);
    return basic_exp_race(coins, lambda, aux, ledger, opts);
}

} // namespace efs
