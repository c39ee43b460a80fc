#pragma once

#include <cstdint>
#include <vector>

#include "efs/factory.hpp"

namespace efs {

struct RaceResult {
    std::size_t winner = 0;  // 0-based
    std::uint64_t base_draws = 0;
};

enum class LinearRaceImpl { uniform_pick, exp_clock };

struct RaceOptions {
    /// Base draws one race may consume before BudgetExceeded.
    std::uint64_t max_draws = 1'000'000'000ULL;
    LinearRaceImpl impl = LinearRaceImpl::uniform_pick;
    /// Stop each exponentiation product at its first tails. Exact either way.
    bool lazy_exponentiation = true;
    DoublingOptions doubling{};
};

/// P[winner = i] = v_i / sum v. Pick a coin uniformly, flip it, stop on heads.
///
/// base_draws is the delta of `ledger`, which must be the ledger all base
/// sources under `coins` record on.
RaceResult bernoulli_race(const std::vector<CoinPtr>& coins, Stream& aux, const SampleLedger& ledger,
                          const RaceOptions& opts = {});

/// P[winner = i] proportional to exp(lambda v_i): a Bernoulli race over exponentiated coins.
RaceResult basic_exp_race(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, const SampleLedger& ledger,
                          const RaceOptions& opts = {});

/// Expected base draws of basic_exp_race on coins of bias `v`: sum_i c_i / sum_i a_i
/// with a_i = e^(lambda (v_i - 1)), c_i = lambda eager or (1 - a_i) / (1 - v_i) lazy.
double basic_exp_race_expected_draws(const std::vector<double>& v, double lambda, bool lazy = true);

struct VmaxEstimate {
    CoinPtr coin;  // constant coin of bias `estimate`
    double estimate = 0.0;
    std::size_t argmax = 0;
    std::uint64_t samples_per_coin = 0;
    std::vector<double> means;  // empirical mean of every coin
};

/// ceil((4 / eps^2) ln(4m / eps)).
std::uint64_t vmax_samples_per_coin(std::size_t m, double eps);

/// Estimates max_i v_i from a fixed number of flips per coin and freezes it in a coin.
VmaxEstimate estimate_vmax_coin(const std::vector<CoinPtr>& coins, double eps, Stream& aux);

/// Exponential race for lambda > 4 whose cost is polynomial in lambda.
///
/// With eps = 1/lambda, the inputs are shifted to
/// v'_i = (1 - 2 eps) v_i + (1 - 2 eps)(1 - z), with z an estimate of v_max,
/// and raced at lambda / (1 - 2 eps). The shift cancels in the softmax.
///
/// A session builds the z-coin and the shifted coins once; each sample()
/// is one race on them.
class FastExpRace {
public:
    FastExpRace(const std::vector<CoinPtr>& coins, double lambda, Stream aux, const SampleLedger& ledger,
                RaceOptions opts = {});

    RaceResult sample();

    double lambda() const { return lambda_; }
    double eps() const { return eps_; }
    double shifted_lambda() const { return shifted_lambda_; }
    double z() const { return vmax_.estimate; }
    const std::vector<double>& coin_means() const { return vmax_.means; }
    /// Base draws spent on the v_max estimate.
    std::uint64_t setup_draws() const { return setup_draws_; }
    const std::vector<CoinPtr>& shifted_coins() const { return shifted_; }

private:
    double lambda_;
    double eps_;
    double shifted_lambda_;
    VmaxEstimate vmax_;
    std::vector<CoinPtr> shifted_;
    Stream aux_;
    const SampleLedger* ledger_;
    RaceOptions opts_;
    std::uint64_t setup_draws_ = 0;
};

/// One fast race including its own v_max estimate; base_draws counts both.
RaceResult fast_exp_race(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, const SampleLedger& ledger,
                         const RaceOptions& opts = {});

/// Fast race when lambda > 4, basic race otherwise.
RaceResult exp_race(const std::vector<CoinPtr>& coins, double lambda, Stream& aux, const SampleLedger& ledger,
                    const RaceOptions& opts = {});

} // namespace efs
