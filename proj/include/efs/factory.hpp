#pragma once

#include "efs/sources.hpp"

namespace efs {

// Bernoulli factory combinators. Each returns a new coin whose flips are built
// from flips of its children; auxiliary randomness comes from the given
// stream and is never metered.

CoinPtr continuous_to_bernoulli(ValueSourcePtr src, Stream aux);

/// A coin of known bias. Used for shifts inside the races; costs no base draws.
CoinPtr constant_coin(double bias, Stream aux);

CoinPtr scale(CoinPtr c, double lambda, Stream aux);

CoinPtr complement(CoinPtr c);

struct DoublingOptions {
    /// Cap on random-walk steps per output flip before BudgetExceeded.
    std::uint64_t max_steps = 10'000'000'000ULL;
    /// Initial walk length is ceil(walk_constant / eps).
    double walk_constant = 3.5;
};

/// Bias 2p for p <= 1/2 - delta.
///
/// Huber's linear factory for f(p) = Cp with C = 2 and eps = 2*delta: a
/// random walk driven by Bernoulli(Cp/(1+Cp)) steps that absorbs at 0
/// (heads) or is thinned by Bernoulli(beta^i) at the horizon, which then
/// doubles with C and eps adjusted. Expected cost is O(1/delta).
CoinPtr double_bias(CoinPtr c, double delta, Stream aux, DoublingOptions opts = {});

/// Bias E[p^K], K ~ d. With lazy set the product stops at the first tails,
/// which leaves the bias unchanged and saves draws.
CoinPtr pgf(CoinPtr c, DistributionPtr d, Stream aux, bool lazy = false);

/// Bias exp(lambda (p - 1)), as pgf with K ~ Poisson(lambda).
CoinPtr exponentiate(CoinPtr c, double lambda, Stream aux, bool lazy = false);

CoinPtr average(CoinPtr c1, CoinPtr c2, Stream aux);

/// Bias w p1 + (1 - w) p2.
CoinPtr mix(CoinPtr c1, CoinPtr c2, double w, Stream aux);

/// Bias p1 + p2 for p1 + p2 <= 1 - delta: doubling applied to the average with slack delta/2.
CoinPtr add(CoinPtr c1, CoinPtr c2, double delta, Stream aux, DoublingOptions opts = {});

} // namespace efs
