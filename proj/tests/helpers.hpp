#pragma once

#include <memory>
#include <string>
#include <vector>

#include "efs/races.hpp"
#include "efs/verify.hpp"

namespace efs::testing {

struct Bench {
    std::shared_ptr<SampleLedger> ledger = std::make_shared<SampleLedger>();
    Stream root;
    std::uint64_t next = 0;

    explicit Bench(std::uint64_t seed) : root(derive_stream({seed}, "bench")) {}

    Stream stream() { return root.derive(next++); }

    std::shared_ptr<BernoulliSource> coin(double p)
    {
        const std::string name = "coin-" + std::to_string(next);
        return make_bernoulli_source(name, p, ledger, stream());
    }

    std::vector<CoinPtr> coins(const std::vector<double>& ps)
    {
        std::vector<CoinPtr> out;
        for (double p : ps)
            out.push_back(coin(p));
        return out;
    }
};

inline std::uint64_t count_heads(Coin& c, std::uint64_t n)
{
    std::uint64_t h = 0;
    for (std::uint64_t i = 0; i < n; ++i)
        h += c.flip() ? 1 : 0;
    return h;
}

/// True when the heads count over n flips is inside the 99.9% interval of p.
inline bool consistent_with(std::uint64_t heads, std::uint64_t n, double p)
{
    if (p <= 0.0)
        return heads == 0;
    if (p >= 1.0)
        return heads == n;
    // The interval is built around the observation; p inside it is the two-sided test.
    return verify::binomial_interval(heads, n, 0.999).contains(p);
}

} // namespace efs::testing
