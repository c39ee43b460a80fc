#include "efs/rng.hpp"

#include <cmath>
#include <string>

#include "efs/errors.hpp"

namespace efs {

double Stream::exponential() noexcept { return -std::log(uniform_open()); }

std::uint64_t Stream::below(std::uint64_t n) noexcept
{
    // Lemire's multiply-shift with rejection of the biased low region.
    __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<__uint128_t>((*this)()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

SourceId SampleLedger::register_source(const std::string& name)
{
    if (auto it = index_.find(name); it != index_.end())
        return it->second;
    const SourceId id = names_.size();
    names_.push_back(name);
    counts_.push_back(0);
    index_.emplace(name, id);
    return id;
}

std::uint64_t SampleLedger::count(const std::string& name) const
{
    auto it = index_.find(name);
    return it == index_.end() ? 0 : counts_[it->second];
}

std::vector<std::pair<std::string, std::uint64_t>> SampleLedger::snapshot() const
{
    std::vector<std::pair<std::string, std::uint64_t>> out;
    out.reserve(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i)
        out.emplace_back(names_[i], counts_[i]);
    return out;
}

void SampleLedger::throw_budget_exceeded() const
{
    throw BudgetExceeded("sample budget of " + std::to_string(*budget_.max_draws) + " base draws exhausted");
}

} // namespace efs
