#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace efs {

struct RandomSeed {
    std::uint64_t value = 0;
};

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

} // namespace detail

/// Counter-based random stream.
///
/// Output n is a keyed hash of (key, n), so a stream is fully described by
/// its key and position. Child streams are keyed by (parent key, label) and
/// do not depend on how far the parent has advanced. Satisfies
/// UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    Stream() = default;
    Stream(RandomSeed seed, std::string_view label)
    : key_(detail::mix64(detail::mix64(seed.value ^ 0x5851f42d4c957f2dULL) ^ detail::hash_label(label)))
    {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        return detail::mix64(key_ ^ detail::mix64(++counter_ * 0x9e3779b97f4a7c15ULL));
    }

    /// Uniform on [0,1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0,1).
    double uniform_open() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    double exponential() noexcept;

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    Stream derive(std::string_view label) const noexcept
    {
        return Stream(detail::mix64(key_ + 0x632be59bd9b4e019ULL) ^ detail::hash_label(label));
    }
    Stream derive(std::uint64_t index) const noexcept
    {
        return Stream(detail::mix64(key_ + 0x9e6c63d0676a9a99ULL) ^ detail::mix64(index ^ 0xd1b54a32d192ed03ULL));
    }

    /// A fresh child stream; advances this stream by one output.
    Stream split() noexcept { return derive((*this)()); }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t position() const noexcept { return counter_; }

private:
    explicit Stream(std::uint64_t key) noexcept : key_(detail::mix64(key)) {}

    std::uint64_t key_ = 0x853c49e6748fea9bULL;
    std::uint64_t counter_ = 0;
};

/// Same (seed, label) gives the same stream; distinct labels give unrelated streams.
inline Stream derive_stream(RandomSeed seed, std::string_view label) { return Stream(seed, label); }

/// Maximum number of base draws a computation may consume; unlimited by default.
struct SampleBudget {
    std::optional<std::uint64_t> max_draws;

    static SampleBudget unlimited() { return {}; }
    static SampleBudget of(std::uint64_t n) { return SampleBudget{n}; }
};

using SourceId = std::size_t;

/// Per-source count of physical draws from base sources.
///
/// Only base sources record here; factory combinators never do. A draw that
/// would push the total past the budget throws BudgetExceeded before the
/// draw is taken.
class SampleLedger {
public:
    explicit SampleLedger(SampleBudget budget = {}) : budget_(budget) {}

    /// Registering an existing name returns the existing id, so several coins
    /// over one physical source share a counter.
    SourceId register_source(const std::string& name);

    void record(SourceId id)
    {
        if (budget_.max_draws && total_ >= *budget_.max_draws)
            throw_budget_exceeded();
        ++counts_[id];
        ++total_;
    }

    std::uint64_t count(SourceId id) const { return counts_.at(id); }
    std::uint64_t count(const std::string& name) const;
    const std::string& name(SourceId id) const { return names_.at(id); }
    std::size_t sources() const { return names_.size(); }
    std::uint64_t total() const { return total_; }
    const SampleBudget& budget() const { return budget_; }

    /// Sources in registration order.
    std::vector<std::pair<std::string, std::uint64_t>> snapshot() const;

private:
    [[noreturn]] void throw_budget_exceeded() const;

    SampleBudget budget_;
    std::vector<std::string> names_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, SourceId> index_;
    std::uint64_t total_ = 0;
};

inline std::uint64_t ledger_total(const SampleLedger& ledger) { return ledger.total(); }

} // namespace efs
