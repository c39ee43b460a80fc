#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "efs/races.hpp"

namespace efs {

/// A point of a star-convex type space: base type `id` scaled by `scale`.
struct AgentType {
    std::size_t id = 0;
    double scale = 1.0;
};

struct Urn {
    std::vector<std::size_t> outcomes;
    std::vector<double> probs;
};

/// m urns over opaque outcome handles plus a valuation oracle.
///
/// Urn contents are only reachable by sampling; the probabilities are
/// sealed for the verification oracle.
class UrnEnvironment {
public:
    using Valuation = std::function<double(std::size_t type_id, std::size_t outcome)>;

    UrnEnvironment(std::vector<Urn> urns, Valuation valuation);

    /// values.at(type_id).at(outcome).
    static UrnEnvironment from_table(std::vector<Urn> urns, std::map<std::size_t, std::vector<double>> values);

    std::size_t size() const { return urns_.size(); }

    std::size_t sample_outcome(std::size_t j, Stream& rng) const;

    /// Throws ContractViolation if the oracle leaves [0,1].
    double value(const AgentType& t, std::size_t outcome) const;

    static AgentType scale_type(double lambda, const AgentType& t);

private:
    friend class verify::Oracle;

    struct Sampler {
        std::vector<std::size_t> outcomes;
        std::vector<double> cumulative;
    };

    std::vector<Urn> urns_;
    std::vector<Sampler> samplers_;
    Valuation valuation_;
};

/// The two-urn manipulation example: outcomes o1, o2, o3 valued 1/3, 2/3, 1 by type 0
/// and 1/3, 2/3, 0 by type 1 (the misreport). Urn 0 is a point mass on o2,
/// urn 1 draws o1 with probability 0.55 and o3 with 0.45.
UrnEnvironment two_urn_example();

/// Random stream plus ledger for one single-owner computation.
struct Session {
    Stream rng;
    std::shared_ptr<SampleLedger> ledger = std::make_shared<SampleLedger>();
    RaceOptions race{};

    Session() = default;
    Session(Stream s, std::shared_ptr<SampleLedger> l) : rng(s), ledger(std::move(l)) {}
};

std::string urn_source_name(std::size_t j);

/// Bias v_j(t): each flip draws one outcome from urn j and values it.
CoinPtr urn_value_coin(const UrnEnvironment& env, const AgentType& t, std::size_t j, Session& s);

/// lambda = ln(m) / eps.
double urn_lambda(std::size_t m, double eps);

struct UrnChoice {
    std::size_t urn = 0;
    std::uint64_t base_draws = 0;
};

/// Urn with marginals exp(lambda v_j(t)) / sum exp(lambda v_j'(t)), lambda = ln m / eps.
UrnChoice allocate(const UrnEnvironment& env, const AgentType& t, double eps, Session& s);

/// Repeated allocations at one reported type. Coins are built once; when the
/// fast race applies, its v_max estimate is shared by every sample.
///
/// With lambda > 4 the fast race's setup also picks the race: when the basic
/// race's expected draws at the estimated coin means are below 25 lambda^2, a
/// floor on the fast race's measured cost, the basic race runs instead. Both
/// are exact, so only the draw count changes.
class UrnAllocator {
public:
    UrnAllocator(const UrnEnvironment& env, const AgentType& t, double eps, Session& s);
    UrnChoice sample();
    double lambda() const { return lambda_; }
    std::uint64_t setup_draws() const;
    bool uses_fast_race() const { return fast_ && !basic_; }

private:
    Session* session_;
    double lambda_;
    std::vector<CoinPtr> coins_;
    std::optional<FastExpRace> fast_;
    bool basic_ = false;
};

struct Charge {
    double payment = 0.0;
    double lambda_draw = 0.0;  // Lambda ~ U[0,1]
    std::size_t urn = 0;       // allocation at the report, outcome o0
    std::size_t scaled_urn = 0;
    std::size_t outcome = 0;
    std::size_t scaled_outcome = 0;
};

/// Allocation procedure used by charge; defaults to `allocate`.
using UrnRule = std::function<std::size_t(const AgentType&, Session&)>;

UrnRule exp_weights_rule(const UrnEnvironment& env, double eps);

/// One sample of the implicit payment: v(t, o0) - v(t, o'), where o0 comes from
/// the rule at t and o' from the rule at Lambda t.
Charge charge(const UrnEnvironment& env, const AgentType& t, const UrnRule& rule, Session& s);

/// Draws one outcome from urn j, metered on the urn's source.
std::size_t realize_outcome(const UrnEnvironment& env, std::size_t j, Session& s);

/// Argmax of n-sample empirical means, lowest index on ties. Not incentive compatible.
std::size_t naive_allocate(const UrnEnvironment& env, const AgentType& t, std::uint64_t n, Session& s);

} // namespace efs
