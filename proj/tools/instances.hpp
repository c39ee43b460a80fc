#pragma once

#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "efs/matching.hpp"

namespace efs::cli {

/// {urns: [{outcomes: [...], probs: [...]}], values: {type-id: [per-outcome values]}}
UrnEnvironment load_environment(const nlohmann::json& j);

/// Type ids present in an environment file's value table, ascending.
std::vector<std::size_t> environment_type_ids(const nlohmann::json& j);

/// A type written as an id or as {id, scale}.
AgentType parse_type(const nlohmann::json& j);

/// Finite multi-agent setting with a known outcome distribution for every profile.
///
///   {values: {type-id: [per-outcome values]},
///    agents: [{types: [...], probs: [...]}, ...],
///    algorithm: "argmax-welfare" | "uniform" |
///               {table: [{profile: [ids], outcomes: [...], probs: [...]}]}}
class ReductionInstance {
public:
    explicit ReductionInstance(const nlohmann::json& j);
    // The setting's algorithm refers back to this object.
    ReductionInstance(const ReductionInstance&) = delete;
    ReductionInstance& operator=(const ReductionInstance&) = delete;

    const BayesianSetting& setting() const { return setting_; }
    std::size_t outcomes() const { return outcomes_; }

    /// Distribution of A's outcome on a profile of base type ids.
    const std::vector<std::pair<std::size_t, double>>& outcome_distribution(const std::vector<std::size_t>& ids) const;

    /// E[v(r, A(s, t_-agent))] with the other agents drawn from their priors.
    double interim_value(std::size_t agent, const AgentType& r, const AgentType& s) const;

private:
    std::map<std::size_t, std::vector<double>> values_;
    std::size_t outcomes_ = 0;
    std::map<std::vector<std::size_t>, std::vector<std::pair<std::size_t, double>>> table_;
    BayesianSetting setting_;
    mutable std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> interim_;
};

} // namespace efs::cli
