#include "instances.hpp"

#include <algorithm>
#include <tuple>

#include "efs/errors.hpp"

namespace efs::cli {

using nlohmann::json;

namespace {

std::map<std::size_t, std::vector<double>> value_table(const json& j)
{
    if (!j.is_object() || j.empty())
        throw InvalidParameter("'values' must be a non-empty object from type id to per-outcome values");
    std::map<std::size_t, std::vector<double>> out;
    for (const auto& [key, row] : j.items()) {
        std::size_t id = 0;
        try {
            id = std::stoul(key);
        } catch (const std::exception&) {
            throw InvalidParameter("type id '" + key + "' is not a non-negative integer");
        }
        out[id] = row.get<std::vector<double>>();
        for (double v : out[id])
            if (!(v >= 0.0 && v <= 1.0))
                throw InvalidParameter("values must lie in [0,1]");
    }
    return out;
}

std::vector<double> probabilities(const json& j, std::size_t n, const std::string& what)
{
    const auto p = j.get<std::vector<double>>();
    if (p.size() != n)
        throw InvalidParameter(what + ": probs must match in length");
    double total = 0.0;
    for (double x : p) {
        if (!(x >= 0.0))
            throw InvalidParameter(what + ": probabilities must be non-negative");
        total += x;
    }
    if (!(total > 0.0))
        throw InvalidParameter(what + ": probabilities must not all be zero");
    return p;
}

} // namespace

AgentType parse_type(const json& j)
{
    if (j.is_number_unsigned())
        return {j.get<std::size_t>(), 1.0};
    if (j.is_object())
        return {j.at("id").get<std::size_t>(), j.value("scale", 1.0)};
    throw InvalidParameter("a type is an id or {id, scale}");
}

UrnEnvironment load_environment(const json& j)
{
    const auto values = value_table(j.at("values"));
    std::vector<Urn> urns;
    for (const auto& u : j.at("urns")) {
        Urn urn;
        urn.outcomes = u.at("outcomes").get<std::vector<std::size_t>>();
        if (urn.outcomes.empty())
            throw InvalidParameter("every urn needs at least one outcome");
        urn.probs = probabilities(u.at("probs"), urn.outcomes.size(), "urn");
        for (const auto& [id, row] : values)
            for (auto o : urn.outcomes)
                if (o >= row.size())
                    throw InvalidParameter("type " + std::to_string(id) + " has no value for outcome " +
                                           std::to_string(o));
        urns.push_back(std::move(urn));
    }
    if (urns.empty())
        throw InvalidParameter("environment needs at least one urn");
    return UrnEnvironment::from_table(std::move(urns), values);
}

std::vector<std::size_t> environment_type_ids(const json& j)
{
    std::vector<std::size_t> ids;
    for (const auto& [id, row] : value_table(j.at("values")))
        ids.push_back(id);
    return ids;
}

ReductionInstance::ReductionInstance(const json& j)
: values_(value_table(j.at("values")))
{
    outcomes_ = values_.begin()->second.size();
    for (const auto& [id, row] : values_)
        if (row.size() != outcomes_)
            throw InvalidParameter("every type needs one value per outcome");
    if (outcomes_ == 0)
        throw InvalidParameter("at least one outcome is required");

    for (const auto& a : j.at("agents")) {
        FinitePrior p;
        for (const auto& t : a.at("types")) {
            p.types.push_back(parse_type(t));
            if (!values_.count(p.types.back().id))
                throw InvalidParameter("prior type " + std::to_string(p.types.back().id) + " has no values");
            if (!(p.types.back().scale >= 0.0 && p.types.back().scale <= 1.0))
                throw InvalidParameter("type scale must lie in [0,1]");
        }
        if (p.types.empty())
            throw InvalidParameter("every prior needs at least one type");
        p.probs = probabilities(a.at("probs"), p.types.size(), "prior");
        setting_.priors.push_back(std::move(p));
    }
    if (setting_.priors.empty())
        throw InvalidParameter("at least one agent is required");

    // Enumerate every profile of base ids the algorithm can be asked about.
    std::vector<std::vector<std::size_t>> profiles{{}};
    for (const auto& p : setting_.priors) {
        std::vector<std::size_t> ids;
        for (const auto& t : p.types)
            if (std::find(ids.begin(), ids.end(), t.id) == ids.end())
                ids.push_back(t.id);
        std::vector<std::vector<std::size_t>> next;
        for (const auto& prefix : profiles)
            for (auto id : ids) {
                next.push_back(prefix);
                next.back().push_back(id);
            }
        profiles = std::move(next);
        if (profiles.size() > 100000)
            throw InvalidParameter("too many type profiles to tabulate the algorithm");
    }

    const json& alg = j.at("algorithm");
    if (alg.is_string()) {
        const auto name = alg.get<std::string>();
        for (const auto& prof : profiles) {
            auto& row = table_[prof];
            if (name == "argmax-welfare") {
                std::size_t best = 0;
                double best_w = -1.0;
                for (std::size_t o = 0; o < outcomes_; ++o) {
                    double w = 0.0;
                    for (auto id : prof)
                        w += values_.at(id)[o];
                    if (w > best_w) {
                        best_w = w;
                        best = o;
                    }
                }
                row = {{best, 1.0}};
            } else if (name == "uniform") {
                for (std::size_t o = 0; o < outcomes_; ++o)
                    row.emplace_back(o, 1.0 / static_cast<double>(outcomes_));
            } else {
                throw InvalidParameter("unknown algorithm '" + name + "'; use argmax-welfare, uniform or a table");
            }
        }
    } else {
        for (const auto& r : alg.at("table")) {
            const auto prof = r.at("profile").get<std::vector<std::size_t>>();
            const auto outs = r.at("outcomes").get<std::vector<std::size_t>>();
            const auto probs = probabilities(r.at("probs"), outs.size(), "algorithm table");
            if (prof.size() != setting_.agents())
                throw InvalidParameter("algorithm table profiles need one id per agent");
            double total = 0.0;
            for (double p : probs)
                total += p;
            auto& row = table_[prof];
            row.clear();
            for (std::size_t n = 0; n < outs.size(); ++n) {
                if (outs[n] >= outcomes_)
                    throw InvalidParameter("algorithm table names an unknown outcome");
                row.emplace_back(outs[n], probs[n] / total);
            }
        }
        for (const auto& prof : profiles)
            if (!table_.count(prof))
                throw InvalidParameter("algorithm table has no row for a profile in the priors' support");
    }

    auto values = values_;
    setting_.valuation = [values](std::size_t id, std::size_t o) { return values.at(id).at(o); };
    setting_.algorithm = [this](const std::vector<AgentType>& profile, Stream& rng) {
        std::vector<std::size_t> ids;
        for (const auto& t : profile)
            ids.push_back(t.id);
        const auto& row = outcome_distribution(ids);
        double u = rng.uniform();
        for (const auto& [o, p] : row) {
            if (u < p)
                return o;
            u -= p;
        }
        return row.back().first;
    };
}

const std::vector<std::pair<std::size_t, double>>&
ReductionInstance::outcome_distribution(const std::vector<std::size_t>& ids) const
{
    const auto it = table_.find(ids);
    if (it == table_.end())
        throw InvalidParameter("algorithm has no row for the given profile");
    return it->second;
}

double ReductionInstance::interim_value(std::size_t agent, const AgentType& r, const AgentType& s) const
{
    const auto key = std::make_tuple(agent, r.id, s.id);
    auto it = interim_.find(key);
    if (it == interim_.end()) {
        double total = 0.0;
        std::vector<std::size_t> ids(setting_.agents());
        std::function<void(std::size_t, double)> go = [&](std::size_t a, double w) {
            if (a == ids.size()) {
                for (const auto& [o, p] : outcome_distribution(ids))
                    total += w * p * values_.at(r.id)[o];
                return;
            }
            if (a == agent) {
                ids[a] = s.id;
                go(a + 1, w);
                return;
            }
            const auto& prior = setting_.priors[a];
            double norm = 0.0;
            for (double p : prior.probs)
                norm += p;
            for (std::size_t n = 0; n < prior.types.size(); ++n) {
                ids[a] = prior.types[n].id;
                go(a + 1, w * prior.probs[n] / norm);
            }
        };
        go(0, 1.0);
        it = interim_.emplace(key, total).first;
    }
    return r.scale * it->second;
}

} // namespace efs::cli
