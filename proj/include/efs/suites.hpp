#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace efs::suites {

struct Check {
    std::string suite;
    std::string name;
    /// Acceptance criterion this check belongs to, 0 for supporting checks.
    int criterion = 0;
    bool pass = true;
    nlohmann::json metrics = nlohmann::json::object();
    /// Wall time since the previous check of the suite. Not part of to_json.
    double seconds = 0.0;
};

struct SuiteOptions {
    std::uint64_t seed = 7;
    /// Multiplies every trial count; 1 is the full run.
    double scale = 1.0;
    /// Family-wise significance of a suite, split evenly over its statistical tests.
    double significance = 1e-3;
};

/// factory-exactness, race-exactness, race-cost, urns-welfare, urns-ic,
/// matching-kkt, gamma-bounds, online-welfare, stationarity, monotone-k,
/// payment-identity.
const std::vector<std::string>& suite_names();

/// Throws InvalidParameter on an unknown name.
std::vector<Check> run_suite(const std::string& name, const SuiteOptions& opts = {});

nlohmann::json to_json(const Check& c);

} // namespace efs::suites
