#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace efs::cli {

struct Common {
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> budget;
    std::optional<std::uint64_t> trials;
    bool desk_override = false;
};

struct Output {
    std::vector<nlohmann::json> records;
    bool pass = true;
    std::string csv;  // empty when the command has no CSV
};

struct FactoryArgs {
    std::string expr;
    std::vector<std::string> leaves;  // NAME=BIAS
};

struct RaceArgs {
    std::string biases;
    std::string impl = "uniform-pick";
};

struct ExpRaceArgs {
    std::string biases;
    double lambda = 1.0;
    std::string impl = "uniform-pick";
    std::string method = "auto";
    std::uint64_t session = 1000;
};

struct UrnsArgs {
    std::string env;
    std::string type = "0";
    double epsilon = 0.1;
    std::string audit = "welfare";
    std::uint64_t naive_samples = 20;
    std::string grid;
    std::uint64_t session = 1000;
};

struct ReduceArgs {
    std::string instance;
    double epsilon = 0.5;
    double c = 1.0;
    std::size_t m = 2;
    std::optional<std::uint64_t> k;
    std::optional<double> delta;
    std::optional<double> eta;
    std::string gamma = "auto";
    std::optional<std::uint64_t> samples_per_edge;
};

struct VerifyArgs {
    std::vector<std::string> suites;
    double scale = 1.0;
    double significance = 1e-3;
};

struct ParamsArgs {
    double epsilon = 0.1;
    std::size_t m = 2;
    double c = 1.0;
    std::optional<double> dimension;
};

// Each throws InvalidParameter on invalid arguments before doing any work.
Output run_factory(const Common& c, const FactoryArgs& a);
Output run_race(const Common& c, const RaceArgs& a);
Output run_exprace(const Common& c, const ExpRaceArgs& a);
Output run_urns(const Common& c, const UrnsArgs& a);
Output run_reduce(const Common& c, const ReduceArgs& a);
Output run_verify(const Common& c, const VerifyArgs& a);
Output run_params(const Common& c, const ParamsArgs& a);

} // namespace efs::cli
