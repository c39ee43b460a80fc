// efs: experiment runner over the efs library.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "efs/errors.hpp"

using nlohmann::json;
using namespace efs::cli;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failed = 1;
constexpr int exit_usage = 2;

// Turns a config object into command-line tokens placed ahead of the user's,
// so flags given on the command line win.
std::vector<std::string> config_tokens(const json& cfg, std::string& subcommand)
{
    if (!cfg.is_object())
        throw efs::InvalidParameter("config must be a JSON object");
    std::vector<std::string> out;
    for (const auto& [key, value] : cfg.items()) {
        if (key == "subcommand") {
            subcommand = value.get<std::string>();
            continue;
        }
        std::string name = "--" + key;
        std::replace(name.begin(), name.end(), '_', '-');
        if (value.is_boolean()) {
            if (value.get<bool>())
                out.push_back(name);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& x : value) {
                if (!joined.empty())
                    joined += ',';
                joined += x.is_string() ? x.get<std::string>() : x.dump();
            }
            out.push_back(name);
            out.push_back(joined);
        } else if (value.is_string()) {
            out.push_back(name);
            out.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            out.push_back(name);
            out.push_back(value.dump());
        } else {
            throw efs::InvalidParameter("config key '" + key + "' has an unsupported value");
        }
    }
    return out;
}

json option_echo(const CLI::App& app)
{
    json out = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config")
            continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            if (opt->get_type_size() == 0)
                out[name] = true;
            else if (res.size() == 1 || opt->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeLast)
                out[name] = res.back();
            else
                out[name] = res;
        } else if (!opt->get_default_str().empty()) {
            out[name] = opt->get_default_str();
        } else {
            out[name] = nullptr;
        }
    }
    return out;
}

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);

    // --config is expanded before parsing so config keys go through the same validation as flags.
    std::string config_sub;
    std::string config_path;
    try {
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) {
                config_path = args[i + 1];
                args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
                break;
            }
            if (args[i].rfind("--config=", 0) == 0) {
                config_path = args[i].substr(9);
                args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
                break;
            }
        }
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in)
                throw efs::InvalidParameter("cannot open config '" + config_path + "'");
            const json cfg = json::parse(in);
            const auto extra = config_tokens(cfg, config_sub);
            const bool has_sub = !args.empty() && args.front().rfind("-", 0) != 0;
            if (!has_sub && config_sub.empty())
                throw efs::InvalidParameter("config has no subcommand and none was given");
            const std::string sub = has_sub ? args.front() : config_sub;
            std::vector<std::string> merged{sub};
            merged.insert(merged.end(), extra.begin(), extra.end());
            merged.insert(merged.end(), args.begin() + (has_sub ? 1 : 0), args.end());
            args = std::move(merged);
        }
    } catch (const std::exception& e) {
        std::cerr << "efs: " << e.what() << '\n';
        return exit_usage;
    }

    CLI::App app{"Exact sampling from expectations: factories, races, urn mechanisms and the BIC reduction."};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Common common;
    std::string out_path;
    std::string csv_path;
    app.add_option("--seed", common.seed, "Root seed")->capture_default_str();
    app.add_option("--budget", common.budget, "Base-draw budget per ledger");
    app.add_option("--trials", common.trials, "Trials, flips or runs; each subcommand has its own default");
    app.add_option("--out", out_path, "JSON-lines output file (stdout when absent)");
    app.add_flag("--desk-override", common.desk_override, "Allow parameter overrides and loads below the guaranteed range")
        ->capture_default_str();
    app.add_option("--config", config_path, "JSON config file; keys are option names");
    app.fallthrough();

    FactoryArgs fa;
    auto* factory = app.add_subcommand("factory", "Flip a factory expression and compare with its closed form");
    factory->add_option("--expr", fa.expr, "Prefix expression, e.g. 'exp 2.0 (scale 0.5 leaf:A)'")->required();
    factory->add_option("--leaf", fa.leaves, "Leaf bias NAME=BIAS, repeatable")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

    RaceArgs ra;
    auto* race = app.add_subcommand("race", "Bernoulli race against linear weights");
    race->add_option("--biases", ra.biases, "Comma-separated coin biases")->required();
    race->add_option("--impl", ra.impl, "uniform-pick or exp-clock")->capture_default_str();

    ExpRaceArgs ea;
    auto* exprace = app.add_subcommand("exprace", "Exponential race against exponential weights");
    exprace->add_option("--biases", ea.biases, "Comma-separated coin biases")->required();
    exprace->add_option("--lambda", ea.lambda, "Inverse temperature")->required();
    exprace->add_option("--impl", ea.impl, "Linear race inside: uniform-pick or exp-clock")->capture_default_str();
    exprace->add_option("--method", ea.method, "auto, basic or fast")->capture_default_str();
    exprace->add_option("--session", ea.session, "Fast races sharing one v_max estimate")->capture_default_str();

    UrnsArgs ua;
    auto* urns = app.add_subcommand("urns", "Single-agent urn mechanism audits");
    urns->add_option("--env", ua.env, "Environment JSON file")->required();
    urns->add_option("--type", ua.type, "Agent type ID or ID:SCALE")->capture_default_str();
    urns->add_option("--epsilon", ua.epsilon, "Welfare loss target")->capture_default_str();
    urns->add_option("--audit", ua.audit, "welfare, ic, naive-ic or payment")->capture_default_str();
    urns->add_option("--naive-samples", ua.naive_samples, "Samples per urn of the naive mechanism")
        ->capture_default_str();
    urns->add_option("--grid", ua.grid, "Comma-separated type grid for IC audits (default: every type id)");
    urns->add_option("--session", ua.session, "Allocations sharing one set of coins")->capture_default_str();

    ReduceArgs rda;
    auto* reduce = app.add_subcommand("reduce", "Run the BIC reduction on a finite instance");
    reduce->add_option("--instance", rda.instance, "Instance JSON file")->required();
    reduce->add_option("--epsilon", rda.epsilon, "Target loss")->capture_default_str();
    reduce->add_option("--c", rda.c, "Learning-rate constant")->capture_default_str();
    reduce->add_option("--m", rda.m, "Market size")->capture_default_str();
    reduce->add_option("--k", rda.k, "Load override (needs --desk-override)");
    reduce->add_option("--delta", rda.delta, "Regulariser override (needs --desk-override)");
    reduce->add_option("--eta", rda.eta, "Learning-rate override (needs --desk-override)");
    reduce->add_option("--gamma", rda.gamma, "auto or a fixed price scale")->capture_default_str();
    reduce->add_option("--samples-per-edge", rda.samples_per_edge, "Gamma sample override (needs --desk-override)");
    reduce->add_option("--csv", csv_path, "Aggregate CSV path (default: --out with .csv)");

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "Run named verification suites");
    verify->add_option("--suite", va.suites, "Suite name or all, repeatable")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->delimiter(',')
        ->required();
    verify->add_option("--scale", va.scale, "Multiplier on every trial count")->capture_default_str();
    verify->add_option("--significance", va.significance, "Family-wise level per suite")->capture_default_str();

    ParamsArgs pa;
    auto* params = app.add_subcommand("params", "Print derived parameters without running anything");
    params->add_option("--epsilon", pa.epsilon, "Target loss")->capture_default_str();
    params->add_option("--m", pa.m, "Market size")->capture_default_str();
    params->add_option("--c", pa.c, "Learning-rate constant")->capture_default_str();
    params->add_option("--dimension", pa.dimension, "Doubling dimension for the market-size bound");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    CLI::App* chosen = app.get_subcommands().front();
    Output out;
    try {
        if (chosen == factory)
            out = run_factory(common, fa);
        else if (chosen == race)
            out = run_race(common, ra);
        else if (chosen == exprace)
            out = run_exprace(common, ea);
        else if (chosen == urns)
            out = run_urns(common, ua);
        else if (chosen == reduce)
            out = run_reduce(common, rda);
        else if (chosen == verify)
            out = run_verify(common, va);
        else
            out = run_params(common, pa);
    } catch (const efs::InvalidParameter& e) {
        std::cerr << "efs: " << e.what() << '\n';
        return exit_usage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "efs: malformed input: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "efs: " << e.what() << '\n';
        out.records.push_back({{"record", "error"}, {"message", e.what()}});
        out.pass = false;
    }

    json config{{"subcommand", chosen->get_name()}, {"options", option_echo(app)}};
    config["options"].update(option_echo(*chosen));
    if (!config_path.empty())
        config["config_file"] = config_path;
    const json header{{"record", "header"}, {"tool", "efs"}, {"version", "0.1.0"}, {"config", config},
                      {"timestamp", utc_now()}};

    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) {
            std::cerr << "efs: cannot write '" << out_path << "'\n";
            return exit_usage;
        }
    }
    std::ostream& os = out_path.empty() ? std::cout : file;
    os << header.dump() << '\n';
    for (const auto& r : out.records)
        os << r.dump() << '\n';

    if (!out.csv.empty()) {
        std::string path = csv_path;
        if (path.empty() && !out_path.empty()) {
            const auto dot = out_path.find_last_of('.');
            const auto slash = out_path.find_last_of('/');
            path = (dot != std::string::npos && (slash == std::string::npos || dot > slash) ? out_path.substr(0, dot)
                                                                                            : out_path) +
                   ".csv";
        }
        if (!path.empty()) {
            std::ofstream csv(path);
            csv << out.csv;
        }
    }
    return out.pass ? exit_ok : exit_failed;
}
