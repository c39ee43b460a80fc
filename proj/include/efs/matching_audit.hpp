#pragma once

#include <functional>
#include <vector>

#include "efs/matching.hpp"
#include "efs/verify.hpp"

namespace efs::verify {

struct KktCase {
    std::size_t m = 0;
    std::size_t k = 0;
    double delta = 0.0;
    double opt = 0.0;
    double oracle_opt = 0.0;  // Sinkhorn
    double kkt_residual = 0.0;
    double capacity_residual = 0.0;
    double lower_bound = 0.0;  // delta m k ln m
};

/// solve_offline on `instances` random instances with km <= max_replicas and
/// m <= max_m, against the Sinkhorn oracle.
std::vector<KktCase> kkt_audit(std::size_t instances, Stream rng, std::size_t max_replicas = 12,
                               std::size_t max_m = 4);

struct GammaBoundsAudit {
    double opt = 0.0;       // OPT(v) on the true means
    std::vector<double> gammas;
    std::size_t inside = 0; // OPT/k <= gamma <= 12 OPT/k
    double fraction() const { return gammas.empty() ? 0.0 : static_cast<double>(inside) / gammas.size(); }
};

/// Repeated gamma estimates on Bernoulli edges with the given means.
GammaBoundsAudit gamma_bounds_audit(const Eigen::MatrixXd& means, std::size_t k, double delta, double eta,
                                    std::size_t repetitions, Stream rng);

struct OnlineWelfareAudit {
    RunningStats ratio;            // regularised welfare / OPT(v)
    RunningStats value_per_replica;
    RunningStats opt_per_replica;
    /// Mean of (OPT(v)/km - delta ln m) - realised value per replica; <= 0 means
    /// the loss is within the entropy term.
    RunningStats slack;
    RunningStats edge_samples;
};

/// Online matching with gamma from an independent sampled instance on random
/// uniform means, one instance per seed.
OnlineWelfareAudit online_welfare_audit(std::size_t m, std::size_t k, double delta, double eta, std::size_t seeds,
                                        Stream rng, const MatchOptions& opts = {});

struct PerfectMatchingAudit {
    std::size_t runs = 0;
    std::size_t perfect = 0;
};

/// Online matching on random small instances; counts runs ending in a perfect k-to-1 matching.
PerfectMatchingAudit perfect_matching_audit(std::size_t runs, Stream rng);

struct StationarityReport {
    DistributionReport index;  // j* against uniform on m
    DistributionReport types;  // selected type against the prior
    AuditReport tv;            // TV of selected types to the prior, at most `tv_limit`
};

/// Draws t from the prior, runs the selector and tallies (j*, selected type).
StationarityReport stationarity_audit(const std::function<SurrogateChoice(const AgentType&, Session&)>& selector,
                                      const FinitePrior& prior, std::size_t m, std::size_t trials, Stream rng,
                                      double tv_limit = 0.02, double significance = 1e-3);

struct MonotoneLoadAudit {
    std::vector<std::size_t> loads;
    std::vector<RunningStats> welfare;  // per-replica max-weight k-matching welfare
    /// Differences between consecutive loads; pass when >= -2 SE.
    std::vector<AuditReport> steps;
};

/// Per-replica ideal welfare E[MWM_k(W(r, s))] / (mk) for each load, with
/// replicas and surrogates drawn from `prior` and exact edge values
/// values(type r, type s).
MonotoneLoadAudit monotone_load_audit(const Eigen::MatrixXd& values, const FinitePrior& prior, std::size_t m,
                                      const std::vector<std::size_t>& loads, std::size_t draws, Stream rng);

} // namespace efs::verify
