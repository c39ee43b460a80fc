#pragma once

#include <functional>
#include <string>
#include <vector>

#include "efs/urns.hpp"
#include "efs/verify.hpp"

namespace efs::verify {

/// Exponential-weights marginals of the urn mechanism at lambda = ln m / eps.
std::vector<double> exact_urn_marginals(const UrnEnvironment& env, const AgentType& t, double eps);

/// v(t, x(t)) - integral_0^1 v(t, x(s t)) ds by the trapezoid rule on `grid` points.
double exact_urn_payment(const UrnEnvironment& env, const AgentType& t, double eps, std::size_t grid = 1001);

struct SingleAgentOutcome {
    std::size_t urn = 0;
    double payment = 0.0;
};

/// Runs the mechanism on a report.
using SingleAgentMechanism = std::function<SingleAgentOutcome(const AgentType& report, Session& s)>;

/// Exponential-weights allocation with the two-call implicit payment.
SingleAgentMechanism exp_weights_mechanism(const UrnEnvironment& env, double eps);

/// Argmax of n-sample means with zero payment.
SingleAgentMechanism naive_mechanism(const UrnEnvironment& env, std::uint64_t n);

struct IcPair {
    std::size_t truth = 0;     // index into the type grid
    std::size_t report = 0;    // index into the misreport grid
    RunningStats margin;       // u(t -> t) - u(t -> t')
};

struct IcAudit {
    AuditReport worst;         // minimum margin over pairs, threshold 0
    std::vector<IcPair> pairs;
};

/// Paired Monte Carlo estimate of u(t -> t) - u(t -> t') on every grid pair.
///
/// Utilities use the exact interim value v_j(t) of the allocated urn minus the
/// sampled payment. The truthful and misreported runs of a trial share one
/// derived stream.
IcAudit ic_audit(const UrnEnvironment& env, const SingleAgentMechanism& mech, const std::vector<AgentType>& types,
                 const std::vector<AgentType>& misreports, std::uint64_t trials, Stream rng);

/// Mean of charge() samples against the quadrature of the payment identity.
AuditReport payment_identity_audit(const UrnEnvironment& env, const AgentType& t, double eps, std::uint64_t trials,
                                   Stream rng, std::size_t grid = 1001);

struct UrnWelfareAudit {
    DistributionReport allocation;
    AuditReport welfare;  // mean v_winner(t) against max_j v_j(t) - eps
    double mean_draws = 0.0;  // base draws per allocation, setup included
    std::uint64_t fast_sessions = 0;
};

/// Allocation frequencies and welfare of the urn mechanism. Allocations run in
/// sessions of `session_size` sharing one set of coins.
UrnWelfareAudit urn_welfare_audit(const UrnEnvironment& env, const AgentType& t, double eps, std::uint64_t trials,
                                  Stream rng, std::uint64_t session_size = 1000, double significance = 1e-3);

} // namespace efs::verify
