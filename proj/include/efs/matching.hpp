#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "efs/params.hpp"
#include "efs/races.hpp"
#include "efs/urns.hpp"

namespace efs {

// Entropy-regularised k-to-1 matching of km replicas to m surrogates.
// Rows are replicas, columns surrogates; every index is 0-based.

struct DualSolution {
    Eigen::VectorXd alpha;  // capacity prices, min alpha = 0
    Eigen::MatrixXd x;      // rows are exponential weights of (v_i - alpha) / delta
    double opt = 0.0;
    /// Max over rows of the spread of delta ln x_ij - (v_ij - alpha_j) across j.
    double kkt_residual = 0.0;
    /// max_j |sum_i x_ij - k|.
    double capacity_residual = 0.0;
    int iterations = 0;
};

struct SolverOptions {
    int max_iterations = 10'000;
    /// Stop once the capacity residual is below tolerance * k.
    double tolerance = 1e-12;
};

/// max sum x v - delta sum x ln x over row-stochastic x with column sums k.
///
/// Minimises the dual g(alpha) = delta sum_i lse((v_i - alpha) / delta) + k sum alpha,
/// whose gradient is k - colsum(x(alpha)), by damped Newton steps with Armijo
/// backtracking. Throws SolverFailure at the iteration cap.
DualSolution solve_offline(const Eigen::MatrixXd& values, double delta, std::size_t k, const SolverOptions& opts = {});

/// Sample access to edge values v(r_i, A(s_j)) in [0,1].
class MatchingInstance {
public:
    using EdgeSampler = std::function<double(std::size_t i, std::size_t j, Stream& rng)>;

    MatchingInstance(std::size_t m, std::size_t k, EdgeSampler sampler, std::shared_ptr<SampleLedger> ledger,
                     Stream rng, std::optional<Eigen::MatrixXd> true_means = std::nullopt);

    /// Edge (i,j) is a Bernoulli(means(i,j)) draw.
    static MatchingInstance bernoulli(const Eigen::MatrixXd& means, std::size_t k,
                                      std::shared_ptr<SampleLedger> ledger, Stream rng);

    std::size_t m() const { return m_; }
    std::size_t k() const { return k_; }
    std::size_t replicas() const { return m_ * k_; }
    const std::shared_ptr<SampleLedger>& ledger() const { return ledger_; }

    /// One metered draw of edge (i,j), recorded on source "surrogate-j".
    double sample(std::size_t i, std::size_t j);

    /// Coin of bias v_ij whose flips draw edge (i,j).
    CoinPtr edge_coin(std::size_t i, std::size_t j);

private:
    friend class verify::Oracle;

    void check_edge(std::size_t i, std::size_t j) const;

    std::size_t m_;
    std::size_t k_;
    EdgeSampler sampler_;
    std::shared_ptr<SampleLedger> ledger_;
    Stream rng_;
    std::vector<SourceId> source_ids_;
    std::uint64_t coins_made_ = 0;
    std::optional<Eigen::MatrixXd> means_;
};

std::string surrogate_source_name(std::size_t j);

struct GammaOptions {
    /// Skip the load precondition k >= 32 ln(8/eta) / (delta^2 m (ln m)^2).
    bool desk_override = false;
    /// Samples per edge; defaults to gamma_sample_size(m, k, delta, eta).
    std::optional<std::uint64_t> samples_per_edge;
};

struct GammaEstimate {
    double gamma = 0.0;
    double opt_hat = 0.0;  // OPT of the empirical means
    std::uint64_t samples_per_edge = 0;
    std::uint64_t draws = 0;
};

/// gamma = (4/k) OPT(v-hat) on `profile`, which must be built on a replica
/// profile independent of the one being matched.
GammaEstimate estimate_gamma(MatchingInstance& profile, double delta, double eta, const GammaOptions& opts = {});

struct RegularizedParams {
    double delta = 0.1;
    double eta = 0.1;
    double gamma = 0.0;
    double eps = 0.0;
};

struct OnlineMatchState {
    std::size_t m = 0;
    std::size_t k = 0;
    std::vector<std::size_t> loads;
    /// assignment[i] is the surrogate of replica i, for replicas matched so far.
    std::vector<std::size_t> assignment;

    OnlineMatchState(std::size_t m_, std::size_t k_) : m(m_), k(k_), loads(m_, 0) {}
    /// Surrogates with spare capacity, ascending.
    std::vector<std::size_t> available() const;
};

/// alpha_j = exp(eta k_j) / sum_{J} exp(eta k_j') on the available set J, 0 elsewhere.
/// Throws InvariantViolation when J is empty.
std::vector<double> step_duals(const OnlineMatchState& state, double eta);

struct MatchOptions {
    RaceOptions race{};
    /// Race variant; the fast race is used above lambda = 4 unless disabled.
    bool allow_fast_race = true;
};

struct MatchStep {
    std::size_t surrogate = 0;
    double lambda = 0.0;  // race temperature (h + 1) / delta
    std::uint64_t base_draws = 0;
};

/// Matches replica i to j in `available` with P[j] proportional to
/// exp((v_ij - gamma alpha_j) / delta).
///
/// Each surrogate's utility (v_ij - gamma alpha_j + h) / (h + 1), h = gamma,
/// is the mixture of the edge coin and a constant coin of bias
/// (h - gamma alpha_j) / h with weight 1 / (h + 1); the race runs at
/// lambda = (h + 1) / delta.
MatchStep match_replica(MatchingInstance& instance, std::size_t i, const std::vector<double>& alpha, double gamma,
                        double delta, const std::vector<std::size_t>& available, Stream& aux,
                        const MatchOptions& opts = {});

struct StepLog {
    std::vector<double> alpha;
    std::vector<std::size_t> available;
    std::size_t surrogate = 0;
    std::uint64_t base_draws = 0;
};

struct OnlineMatchResult {
    std::vector<std::size_t> assignment;  // surrogate per replica
    std::vector<std::size_t> loads;
    std::vector<StepLog> steps;
    std::uint64_t total_edge_samples = 0;
};

/// Matches replicas 0..km-1 in order, each against the duals of the loads so
/// far, until every surrogate holds exactly k replicas.
OnlineMatchResult online_regularized_match(MatchingInstance& instance, const RegularizedParams& params, Stream& aux,
                                           const MatchOptions& opts = {});

/// Probabilities match_replica would use at a logged step, from true means.
std::vector<double> step_distribution(const Eigen::MatrixXd& means, std::size_t i, const StepLog& step, double gamma,
                                      double delta);

/// sum_i [sum_j P_ij v_ij - delta sum_j P_ij ln P_ij] over the logged row distributions.
double regularized_welfare(const Eigen::MatrixXd& means, const OnlineMatchResult& run, double gamma, double delta);

// Bayesian setting for the reduction. Types live in a star-convex space:
// AgentType{id, scale} values outcomes at scale * value(id, o).

struct FinitePrior {
    std::vector<AgentType> types;
    std::vector<double> probs;

    AgentType sample(Stream& rng) const;
    std::size_t index_of(const AgentType& t) const;
};

struct BayesianSetting {
    using Valuation = std::function<double(std::size_t type_id, std::size_t outcome)>;
    /// Possibly randomised allocation oracle A on a full type profile.
    using Algorithm = std::function<std::size_t(const std::vector<AgentType>& profile, Stream& rng)>;

    std::vector<FinitePrior> priors;  // one per agent
    Valuation valuation;
    Algorithm algorithm;

    std::size_t agents() const { return priors.size(); }
    /// Throws ContractViolation outside [0,1].
    double value(const AgentType& t, std::size_t outcome) const;
    /// A with `agent` reporting s and every other agent drawn from its prior.
    std::size_t induced(std::size_t agent, const AgentType& s, Stream& rng) const;
};

/// A single agent choosing among the urns of `env`; A is `rule` with
/// outcomes realised from the chosen urn.
BayesianSetting urn_setting(std::shared_ptr<const UrnEnvironment> env, FinitePrior prior,
                            std::function<std::size_t(const AgentType&, Stream&)> rule);

struct SelectOptions {
    std::size_t m = 2;
    std::size_t k = 1;
    double delta = 0.1;
    double eta = 0.1;
    /// Fixed price scale; estimated from a fresh replica profile when empty.
    std::optional<double> gamma;
    GammaOptions gamma_options{};
    MatchOptions match{};
};

struct SurrogateChoice {
    std::size_t surrogate = 0;  // j*
    AgentType type;             // s_{j*}
    std::size_t outcome = 0;    // fresh draw of A at s_{j*}, others from the prior
    std::size_t real_index = 0; // i*
    double gamma = 0.0;
    std::uint64_t edge_samples = 0;
    std::vector<AgentType> replicas;      // replicas[real_index] is the report
    std::vector<AgentType> surrogates;
    std::vector<std::size_t> assignment;  // surrogate of each replica
    std::optional<double> opt_hat;        // OPT of the gamma profile's empirical means, when estimated
};

/// Replica-surrogate selection for `agent` with true type t: t is placed at a
/// uniform replica index among km - 1 prior draws, matched online against m
/// prior-drawn surrogates, and the surrogate of the real replica is returned.
SurrogateChoice surrogate_select(const BayesianSetting& setting, std::size_t agent, const AgentType& t,
                                 const SelectOptions& opts, Session& s);

struct ReductionOptions {
    double eps = 0.5;
    double c = 1.0;
    std::size_t m = 2;
    /// Overrides of the derived parameters. Overriding k, delta or eta requires desk_override.
    std::optional<std::uint64_t> k;
    std::optional<double> delta;
    std::optional<double> eta;
    std::optional<double> gamma;
    std::optional<std::uint64_t> samples_per_edge;
    bool desk_override = false;
    MatchOptions match{};
};

struct ReducedOutcome {
    std::size_t outcome = 0;
    std::vector<AgentType> surrogates;
    /// Per-agent matching records; their `outcome` is the reduced outcome.
    std::vector<SurrogateChoice> selections;
};

struct ReducedRun {
    std::size_t outcome = 0;
    std::vector<AgentType> surrogates;
    std::vector<SurrogateChoice> selections;
    std::vector<double> payments;
    double lambda_draw = 0.0;
};

/// The BIC mechanism built from A: each agent's report is replaced by its
/// selected surrogate and A runs on the surrogate profile. Payments use one
/// Lambda ~ U[0,1] and n + 1 calls: p_k = v(t_k, o^0) - v(t_k, o^k) with
/// o^0 at the reports and o^k at (Lambda t_k, t_-k).
class BicReduction {
public:
    BicReduction(BayesianSetting setting, ReductionOptions opts);

    const ReductionParams& params() const { return params_; }
    const SelectOptions& select_options() const { return select_; }
    const BayesianSetting& setting() const { return setting_; }

    ReducedOutcome allocate(const std::vector<AgentType>& reports, Session& s) const;
    ReducedRun run(const std::vector<AgentType>& reports, Session& s) const;

private:
    BayesianSetting setting_;
    ReductionParams params_;
    SelectOptions select_;
};

BicReduction reduce_to_bic(BayesianSetting setting, ReductionOptions opts);

} // namespace efs
