#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "efs/sources.hpp"

namespace efs {
class UrnEnvironment;
class MatchingInstance;
struct AgentType;
} // namespace efs

namespace efs::verify {

/// The only reader of sealed true parameters.
class Oracle {
public:
    static double true_bias(const BernoulliSource& coin) { return coin.bias_; }
    static std::optional<double> true_mean(const ValueSource& src) { return src.true_mean_; }

    /// Bias of a coin tree from the node functions and the leaves' true parameters.
    /// Throws InvalidParameter if a leaf has no known parameter.
    static double closed_form_bias(const Coin& coin);

    /// Exact v_j(t) for every urn, from the sealed urn contents.
    static std::vector<double> urn_values(const UrnEnvironment& env, const AgentType& t);

    /// Sealed mean matrix of a verification-mode instance, if any.
    static const std::optional<Eigen::MatrixXd>& true_means(const MatchingInstance& instance);

    /// Nodes whose declared precondition fails on the true child biases, one message each.
    static std::vector<std::string> precondition_violations(const Coin& coin);
};

/// v_i / sum v. Throws InvalidParameter on an all-zero or negative input.
std::vector<double> exact_linear_weights(const std::vector<double>& v);

/// exp(lambda v_i) / sum exp(lambda v_j), computed after subtracting the max.
std::vector<double> exact_exp_weights(const std::vector<double>& v, double lambda);

struct DistributionReport {
    std::vector<double> target;
    std::vector<double> empirical;
    std::uint64_t trials = 0;
    double chi2 = 0.0;
    std::size_t dof = 0;
    double p_value = 1.0;
    double tv = 0.0;
    double significance = 1e-3;
    bool pass = true;
};

/// Pearson goodness of fit of observed counts against target probabilities.
/// Cells with zero target probability must be empty, otherwise the check fails.
DistributionReport distribution_report(const std::vector<std::uint64_t>& counts, const std::vector<double>& target,
                                       double significance = 1e-3);

/// Draws N outcomes from `sampler` (returning indices into target) and reports.
/// Requires N >= 50 * target.size().
DistributionReport chi_square_check(const std::function<std::size_t()>& sampler, const std::vector<double>& target,
                                    std::uint64_t n, double significance = 1e-3);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Two-sided Clopper-Pearson interval for a binomial proportion.
Interval binomial_interval(std::uint64_t successes, std::uint64_t trials, double confidence = 0.999);

/// Upper-tail probability of the chi-square distribution.
double chi_square_sf(double stat, double dof);

/// P[Z > z] for standard normal Z.
double normal_sf(double z);

struct KMatching {
    double value = 0.0;
    /// assignment[i] = surrogate of replica i.
    std::vector<std::size_t> assignment;
};

/// Exact maximum-weight assignment of values.rows() replicas to values.cols()
/// surrogates with every surrogate used exactly k times, by min-cost flow.
/// Requires rows == k * cols and rows * cols <= 10^4.
KMatching max_weight_k_matching(const Eigen::MatrixXd& values, std::size_t k);

/// Optimum of the entropy-regularised k-to-1 matching program by Sinkhorn
/// scaling of exp(v / delta) to row sums 1 and column sums k.
double sinkhorn_matching_opt(const Eigen::MatrixXd& values, double delta, std::size_t k);

struct AuditReport {
    std::string name;
    double estimate = 0.0;
    double standard_error = 0.0;
    double threshold = 0.0;
    /// "at_least": estimate >= threshold - 3 SE. "at_most": estimate <= threshold + 3 SE.
    /// "within": both. Comparisons carry an absolute slack of 1e-12.
    std::string direction = "at_least";
    double p_value = 1.0;
    bool pass = true;
};

AuditReport at_least(std::string name, double estimate, double se, double threshold);
AuditReport at_most(std::string name, double estimate, double se, double threshold);
/// Passes when |estimate - threshold| <= 3 SE.
AuditReport within(std::string name, double estimate, double se, double threshold);

/// Streaming mean and variance.
class RunningStats {
public:
    void add(double x)
    {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double standard_error() const;

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

} // namespace efs::verify
