#include "efs/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/successive_shortest_path_nonnegative_weights.hpp>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "efs/errors.hpp"

namespace efs::verify {

double Oracle::closed_form_bias(const Coin& coin)
{
    const auto& ch = coin.children();
    switch (coin.kind()) {
    case CoinKind::leaf: {
        auto* b = dynamic_cast<const BernoulliSource*>(&coin);
        if (!b)
            throw InvalidParameter("leaf coin without a known bias");
        return b->bias_;
    }
    case CoinKind::constant: return coin.param();
    case CoinKind::continuous_to_bernoulli: {
        auto mean = coin.value_source()->true_mean_;
        if (!mean)
            throw InvalidParameter("value source '" + coin.value_source()->name() + "' has no known mean");
        return *mean;
    }
    case CoinKind::scale: return coin.param() * closed_form_bias(*ch[0]);
    case CoinKind::complement: return 1.0 - closed_form_bias(*ch[0]);
    case CoinKind::double_bias: return 2.0 * closed_form_bias(*ch[0]);
    case CoinKind::pgf:
    case CoinKind::exponentiate: return coin.distribution()->generating_function(closed_form_bias(*ch[0]));
    case CoinKind::average: return 0.5 * (closed_form_bias(*ch[0]) + closed_form_bias(*ch[1]));
    case CoinKind::mix:
        return coin.param() * closed_form_bias(*ch[0]) + (1.0 - coin.param()) * closed_form_bias(*ch[1]);
    case CoinKind::add: return closed_form_bias(*ch[0]) + closed_form_bias(*ch[1]);
    }
    throw InvalidParameter("unknown coin kind");
}

std::vector<std::string> Oracle::precondition_violations(const Coin& coin)
{
    std::vector<std::string> out;
    for (const auto& c : coin.children()) {
        auto sub = precondition_violations(*c);
        out.insert(out.end(), sub.begin(), sub.end());
    }
    constexpr double tol = 1e-12;
    std::ostringstream os;
    if (coin.kind() == CoinKind::double_bias) {
        const double p = closed_form_bias(*coin.children()[0]);
        if (p > 0.5 - coin.slack() + tol)
            os << "double: child bias " << p << " exceeds 1/2 - " << coin.slack();
    } else if (coin.kind() == CoinKind::add) {
        const double p = closed_form_bias(*coin.children()[0]) + closed_form_bias(*coin.children()[1]);
        if (p > 1.0 - coin.slack() + tol)
            os << "add: p1 + p2 = " << p << " exceeds 1 - " << coin.slack();
    }
    if (!os.str().empty())
        out.push_back(os.str());
    return out;
}

std::vector<double> exact_linear_weights(const std::vector<double>& v)
{
    if (v.empty())
        throw InvalidParameter("linear weights need a non-empty input");
    double total = 0.0;
    for (double x : v) {
        if (!(x >= 0.0))
            throw InvalidParameter("linear weights must be non-negative");
        total += x;
    }
    if (!(total > 0.0))
        throw InvalidParameter("linear weights need a positive total");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = v[i] / total;
    return out;
}

std::vector<double> exact_exp_weights(const std::vector<double>& v, double lambda)
{
    if (v.empty())
        throw InvalidParameter("exponential weights need a non-empty input");
    if (!std::isfinite(lambda))
        throw InvalidParameter("exponential weights need a finite lambda");
    // Shift by the max so the largest exponent is exactly 0.
    const double top = lambda >= 0.0 ? *std::max_element(v.begin(), v.end()) : *std::min_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(lambda * (v[i] - top));
        total += out[i];
    }
    for (double& x : out)
        x /= total;
    return out;
}

double chi_square_sf(double stat, double dof)
{
    if (dof <= 0.0)
        return 1.0;
    if (stat <= 0.0)
        return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), stat));
}

double normal_sf(double z)
{
    return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), z));
}

DistributionReport distribution_report(const std::vector<std::uint64_t>& counts, const std::vector<double>& target,
                                       double significance)
{
    if (counts.size() != target.size() || target.empty())
        throw InvalidParameter("counts and target must have the same non-zero length");
    const double total_target = std::accumulate(target.begin(), target.end(), 0.0);
    if (std::abs(total_target - 1.0) > 1e-9)
        throw InvalidParameter("target probabilities must sum to 1");
    DistributionReport r;
    r.target = target;
    r.significance = significance;
    r.trials = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (r.trials == 0)
        throw InvalidParameter("no trials to report on");
    r.empirical.resize(counts.size());
    bool impossible = false;
    std::size_t cells = 0;
    const double n = static_cast<double>(r.trials);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        r.empirical[i] = static_cast<double>(counts[i]) / n;
        r.tv += 0.5 * std::abs(r.empirical[i] - target[i]);
        if (target[i] <= 0.0) {
            impossible = impossible || counts[i] > 0;
            continue;
        }
        ++cells;
        const double expected = n * target[i];
        const double d = static_cast<double>(counts[i]) - expected;
        r.chi2 += d * d / expected;
    }
    r.dof = cells > 0 ? cells - 1 : 0;
    r.p_value = impossible ? 0.0 : chi_square_sf(r.chi2, static_cast<double>(r.dof));
    r.pass = !impossible && r.p_value > significance;
    return r;
}

DistributionReport chi_square_check(const std::function<std::size_t()>& sampler, const std::vector<double>& target,
                                    std::uint64_t n, double significance)
{
    if (n < 50 * target.size())
        throw InvalidParameter("chi-square check needs at least 50 draws per support point");
    std::vector<std::uint64_t> counts(target.size(), 0);
    for (std::uint64_t t = 0; t < n; ++t) {
        const std::size_t i = sampler();
        if (i >= counts.size())
            throw ContractViolation("sampler returned an index outside the target support");
        ++counts[i];
    }
    return distribution_report(counts, target, significance);
}

Interval binomial_interval(std::uint64_t successes, std::uint64_t trials, double confidence)
{
    using boost::math::binomial_distribution;
    if (trials == 0 || successes > trials)
        throw InvalidParameter("binomial interval needs 0 <= successes <= trials, trials > 0");
    const double alpha = (1.0 - confidence) / 2.0;
    const auto n = static_cast<double>(trials);
    const auto k = static_cast<double>(successes);
    Interval out;
    out.lo = binomial_distribution<double>::find_lower_bound_on_p(n, k, alpha);
    out.hi = binomial_distribution<double>::find_upper_bound_on_p(n, k, alpha);
    return out;
}

double RunningStats::standard_error() const
{
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

namespace {

// Absolute slack for exact (zero-variance) comparisons of computed quantities.
constexpr double rounding_slack = 1e-12;

} // namespace

AuditReport at_least(std::string name, double estimate, double se, double threshold)
{
    AuditReport r{std::move(name), estimate, se, threshold, "at_least", 1.0, true};
    r.pass = estimate >= threshold - 3.0 * se - rounding_slack;
    r.p_value = se > 0.0 ? normal_sf((threshold - estimate) / se) : (estimate >= threshold ? 1.0 : 0.0);
    return r;
}

AuditReport at_most(std::string name, double estimate, double se, double threshold)
{
    AuditReport r{std::move(name), estimate, se, threshold, "at_most", 1.0, true};
    r.pass = estimate <= threshold + 3.0 * se + rounding_slack;
    r.p_value = se > 0.0 ? normal_sf((estimate - threshold) / se) : (estimate <= threshold ? 1.0 : 0.0);
    return r;
}

AuditReport within(std::string name, double estimate, double se, double threshold)
{
    AuditReport r{std::move(name), estimate, se, threshold, "within", 1.0, true};
    r.pass = std::abs(estimate - threshold) <= 3.0 * se + rounding_slack;
    r.p_value = se > 0.0 ? 2.0 * normal_sf(std::abs(estimate - threshold) / se) : (estimate == threshold ? 1.0 : 0.0);
    return r;
}

KMatching max_weight_k_matching(const Eigen::MatrixXd& values, std::size_t k)
{
    using namespace boost;
    using Traits = adjacency_list_traits<vecS, vecS, directedS>;
    using Graph = adjacency_list<
        vecS, vecS, directedS, no_property,
        property<edge_capacity_t, long,
                 property<edge_residual_capacity_t, long,
                          property<edge_reverse_t, Traits::edge_descriptor, property<edge_weight_t, double>>>>>;

    const auto rows = static_cast<std::size_t>(values.rows());
    const auto cols = static_cast<std::size_t>(values.cols());
    if (cols == 0 || k == 0 || rows != k * cols)
        throw InvalidParameter("k-to-1 matching needs rows == k * cols with k, cols > 0");
    if (rows * cols > 10'000)
        throw InvalidParameter("k-to-1 matching is limited to rows * cols <= 10^4");
    if (!values.allFinite())
        throw InvalidParameter("k-to-1 matching needs finite values");

    // Costs top - v are non-negative; every replica is matched, so the
    // minimum cost is rows * top - maximum value.
    const double top = values.maxCoeff();
    const std::size_t source = rows + cols;
    const std::size_t sink = source + 1;
    Graph g(sink + 1);
    auto capacity = get(edge_capacity, g);
    auto reverse = get(edge_reverse, g);
    auto weight = get(edge_weight, g);
    std::vector<std::vector<Traits::edge_descriptor>> assign_edges(rows);

    auto link = [&](std::size_t u, std::size_t v, long cap, double cost) {
        auto e = add_edge(u, v, g).first;
        auto r = add_edge(v, u, g).first;
        capacity[e] = cap;
        capacity[r] = 0;
        weight[e] = cost;
        weight[r] = -cost;
        reverse[e] = r;
        reverse[r] = e;
        return e;
    };
    for (std::size_t i = 0; i < rows; ++i) {
        link(source, i, 1, 0.0);
        for (std::size_t j = 0; j < cols; ++j)
            assign_edges[i].push_back(link(i, rows + j, 1, top - values(static_cast<Eigen::Index>(i),
                                                                         static_cast<Eigen::Index>(j))));
    }
    for (std::size_t j = 0; j < cols; ++j)
        link(rows + j, sink, static_cast<long>(k), 0.0);

    successive_shortest_path_nonnegative_weights(g, source, sink);

    auto residual = get(edge_residual_capacity, g);
    KMatching out;
    out.assignment.assign(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (residual[assign_edges[i][j]] == 0) {
                out.assignment[i] = j;
                out.value += values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
        if (out.assignment[i] == cols)
            throw InvariantViolation("min-cost flow left a replica unmatched");
    }
    return out;
}

double sinkhorn_matching_opt(const Eigen::MatrixXd& values, double delta, std::size_t k)
{
    if (!(delta > 0.0) || k == 0 || values.cols() == 0 ||
        static_cast<std::size_t>(values.rows()) != k * static_cast<std::size_t>(values.cols()))
        throw InvalidParameter("Sinkhorn oracle needs delta > 0 and a km x m matrix");
    const double kd = static_cast<double>(k);
    // Work in the log domain so small delta does not overflow.
    Eigen::MatrixXd logx = values / delta;
    Eigen::MatrixXd x(values.rows(), values.cols());
    for (int it = 0; it < 1'000'000; ++it) {
        for (Eigen::Index i = 0; i < logx.rows(); ++i) {
            const double top = logx.row(i).maxCoeff();
            logx.row(i).array() -= top + std::log((logx.row(i).array() - top).exp().sum());
        }
        double worst = 0.0;
        for (Eigen::Index j = 0; j < logx.cols(); ++j) {
            const double top = logx.col(j).maxCoeff();
            const double lse = top + std::log((logx.col(j).array() - top).exp().sum());
            worst = std::max(worst, std::abs(std::exp(lse) - kd));
            logx.col(j).array() += std::log(kd) - lse;
        }
        if (worst < 1e-13 * kd)
            break;
    }
    x = logx.array().exp();
    double f = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            f += x(i, j) * (values(i, j) - delta * logx(i, j));
    return f;
}

} // namespace efs::verify
