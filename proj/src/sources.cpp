#include "efs/sources.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "efs/errors.hpp"

namespace efs {

const char* to_string(CoinKind kind)
{
    switch (kind) {
    case CoinKind::leaf: return "leaf";
    case CoinKind::constant: return "const";
    case CoinKind::continuous_to_bernoulli: return "c2b";
    case CoinKind::scale: return "scale";
    case CoinKind::complement: return "comp";
    case CoinKind::double_bias: return "double";
    case CoinKind::pgf: return "pgf";
    case CoinKind::exponentiate: return "exp";
    case CoinKind::average: return "avg";
    case CoinKind::mix: return "mix";
    case CoinKind::add: return "add";
    }
    return "?";
}

PoissonDistribution::PoissonDistribution(double lambda) : lambda_(lambda)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InvalidParameter("poisson rate must be finite and non-negative");
}

std::uint64_t PoissonDistribution::sample(Stream& rng) const
{
    if (lambda_ == 0.0)
        return 0;
    if (lambda_ <= 30.0) {
        // Sequential inversion; e^-30 is still far from underflow.
        double u = rng.uniform();
        double p = std::exp(-lambda_);
        std::uint64_t k = 0;
        while (u >= p) {
            u -= p;
            ++k;
            p *= lambda_ / static_cast<double>(k);
            if (p == 0.0)
                break;
        }
        return k;
    }
    std::poisson_distribution<std::uint64_t> dist(lambda_);
    return dist(rng);
}

double PoissonDistribution::generating_function(double p) const { return std::exp(lambda_ * (p - 1.0)); }

std::string PoissonDistribution::describe() const
{
    std::ostringstream os;
    os << "poisson:" << lambda_;
    return os.str();
}

double ConstantDistribution::generating_function(double p) const
{
    return k_ == 0 ? 1.0 : std::pow(p, static_cast<double>(k_));
}

std::string ConstantDistribution::describe() const { return "const:" + std::to_string(k_); }

GeometricDistribution::GeometricDistribution(double q) : q_(q)
{
    if (!(q >= 0.0 && q < 1.0))
        throw InvalidParameter("geometric parameter must lie in [0,1)");
}

std::uint64_t GeometricDistribution::sample(Stream& rng) const
{
    std::uint64_t k = 0;
    while (rng.uniform() < q_)
        ++k;
    return k;
}

std::string GeometricDistribution::describe() const
{
    std::ostringstream os;
    os << "geometric:" << q_;
    return os.str();
}

ValueSource::ValueSource(std::string name, std::shared_ptr<SampleLedger> ledger, Stream rng)
: name_(std::move(name)), ledger_(std::move(ledger)), rng_(rng)
{
    if (!ledger_)
        throw InvalidParameter("value source needs a ledger");
    id_ = ledger_->register_source(name_);
}

double ValueSource::draw()
{
    ledger_->record(id_);
    const double x = sample(rng_);
    if (!(x >= 0.0 && x <= 1.0))
        throw ContractViolation("value source '" + name_ + "' produced " + std::to_string(x) + " outside [0,1]");
    return x;
}

DiscreteValueSource::DiscreteValueSource(std::string name, std::vector<double> values, std::vector<double> probs,
                                         std::shared_ptr<SampleLedger> ledger, Stream rng)
: ValueSource(std::move(name), std::move(ledger), rng), values_(std::move(values))
{
    if (values_.empty() || values_.size() != probs.size())
        throw InvalidParameter("discrete source needs matching non-empty values and probs");
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (!(total > 0.0) || std::any_of(probs.begin(), probs.end(), [](double p) { return p < 0.0; }))
        throw InvalidParameter("discrete source probabilities must be non-negative with positive sum");
    double mean = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i] / total;
        cumulative_.push_back(acc);
        mean += values_[i] * probs[i] / total;
    }
    cumulative_.back() = 1.0;
    seal_mean(mean);
}

double DiscreteValueSource::sample(Stream& rng)
{
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return values_[static_cast<std::size_t>(it - cumulative_.begin())];
}

FunctionValueSource::FunctionValueSource(std::string name, Sampler sampler, std::optional<double> true_mean,
                                         std::shared_ptr<SampleLedger> ledger, Stream rng)
: ValueSource(std::move(name), std::move(ledger), rng), sampler_(std::move(sampler))
{
    if (true_mean)
        seal_mean(*true_mean);
}

BernoulliSource::BernoulliSource(std::string name, double bias, std::shared_ptr<SampleLedger> ledger, Stream rng)
: Coin(CoinKind::leaf, 0.0, 0.0, {}), name_(std::move(name)), bias_(bias), ledger_(std::move(ledger)), rng_(rng)
{
    if (!(bias >= 0.0 && bias <= 1.0))
        throw InvalidParameter("coin bias must lie in [0,1]");
    if (!ledger_)
        throw InvalidParameter("coin source needs a ledger");
    id_ = ledger_->register_source(name_);
}

std::shared_ptr<BernoulliSource> make_bernoulli_source(std::string name, double bias,
                                                       std::shared_ptr<SampleLedger> ledger, Stream rng)
{
    return std::make_shared<BernoulliSource>(std::move(name), bias, std::move(ledger), rng);
}

} // namespace efs
