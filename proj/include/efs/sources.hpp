#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "efs/rng.hpp"

namespace efs {

namespace verify {
class Oracle;
}

enum class CoinKind {
    leaf,
    constant,
    continuous_to_bernoulli,
    scale,
    complement,
    double_bias,
    pgf,
    exponentiate,
    average,
    mix,
    add,
};

const char* to_string(CoinKind kind);

/// Distribution of a non-negative integer K, used by pgf nodes.
class IntegerDistribution {
public:
    virtual ~IntegerDistribution() = default;
    virtual std::uint64_t sample(Stream& rng) const = 0;
    virtual double mean() const = 0;
    /// E[p^K].
    virtual double generating_function(double p) const = 0;
    virtual std::string describe() const = 0;
};

using DistributionPtr = std::shared_ptr<const IntegerDistribution>;

class PoissonDistribution final : public IntegerDistribution {
public:
    explicit PoissonDistribution(double lambda);
    std::uint64_t sample(Stream& rng) const override;
    double mean() const override { return lambda_; }
    double generating_function(double p) const override;
    std::string describe() const override;
    double lambda() const { return lambda_; }

private:
    double lambda_;
};

class ConstantDistribution final : public IntegerDistribution {
public:
    explicit ConstantDistribution(std::uint64_t k) : k_(k) {}
    std::uint64_t sample(Stream&) const override { return k_; }
    double mean() const override { return static_cast<double>(k_); }
    double generating_function(double p) const override;
    std::string describe() const override;

private:
    std::uint64_t k_;
};

/// P[K = k] = (1-q) q^k for k >= 0.
class GeometricDistribution final : public IntegerDistribution {
public:
    explicit GeometricDistribution(double q);
    std::uint64_t sample(Stream& rng) const override;
    double mean() const override { return q_ / (1.0 - q_); }
    double generating_function(double p) const override { return (1.0 - q_) / (1.0 - q_ * p); }
    std::string describe() const override;

private:
    double q_;
};

/// A source of i.i.d. reals in [0,1]. Every draw is metered on the ledger.
class ValueSource {
public:
    ValueSource(std::string name, std::shared_ptr<SampleLedger> ledger, Stream rng);
    virtual ~ValueSource() = default;

    /// Throws ContractViolation when the underlying sampler leaves [0,1].
    double draw();

    const std::string& name() const { return name_; }
    SourceId id() const { return id_; }
    const std::shared_ptr<SampleLedger>& ledger() const { return ledger_; }

protected:
    virtual double sample(Stream& rng) = 0;
    void seal_mean(double mean) { true_mean_ = mean; }

private:
    friend class verify::Oracle;

    std::string name_;
    std::shared_ptr<SampleLedger> ledger_;
    SourceId id_;
    Stream rng_;
    std::optional<double> true_mean_;
};

using ValueSourcePtr = std::shared_ptr<ValueSource>;

class DiscreteValueSource final : public ValueSource {
public:
    DiscreteValueSource(std::string name, std::vector<double> values, std::vector<double> probs,
                        std::shared_ptr<SampleLedger> ledger, Stream rng);

protected:
    double sample(Stream& rng) override;

private:
    std::vector<double> values_;
    std::vector<double> cumulative_;
};

/// Wraps an arbitrary sampler. The true mean is optional and only visible to the oracle.
class FunctionValueSource final : public ValueSource {
public:
    using Sampler = std::function<double(Stream&)>;

    FunctionValueSource(std::string name, Sampler sampler, std::optional<double> true_mean,
                        std::shared_ptr<SampleLedger> ledger, Stream rng);

protected:
    double sample(Stream& rng) override { return sampler_(rng); }

private:
    Sampler sampler_;
};

class Coin;
using CoinPtr = std::shared_ptr<Coin>;

/// A {0,1} source. Nodes record their construction parameters so the
/// verification oracle can evaluate the closed-form bias of a tree.
class Coin {
public:
    virtual ~Coin() = default;
    virtual bool flip() = 0;

    CoinKind kind() const { return kind_; }
    double param() const { return param_; }
    double slack() const { return slack_; }
    const std::vector<CoinPtr>& children() const { return children_; }
    const ValueSourcePtr& value_source() const { return value_source_; }
    const DistributionPtr& distribution() const { return distribution_; }

protected:
    Coin(CoinKind kind, double param, double slack, std::vector<CoinPtr> children)
    : kind_(kind), param_(param), slack_(slack), children_(std::move(children))
    {}

    ValueSourcePtr value_source_;
    DistributionPtr distribution_;

private:
    CoinKind kind_;
    double param_;
    double slack_;
    std::vector<CoinPtr> children_;
};

/// Base coin: i.i.d. Bernoulli(p) with the bias sealed away from samplers.
class BernoulliSource final : public Coin {
public:
    BernoulliSource(std::string name, double bias, std::shared_ptr<SampleLedger> ledger, Stream rng);

    bool flip() override
    {
        ledger_->record(id_);
        return rng_.uniform() < bias_;
    }

    const std::string& name() const { return name_; }
    SourceId id() const { return id_; }

private:
    friend class verify::Oracle;

    std::string name_;
    double bias_;
    std::shared_ptr<SampleLedger> ledger_;
    SourceId id_;
    Stream rng_;
};

std::shared_ptr<BernoulliSource> make_bernoulli_source(std::string name, double bias,
                                                       std::shared_ptr<SampleLedger> ledger, Stream rng);

} // namespace efs
