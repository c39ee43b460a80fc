#include "efs/factory.hpp"

#include <algorithm>
#include <cmath>

#include "efs/errors.hpp"

namespace efs {

namespace {

void require_child(const CoinPtr& c)
{
    if (!c)
        throw InvalidParameter("factory node needs a child coin");
}

class ContinuousCoin final : public Coin {
public:
    ContinuousCoin(ValueSourcePtr src, Stream aux) : Coin(CoinKind::continuous_to_bernoulli, 0.0, 0.0, {}), aux_(aux)
    {
        value_source_ = std::move(src);
    }
    bool flip() override
    {
        const double z = value_source_->draw();
        return aux_.uniform() < z;
    }

private:
    Stream aux_;
};

class ConstantCoin final : public Coin {
public:
    ConstantCoin(double bias, Stream aux) : Coin(CoinKind::constant, bias, 0.0, {}), aux_(aux) {}
    bool flip() override { return aux_.uniform() < param(); }

private:
    Stream aux_;
};

class ScaleCoin final : public Coin {
public:
    ScaleCoin(CoinPtr c, double lambda, Stream aux) : Coin(CoinKind::scale, lambda, 0.0, {std::move(c)}), aux_(aux) {}
    bool flip() override
    {
        const bool child = children()[0]->flip();
        return aux_.uniform() < param() && child;
    }

private:
    Stream aux_;
};

class ComplementCoin final : public Coin {
public:
    explicit ComplementCoin(CoinPtr c) : Coin(CoinKind::complement, 0.0, 0.0, {std::move(c)}) {}
    bool flip() override { return !children()[0]->flip(); }
};

class DoublingCoin final : public Coin {
public:
    DoublingCoin(CoinPtr c, double delta, Stream aux, DoublingOptions opts)
    : Coin(CoinKind::double_bias, 2.0, delta, {std::move(c)}), aux_(aux), opts_(opts)
    {}

    bool flip() override
    {
        Coin& child = *children()[0];
        double C = 2.0;
        double eps = std::min(2.0 * slack(), 0.5);
        double horizon = std::ceil(opts_.walk_constant / eps);
        std::uint64_t steps = 0;
        std::int64_t i = 1;
        for (;;) {
            while (i > 0 && static_cast<double>(i) < horizon) {
                if (++steps > opts_.max_steps)
                    throw BudgetExceeded("doubling walk exceeded its step cap");
                // One Bernoulli(Cp / (1 + Cp)) draw.
                bool heads;
                for (;;) {
                    if (aux_.uniform() < C / (1.0 + C)) {
                        if (child.flip()) {
                            heads = true;
                            break;
                        }
                    } else {
                        heads = false;
                        break;
                    }
                }
                i += heads ? -1 : 1;
            }
            if (i == 0)
                return true;
            const double beta = (1.0 - eps) / (1.0 - eps / 2.0);
            if (aux_.uniform() >= std::pow(beta, static_cast<double>(i)))
                return false;
            C /= beta;
            eps /= 2.0;
            horizon *= 2.0;
        }
    }

private:
    Stream aux_;
    DoublingOptions opts_;
};

class PgfCoin final : public Coin {
public:
    PgfCoin(CoinKind kind, double param, CoinPtr c, DistributionPtr d, Stream aux, bool lazy)
    : Coin(kind, param, 0.0, {std::move(c)}), aux_(aux), lazy_(lazy)
    {
        distribution_ = std::move(d);
    }

    bool flip() override
    {
        const std::uint64_t k = distribution_->sample(aux_);
        Coin& child = *children()[0];
        bool all = true;
        for (std::uint64_t n = 0; n < k; ++n) {
            if (!child.flip()) {
                all = false;
                if (lazy_)
                    break;
            }
        }
        return all;
    }

private:
    Stream aux_;
    bool lazy_;
};

class AddCoin final : public Coin {
public:
    AddCoin(CoinPtr c1, CoinPtr c2, double delta, CoinPtr inner)
    : Coin(CoinKind::add, 0.0, delta, {std::move(c1), std::move(c2)}), inner_(std::move(inner))
    {}
    bool flip() override { return inner_->flip(); }

private:
    CoinPtr inner_;
};

class MixCoin final : public Coin {
public:
    MixCoin(CoinKind kind, CoinPtr c1, CoinPtr c2, double w, Stream aux)
    : Coin(kind, w, 0.0, {std::move(c1), std::move(c2)}), aux_(aux)
    {}
    bool flip() override { return aux_.uniform() < param() ? children()[0]->flip() : children()[1]->flip(); }

private:
    Stream aux_;
};

} // namespace

CoinPtr continuous_to_bernoulli(ValueSourcePtr src, Stream aux)
{
    if (!src)
        throw InvalidParameter("continuous_to_bernoulli needs a value source");
    return std::make_shared<ContinuousCoin>(std::move(src), aux);
}

CoinPtr constant_coin(double bias, Stream aux)
{
    if (!(bias >= 0.0 && bias <= 1.0))
        throw InvalidParameter("constant coin bias must lie in [0,1]");
    return std::make_shared<ConstantCoin>(bias, aux);
}

CoinPtr scale(CoinPtr c, double lambda, Stream aux)
{
    require_child(c);
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidParameter("scale factor must lie in [0,1]");
    return std::make_shared<ScaleCoin>(std::move(c), lambda, aux);
}

CoinPtr complement(CoinPtr c)
{
    require_child(c);
    return std::make_shared<ComplementCoin>(std::move(c));
}

CoinPtr double_bias(CoinPtr c, double delta, Stream aux, DoublingOptions opts)
{
    require_child(c);
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw InvalidParameter("doubling slack must be positive");
    if (!(opts.walk_constant > 0.0))
        throw InvalidParameter("doubling walk constant must be positive");
    return std::make_shared<DoublingCoin>(std::move(c), delta, aux, opts);
}

CoinPtr pgf(CoinPtr c, DistributionPtr d, Stream aux, bool lazy)
{
    require_child(c);
    if (!d)
        throw InvalidParameter("pgf needs an integer distribution");
    return std::make_shared<PgfCoin>(CoinKind::pgf, d->mean(), std::move(c), std::move(d), aux, lazy);
}

CoinPtr exponentiate(CoinPtr c, double lambda, Stream aux, bool lazy)
{
    require_child(c);
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InvalidParameter("exponentiation rate must be finite and non-negative");
    return std::make_shared<PgfCoin>(CoinKind::exponentiate, lambda, std::move(c),
                                     std::make_shared<PoissonDistribution>(lambda), aux, lazy);
}

CoinPtr average(CoinPtr c1, CoinPtr c2, Stream aux)
{
    require_child(c1);
    require_child(c2);
    return std::make_shared<MixCoin>(CoinKind::average, std::move(c1), std::move(c2), 0.5, aux);
}

CoinPtr mix(CoinPtr c1, CoinPtr c2, double w, Stream aux)
{
    require_child(c1);
    require_child(c2);
    if (!(w >= 0.0 && w <= 1.0))
        throw InvalidParameter("mixture weight must lie in [0,1]");
    return std::make_shared<MixCoin>(CoinKind::mix, std::move(c1), std::move(c2), w, aux);
}

CoinPtr add(CoinPtr c1, CoinPtr c2, double delta, Stream aux, DoublingOptions opts)
{
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw InvalidParameter("addition slack must be positive");
    auto inner = double_bias(average(c1, c2, aux.derive("average")), delta / 2.0, aux.derive("double"), opts);
    return std::make_shared<AddCoin>(std::move(c1), std::move(c2), delta, std::move(inner));
}

} // namespace efs
