#include "efs/params.hpp"

#include <cmath>

#include "efs/errors.hpp"

namespace efs {

namespace {

void check_eps(double eps)
{
    if (!(eps > 0.0 && eps < 1.0))
        throw InvalidParameter("eps must lie in (0,1)");
}

double log_m_squared(std::size_t m)
{
    if (m == 0)
        throw InvalidParameter("market size must be positive");
    const double l = std::log(static_cast<double>(m));
    return m == 1 ? 1.0 : l * l;
}

// ceil that ignores representation noise just above an integer.
std::uint64_t careful_ceil(double x)
{
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-12 * std::max(1.0, std::abs(x)))
        return static_cast<std::uint64_t>(r);
    return static_cast<std::uint64_t>(std::ceil(x));
}

} // namespace

ReductionParams reduction_params(std::size_t m, double eps, double c)
{
    check_eps(eps);
    if (m == 0)
        throw InvalidParameter("market size must be positive");
    if (!(c > 0.0))
        throw InvalidParameter("competitive-ratio constant must be positive");
    ReductionParams p;
    p.m = m;
    p.eps = eps;
    p.c = c;
    p.eta = eps / (3.0 * c);
    if (m == 1) {
        p.k = 1;
        return p;
    }
    const double lm = std::log(static_cast<double>(m));
    p.delta = eps / (3.0 * lm);
    p.k = careful_ceil(static_cast<double>(m) * lm / (p.eta * p.eta));
    return p;
}

std::uint64_t gamma_sample_size(std::size_t m, std::uint64_t k, double delta, double eta)
{
    if (!(delta > 0.0) || !(eta > 0.0 && eta < 1.0) || k == 0)
        throw InvalidParameter("gamma sample size needs delta > 0, eta in (0,1), k >= 1");
    const double md = static_cast<double>(m);
    const double n = 2.0 * std::log(4.0 * md * md * static_cast<double>(k) / eta) / (delta * delta * log_m_squared(m));
    return careful_ceil(n);
}

double gamma_min_load(std::size_t m, double delta, double eta)
{
    if (!(delta > 0.0) || !(eta > 0.0 && eta < 1.0))
        throw InvalidParameter("gamma load bound needs delta > 0 and eta in (0,1)");
    return 32.0 * std::log(8.0 / eta) / (delta * delta * static_cast<double>(m) * log_m_squared(m));
}

std::uint64_t market_size_for_doubling_dim(double dimension, double eps)
{
    check_eps(eps);
    if (!(dimension >= 2.0))
        throw InvalidParameter("doubling dimension must be at least 2");
    return careful_ceil(1.0 / (2.0 * std::pow(eps, dimension + 1.0)));
}

} // namespace efs
