#pragma once

#include <cstddef>
#include <cstdint>

namespace efs {

struct ReductionParams {
    std::size_t m = 0;
    double eps = 0.0;
    double c = 1.0;
    double delta = 0.0;  // eps / (3 ln m)
    double eta = 0.0;    // eps / (3 c)
    std::uint64_t k = 0; // ceil(m ln m / eta^2)
};

/// Regulariser, learning rate and load for market size m and target loss eps.
/// m = 1 has no entropy to trade off; delta is reported as 0 and k as 1.
ReductionParams reduction_params(std::size_t m, double eps, double c = 1.0);

/// Edge samples per edge for the gamma estimate: ceil(2 ln(4 m^2 k / eta) / (delta^2 (ln m)^2)).
/// (ln m)^2 is replaced by 1 when m = 1.
std::uint64_t gamma_sample_size(std::size_t m, std::uint64_t k, double delta, double eta);

/// Smallest load the gamma bound covers: 32 ln(8 / eta) / (delta^2 m (ln m)^2), same m = 1 rule.
double gamma_min_load(std::size_t m, double delta, double eta);

/// ceil(1 / (2 eps^(Delta + 1))), for Delta >= 2 and eps in (0,1).
std::uint64_t market_size_for_doubling_dim(double dimension, double eps);

} // namespace efs
