#include "lexinf/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lexinf {

double normal_sf(double z)
{
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double normal_cdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double log_sum_exp(std::span<const double> x)
{
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : x)
        hi = std::max(hi, v);
    if (!std::isfinite(hi))
        return hi;
    double acc = 0.0;
    for (double v : x)
        acc += std::exp(v - hi);
    return hi + std::log(acc);
}

double haversine_km(double lat1, double lon1, double lat2, double lon2)
{
    constexpr double deg = std::numbers::pi / 180.0;
    double dlat = (lat2 - lat1) * deg;
    double dlon = (lon2 - lon1) * deg;
    double a = std::sin(dlat / 2) * std::sin(dlat / 2)
        + std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
    a = std::clamp(a, 0.0, 1.0);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(a));
}

} // namespace lexinf
