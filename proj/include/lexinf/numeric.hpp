#ifndef LEXINF_NUMERIC_HPP
#define LEXINF_NUMERIC_HPP

#include <span>

namespace lexinf {

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Upper tail of the standard normal, 1 - Phi(z).
double normal_sf(double z);

/// Standard normal CDF.
double normal_cdf(double z);

/// log(sum(exp(x))) with the max trick; -inf for empty or all -inf input.
double log_sum_exp(std::span<const double> x);

/// Great-circle distance in km between two (lat, lon) points in degrees.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

} // namespace lexinf

#endif // LEXINF_NUMERIC_HPP
