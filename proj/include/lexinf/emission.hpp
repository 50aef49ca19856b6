#ifndef LEXINF_EMISSION_HPP
#define LEXINF_EMISSION_HPP

#include "lexinf/panel.hpp"

#include <Eigen/Dense>
#include <limits>

namespace lexinf::emission {

inline constexpr double kDefaultSmoothing = 0.5;
inline constexpr double kProbabilityClamp = 1e-12;

/// Background log-odds: nu per word, tau per (region, week).
struct BackgroundParams {
    Eigen::VectorXd nu;
    Eigen::MatrixXd tau;
};

/// Gaussian pseudo-observation induced by expanding the binomial emission
/// around zeta. Missing sites (no exposure) carry infinite variance.
struct TaylorSite {
    double zeta = 0.0;
    double m = 0.0;
    double sigma2 = std::numeric_limits<double>::infinity();

    bool missing() const noexcept { return !(sigma2 < std::numeric_limits<double>::infinity()); }
};

/// e^x / (1 + e^x), evaluated without overflow.
double logistic(double x) noexcept;

/// log(p / (1 - p)).
double logit(double p) noexcept;

/// log sigma(x) and log(1 - sigma(x)), stable for large |x|.
double log_logistic(double x) noexcept;
double log1m_logistic(double x) noexcept;

/// log C(s, c) + c log(theta) + (s - c) log(1 - theta); theta is clamped to
/// [eps, 1 - eps]. Throws std::domain_error if c < 0 or c > s.
double binomial_loglik(long c, long s, double theta, double eps = kProbabilityClamp);

/// Same likelihood parameterized by the logit x = logit(theta); exact in the tails.
double binomial_loglik_logit(long c, long s, double x);

TaylorSite taylor_params(long c, long s, double zeta, double tau, double nu);

/// logit((c + alpha) / (s + 2 alpha)).
double init_zeta(long c, long s, double alpha = kDefaultSmoothing);

/// New expansion point: smoothed regional + global activation plus background.
double update_zeta(double eta_region, double eta_global, double tau, double nu) noexcept;

/// Maximum-likelihood background with all activations at zero. nu is the
/// smoothed pooled log-odds; tau(r, t) balances expected and observed counts.
BackgroundParams estimate_background(const CountsPanel& panel, double alpha = kDefaultSmoothing);

} // namespace lexinf::emission

#endif // LEXINF_EMISSION_HPP
