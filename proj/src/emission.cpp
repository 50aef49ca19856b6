#include "lexinf/emission.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lexinf::emission {

double logistic(double x) noexcept
{
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) noexcept
{
    return std::log(p) - std::log1p(-p);
}

double log_logistic(double x) noexcept
{
    // log sigma(x) = -log(1 + e^-x)
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double log1m_logistic(double x) noexcept
{
    return log_logistic(-x);
}

namespace {

double log_choose(long s, long c)
{
    return std::lgamma(static_cast<double>(s) + 1.0) - std::lgamma(static_cast<double>(c) + 1.0)
        - std::lgamma(static_cast<double>(s - c) + 1.0);
}

} // namespace

double binomial_loglik(long c, long s, double theta, double eps)
{
    if (c < 0 || c > s)
        throw std::domain_error("binomial_loglik requires 0 <= c <= s");
    if (s == 0)
        return 0.0;
    theta = std::clamp(theta, eps, 1.0 - eps);
    double out = log_choose(s, c);
    if (c > 0)
        out += static_cast<double>(c) * std::log(theta);
    if (s - c > 0)
        out += static_cast<double>(s - c) * std::log1p(-theta);
    return out;
}

double binomial_loglik_logit(long c, long s, double x)
{
    if (c < 0 || c > s)
        throw std::domain_error("binomial_loglik requires 0 <= c <= s");
    if (s == 0)
        return 0.0;
    return log_choose(s, c) + static_cast<double>(c) * log_logistic(x)
        + static_cast<double>(s - c) * log1m_logistic(x);
}

TaylorSite taylor_params(long c, long s, double zeta, double tau, double nu)
{
    TaylorSite site;
    site.zeta = zeta;
    if (s <= 0)
        return site;
    double p = logistic(zeta);
    double sd = static_cast<double>(s);
    site.sigma2 = 1.0 / (sd * p * (1.0 - p));
    site.m = site.sigma2 * (static_cast<double>(c) - sd * p) + zeta - tau - nu;
    return site;
}

double init_zeta(long c, long s, double alpha)
{
    return logit((static_cast<double>(c) + alpha) / (static_cast<double>(s) + 2.0 * alpha));
}

double update_zeta(double eta_region, double eta_global, double tau, double nu) noexcept
{
    return eta_region + eta_global + tau + nu;
}

namespace {

// Solve sum_i sigma(nu_i + tau) = target for tau by safeguarded Newton.
double solve_region_week(const Eigen::VectorXd& nu, double target, double exposure)
{
    auto balance = [&](double tau, double& slope) {
        double f = 0.0;
        slope = 0.0;
        for (Eigen::Index i = 0; i < nu.size(); ++i) {
            double p = logistic(nu[i] + tau);
            f += p;
            slope += p * (1.0 - p);
        }
        return exposure * f - target;
    };
    double lo = -60.0, hi = 60.0;
    double slope = 0.0;
    if (balance(lo, slope) >= 0)
        return lo;
    if (balance(hi, slope) <= 0)
        return hi;
    double tau = 0.0;
    const double tol = 1e-10 * std::max(1.0, exposure);
    for (int iter = 0; iter < 200; ++iter) {
        double f = balance(tau, slope);
        if (std::abs(f) <= tol)
            break;
        if (f > 0)
            hi = tau;
        else
            lo = tau;
        double step = (slope > 0) ? tau - f / (exposure * slope) : 0.5 * (lo + hi);
        tau = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
        if (hi - lo < 1e-15)
            break;
    }
    return tau;
}

} // namespace

BackgroundParams estimate_background(const CountsPanel& panel, double alpha)
{
    const int V = panel.words(), R = panel.regions(), T = panel.weeks();
    BackgroundParams bg;
    bg.nu.resize(V);
    bg.tau = Eigen::MatrixXd::Zero(R, T);

    double total_exposure = 0.0;
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t)
            total_exposure += panel.s(r, t);
    for (int i = 0; i < V; ++i) {
        double used = 0.0;
        for (int r = 0; r < R; ++r)
            for (int t = 0; t < T; ++t)
                used += panel.c(i, r, t);
        bg.nu[i] = logit((used + alpha) / (total_exposure + 2.0 * alpha));
    }
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t) {
            if (panel.s(r, t) == 0 || V == 0)
                continue;
            double target = 0.0;
            for (int i = 0; i < V; ++i)
                target += panel.c(i, r, t);
            bg.tau(r, t) = solve_region_week(bg.nu, target, panel.s(r, t));
        }
    return bg;
}

} // namespace lexinf::emission
