// Fixture builders shared by the unit tests and the acceptance run.
#ifndef LEXINF_TESTS_FIXTURES_HPP
#define LEXINF_TESTS_FIXTURES_HPP

#include "lexinf/numeric.hpp"
#include "lexinf/panel.hpp"
#include "lexinf/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace fixtures {

inline Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> n(0, 1);
    Eigen::MatrixXd b(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            b(i, j) = n(rng);
    return scale * (b * b.transpose() / d + 0.2 * Eigen::MatrixXd::Identity(d, d));
}

// Null-preset panel with a common diagonal a and no week effects.
inline lexinf::CountsPanel synthetic_panel(int regions, int words, int weeks, std::uint64_t seed, double a,
                                           double gamma, int exposure, double rate_lo, double rate_hi,
                                           double gamma_global = -1)
{
    lexinf::synth::ScenarioOptions o;
    o.a_self = a;
    o.gamma = gamma;
    o.gamma_global = gamma_global;
    o.exposure = exposure;
    o.rate_min = rate_lo;
    o.rate_max = rate_hi;
    o.tau_sd = 0.0;
    auto sc = lexinf::synth::make_scenario(lexinf::synth::Preset::null, regions, words, weeks, seed, o);
    return lexinf::synth::generate_counts(lexinf::synth::generate_latent(sc), sc);
}

// Kolmogorov-Smirnov distance between a sample and N(mean, sd^2).
inline double ks_statistic(std::vector<double> x, double mean, double sd)
{
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double f = lexinf::normal_cdf((x[i] - mean) / sd);
        d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
    }
    return d;
}

} // namespace fixtures

#endif
