#include <doctest.h>

#include "lexinf/errors.hpp"
#include "lexinf/kalman.hpp"
#include "lexinf/numeric.hpp"
#include "lexinf/smc.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace lexinf;
using namespace lexinf::smc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double logsumexp(const VectorXd& v)
{
    double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

class DeadEmission : public EmissionModel {
public:
    int steps() const override { return 3; }
    void log_likelihood(int t, const MatrixXd& p, VectorXd& out) const override
    {
        out.setConstant(p.cols(), t == 1 ? -std::numeric_limits<double>::infinity() : 0.0);
    }
};

CountsPanel flat_panel(int words, int regions, int weeks, int s, double rate)
{
    CountsPanel p(words, regions, weeks);
    for (int r = 0; r < regions; ++r)
        for (int t = 0; t < weeks; ++t) {
            p.s(r, t) = s;
            for (int i = 0; i < words; ++i)
                p.c(i, r, t) = static_cast<int>(std::lround(rate * (i + 1) * s));
        }
    return p;
}

} // namespace

TEST_CASE("no exposure means no evidence")
{
    CountsPanel p(1, 2, 5);
    emission::BackgroundParams bg{VectorXd::Constant(1, -3.0), MatrixXd::Zero(2, 5)};
    BinomialEmission model(p, 0, bg);
    auto dyn = kalman::DynamicsParams::isotropic(3, 0.8, 0.2);
    kalman::GaussianPrior prior{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
    Rng rng = substream(1, {1});
    auto fwd = bootstrap_forward(model, dyn, prior, ForwardOptions{50}, rng);
    for (const auto& step : fwd.steps) {
        CHECK(step.ess == doctest::Approx(50.0));
        CHECK((step.log_weights.array() - step.log_weights[0]).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("weights stay normalized and runs are reproducible")
{
    auto panel = flat_panel(2, 3, 12, 300, 0.03);
    panel.c(0, 1, 4) = 40;
    auto bg = emission::estimate_background(panel);
    BinomialEmission model(panel, 0, bg);
    auto dyn = kalman::DynamicsParams::isotropic(4, 0.7, 0.3);
    kalman::GaussianPrior prior{VectorXd::Zero(4), MatrixXd::Identity(4, 4)};
    for (bool resample : {false, true}) {
        ForwardOptions opt{300, resample, 0.5};
        Rng a = substream(5, {0}), b = substream(5, {0});
        auto f1 = bootstrap_forward(model, dyn, prior, opt, a);
        auto f2 = bootstrap_forward(model, dyn, prior, opt, b);
        for (std::size_t t = 0; t < f1.steps.size(); ++t) {
            CHECK(std::abs(logsumexp(f1.steps[t].log_weights)) < 1e-10);
            CHECK(f1.steps[t].particles == f2.steps[t].particles);
            CHECK(f1.steps[t].log_weights == f2.steps[t].log_weights);
            CHECK(f1.steps[t].ess <= 300.0 + 1e-9);
        }
        if (resample)
            CHECK(f1.resample_count > 0);
        else
            CHECK(f1.resample_count == 0);
    }
}

TEST_CASE("particle order does not change weighted expectations")
{
    auto panel = flat_panel(1, 2, 4, 500, 0.05);
    auto bg = emission::estimate_background(panel);
    BinomialEmission model(panel, 0, bg);
    auto dyn = kalman::DynamicsParams::isotropic(3, 0.6, 0.4);
    kalman::GaussianPrior prior{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
    Rng rng = substream(2, {0});
    auto fwd = bootstrap_forward(model, dyn, prior, ForwardOptions{64}, rng);
    const auto& set = fwd.steps[2];
    std::vector<int> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
    ParticleSet shuffled = set;
    for (int k = 0; k < 64; ++k) {
        shuffled.particles.col(k) = set.particles.col(perm[k]);
        shuffled.log_weights[k] = set.log_weights[perm[k]];
    }
    VectorXd w = set.log_weights.array().exp(), ws = shuffled.log_weights.array().exp();
    VectorXd m1 = set.particles * w, m2 = shuffled.particles * ws;
    CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-12);
    VectorXd next = fwd.steps[3].particles.col(0);
    VectorXd b1 = backward_weights(set, next, dyn), b2 = backward_weights(shuffled, next, dyn);
    CHECK((set.particles * b1 - shuffled.particles * b2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single step posterior mean matches quadrature")
{
    // One region, one week: the emission sees x = eta_0 + eta_global.
    CountsPanel p(1, 1, 1);
    p.s(0, 0) = 40;
    p.c(0, 0, 0) = 13;
    emission::BackgroundParams bg{VectorXd::Constant(1, -1.0), MatrixXd::Constant(1, 1, 0.2)};
    kalman::GaussianPrior prior{VectorXd(2), MatrixXd(2, 2)};
    prior.mean << 0.3, -0.1;
    prior.cov << 0.5, 0.1, 0.1, 0.4;
    const double mu = prior.mean.sum(), var = prior.cov.sum();

    double num = 0, den = 0;
    const int n = 200000;
    const double lo = mu - 12 * std::sqrt(var), hi = mu + 12 * std::sqrt(var), h = (hi - lo) / n;
    for (int i = 0; i <= n; ++i) {
        double x = lo + i * h;
        double wgt = (i == 0 || i == n) ? 0.5 : 1.0;
        double dens = std::exp(-0.5 * (x - mu) * (x - mu) / var
                               + emission::binomial_loglik_logit(13, 40, -1.0 + 0.2 + x));
        num += wgt * x * dens;
        den += wgt * dens;
    }
    const double exact = num / den;

    BinomialEmission model(p, 0, bg);
    auto dyn = kalman::DynamicsParams::isotropic(2, 0.5, 0.1);
    Rng rng = substream(17, {0});
    auto fwd = bootstrap_forward(model, dyn, prior, ForwardOptions{50000}, rng);
    const auto& set = fwd.steps[0];
    VectorXd w = set.log_weights.array().exp();
    VectorXd x = set.particles.row(0) + set.particles.row(1);
    double est = w.dot(x);
    double se = std::sqrt((w.array().square() * (x.array() - est).square()).sum());
    CHECK(std::abs(est - exact) < 3 * se);
    CHECK(se < 0.01);
}

TEST_CASE("backward pass at a single step is a forward categorical draw")
{
    ForwardPass fwd;
    ParticleSet set;
    set.particles = MatrixXd(2, 4);
    set.particles << 0, 1, 2, 3, 0, 0, 0, 0;
    VectorXd p(4);
    p << 0.1, 0.2, 0.3, 0.4;
    set.log_weights = p.array().log();
    fwd.steps.push_back(set);
    auto dyn = kalman::DynamicsParams::isotropic(2, 0.5, 1.0);
    std::vector<int> hits(4, 0);
    const int draws = 20000;
    for (int n = 0; n < draws; ++n) {
        Rng rng = substream(3, {static_cast<std::uint64_t>(n)});
        auto traj = ffbs_backward(fwd, dyn, rng);
        ++hits[static_cast<int>(traj(0, 0))];
    }
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(hits[k] / double(draws) - p[k]) < 4 * std::sqrt(p[k] * (1 - p[k]) / draws));
}

TEST_CASE("uninformative transition leaves forward weights in charge")
{
    ParticleSet set;
    set.particles = MatrixXd(2, 4);
    set.particles << -1.0, 0.5, 2.0, -0.3, 0.2, -0.4, 0.1, 0.9;
    VectorXd p(4);
    p << 0.05, 0.45, 0.2, 0.3;
    set.log_weights = p.array().log();
    auto dyn = kalman::DynamicsParams::isotropic(2, 0.9, 1e6);
    VectorXd next(2);
    next << 1.5, -2.0;
    VectorXd b = backward_weights(set, next, dyn);
    CHECK(0.5 * (b - p).cwiseAbs().sum() < 0.01);
    CHECK(b.sum() == doctest::Approx(1.0));
}

TEST_CASE("FFBS reproduces exact smoothed marginals on a linear-Gaussian model")
{
    const int R = 2, T = 10, D = 3;
    std::mt19937_64 gen(21);
    std::normal_distribution<double> nd(0, 1);
    kalman::DynamicsParams dyn;
    dyn.a_diag = VectorXd(D);
    dyn.a_diag << 0.8, 0.5, 0.7;
    dyn.gamma = VectorXd::Constant(D, 0.3).asDiagonal();
    kalman::GaussianPrior prior{VectorXd::Zero(D), MatrixXd::Identity(D, D)};
    kalman::Observations obs{MatrixXd(R, T), MatrixXd::Constant(R, T, 0.5)};
    // Observations simulated from the model itself.
    VectorXd x = VectorXd::Zero(D);
    for (int t = 0; t < T; ++t) {
        for (int d = 0; d < D; ++d)
            x[d] = t == 0 ? nd(gen) : dyn.a_diag[d] * x[d] + std::sqrt(0.3) * nd(gen);
        for (int r = 0; r < R; ++r)
            obs.m(r, t) = x[r] + x[R] + std::sqrt(0.5) * nd(gen);
    }
    auto exact = kalman::kalman_smooth(obs, dyn, prior);
    {
        std::vector<double> a(dyn.a_diag.data(), dyn.a_diag.data() + D), m0(D, 0.0);
        auto want = oracle::condition_joint(a, oracle::to_mat(dyn.gamma), m0, oracle::to_mat(prior.cov),
                                            oracle::to_mat(obs.m), oracle::to_mat(obs.var));
        for (int t = 0; t < T; ++t)
            for (int d = 0; d < D; ++d)
                REQUIRE(std::abs(exact.means(d, t) - want.means[t][d]) < 1e-8);
    }

    // One forward pass per draw: draws that share a pass share its particle
    // error, which a per-draw standard error does not see.
    GaussianEmission model(obs);
    const int draws = 500;
    std::vector<MatrixXd> sample;
    for (int n = 0; n < draws; ++n) {
        const auto tag = static_cast<std::uint64_t>(n);
        Rng rng = substream(99, {kForwardTag, tag});
        auto fwd = bootstrap_forward(model, dyn, prior, ForwardOptions{5000, true, 0.5}, rng);
        Rng b = substream(99, {kBackwardTag, tag});
        sample.push_back(ffbs_backward(fwd, dyn, b));
    }
    const double ks_crit = 1.628 / std::sqrt(double(draws));
    int mean_fail = 0, ks_fail = 0;
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < D; ++d) {
            std::vector<double> x;
            for (const auto& s : sample)
                x.push_back(s(d, t));
            double m = std::accumulate(x.begin(), x.end(), 0.0) / draws;
            double v = 0;
            for (double xi : x)
                v += (xi - m) * (xi - m);
            double se = std::sqrt(v / (draws - 1) / draws);
            if (std::abs(m - exact.means(d, t)) > 3.5 * se)
                ++mean_fail;
            if (fixtures::ks_statistic(x, exact.means(d, t), std::sqrt(exact.covs[t](d, d))) > ks_crit)
                ++ks_fail;
        }
    CHECK(mean_fail == 0);
    CHECK(ks_fail == 0);
}

TEST_CASE("sampling entry points")
{
    auto panel = flat_panel(3, 2, 15, 400, 0.04);
    auto bg = emission::estimate_background(panel);
    auto dyn = kalman::DynamicsParams::isotropic(3, 0.6, 0.05);

    SamplingOptions none;
    none.n_samples = 0;
    CHECK(sample_trajectories(panel, bg, dyn, none).words.empty());

    SamplingOptions opt;
    opt.n_samples = 40;
    opt.seed = 8;
    opt.forward.particles = 400;
    opt.forward.resample = true;
    auto a = sample_trajectories(panel, bg, dyn, opt);
    opt.workers = 3;
    auto b = sample_trajectories(panel, bg, dyn, opt);
    REQUIRE(a.words.size() == 3);
    CHECK(a.failed_words.empty());
    for (int i = 0; i < 3; ++i) {
        REQUIRE(a.words[i].draws.size() == 40);
        for (int n = 0; n < 40; ++n)
            CHECK(a.words[i].draws[n] == b.words[i].draws[n]);
    }
    std::vector<int> order;
    for_each_word_samples(panel, bg, dyn, opt, [&](int word, const WordSamples& ws) {
        order.push_back(word);
        CHECK(ws.draws.front() == a.words[word].draws.front());
    });
    CHECK(order == std::vector<int>{0, 1, 2});

    // Counts sit exactly at the background rate: draws centre on zero.
    for (int i = 0; i < 3; ++i) {
        const auto& ds = a.words[i].draws;
        for (int t = 0; t < 15; ++t)
            for (int d = 0; d < 3; ++d) {
                double m = 0, v = 0;
                for (const auto& x : ds)
                    m += x(d, t);
                m /= ds.size();
                for (const auto& x : ds)
                    v += (x(d, t) - m) * (x(d, t) - m);
                double sd = std::sqrt(v / ds.size());
                CHECK(std::abs(m) < 3 * sd + 1e-12);
            }
    }
}

TEST_CASE("failures are reported")
{
    auto dyn = kalman::DynamicsParams::isotropic(2, 0.5, 0.1);
    kalman::GaussianPrior prior{VectorXd::Zero(2), MatrixXd::Identity(2, 2)};
    Rng rng = substream(0, {0});
    CHECK_THROWS_AS(bootstrap_forward(DeadEmission{}, dyn, prior, ForwardOptions{10}, rng), NumericalError);
    CHECK_THROWS_AS(bootstrap_forward(DeadEmission{}, dyn, prior, ForwardOptions{1}, rng), UsageError);
}
