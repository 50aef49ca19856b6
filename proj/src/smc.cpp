#include "lexinf/smc.hpp"

#include "lexinf/errors.hpp"
#include "lexinf/numeric.hpp"
#include "lexinf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lexinf::smc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

BinomialEmission::BinomialEmission(const CountsPanel& panel, int word, const emission::BackgroundParams& bg)
    : panel_(panel), word_(word), bg_(bg), log_choose_(VectorXd::Zero(panel.weeks()))
{
    for (int t = 0; t < panel.weeks(); ++t)
        for (int r = 0; r < panel.regions(); ++r) {
            long s = panel.s(r, t), c = panel.c(word, r, t);
            if (s > 0)
                log_choose_[t] += std::lgamma(s + 1.0) - std::lgamma(c + 1.0) - std::lgamma(s - c + 1.0);
        }
}

void BinomialEmission::log_likelihood(int t, const MatrixXd& particles, VectorXd& out) const
{
    const int R = panel_.regions();
    const auto K = particles.cols();
    out.setConstant(K, log_choose_[t]);
    const double nu = bg_.nu[word_];
    for (int r = 0; r < R; ++r) {
        const long s = panel_.s(r, t);
        if (s <= 0)
            continue;
        const double c = panel_.c(word_, r, t);
        const double fail = static_cast<double>(s) - c;
        const double base = nu + bg_.tau(r, t);
        for (Eigen::Index k = 0; k < K; ++k) {
            double x = base + particles(r, k) + particles(R, k);
            out[k] += c * emission::log_logistic(x) + fail * emission::log1m_logistic(x);
        }
    }
}

GaussianEmission::GaussianEmission(kalman::Observations obs) : obs_(std::move(obs)) {}

void GaussianEmission::log_likelihood(int t, const MatrixXd& particles, VectorXd& out) const
{
    const auto R = obs_.m.rows();
    const auto K = particles.cols();
    out.setZero(K);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (Eigen::Index r = 0; r < R; ++r) {
        double var = obs_.var(r, t);
        if (!(var < std::numeric_limits<double>::infinity()))
            continue;
        double norm = -0.5 * (log2pi + std::log(var));
        for (Eigen::Index k = 0; k < K; ++k) {
            double e = obs_.m(r, t) - particles(r, k) - particles(R, k);
            out[k] += norm - 0.5 * e * e / var;
        }
    }
}

namespace {

// Gaussian transition Normal(diag(a) x, gamma) with a diagonal fast path.
class Transition {
public:
    explicit Transition(const kalman::DynamicsParams& dyn) : a_(dyn.a_diag)
    {
        const auto D = dyn.dim();
        diagonal_ = dyn.gamma.isDiagonal(0.0);
        if (diagonal_) {
            sd_ = dyn.gamma.diagonal().cwiseSqrt();
            inv_var_ = dyn.gamma.diagonal().cwiseInverse();
            if ((dyn.gamma.diagonal().array() <= 0).any())
                throw NumericalError("process variance must be positive");
        } else {
            Eigen::LLT<MatrixXd> llt(dyn.gamma);
            if (llt.info() != Eigen::Success)
                throw NumericalError("process covariance is not positive definite");
            chol_ = llt.matrixL();
        }
        (void)D;
    }

    // next = diag(a) prev + noise, in place on a D x K matrix.
    void propagate(MatrixXd& particles, Rng& rng) const
    {
        std::normal_distribution<double> normal;
        MatrixXd z(particles.rows(), particles.cols());
        for (Eigen::Index k = 0; k < z.cols(); ++k)
            for (Eigen::Index d = 0; d < z.rows(); ++d)
                z(d, k) = normal(rng);
        particles = a_.asDiagonal() * particles;
        if (diagonal_)
            particles += sd_.asDiagonal() * z;
        else
            particles += chol_ * z;
    }

    // Unnormalized log Normal(next | diag(a) prev_k, gamma) for every column k.
    VectorXd log_density(const VectorXd& next, const MatrixXd& prev) const
    {
        MatrixXd diff = (-(a_.asDiagonal() * prev)).colwise() + next;
        if (diagonal_)
            return -0.5 * (inv_var_.asDiagonal() * diff.cwiseAbs2()).colwise().sum().transpose();
        MatrixXd w = chol_.triangularView<Eigen::Lower>().solve(diff);
        return -0.5 * w.cwiseAbs2().colwise().sum().transpose();
    }

private:
    VectorXd a_;
    bool diagonal_ = true;
    VectorXd sd_;
    VectorXd inv_var_;
    MatrixXd chol_;
};

double normalize(VectorXd& log_w)
{
    double z = log_sum_exp(std::span<const double>(log_w.data(), static_cast<std::size_t>(log_w.size())));
    if (!std::isfinite(z))
        return z;
    log_w.array() -= z;
    return z;
}

double ess_of(const VectorXd& log_w)
{
    return 1.0 / (2.0 * log_w.array()).exp().sum();
}

// Index drawn from normalized probabilities by inversion.
Eigen::Index categorical(const VectorXd& prob, Rng& rng)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng) * prob.sum();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < prob.size(); ++k) {
        acc += prob[k];
        if (u < acc)
            return k;
    }
    // u landed in the rounding gap at the top: take the last positive entry.
    for (Eigen::Index k = prob.size() - 1; k >= 0; --k)
        if (prob[k] > 0)
            return k;
    return prob.size() - 1;
}

} // namespace

ForwardPass bootstrap_forward(const EmissionModel& emission, const kalman::DynamicsParams& dyn,
                              const kalman::GaussianPrior& prior, const ForwardOptions& options, Rng& rng)
{
    const int K = options.particles;
    const int D = dyn.dim();
    const int T = emission.steps();
    if (K < 2)
        throw UsageError("at least two particles are required");
    Transition transition(dyn);

    Eigen::LLT<MatrixXd> prior_llt(prior.cov);
    if (prior_llt.info() != Eigen::Success)
        throw NumericalError("initial covariance is not positive definite");
    MatrixXd prior_chol = prior_llt.matrixL();

    ForwardPass out;
    out.steps.resize(T);
    VectorXd lik(K);
    std::normal_distribution<double> normal;
    for (int t = 0; t < T; ++t) {
        ParticleSet& cur = out.steps[t];
        VectorXd log_w;
        if (t == 0) {
            MatrixXd z(D, K);
            for (int k = 0; k < K; ++k)
                for (int d = 0; d < D; ++d)
                    z(d, k) = normal(rng);
            cur.particles = (prior_chol * z).colwise() + prior.mean;
            log_w = VectorXd::Constant(K, -std::log(static_cast<double>(K)));
        } else {
            const ParticleSet& prev = out.steps[t - 1];
            if (options.resample && prev.ess < options.ess_fraction * K) {
                cur.particles.resize(D, K);
                std::vector<double> cdf(static_cast<std::size_t>(K));
                double acc = 0.0;
                for (int k = 0; k < K; ++k)
                    cdf[k] = acc += std::exp(prev.log_weights[k]);
                std::uniform_real_distribution<double> unif(0.0, acc);
                for (int k = 0; k < K; ++k) {
                    auto pick = std::upper_bound(cdf.begin(), cdf.end(), unif(rng)) - cdf.begin();
                    cur.particles.col(k) = prev.particles.col(std::min<Eigen::Index>(pick, K - 1));
                }
                log_w = VectorXd::Constant(K, -std::log(static_cast<double>(K)));
                ++out.resample_count;
            } else {
                cur.particles = prev.particles;
                log_w = prev.log_weights;
            }
            transition.propagate(cur.particles, rng);
        }
        emission.log_likelihood(t, cur.particles, lik);
        log_w += lik;
        if (!std::isfinite(normalize(log_w)))
            throw NumericalError("all particle weights vanished at step " + std::to_string(t));
        cur.log_weights = std::move(log_w);
        cur.ess = ess_of(cur.log_weights);
    }
    return out;
}

VectorXd backward_weights(const ParticleSet& set, const VectorXd& next, const kalman::DynamicsParams& dyn)
{
    Transition transition(dyn);
    VectorXd lw = set.log_weights + transition.log_density(next, set.particles);
    normalize(lw);
    return lw.array().exp();
}

MatrixXd ffbs_backward(const ForwardPass& forward, const kalman::DynamicsParams& dyn, Rng& rng)
{
    const int T = static_cast<int>(forward.steps.size());
    if (T == 0)
        return {};
    const auto D = forward.steps[0].particles.rows();
    Transition transition(dyn);
    MatrixXd traj(D, T);
    VectorXd prob = forward.steps[T - 1].log_weights.array().exp();
    traj.col(T - 1) = forward.steps[T - 1].particles.col(categorical(prob, rng));
    for (int t = T - 2; t >= 0; --t) {
        const ParticleSet& set = forward.steps[t];
        VectorXd lw = set.log_weights + transition.log_density(traj.col(t + 1), set.particles);
        if (!std::isfinite(normalize(lw)))
            throw NumericalError("backward weights vanished at step " + std::to_string(t));
        prob = lw.array().exp();
        traj.col(t) = set.particles.col(categorical(prob, rng));
    }
    return traj;
}

WordSamples sample_word(const CountsPanel& panel, int word, const emission::BackgroundParams& bg,
                        const kalman::DynamicsParams& dyn, const SamplingOptions& options)
{
    WordSamples out;
    if (options.n_samples <= 0)
        return out;
    try {
        auto init = kalman::initialize_state(panel, word, bg, options.alpha, options.init_cov_scale);
        BinomialEmission model(panel, word, bg);
        Rng forward_rng = substream(options.seed, {static_cast<std::uint64_t>(word), kForwardTag});
        auto forward = bootstrap_forward(model, dyn, init.prior, options.forward, forward_rng);
        out.resample_count = forward.resample_count;
        out.draws.reserve(options.n_samples);
        for (int n = 0; n < options.n_samples; ++n) {
            Rng rng = substream(options.seed,
                                {static_cast<std::uint64_t>(word), kBackwardTag, static_cast<std::uint64_t>(n)});
            out.draws.push_back(ffbs_backward(forward, dyn, rng));
        }
    } catch (const NumericalError& e) {
        out.draws.clear();
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

SampleSet sample_trajectories(const CountsPanel& panel, const emission::BackgroundParams& bg,
                              const kalman::DynamicsParams& dyn, const SamplingOptions& options)
{
    SampleSet out;
    if (options.n_samples <= 0)
        return out;
    out.words.resize(panel.words());
    parallel_for(panel.words(), options.workers,
                 [&](int i) { out.words[i] = sample_word(panel, i, bg, dyn, options); });
    for (int i = 0; i < panel.words(); ++i)
        if (out.words[i].failed)
            out.failed_words.push_back(i);
    return out;
}

void for_each_word_samples(const CountsPanel& panel, const emission::BackgroundParams& bg,
                           const kalman::DynamicsParams& dyn, const SamplingOptions& options,
                           const std::function<void(int, const WordSamples&)>& sink)
{
    if (options.n_samples <= 0)
        return;
    const int V = panel.words();
    const int chunk = std::max(1, options.workers);
    std::vector<WordSamples> batch;
    for (int start = 0; start < V; start += chunk) {
        int n = std::min(chunk, V - start);
        batch.assign(n, {});
        parallel_for(n, options.workers,
                     [&](int j) { batch[j] = sample_word(panel, start + j, bg, dyn, options); });
        for (int j = 0; j < n; ++j)
            sink(start + j, batch[j]);
    }
}

} // namespace lexinf::smc
