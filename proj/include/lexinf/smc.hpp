#ifndef LEXINF_SMC_HPP
#define LEXINF_SMC_HPP

#include "lexinf/emission.hpp"
#include "lexinf/kalman.hpp"
#include "lexinf/panel.hpp"
#include "lexinf/rng.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lexinf::smc {

/// Per-step emission log-likelihood evaluated for a batch of particles.
class EmissionModel {
public:
    virtual ~EmissionModel() = default;
    virtual int steps() const = 0;
    /// particles is D x K; writes one log-likelihood per particle into out.
    virtual void log_likelihood(int t, const Eigen::MatrixXd& particles, Eigen::VectorXd& out) const = 0;
};

/// Exact logistic-binomial emission of one word. Cells with s = 0 contribute nothing.
class BinomialEmission final : public EmissionModel {
public:
    BinomialEmission(const CountsPanel& panel, int word, const emission::BackgroundParams& bg);
    int steps() const override { return panel_.weeks(); }
    void log_likelihood(int t, const Eigen::MatrixXd& particles, Eigen::VectorXd& out) const override;

private:
    const CountsPanel& panel_;
    int word_;
    const emission::BackgroundParams& bg_;
    Eigen::VectorXd log_choose_; // per week, summed over regions
};

/// Linear-Gaussian emission m(r, t) ~ Normal(state[r] + state[R], var(r, t)).
class GaussianEmission final : public EmissionModel {
public:
    explicit GaussianEmission(kalman::Observations obs);
    int steps() const override { return static_cast<int>(obs_.m.cols()); }
    void log_likelihood(int t, const Eigen::MatrixXd& particles, Eigen::VectorXd& out) const override;

private:
    kalman::Observations obs_;
};

/// Weighted particle approximation of the filtering distribution at one step.
struct ParticleSet {
    Eigen::MatrixXd particles;   // D x K
    Eigen::VectorXd log_weights; // normalized: logsumexp == 0
    double ess = 0.0;
};

struct ForwardOptions {
    int particles = 200;
    bool resample = false;
    /// Resample when ESS < ess_fraction * K (only if resample is set).
    double ess_fraction = 0.5;
};

struct ForwardPass {
    std::vector<ParticleSet> steps;
    int resample_count = 0;
};

/// Transition-prior proposal Normal(diag(a) x, gamma); pre-resampling
/// particle sets are stored for the backward pass.
ForwardPass bootstrap_forward(const EmissionModel& emission, const kalman::DynamicsParams& dyn,
                              const kalman::GaussianPrior& prior, const ForwardOptions& options, Rng& rng);

/// One unweighted trajectory draw (D x T) by backward simulation.
Eigen::MatrixXd ffbs_backward(const ForwardPass& forward, const kalman::DynamicsParams& dyn, Rng& rng);

/// Normalized backward selection probabilities at step t given the next state.
Eigen::VectorXd backward_weights(const ParticleSet& set, const Eigen::VectorXd& next,
                                 const kalman::DynamicsParams& dyn);

struct SamplingOptions {
    ForwardOptions forward;
    int n_samples = 100;
    std::uint64_t seed = 0;
    int workers = 1;
    double alpha = emission::kDefaultSmoothing;
    double init_cov_scale = 1.0;
};

struct WordSamples {
    std::vector<Eigen::MatrixXd> draws; // each D x T
    bool failed = false;
    std::string error;
    int resample_count = 0;
};

WordSamples sample_word(const CountsPanel& panel, int word, const emission::BackgroundParams& bg,
                        const kalman::DynamicsParams& dyn, const SamplingOptions& options);

struct SampleSet {
    std::vector<WordSamples> words;
    std::vector<int> failed_words;
};

SampleSet sample_trajectories(const CountsPanel& panel, const emission::BackgroundParams& bg,
                              const kalman::DynamicsParams& dyn, const SamplingOptions& options);

/// Streaming variant: sinks each word's draws in increasing word order while
/// holding at most `workers` words in memory.
void for_each_word_samples(const CountsPanel& panel, const emission::BackgroundParams& bg,
                           const kalman::DynamicsParams& dyn, const SamplingOptions& options,
                           const std::function<void(int word, const WordSamples&)>& sink);

} // namespace lexinf::smc

#endif // LEXINF_SMC_HPP
