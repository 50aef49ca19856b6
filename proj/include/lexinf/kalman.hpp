#ifndef LEXINF_KALMAN_HPP
#define LEXINF_KALMAN_HPP

#include "lexinf/emission.hpp"
#include "lexinf/panel.hpp"

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <vector>

namespace lexinf::kalman {

// State layout: R regional activations followed by the global activation in
// the last slot. Region r observes state[r] + state[R].

enum class CovarianceMode { diagonal, full };

/// Shared dynamics: diagonal autoregression and process covariance.
struct DynamicsParams {
    Eigen::VectorXd a_diag;
    Eigen::MatrixXd gamma;

    int dim() const noexcept { return static_cast<int>(a_diag.size()); }
    static DynamicsParams isotropic(int dim, double a, double gamma);
};

struct GaussianPrior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Gaussian pseudo-observations for one word: m(r, t) with variance var(r, t).
/// Infinite variance marks a missing site.
struct Observations {
    Eigen::MatrixXd m;
    Eigen::MatrixXd var;
};

/// Output of forward filtering and RTS smoothing.
struct SmoothedBelief {
    Eigen::MatrixXd means;               // D x T
    std::vector<Eigen::MatrixXd> covs;   // T of D x D
    std::vector<Eigen::MatrixXd> cross;  // T-1; cross[t] = Cov(x_{t+1}, x_t | all)
    double loglik_bound = 0.0;           // Gaussian log evidence of the pseudo-observations
    int psd_repairs = 0;
};

SmoothedBelief kalman_smooth(const Observations& obs, const DynamicsParams& dyn, const GaussianPrior& prior);

/// Pseudo-observations for word `word` at expansion points zeta (R x T).
Observations taylor_observations(const CountsPanel& panel, int word, const Eigen::MatrixXd& zeta,
                                 const emission::BackgroundParams& bg);

struct InitialState {
    GaussianPrior prior;      // belief over the first state
    Eigen::MatrixXd eta_init; // R x T windowed logit residuals
};

/// Windowed (3-week, centered, truncated at the ends) average of the logit
/// residual init_zeta(c, s) - nu - tau, with zero residual where s = 0.
/// The first column seeds the prior mean; the global slot starts at zero.
InitialState initialize_state(const CountsPanel& panel, int word, const emission::BackgroundParams& bg,
                              double alpha = emission::kDefaultSmoothing, double cov_scale = 1.0);

/// Expected sufficient statistics of the transitions for one word.
struct TransitionStats {
    Eigen::MatrixXd s00; // sum E[x_{t-1} x_{t-1}']
    Eigen::MatrixXd s10; // sum E[x_t x_{t-1}']
    Eigen::MatrixXd s11; // sum E[x_t x_t']
    double count = 0.0;

    explicit TransitionStats(int dim = 0);
    void add(const SmoothedBelief& belief);
    TransitionStats& operator+=(const TransitionStats& other);
};

/// Constrained M-step (diagonal A). In diagonal mode each dimension is an
/// independent AR(1) fit; in full mode a is solved against the current gamma
/// and gamma is then refit (conditional maximization).
DynamicsParams m_step(const TransitionStats& stats, const DynamicsParams& current, CovarianceMode mode,
                      double min_variance);

struct EmOptions {
    int max_iterations = 100;
    double rel_tol = 1e-6;
    int max_inner_iterations = 25;
    double zeta_tol = 1e-4;
    double bound_tol = 1e-8;
    double alpha = emission::kDefaultSmoothing;
    double init_cov_scale = 1.0;
    CovarianceMode mode = CovarianceMode::diagonal;
    double min_variance = 1e-8;
    int workers = 1;
};

struct EmTraceEntry {
    int iteration = 0;
    int sweep = 0;
    double bound = 0.0;
    double zeta_change = std::numeric_limits<double>::quiet_NaN();
};

/// Everything needed to continue a fit exactly where it stopped.
struct EmState {
    DynamicsParams dynamics;
    std::vector<Eigen::MatrixXd> zeta; // per word, R x T
    int iteration = 0;
    int sweep = 0;
    int sweep_iteration = 0;
    double previous_bound = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    std::vector<EmTraceEntry> trace;
};

struct EmResult {
    EmState state;
    std::vector<SmoothedBelief> beliefs;
};

/// Starting state: zeta at smoothed relative frequencies, dynamics as given.
EmState em_init(const CountsPanel& panel, const DynamicsParams& initial, double alpha = emission::kDefaultSmoothing);

/// Alternate Kalman E-steps, zeta refreshes and pooled M-steps. Within a run
/// of fixed zeta the bound must not decrease; a drop beyond bound_tol
/// (relative) throws NumericalError. Zeta is refreshed once the bound
/// stalls (rel_tol) or after max_inner_iterations; the fit converges when
/// a refresh moves zeta by less than zeta_tol.
EmResult em_fit(const CountsPanel& panel, const emission::BackgroundParams& bg, EmState state,
                const EmOptions& options, const std::function<void(const EmTraceEntry&)>& on_iteration = {});

} // namespace lexinf::kalman

#endif // LEXINF_KALMAN_HPP
