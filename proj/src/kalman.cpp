#include "lexinf/kalman.hpp"

#include "lexinf/errors.hpp"
#include "lexinf/parallel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace lexinf::kalman {

using Eigen::MatrixXd;
using Eigen::VectorXd;

DynamicsParams DynamicsParams::isotropic(int dim, double a, double gamma)
{
    DynamicsParams p;
    p.a_diag = VectorXd::Constant(dim, a);
    p.gamma = MatrixXd::Identity(dim, dim) * gamma;
    return p;
}

namespace {

void symmetrize(MatrixXd& m)
{
    m = 0.5 * (m + m.transpose()).eval();
}

// Returns true if a repair was needed.
bool repair_psd(MatrixXd& m)
{
    symmetrize(m);
    bool bad = false;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (!(m(i, i) >= 0.0))
            bad = true;
    if (!bad)
        return false;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    VectorXd ev = es.eigenvalues().cwiseMax(1e-12);
    m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    symmetrize(m);
    return true;
}

} // namespace

SmoothedBelief kalman_smooth(const Observations& obs, const DynamicsParams& dyn, const GaussianPrior& prior)
{
    const int D = dyn.dim();
    const int R = static_cast<int>(obs.m.rows());
    const int T = static_cast<int>(obs.m.cols());
    if (R + 1 != D)
        throw UsageError("state dimension must equal regions + 1");
    if (prior.mean.size() != D || prior.cov.rows() != D)
        throw UsageError("prior dimension mismatch");

    const int g = D - 1;
    const VectorXd& a = dyn.a_diag;
    const MatrixXd aa = a * a.transpose();

    std::vector<VectorXd> mu_pred(T), mu_filt(T);
    std::vector<MatrixXd> p_pred(T), p_filt(T);
    SmoothedBelief out;
    double loglik = 0.0;
    const double log2pi = std::log(2.0 * std::numbers::pi);

    for (int t = 0; t < T; ++t) {
        if (t == 0) {
            mu_pred[0] = prior.mean;
            p_pred[0] = prior.cov;
        } else {
            mu_pred[t] = a.cwiseProduct(mu_filt[t - 1]);
            p_pred[t] = aa.cwiseProduct(p_filt[t - 1]) + dyn.gamma;
            symmetrize(p_pred[t]);
        }
        VectorXd mu = mu_pred[t];
        MatrixXd P = p_pred[t];
        for (int r = 0; r < R; ++r) {
            double var = obs.var(r, t);
            if (!(var < std::numeric_limits<double>::infinity()))
                continue;
            VectorXd ph = P.col(r) + P.col(g);
            double S = ph[r] + ph[g] + var;
            double innov = obs.m(r, t) - (mu[r] + mu[g]);
            loglik += -0.5 * (log2pi + std::log(S) + innov * innov / S);
            VectorXd gain = ph / S;
            mu += gain * innov;
            P.noalias() -= gain * ph.transpose();
        }
        if (repair_psd(P))
            ++out.psd_repairs;
        mu_filt[t] = std::move(mu);
        p_filt[t] = std::move(P);
    }

    out.loglik_bound = loglik;
    out.means.resize(D, T);
    out.covs.resize(T);
    out.cross.resize(T > 0 ? T - 1 : 0);
    if (T == 0)
        return out;
    out.means.col(T - 1) = mu_filt[T - 1];
    out.covs[T - 1] = p_filt[T - 1];
    for (int t = T - 2; t >= 0; --t) {
        // J = P_filt[t] A' P_pred[t+1]^{-1}
        MatrixXd ap = a.asDiagonal() * p_filt[t];
        MatrixXd J = p_pred[t + 1].ldlt().solve(ap).transpose();
        out.means.col(t) = mu_filt[t] + J * (out.means.col(t + 1) - mu_pred[t + 1]);
        MatrixXd P = p_filt[t] + J * (out.covs[t + 1] - p_pred[t + 1]) * J.transpose();
        if (repair_psd(P))
            ++out.psd_repairs;
        out.covs[t] = std::move(P);
        out.cross[t] = out.covs[t + 1] * J.transpose();
    }
    return out;
}

Observations taylor_observations(const CountsPanel& panel, int word, const MatrixXd& zeta,
                                 const emission::BackgroundParams& bg)
{
    const int R = panel.regions(), T = panel.weeks();
    Observations obs;
    obs.m.resize(R, T);
    obs.var.resize(R, T);
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t) {
            auto site = emission::taylor_params(panel.c(word, r, t), panel.s(r, t), zeta(r, t), bg.tau(r, t),
                                                bg.nu[word]);
            obs.m(r, t) = site.missing() ? 0.0 : site.m;
            obs.var(r, t) = site.sigma2;
        }
    return obs;
}

InitialState initialize_state(const CountsPanel& panel, int word, const emission::BackgroundParams& bg, double alpha,
                              double cov_scale)
{
    const int R = panel.regions(), T = panel.weeks();
    MatrixXd resid = MatrixXd::Zero(R, T);
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t)
            if (panel.s(r, t) > 0)
                resid(r, t) = emission::init_zeta(panel.c(word, r, t), panel.s(r, t), alpha) - bg.nu[word]
                    - bg.tau(r, t);
    InitialState init;
    init.eta_init = MatrixXd::Zero(R, T);
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t) {
            int lo = std::max(0, t - 1), hi = std::min(T - 1, t + 1);
            init.eta_init(r, t) = resid.row(r).segment(lo, hi - lo + 1).mean();
        }
    init.prior.mean = VectorXd::Zero(R + 1);
    if (T > 0)
        init.prior.mean.head(R) = init.eta_init.col(0);
    init.prior.cov = MatrixXd::Identity(R + 1, R + 1) * cov_scale;
    return init;
}

TransitionStats::TransitionStats(int dim)
    : s00(MatrixXd::Zero(dim, dim)), s10(MatrixXd::Zero(dim, dim)), s11(MatrixXd::Zero(dim, dim))
{
}

void TransitionStats::add(const SmoothedBelief& b)
{
    const auto T = b.means.cols();
    for (Eigen::Index t = 1; t < T; ++t) {
        const auto prev = b.means.col(t - 1);
        const auto cur = b.means.col(t);
        s00 += b.covs[t - 1] + prev * prev.transpose();
        s10 += b.cross[t - 1] + cur * prev.transpose();
        s11 += b.covs[t] + cur * cur.transpose();
    }
    count += static_cast<double>(T > 0 ? T - 1 : 0);
}

TransitionStats& TransitionStats::operator+=(const TransitionStats& o)
{
    s00 += o.s00;
    s10 += o.s10;
    s11 += o.s11;
    count += o.count;
    return *this;
}

DynamicsParams m_step(const TransitionStats& st, const DynamicsParams& current, CovarianceMode mode,
                      double min_variance)
{
    const int D = current.dim();
    if (st.count <= 0)
        return current;
    DynamicsParams next = current;
    if (mode == CovarianceMode::diagonal) {
        next.gamma = MatrixXd::Zero(D, D);
        for (int d = 0; d < D; ++d) {
            double a = current.a_diag[d];
            if (st.s00(d, d) > 1e-300)
                a = st.s10(d, d) / st.s00(d, d);
            next.a_diag[d] = a;
            double resid = st.s11(d, d) - 2.0 * a * st.s10(d, d) + a * a * st.s00(d, d);
            next.gamma(d, d) = std::max(resid / st.count, min_variance);
        }
        return next;
    }

    // Full gamma: maximize over diag(A) given gamma, then refit gamma.
    Eigen::LDLT<MatrixXd> gl(current.gamma);
    MatrixXd ginv = gl.solve(MatrixXd::Identity(D, D));
    MatrixXd lhs = ginv.cwiseProduct(st.s00);
    VectorXd rhs = (ginv * st.s10).diagonal();
    Eigen::FullPivLU<MatrixXd> lu(lhs);
    if (lu.isInvertible())
        next.a_diag = lu.solve(rhs);
    auto Dm = next.a_diag.asDiagonal();
    MatrixXd g = st.s11 - Dm * st.s10.transpose() - st.s10 * Dm + Dm * st.s00 * Dm;
    g /= st.count;
    symmetrize(g);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
    VectorXd ev = es.eigenvalues().cwiseMax(min_variance);
    next.gamma = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    symmetrize(next.gamma);
    return next;
}

EmState em_init(const CountsPanel& panel, const DynamicsParams& initial, double alpha)
{
    EmState st;
    st.dynamics = initial;
    const int R = panel.regions(), T = panel.weeks();
    st.zeta.assign(panel.words(), MatrixXd::Zero(R, T));
    for (int i = 0; i < panel.words(); ++i)
        for (int r = 0; r < R; ++r)
            for (int t = 0; t < T; ++t)
                if (panel.s(r, t) > 0)
                    st.zeta[i](r, t) = emission::init_zeta(panel.c(i, r, t), panel.s(r, t), alpha);
    return st;
}

EmResult em_fit(const CountsPanel& panel, const emission::BackgroundParams& bg, EmState state,
                const EmOptions& opt, const std::function<void(const EmTraceEntry&)>& on_iteration)
{
    const int V = panel.words(), R = panel.regions(), T = panel.weeks();
    const int D = R + 1;
    if (state.dynamics.dim() != D)
        throw UsageError("dynamics dimension must equal regions + 1");
    if (static_cast<int>(state.zeta.size()) != V)
        throw UsageError("zeta tensor does not match panel");

    std::vector<GaussianPrior> priors(V);
    for (int i = 0; i < V; ++i)
        priors[i] = initialize_state(panel, i, bg, opt.alpha, opt.init_cov_scale).prior;

    EmResult result;
    std::vector<SmoothedBelief> beliefs(V);
    std::vector<TransitionStats> per_word(V);

    while (!state.converged && state.iteration < opt.max_iterations) {
        parallel_for(V, opt.workers, [&](int i) {
            auto obs = taylor_observations(panel, i, state.zeta[i], bg);
            beliefs[i] = kalman_smooth(obs, state.dynamics, priors[i]);
            per_word[i] = TransitionStats(D);
            per_word[i].add(beliefs[i]);
        });
        // Fixed word order keeps the reduction bitwise reproducible.
        double bound = 0.0;
        TransitionStats pooled(D);
        for (int i = 0; i < V; ++i) {
            bound += beliefs[i].loglik_bound;
            pooled += per_word[i];
        }

        EmTraceEntry entry;
        entry.iteration = state.iteration;
        entry.sweep = state.sweep;
        entry.bound = bound;

        bool stalled = false;
        if (std::isfinite(state.previous_bound)) {
            double prev = state.previous_bound;
            double scale = std::max(1.0, std::abs(prev));
            if (bound < prev - opt.bound_tol * scale) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "variational bound decreased at iteration " << state.iteration << " (sweep " << state.sweep
                    << "): " << prev << " -> " << bound << "; a_diag = [" << state.dynamics.a_diag.transpose()
                    << "], gamma diag = [" << state.dynamics.gamma.diagonal().transpose() << "]";
                throw NumericalError(msg.str());
            }
            stalled = std::abs(bound - prev) <= opt.rel_tol * scale;
        }
        ++state.iteration;
        ++state.sweep_iteration;

        bool refresh = stalled || state.sweep_iteration >= opt.max_inner_iterations;
        if (refresh) {
            double change = 0.0;
            for (int i = 0; i < V; ++i)
                for (int r = 0; r < R; ++r)
                    for (int t = 0; t < T; ++t) {
                        double z = emission::update_zeta(beliefs[i].means(r, t), beliefs[i].means(R, t),
                                                         bg.tau(r, t), bg.nu[i]);
                        if (panel.s(r, t) > 0)
                            change = std::max(change, std::abs(z - state.zeta[i](r, t)));
                        state.zeta[i](r, t) = z;
                    }
            entry.zeta_change = change;
            ++state.sweep;
            state.sweep_iteration = 0;
            state.previous_bound = std::numeric_limits<double>::quiet_NaN();
            if (stalled && change < opt.zeta_tol)
                state.converged = true;
        } else {
            state.previous_bound = bound;
        }
        state.trace.push_back(entry);
        if (on_iteration)
            on_iteration(entry);
        if (state.converged)
            break;
        state.dynamics = m_step(pooled, state.dynamics, opt.mode, opt.min_variance);
    }

    if (V > 0 && beliefs[0].means.size() == 0) {
        parallel_for(V, opt.workers, [&](int i) {
            beliefs[i] = kalman_smooth(taylor_observations(panel, i, state.zeta[i], bg), state.dynamics, priors[i]);
        });
    }
    result.state = std::move(state);
    result.beliefs = std::move(beliefs);
    return result;
}

} // namespace lexinf::kalman
