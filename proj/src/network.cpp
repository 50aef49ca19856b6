#include "lexinf/network.hpp"

#include "lexinf/errors.hpp"
#include "lexinf/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace lexinf::network {

using Eigen::MatrixXd;
using Eigen::VectorXd;

LagMoments::LagMoments(int regions)
    : xtx(MatrixXd::Zero(regions + 1, regions + 1)), xty(MatrixXd::Zero(regions + 1, regions))
{
}

void LagMoments::add_trajectory(const MatrixXd& eta)
{
    const int R = regions();
    if (eta.rows() < R)
        throw UsageError("trajectory has fewer rows than regions");
    const auto T = eta.cols();
    VectorXd x(R + 1);
    for (Eigen::Index t = 1; t < T; ++t) {
        x.head(R) = eta.col(t - 1).head(R);
        x[R] = 1.0;
        xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
        xty.noalias() += x * eta.col(t).head(R).transpose();
        ++rows;
    }
}

void LagMoments::add_rows(const MatrixXd& lagged, const MatrixXd& outcomes)
{
    // Only the lower triangle is read back; adding the full product keeps it exact.
    xtx.noalias() += lagged.transpose() * lagged;
    xty += lagged.transpose() * outcomes;
    rows += lagged.rows();
}

LagMoments& LagMoments::operator+=(const LagMoments& o)
{
    xtx += o.xtx;
    xty += o.xty;
    rows += o.rows;
    return *this;
}

namespace {

OlsFit solve_gram(MatrixXd gram, const MatrixXd& xty, double lambda)
{
    const auto P = gram.rows();
    const auto R = P - 1;
    // Only the lower triangle is authoritative.
    gram = gram.selfadjointView<Eigen::Lower>();
    for (Eigen::Index d = 0; d < R; ++d)
        gram(d, d) += lambda;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition) {
        std::ostringstream msg;
        msg << "Gram matrix is singular or ill-conditioned (condition " << (lo > 0 ? hi / lo : INFINITY)
            << "); use ridge_fit with lambda > 0";
        throw NumericalError(msg.str());
    }
    Eigen::LLT<MatrixXd> llt(gram);
    MatrixXd coef = llt.solve(xty); // (R+1) x R
    OlsFit fit;
    fit.A = coef.topRows(R).transpose();
    fit.bias = coef.row(R).transpose();
    return fit;
}

} // namespace

OlsFit solve_moments(const LagMoments& m, double lambda)
{
    if (m.rows < m.regions() + 1 && lambda <= 0)
        throw NumericalError("need at least as many lag pairs as regressors for OLS");
    return solve_gram(m.xtx, m.xty, lambda);
}

OlsFit ols_fit(const MatrixXd& lagged, const MatrixXd& outcomes)
{
    return ridge_fit(lagged, outcomes, 0.0);
}

OlsFit ridge_fit(const MatrixXd& lagged, const MatrixXd& outcomes, double lambda)
{
    if (lambda < 0)
        throw UsageError("ridge lambda must be non-negative");
    if (lagged.rows() != outcomes.rows() || lagged.cols() != outcomes.cols() + 1)
        throw UsageError("lagged must be N x (R+1) and outcomes N x R");
    if (lambda == 0.0 && lagged.rows() < lagged.cols())
        throw NumericalError("need at least as many lag pairs as regressors for OLS");
    MatrixXd gram = lagged.transpose() * lagged;
    return solve_gram(gram, lagged.transpose() * outcomes, lambda);
}

RidgeSelection select_ridge_lambda(const std::vector<MatrixXd>& trajectories, int R, std::span<const double> grid,
                                   int folds)
{
    if (grid.empty())
        throw UsageError("empty lambda grid");
    if (trajectories.empty())
        throw UsageError("no trajectories for cross-validation");
    const auto T = trajectories.front().cols();
    if (folds < 1 || T < folds + 2)
        throw UsageError("series too short for the requested number of folds");
    RidgeSelection sel;
    sel.grid.assign(grid.begin(), grid.end());
    sel.scores.assign(grid.size(), 0.0);
    // Blocks of lag-pair end times 1..T-1; fold f trains on blocks [0, f], tests on f+1.
    const auto pairs = T - 1;
    auto cut = [&](int b) { return 1 + (pairs * b) / (folds + 1); };
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double err = 0.0;
        long n = 0;
        for (int f = 0; f < folds; ++f) {
            LagMoments train(R);
            for (const auto& eta : trajectories)
                train.add_trajectory(eta.leftCols(cut(f + 1)));
            OlsFit fit = solve_gram(train.xtx, train.xty, grid[g] > 0 ? grid[g] : 0.0);
            for (const auto& eta : trajectories)
                for (Eigen::Index t = cut(f + 1); t < cut(f + 2); ++t) {
                    VectorXd pred = fit.A * eta.col(t - 1).head(R) + fit.bias;
                    err += (eta.col(t).head(R) - pred).squaredNorm();
                    n += R;
                }
        }
        sel.scores[g] = err / static_cast<double>(std::max<long>(n, 1));
    }
    auto best = std::min_element(sel.scores.begin(), sel.scores.end()) - sel.scores.begin();
    sel.lambda = sel.grid[best];
    return sel;
}

int NetworkEstimate::discoveries() const
{
    return static_cast<int>(significant.count());
}

DrawAccumulator::DrawAccumulator(int regions, int draws, Pooling pooling, double ridge_lambda)
    : regions_(regions), pooling_(pooling), lambda_(ridge_lambda)
{
    if (pooling_ == Pooling::pooled)
        moments_.assign(draws, LagMoments(regions));
    else
        sums_.assign(draws, MatrixXd::Zero(regions, regions));
}

void DrawAccumulator::add_word(const std::vector<MatrixXd>& draws)
{
    const auto K = pooling_ == Pooling::pooled ? moments_.size() : sums_.size();
    if (draws.size() != K)
        throw UsageError("word supplied a different number of draws than expected");
    for (std::size_t k = 0; k < K; ++k) {
        if (pooling_ == Pooling::pooled) {
            moments_[k].add_trajectory(draws[k]);
        } else {
            LagMoments m(regions_);
            m.add_trajectory(draws[k]);
            sums_[k] += solve_moments(m, lambda_).A;
        }
    }
    ++words_;
}

void DrawAccumulator::set_ridge_lambda(double lambda)
{
    if (pooling_ == Pooling::per_word && words_ > 0)
        throw UsageError("per-word pooling fixes the ridge penalty before the first word");
    lambda_ = lambda;
}

std::vector<MatrixXd> DrawAccumulator::coefficient_draws() const
{
    std::vector<MatrixXd> out;
    if (pooling_ == Pooling::pooled) {
        for (const auto& m : moments_)
            out.push_back(solve_moments(m, lambda_).A);
    } else {
        for (const auto& s : sums_)
            out.push_back(s / static_cast<double>(std::max(words_, 1)));
    }
    return out;
}

NetworkEstimate summarize_draws(const std::vector<MatrixXd>& draws, ZMode z_mode, double q)
{
    const auto K = static_cast<int>(draws.size());
    if (K < 2)
        throw DataError("network estimation needs at least two trajectory draws");
    const auto R = draws.front().rows();
    NetworkEstimate est;
    est.draws = K;
    est.z_mode = z_mode;
    est.q = q;
    est.mu = MatrixXd::Zero(R, R);
    for (const auto& a : draws)
        est.mu += a;
    est.mu /= K;
    est.sigma2 = MatrixXd::Zero(R, R);
    for (const auto& a : draws)
        est.sigma2 += (a - est.mu).cwiseAbs2();
    est.sigma2 /= K;

    est.z = MatrixXd::Constant(R, R, std::numeric_limits<double>::quiet_NaN());
    est.degenerate.setConstant(R, R, false);
    est.significant.setConstant(R, R, false);
    std::vector<double> tested;
    for (Eigen::Index m = 0; m < R; ++m)
        for (Eigen::Index n = 0; n < R; ++n) {
            double mu = est.mu(m, n), s2 = est.sigma2(m, n);
            double sd = std::sqrt(s2);
            if (!std::isfinite(s2) || sd <= 1e-12 * std::max(1.0, std::abs(mu))) {
                est.degenerate(m, n) = true;
                continue;
            }
            est.z(m, n) = z_mode == ZMode::wald ? mu / sd : mu / s2;
            if (m != n)
                tested.push_back(est.z(m, n));
        }
    const double tests = static_cast<double>(R) * static_cast<double>(R - 1);
    est.threshold = tested.empty() ? std::numeric_limits<double>::infinity() : fdr_threshold(tested, tests, q);
    for (Eigen::Index m = 0; m < R; ++m)
        for (Eigen::Index n = 0; n < R; ++n)
            est.significant(m, n) = m != n && !est.degenerate(m, n) && est.z(m, n) >= est.threshold;
    return est;
}

NetworkEstimate estimate_network(const std::vector<std::vector<MatrixXd>>& samples, const NetworkOptions& options)
{
    if (samples.empty())
        throw DataError("no trajectory samples");
    const auto K = static_cast<int>(samples.front().size());
    if (K < 2)
        throw DataError("network estimation needs at least two trajectory draws");
    const int R = static_cast<int>(samples.front().front().rows()) - 1;
    DrawAccumulator acc(R, K, options.pooling, options.ridge_lambda);
    for (const auto& word : samples)
        acc.add_word(word);
    return summarize_draws(acc.coefficient_draws(), options.z_mode, options.q);
}

double fdr_threshold(std::span<const double> z, double tests, double q)
{
    std::vector<double> sorted;
    for (double v : z)
        if (std::isfinite(v))
            sorted.push_back(v);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double best = std::numeric_limits<double>::infinity();
    // Walking down the sorted list, the pass count at candidate j is the
    // number of values >= sorted[j], i.e. the last index of its tie group + 1.
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        std::size_t last = j;
        while (last + 1 < sorted.size() && sorted[last + 1] == sorted[j])
            ++last;
        double passed = static_cast<double>(last + 1);
        if (tests * normal_sf(sorted[j]) / passed <= q)
            best = sorted[j];
        j = last;
    }
    return best;
}

std::vector<InfluenceEdge> extract_edges(const NetworkEstimate& est, std::optional<double> mu_min)
{
    std::vector<InfluenceEdge> edges;
    const int R = est.regions();
    for (int m = 0; m < R; ++m)
        for (int n = 0; n < R; ++n) {
            if (!est.significant(m, n))
                continue;
            if (mu_min && !(est.mu(m, n) > *mu_min))
                continue;
            edges.push_back({n, m, est.mu(m, n), std::sqrt(est.sigma2(m, n)), est.z(m, n), true});
        }
    std::sort(edges.begin(), edges.end(), [](const InfluenceEdge& a, const InfluenceEdge& b) {
        if (a.z != b.z)
            return a.z > b.z;
        if (a.sender != b.sender)
            return a.sender < b.sender;
        return a.receiver < b.receiver;
    });
    return edges;
}

namespace {

std::string fmt(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double parse_double(const std::string& s)
{
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    return std::stod(s);
}

} // namespace

void write_edges_csv(const NetworkEstimate& est, const std::vector<int>& ids, const std::filesystem::path& path)
{
    const int R = est.regions();
    if (static_cast<int>(ids.size()) != R)
        throw UsageError("region id list does not match network size");
    std::vector<InfluenceEdge> rows;
    for (int m = 0; m < R; ++m)
        for (int n = 0; n < R; ++n)
            if (m != n)
                rows.push_back({n, m, est.mu(m, n), std::sqrt(est.sigma2(m, n)), est.z(m, n), est.significant(m, n)});
    std::stable_sort(rows.begin(), rows.end(), [](const InfluenceEdge& a, const InfluenceEdge& b) {
        bool an = std::isnan(a.z), bn = std::isnan(b.z);
        if (an != bn)
            return bn;
        if (!an && a.z != b.z)
            return a.z > b.z;
        if (a.sender != b.sender)
            return a.sender < b.sender;
        return a.receiver < b.receiver;
    });
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "sender_id,receiver_id,mu,sigma,z,significant\n";
    for (const auto& e : rows)
        out << ids[e.sender] << ',' << ids[e.receiver] << ',' << fmt(e.mu) << ',' << fmt(e.sigma) << ','
            << fmt(e.z) << ',' << (e.significant ? 1 : 0) << '\n';
}

std::vector<InfluenceEdge> read_edges_csv(const std::filesystem::path& path, bool significant_only)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot read edges file " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("sender_id,receiver_id", 0) != 0)
        throw DataError("unexpected header in " + path.string());
    std::vector<InfluenceEdge> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() != 6)
            throw DataError("bad edge row: " + line);
        try {
            InfluenceEdge e{std::stoi(cells[0]), std::stoi(cells[1]), parse_double(cells[2]),
                            parse_double(cells[3]), parse_double(cells[4]), cells[5] == "1"};
            if (!significant_only || e.significant)
                out.push_back(e);
        } catch (const std::exception&) {
            throw DataError("bad edge row: " + line);
        }
    }
    return out;
}

nlohmann::json network_to_json(const NetworkEstimate& est, const std::vector<int>& ids, const nlohmann::json& meta)
{
    auto mat = [](const auto& m, auto conv) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                row.push_back(conv(m(r, c)));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j = {
        {"format", "lexinf-network"},
        {"format_version", 1},
        {"region_ids", ids},
        {"mu", mat(est.mu, num)},
        {"sigma2", mat(est.sigma2, num)},
        {"z", mat(est.z, num)},
        {"significant", mat(est.significant, [](bool b) { return nlohmann::json(b ? 1 : 0); })},
        {"threshold", num(est.threshold)},
        {"discoveries", est.discoveries()},
        {"tested_pairs", est.regions() * (est.regions() - 1)},
        {"draws", est.draws},
        {"q", est.q},
        {"z_mode", est.z_mode == ZMode::wald ? "wald" : "literal"},
    };
    if (!meta.is_null())
        j["metadata"] = meta;
    return j;
}

void write_network_dot(const NetworkEstimate& est, const std::vector<std::string>& names,
                       const std::filesystem::path& path, std::optional<double> mu_min)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"' || ch == '\\')
                q += '\\';
            q += ch;
        }
        return q + "\"";
    };
    out << "digraph lexical_influence {\n";
    for (int r = 0; r < est.regions(); ++r)
        out << "  n" << r << " [label=" << quote(r < static_cast<int>(names.size()) ? names[r] : std::to_string(r))
            << "];\n";
    for (const auto& e : extract_edges(est, mu_min))
        out << "  n" << e.sender << " -> n" << e.receiver << " [weight=" << fmt(e.mu) << ", z=" << fmt(e.z) << "];\n";
    out << "}\n";
}

} // namespace lexinf::network
