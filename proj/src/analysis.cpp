#include "lexinf/analysis.hpp"

#include "lexinf/emission.hpp"
#include "lexinf/errors.hpp"
#include "lexinf/numeric.hpp"
#include "lexinf/panel.hpp"
#include "lexinf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace lexinf::analysis {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Two-tailed p < .01 normal quantile.
constexpr double kZ995 = 2.5758293035489004;

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

AttributeTable read_attributes_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot read attributes file " + path.string());
    std::string line;
    std::getline(in, line);
    if (trim(line)
        != "region_id,population,lat,lon,pct_white,pct_afam,pct_hispanic,pct_urban,pct_renter,log_income")
        throw DataError("unexpected attributes header in " + path.string());
    AttributeTable out;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        std::vector<double> v;
        std::string cell;
        std::istringstream ss(line);
        try {
            while (std::getline(ss, cell, ','))
                v.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw DataError("bad attribute row: " + line);
        }
        if (v.size() != 10)
            throw DataError("bad attribute row: " + line);
        RegionAttributes a{static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
        if (!(a.population > 0))
            throw DataError("population must be positive for region " + std::to_string(a.region_id));
        for (double f : {a.pct_white, a.pct_afam, a.pct_hispanic, a.pct_urban, a.pct_renter})
            if (f < 0 || f > 1)
                throw DataError("demographic fractions must lie in [0, 1] for region " + std::to_string(a.region_id));
        if (!out.emplace(a.region_id, a).second)
            throw DataError("duplicate region " + std::to_string(a.region_id) + " in attributes");
    }
    return out;
}

void write_attributes_csv(const std::vector<RegionAttributes>& attrs, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "region_id,population,lat,lon,pct_white,pct_afam,pct_hispanic,pct_urban,pct_renter,log_income\n";
    out.precision(12);
    for (const auto& a : attrs)
        out << a.region_id << ',' << a.population << ',' << a.latitude << ',' << a.longitude << ',' << a.pct_white
            << ',' << a.pct_afam << ',' << a.pct_hispanic << ',' << a.pct_urban << ',' << a.pct_renter << ','
            << a.log_income << '\n';
}

VectorXd pair_features(const RegionAttributes& a, const RegionAttributes& b)
{
    VectorXd f(8);
    f << std::log(a.population) + std::log(b.population), haversine_km(a.latitude, a.longitude, b.latitude, b.longitude),
        std::abs(a.pct_white - b.pct_white), std::abs(a.pct_afam - b.pct_afam),
        std::abs(a.pct_hispanic - b.pct_hispanic), std::abs(a.pct_urban - b.pct_urban),
        std::abs(a.pct_renter - b.pct_renter), std::abs(a.log_income - b.log_income);
    return f;
}

VectorXd directed_difference(const RegionAttributes& a, const RegionAttributes& b)
{
    VectorXd f(7);
    f << std::log(a.population) - std::log(b.population), a.pct_white - b.pct_white, a.pct_afam - b.pct_afam,
        a.pct_hispanic - b.pct_hispanic, a.pct_urban - b.pct_urban, a.pct_renter - b.pct_renter,
        a.log_income - b.log_income;
    return f;
}

const RegionAttributes& lookup(const AttributeTable& attrs, int region_id)
{
    auto it = attrs.find(region_id);
    if (it == attrs.end())
        throw DataError("missing attributes for region " + std::to_string(region_id));
    return it->second;
}

std::vector<std::pair<int, int>> sample_null_pairs(const std::vector<network::InfluenceEdge>& edges, int n,
                                                   std::uint64_t seed)
{
    if (edges.empty())
        throw DataError("cannot sample null pairs from an empty network");
    std::set<std::pair<int, int>> linked;
    for (const auto& e : edges)
        linked.emplace(e.sender, e.receiver);
    Rng rng = substream(seed, {0x4e554c4cULL});
    std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
    std::vector<std::pair<int, int>> out;
    out.reserve(std::max(n, 0));
    long attempts = 0, rejected = 0;
    while (static_cast<int>(out.size()) < n) {
        int s = edges[pick(rng)].sender;
        int r = edges[pick(rng)].receiver;
        ++attempts;
        if (s == r || linked.contains({s, r})) {
            ++rejected;
            if (attempts >= 1000 && static_cast<double>(rejected) > 0.99 * static_cast<double>(attempts))
                throw DataError("null-pair sampling rejected more than 99% of proposals; network is degenerate");
            continue;
        }
        out.emplace_back(s, r);
    }
    return out;
}

Standardizer Standardizer::fit(const MatrixXd& x)
{
    Standardizer s;
    const auto n = x.rows();
    s.mean = n > 0 ? VectorXd(x.colwise().mean().transpose()) : VectorXd::Zero(x.cols());
    s.sd = VectorXd::Ones(x.cols());
    s.constant.assign(x.cols(), true);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double var = n > 0 ? (x.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(n) : 0.0;
        double sd = std::sqrt(var);
        if (sd > 1e-12 * std::max(1.0, std::abs(s.mean[j]))) {
            s.sd[j] = sd;
            s.constant[j] = false;
        }
    }
    return s;
}

MatrixXd Standardizer::apply(const MatrixXd& x) const
{
    MatrixXd out = x.rowwise() - mean.transpose();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        out.col(j) = constant[j] ? VectorXd::Zero(x.rows()) : VectorXd(out.col(j) / sd[j]);
    return out;
}

namespace {

double bernoulli_loglik(const MatrixXd& z, const VectorXd& y, const VectorXd& w)
{
    VectorXd eta = z * w;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        ll += y[i] * emission::log_logistic(eta[i]) + (1.0 - y[i]) * emission::log1m_logistic(eta[i]);
    return ll;
}

} // namespace

RegressionFit fit_logistic(const MatrixXd& x, const std::vector<int>& labels, int max_iter, double tol)
{
    const auto n = x.rows(), p = x.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw UsageError("label count does not match observations");
    // Constant columns carry no information; fit the rest.
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j) {
        double lo = n > 0 ? x.col(j).minCoeff() : 0.0, hi = n > 0 ? x.col(j).maxCoeff() : 0.0;
        if (hi - lo > 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi))))
            active.push_back(j);
    }
    const auto q = static_cast<Eigen::Index>(active.size()) + 1;
    MatrixXd z(n, q);
    z.col(0).setOnes();
    for (std::size_t k = 0; k < active.size(); ++k)
        z.col(static_cast<Eigen::Index>(k) + 1) = x.col(active[k]);
    VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        y[i] = labels[i] ? 1.0 : 0.0;

    VectorXd w = VectorXd::Zero(q);
    double ll = bernoulli_loglik(z, y, w);
    RegressionFit fit;
    MatrixXd info(q, q);
    auto information = [&](const VectorXd& wv, VectorXd& grad) {
        VectorXd eta = z * wv;
        VectorXd prob(n), weight(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            prob[i] = emission::logistic(eta[i]);
            weight[i] = prob[i] * (1.0 - prob[i]);
        }
        grad = z.transpose() * (y - prob);
        info = z.transpose() * weight.asDiagonal() * z;
    };

    VectorXd grad;
    bool separated = false;
    for (int iter = 0; iter < max_iter; ++iter) {
        information(w, grad);
        fit.iterations = iter;
        if (grad.norm() < tol) {
            fit.converged = true;
            break;
        }
        Eigen::LDLT<MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-14 * info.diagonal().maxCoeff()) {
            if (w.cwiseAbs().maxCoeff() > 10) {
                separated = true;
                break;
            }
            throw NumericalError("singular information matrix in logistic regression");
        }
        VectorXd step = ldlt.solve(grad);
        double t = 1.0;
        VectorXd trial = w + step;
        double trial_ll = bernoulli_loglik(z, y, trial);
        while (!(trial_ll >= ll - 1e-12 * std::abs(ll)) && t > 1e-10) {
            t *= 0.5;
            trial = w + t * step;
            trial_ll = bernoulli_loglik(z, y, trial);
        }
        w = trial;
        ll = trial_ll;
        fit.iterations = iter + 1;
        if (w.cwiseAbs().maxCoeff() > 30.0) {
            separated = true;
            break;
        }
    }
    if (!separated && !fit.converged) {
        information(w, grad);
        fit.converged = grad.norm() < tol;
    }
    // A fit that classifies every point with near certainty sits on a
    // separating hyperplane even when the weights stayed moderate.
    if (!separated && n > 0) {
        VectorXd eta = z * w;
        bool perfect = true;
        for (Eigen::Index i = 0; i < n && perfect; ++i)
            perfect = std::abs(y[i] - emission::logistic(eta[i])) < 1e-6;
        separated = perfect;
    }
    if (separated)
        fit.converged = false;

    information(w, grad);
    VectorXd se = VectorXd::Constant(q, std::numeric_limits<double>::quiet_NaN());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(info);
    if (es.eigenvalues().minCoeff() > 1e-14 * std::max(1.0, es.eigenvalues().maxCoeff())) {
        MatrixXd cov = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
        se = cov.diagonal().cwiseSqrt();
    } else if (!separated) {
        throw NumericalError("singular information matrix in logistic regression");
    }

    fit.weights = VectorXd::Zero(p + 1);
    fit.std_errors = VectorXd::Constant(p + 1, std::numeric_limits<double>::quiet_NaN());
    fit.weights[0] = w[0];
    fit.std_errors[0] = se[0];
    for (std::size_t k = 0; k < active.size(); ++k) {
        fit.weights[active[k] + 1] = w[static_cast<Eigen::Index>(k) + 1];
        fit.std_errors[active[k] + 1] = se[static_cast<Eigen::Index>(k) + 1];
    }
    fit.t_values = VectorXd::Constant(p + 1, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index j = 0; j <= p; ++j)
        if (fit.std_errors[j] > 0)
            fit.t_values[j] = fit.weights[j] / fit.std_errors[j];
    fit.log_likelihood = ll;
    return fit;
}

std::vector<int> ablation_columns(Ablation ablation)
{
    switch (ablation) {
    case Ablation::all:
        return {0, 1, 2, 3, 4, 5, 6, 7};
    case Ablation::no_population:
        return {1, 2, 3, 4, 5, 6, 7};
    case Ablation::no_geography:
        return {0, 2, 3, 4, 5, 6, 7};
    case Ablation::no_demographics:
        return {0, 1};
    }
    return {};
}

std::string to_string(Ablation ablation)
{
    switch (ablation) {
    case Ablation::all:
        return "all features";
    case Ablation::no_population:
        return "-population";
    case Ablation::no_geography:
        return "-geography";
    case Ablation::no_demographics:
        return "-demographics";
    }
    return {};
}

namespace {

MatrixXd select_rows_cols(const std::vector<PairObservation>& obs, const std::vector<std::size_t>& rows,
                          const std::vector<int>& cols)
{
    MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = obs[rows[i]].features[cols[j]];
    return x;
}

bool canonical_less(const PairObservation& a, const PairObservation& b)
{
    if (a.label != b.label)
        return a.label < b.label;
    if (a.sender != b.sender)
        return a.sender < b.sender;
    if (a.receiver != b.receiver)
        return a.receiver < b.receiver;
    return std::lexicographical_compare(a.features.begin(), a.features.end(), b.features.begin(), b.features.end());
}

} // namespace

double cv_accuracy(const std::vector<PairObservation>& input, int folds, const std::vector<int>& columns,
                   std::uint64_t seed)
{
    if (folds < 2)
        throw UsageError("cross-validation needs at least two folds");
    std::vector<PairObservation> obs = input;
    std::sort(obs.begin(), obs.end(), canonical_less);
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < obs.size(); ++i)
        (obs[i].label ? pos : neg).push_back(i);
    if (static_cast<int>(pos.size()) < folds || static_cast<int>(neg.size()) < folds)
        throw UsageError("each class needs at least as many observations as folds");
    Rng rng = substream(seed, {0xC0FFEEULL});
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<int> fold_of(obs.size());
    for (std::size_t k = 0; k < pos.size(); ++k)
        fold_of[pos[k]] = static_cast<int>(k % folds);
    for (std::size_t k = 0; k < neg.size(); ++k)
        fold_of[neg[k]] = static_cast<int>(k % folds);

    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < obs.size(); ++i)
            (fold_of[i] == f ? test : train).push_back(i);
        MatrixXd xtrain = select_rows_cols(obs, train, columns);
        auto scaler = Standardizer::fit(xtrain);
        std::vector<int> ytrain;
        for (auto i : train)
            ytrain.push_back(obs[i].label ? 1 : 0);
        auto fit = fit_logistic(scaler.apply(xtrain), ytrain);
        MatrixXd xtest = scaler.apply(select_rows_cols(obs, test, columns));
        VectorXd score = xtest * fit.weights.tail(columns.size());
        int correct = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            bool predicted = score[static_cast<Eigen::Index>(i)] + fit.weights[0] >= 0.0;
            correct += predicted == obs[test[i]].label;
        }
        total += static_cast<double>(correct) / static_cast<double>(test.size());
    }
    return total / folds;
}

namespace {

GroupSummary summarize(const std::vector<VectorXd>& rows, int dims)
{
    GroupSummary g;
    g.n = static_cast<int>(rows.size());
    g.mean = VectorXd::Zero(dims);
    g.half_width = VectorXd::Zero(dims);
    if (rows.empty())
        return g;
    for (const auto& r : rows)
        g.mean += r;
    g.mean /= g.n;
    if (g.n > 1) {
        VectorXd var = VectorXd::Zero(dims);
        for (const auto& r : rows)
            var += (r - g.mean).cwiseAbs2();
        var /= (g.n - 1);
        g.half_width = kZ995 * (var / g.n).cwiseSqrt();
    }
    return g;
}

} // namespace

SymmetricComparison symmetric_comparison(const std::vector<network::InfluenceEdge>& edges,
                                         const AttributeTable& attrs, int n_null, std::uint64_t seed)
{
    SymmetricComparison out;
    out.columns.assign(kPairFeatureNames.begin() + 1, kPairFeatureNames.end());
    std::vector<VectorXd> linked, unlinked;
    for (const auto& e : edges)
        linked.push_back(pair_features(lookup(attrs, e.sender), lookup(attrs, e.receiver)).tail(7));
    if (!edges.empty() && n_null > 0)
        for (auto [s, r] : sample_null_pairs(edges, n_null, seed))
            unlinked.push_back(pair_features(lookup(attrs, s), lookup(attrs, r)).tail(7));
    out.linked = summarize(linked, 7);
    out.unlinked = summarize(unlinked, 7);
    return out;
}

std::vector<std::pair<int, int>> asymmetric_pairs(const std::vector<network::InfluenceEdge>& edges)
{
    std::set<std::pair<int, int>> linked;
    for (const auto& e : edges)
        if (e.sender != e.receiver)
            linked.emplace(e.sender, e.receiver);
    std::vector<std::pair<int, int>> out;
    for (auto [s, r] : linked)
        if (!linked.contains({r, s}))
            out.emplace_back(s, r);
    return out;
}

AsymmetricReport asymmetric_analysis(const std::vector<network::InfluenceEdge>& edges, const AttributeTable& attrs,
                                     std::uint64_t seed, int folds)
{
    AsymmetricReport rep;
    rep.pairs = asymmetric_pairs(edges);
    const int n = static_cast<int>(rep.pairs.size());
    rep.difference = VectorXd::Zero(7);
    rep.std_error = VectorXd::Constant(7, std::numeric_limits<double>::quiet_NaN());
    rep.z = VectorXd::Constant(7, std::numeric_limits<double>::quiet_NaN());
    if (n == 0)
        return rep;
    MatrixXd diffs(n, 7);
    for (int k = 0; k < n; ++k)
        diffs.row(k) = directed_difference(lookup(attrs, rep.pairs[k].first), lookup(attrs, rep.pairs[k].second));
    rep.difference = diffs.colwise().mean().transpose();
    if (n > 1) {
        VectorXd var = (diffs.rowwise() - rep.difference.transpose()).cwiseAbs2().colwise().sum().transpose() / (n - 1);
        rep.std_error = (var / n).cwiseSqrt();
        for (int j = 0; j < 7; ++j)
            if (rep.std_error[j] > 0)
                rep.z[j] = rep.difference[j] / rep.std_error[j];
    }

    // Sender identification: each pair is presented in a seeded random
    // orientation; the label says whether the first region is the sender.
    Rng rng = substream(seed, {0xA5A5ULL});
    std::bernoulli_distribution coin(0.5);
    std::vector<PairObservation> obs;
    for (int k = 0; k < n; ++k) {
        bool forward = coin(rng);
        obs.push_back({rep.pairs[k].first, rep.pairs[k].second, forward,
                       forward ? VectorXd(diffs.row(k).transpose()) : VectorXd(-diffs.row(k).transpose())});
    }
    int positives = static_cast<int>(std::count_if(obs.begin(), obs.end(), [](const auto& o) { return o.label; }));
    if (positives < 2 || n - positives < 2)
        return rep;
    MatrixXd x(n, 7);
    std::vector<int> y(n);
    for (int k = 0; k < n; ++k) {
        x.row(k) = obs[k].features.transpose();
        y[k] = obs[k].label;
    }
    try {
        rep.fit = fit_logistic(Standardizer::fit(x).apply(x), y);
    } catch (const NumericalError&) {
        rep.fit.reset();
    }
    if (positives >= folds && n - positives >= folds) {
        try {
            rep.accuracy = cv_accuracy(obs, folds, {0, 1, 2, 3, 4, 5, 6}, seed);
        } catch (const NumericalError&) {
            rep.accuracy = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return rep;
}

namespace {

nlohmann::json num(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json fit_json(const RegressionFit& fit, const std::vector<std::string>& names)
{
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto k = static_cast<Eigen::Index>(j);
        rows.push_back({{"name", names[j]},
                        {"estimate", num(fit.weights[k])},
                        {"std_error", num(fit.std_errors[k])},
                        {"t_value", num(fit.t_values[k])}});
    }
    return {{"converged", fit.converged}, {"iterations", fit.iterations}, {"coefficients", rows}};
}

} // namespace

nlohmann::json analysis_report(const std::vector<network::InfluenceEdge>& edges, const AttributeTable& attrs,
                               const AnalysisOptions& options)
{
    for (const auto& e : edges) {
        std::vector<int> missing;
        for (int id : {e.sender, e.receiver})
            if (!attrs.contains(id))
                missing.push_back(id);
        if (!missing.empty()) {
            std::string msg = "missing attributes for region(s)";
            for (int id : missing)
                msg += " " + std::to_string(id);
            throw DataError(msg);
        }
    }
    nlohmann::json report = {{"format", "lexinf-analysis"}, {"format_version", kFormatVersion}};
    nlohmann::json warnings = nlohmann::json::array();
    const int linked = static_cast<int>(edges.size());
    const int n_null = options.n_null >= 0 ? options.n_null : linked;
    report["linked_pairs"] = linked;

    // Table 2
    nlohmann::json table2 = {{"columns", nlohmann::json::array()}, {"linked", nullptr}, {"unlinked", nullptr}};
    std::vector<std::pair<int, int>> nulls;
    if (linked > 0) {
        try {
            nulls = sample_null_pairs(edges, n_null, options.seed);
        } catch (const DataError& e) {
            warnings.push_back(e.what());
        }
    }
    report["null_pairs"] = static_cast<int>(nulls.size());
    {
        std::vector<VectorXd> lf, nf;
        for (const auto& e : edges)
            lf.push_back(pair_features(lookup(attrs, e.sender), lookup(attrs, e.receiver)).tail(7));
        for (auto [s, r] : nulls)
            nf.push_back(pair_features(lookup(attrs, s), lookup(attrs, r)).tail(7));
        auto lg = summarize(lf, 7), ng = summarize(nf, 7);
        for (std::size_t j = 1; j < kPairFeatureNames.size(); ++j)
            table2["columns"].push_back(kPairFeatureNames[j]);
        auto group = [](const GroupSummary& g) {
            nlohmann::json mean = nlohmann::json::array(), hw = nlohmann::json::array();
            for (Eigen::Index j = 0; j < g.mean.size(); ++j) {
                mean.push_back(num(g.mean[j]));
                hw.push_back(num(g.half_width[j]));
            }
            return nlohmann::json{{"n", g.n}, {"mean", mean}, {"half_width", hw}};
        };
        table2["linked"] = group(lg);
        table2["unlinked"] = group(ng);
    }
    report["table2_symmetric_differences"] = table2;

    // Tables 3a and 3b
    std::vector<PairObservation> obs;
    for (const auto& e : edges)
        obs.push_back({e.sender, e.receiver, true, pair_features(lookup(attrs, e.sender), lookup(attrs, e.receiver))});
    for (auto [s, r] : nulls)
        obs.push_back({s, r, false, pair_features(lookup(attrs, s), lookup(attrs, r))});
    nlohmann::json table3a = nullptr, table3b = nlohmann::json::array();
    const int npos = linked, nneg = static_cast<int>(nulls.size());
    if (npos >= 2 && nneg >= 2) {
        MatrixXd x(static_cast<Eigen::Index>(obs.size()), 8);
        std::vector<int> y;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = obs[i].features.transpose();
            y.push_back(obs[i].label);
        }
        std::vector<std::string> names = {"intercept"};
        names.insert(names.end(), kPairFeatureNames.begin(), kPairFeatureNames.end());
        try {
            table3a = fit_json(fit_logistic(Standardizer::fit(x).apply(x), y), names);
        } catch (const NumericalError& e) {
            warnings.push_back(std::string("link regression failed: ") + e.what());
        }
        if (npos >= options.folds && nneg >= options.folds) {
            double full = std::numeric_limits<double>::quiet_NaN();
            try {
                for (auto ab :
                     {Ablation::all, Ablation::no_population, Ablation::no_geography, Ablation::no_demographics}) {
                    double acc = cv_accuracy(obs, options.folds, ablation_columns(ab), options.seed);
                    if (ab == Ablation::all)
                        full = acc;
                    table3b.push_back(
                        {{"feature_set", to_string(ab)},
                         {"accuracy", 100.0 * acc},
                         {"gap", ab == Ablation::all ? nlohmann::json(nullptr) : num(100.0 * (full - acc))}});
                }
            } catch (const NumericalError& e) {
                table3b = nlohmann::json::array();
                warnings.push_back(std::string("link accuracy cross-validation failed: ") + e.what());
            }
        } else {
            warnings.push_back("too few pairs for cross-validated link accuracy");
        }
    } else {
        warnings.push_back("too few linked or null pairs for the link regression");
    }
    report["table3a_link_regression"] = table3a;
    report["table3b_ablation_accuracy"] = table3b;

    // Tables 4 and 5
    auto asym = asymmetric_analysis(edges, attrs, options.seed, options.folds);
    report["asymmetric_pairs"] = static_cast<int>(asym.pairs.size());
    nlohmann::json table4 = nlohmann::json::array();
    if (!asym.pairs.empty())
        for (std::size_t j = 0; j < kDirectedFeatureNames.size(); ++j) {
            auto k = static_cast<Eigen::Index>(j);
            table4.push_back({{"name", kDirectedFeatureNames[j]},
                              {"difference", num(asym.difference[k])},
                              {"std_error", num(asym.std_error[k])},
                              {"z", num(asym.z[k])}});
        }
    report["table4_sender_receiver_differences"] = table4;
    nlohmann::json table5 = nullptr;
    if (asym.fit) {
        std::vector<std::string> names = {"intercept"};
        names.insert(names.end(), kDirectedFeatureNames.begin(), kDirectedFeatureNames.end());
        table5 = fit_json(*asym.fit, names);
        table5["cv_accuracy"] = num(100.0 * asym.accuracy);
    } else if (!asym.pairs.empty()) {
        warnings.push_back("too few asymmetric pairs for the direction regression");
    }
    report["table5_direction_regression"] = table5;
    report["warnings"] = warnings;
    return report;
}

namespace {

std::string cell(const nlohmann::json& v, int precision = 3)
{
    if (v.is_null())
        return "-";
    std::ostringstream ss;
    ss.precision(precision);
    ss << v.get<double>();
    return ss.str();
}

void regression_table(std::ostringstream& md, const nlohmann::json& fit)
{
    md << "| | estimate | s.e. | t-value |\n|---|---|---|---|\n";
    for (const auto& row : fit["coefficients"])
        md << "| " << row["name"].get<std::string>() << " | " << cell(row["estimate"]) << " | "
           << cell(row["std_error"]) << " | " << cell(row["t_value"]) << " |\n";
    if (!fit["converged"].get<bool>())
        md << "\n(not converged: possible separation)\n";
}

} // namespace

std::string report_markdown(const nlohmann::json& r)
{
    std::ostringstream md;
    md << "# Influence network analysis\n\n";
    md << "Linked pairs: " << r["linked_pairs"] << ", null pairs: " << r["null_pairs"]
       << ", asymmetric pairs: " << r["asymmetric_pairs"] << "\n\n";

    md << "## Table 2: distances and absolute differences, linked vs. unlinked pairs\n\n";
    const auto& t2 = r["table2_symmetric_differences"];
    md << "| |";
    for (const auto& c : t2["columns"])
        md << ' ' << c.get<std::string>() << " |";
    md << "\n|---|";
    for (std::size_t j = 0; j < t2["columns"].size(); ++j)
        md << "---|";
    md << '\n';
    for (const char* group : {"linked", "unlinked"}) {
        md << "| " << group << " |";
        const auto& g = t2[group];
        for (std::size_t j = 0; j < g["mean"].size(); ++j)
            md << ' ' << cell(g["mean"][j]) << " ± " << cell(g["half_width"][j], 2) << " |";
        md << '\n';
    }
    md << "\nIntervals are two-tailed at p < .01.\n\n";

    md << "## Table 3a: logistic regression predicting links\n\n";
    if (r["table3a_link_regression"].is_null())
        md << "(not available)\n";
    else
        regression_table(md, r["table3a_link_regression"]);
    md << "\n## Table 3b: link accuracy with ablated feature sets\n\n";
    md << "| feature set | accuracy | gap |\n|---|---|---|\n";
    for (const auto& row : r["table3b_ablation_accuracy"])
        md << "| " << row["feature_set"].get<std::string>() << " | " << cell(row["accuracy"]) << " | "
           << (row["gap"].is_null() ? std::string() : cell(row["gap"], 2)) << " |\n";

    md << "\n## Table 4: sender minus receiver differences\n\n";
    const auto& t4 = r["table4_sender_receiver_differences"];
    if (t4.empty()) {
        md << "(no asymmetric pairs)\n";
    } else {
        md << "| |";
        for (const auto& row : t4)
            md << ' ' << row["name"].get<std::string>() << " |";
        md << "\n|---|";
        for (std::size_t j = 0; j < t4.size(); ++j)
            md << "---|";
        md << '\n';
        for (const char* key : {"difference", "std_error", "z"}) {
            md << "| " << (std::string(key) == "std_error" ? "s.e." : std::string(key == std::string("z") ? "z-score" : key))
               << " |";
            for (const auto& row : t4)
                md << ' ' << cell(row[key]) << " |";
            md << '\n';
        }
    }
    md << "\n## Table 5: predicting the direction of influence\n\n";
    if (r["table5_direction_regression"].is_null()) {
        md << "(not available)\n";
    } else {
        regression_table(md, r["table5_direction_regression"]);
        md << "\n5-fold accuracy: " << cell(r["table5_direction_regression"]["cv_accuracy"]) << "\n";
    }
    if (!r["warnings"].empty()) {
        md << "\n## Warnings\n\n";
        for (const auto& w : r["warnings"])
            md << "- " << w.get<std::string>() << '\n';
    }
    return md.str();
}

} // namespace lexinf::analysis
