#include "lexinf/synth.hpp"

#include "lexinf/checkpoint.hpp"
#include "lexinf/emission.hpp"
#include "lexinf/errors.hpp"
#include "lexinf/numeric.hpp"
#include "lexinf/parallel.hpp"
#include "lexinf/rng.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lexinf::synth {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::uint64_t kScenarioTag = 0x5C3A0001ULL;
constexpr std::uint64_t kAttributeTag = 0x5C3A0002ULL;
constexpr std::uint64_t kLatentTag = 0x5C3A0003ULL;
constexpr std::uint64_t kCountTag = 0x5C3A0004ULL;

} // namespace

Preset parse_preset(const std::string& name)
{
    if (name == "null")
        return Preset::null;
    if (name == "planted-edges")
        return Preset::planted_edges;
    if (name == "cascade")
        return Preset::cascade;
    if (name == "gravity")
        return Preset::gravity;
    throw UsageError("unknown preset '" + name + "' (expected null, planted-edges, cascade or gravity)");
}

std::string to_string(Preset preset)
{
    switch (preset) {
    case Preset::null:
        return "null";
    case Preset::planted_edges:
        return "planted-edges";
    case Preset::cascade:
        return "cascade";
    case Preset::gravity:
        return "gravity";
    }
    return {};
}

double spectral_radius(const MatrixXd& a)
{
    if (a.size() == 0)
        return 0.0;
    Eigen::EigenSolver<MatrixXd> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

kalman::DynamicsParams Scenario::diagonal_dynamics() const
{
    kalman::DynamicsParams d;
    d.a_diag.resize(regions + 1);
    d.a_diag.head(regions) = a_true.diagonal();
    d.a_diag[regions] = a_global;
    d.gamma = MatrixXd::Identity(regions + 1, regions + 1) * gamma;
    d.gamma(regions, regions) = gamma_global;
    return d;
}

std::vector<analysis::RegionAttributes> synthetic_attributes(int regions, std::uint64_t seed)
{
    Rng rng = substream(seed, {kAttributeTag});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> pop(regions);
    for (auto& p : pop)
        p = std::exp(std::log(5e5) + normal(rng));
    std::sort(pop.begin(), pop.end(), std::greater<>());
    std::vector<analysis::RegionAttributes> out(regions);
    for (int r = 0; r < regions; ++r) {
        auto& a = out[r];
        a.region_id = r;
        a.population = std::round(pop[r]);
        a.latitude = 30.0 + 18.0 * unit(rng);
        a.longitude = -120.0 + 45.0 * unit(rng);
        a.pct_afam = 0.3 * unit(rng);
        a.pct_hispanic = 0.3 * unit(rng);
        a.pct_white = std::max(0.0, 1.0 - a.pct_afam - a.pct_hispanic - 0.1 * unit(rng));
        a.pct_urban = 0.5 + 0.5 * unit(rng);
        a.pct_renter = 0.2 + 0.3 * unit(rng);
        a.log_income = std::log(50000.0) + 0.2 * normal(rng);
    }
    return out;
}

Scenario make_scenario(Preset preset, int regions, int words, int weeks, std::uint64_t seed,
                       const ScenarioOptions& o)
{
    if (regions < 1 || words < 0 || weeks < 1)
        throw UsageError("scenario needs at least one region and one week");
    if (o.exposure < 0)
        throw UsageError("exposure must be non-negative");
    Scenario sc;
    sc.preset = preset;
    sc.regions = regions;
    sc.words = words;
    sc.weeks = weeks;
    sc.exposure = o.exposure;
    sc.gamma = o.gamma;
    sc.gamma_global = o.gamma_global < 0 ? o.gamma : o.gamma_global;
    sc.stationary_start = o.stationary_start;
    sc.seed = seed;
    sc.attrs = synthetic_attributes(regions, seed);

    Rng rng = substream(seed, {kScenarioTag});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int R = regions;
    sc.a_true = MatrixXd::Identity(R, R) * o.a_self;

    switch (preset) {
    case Preset::null:
        break;
    case Preset::planted_edges: {
        const int slots = R * (R - 1);
        if (o.planted_edges > slots)
            throw UsageError("more planted edges than off-diagonal entries");
        for (int attempt = 0;; ++attempt) {
            if (attempt == 1000)
                throw UsageError("could not plant a stationary network; lower the edge weights");
            std::vector<int> cells(slots);
            std::iota(cells.begin(), cells.end(), 0);
            std::shuffle(cells.begin(), cells.end(), rng);
            MatrixXd a = MatrixXd::Identity(R, R) * o.a_self;
            std::vector<PlantedEdge> planted;
            for (int k = 0; k < o.planted_edges; ++k) {
                int m = cells[k] / (R - 1);
                int n = cells[k] % (R - 1);
                if (n >= m)
                    ++n;
                double w = o.edge_min + (o.edge_max - o.edge_min) * unit(rng);
                a(m, n) = w;
                planted.push_back({n, m, w});
            }
            if (spectral_radius(a) < o.target_radius) {
                std::sort(planted.begin(), planted.end(), [](const auto& x, const auto& y) {
                    return std::pair(x.sender, x.receiver) < std::pair(y.sender, y.receiver);
                });
                sc.a_true = a;
                sc.planted = planted;
                break;
            }
        }
        break;
    }
    case Preset::cascade:
        // Populations are sorted descending, so region k feeds region k + 1.
        for (int m = 1; m < R; ++m) {
            sc.a_true(m, m - 1) = o.cascade_weight;
            sc.planted.push_back({m - 1, m, o.cascade_weight});
        }
        break;
    case Preset::gravity: {
        MatrixXd w = MatrixXd::Zero(R, R);
        for (int m = 0; m < R; ++m)
            for (int n = 0; n < R; ++n)
                if (m != n) {
                    const auto& am = sc.attrs[m];
                    const auto& an = sc.attrs[n];
                    double d = std::max(1.0, haversine_km(am.latitude, am.longitude, an.latitude, an.longitude));
                    w(m, n) = am.population * an.population / (d * d);
                }
        if (R > 1) {
            for (int m = 0; m < R; ++m)
                w.row(m) /= w.row(m).sum();
            // Non-negative rows summing to one have spectral radius one.
            sc.a_true = o.target_radius * (o.a_self * MatrixXd::Identity(R, R) + (1.0 - o.a_self) * w);
        } else {
            sc.a_true *= o.target_radius;
        }
        break;
    }
    }
    sc.a_global = sc.a_true.diagonal().mean();

    sc.nu.resize(words);
    for (int i = 0; i < words; ++i)
        sc.nu[i] = emission::logit(o.rate_min + (o.rate_max - o.rate_min) * unit(rng));
    std::normal_distribution<double> tau(0.0, o.tau_sd);
    sc.tau.resize(R, weeks);
    for (int t = 0; t < weeks; ++t)
        for (int r = 0; r < R; ++r)
            sc.tau(r, t) = tau(rng);
    return sc;
}

namespace {

MatrixXd transition(const Scenario& sc)
{
    const int R = sc.regions;
    MatrixXd f = MatrixXd::Zero(R + 1, R + 1);
    f.topLeftCorner(R, R) = sc.a_true;
    f(R, R) = sc.a_global;
    return f;
}

// Solves P = F P F' + Q by doubling.
MatrixXd stationary_covariance(const MatrixXd& f, const MatrixXd& q)
{
    MatrixXd p = q;
    MatrixXd fk = f;
    for (int k = 0; k < 64; ++k) {
        MatrixXd next = p + fk * p * fk.transpose();
        fk = fk * fk;
        double change = (next - p).cwiseAbs().maxCoeff();
        p = next;
        if (change <= 1e-15 * std::max(1.0, p.cwiseAbs().maxCoeff()))
            break;
    }
    return 0.5 * (p + p.transpose());
}

MatrixXd symmetric_sqrt(const MatrixXd& p)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(p);
    VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal();
}

} // namespace

std::vector<MatrixXd> generate_latent(const Scenario& sc, int workers)
{
    const int R = sc.regions, T = sc.weeks, D = R + 1;
    double rho = std::max(spectral_radius(sc.a_true), std::abs(sc.a_global));
    if (rho >= 1.0)
        throw UsageError("spectral radius of A is " + std::to_string(rho) + "; dynamics must be stationary");
    if (sc.gamma < 0 || sc.gamma_global < 0)
        throw UsageError("process variances must be non-negative");
    MatrixXd f = transition(sc);
    VectorXd q = VectorXd::Constant(D, sc.gamma);
    q[R] = sc.gamma_global;
    VectorXd q_sd = q.cwiseSqrt();
    MatrixXd start = sc.stationary_start ? symmetric_sqrt(stationary_covariance(f, q.asDiagonal()))
                                         : MatrixXd::Zero(D, D);

    std::vector<MatrixXd> out(sc.words);
    parallel_for(sc.words, workers, [&](int i) {
        Rng rng = substream(sc.seed, {static_cast<std::uint64_t>(i), kLatentTag});
        std::normal_distribution<double> normal(0.0, 1.0);
        VectorXd z(D);
        auto draw = [&] {
            for (int d = 0; d < D; ++d)
                z[d] = normal(rng);
        };
        MatrixXd eta(D, T);
        draw();
        eta.col(0) = start * z;
        for (int t = 1; t < T; ++t) {
            draw();
            eta.col(t) = f * eta.col(t - 1) + q_sd.cwiseProduct(z);
        }
        out[i] = std::move(eta);
    });
    return out;
}

CountsPanel generate_counts(const std::vector<MatrixXd>& latent, const Scenario& sc, int workers)
{
    const int R = sc.regions, T = sc.weeks;
    if (static_cast<int>(latent.size()) != sc.words)
        throw UsageError("latent trajectories do not match the scenario vocabulary");
    CountsPanel panel(sc.words, R, T);
    bool custom = sc.exposure_matrix.size() > 0;
    if (custom && (sc.exposure_matrix.rows() != R || sc.exposure_matrix.cols() != T))
        throw UsageError("exposure matrix must be R x T");
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t)
            panel.s(r, t) = custom ? sc.exposure_matrix(r, t) : sc.exposure;
    for (int i = 0; i < sc.words; ++i)
        panel.vocab[i] = "w" + std::to_string(i);
    for (int r = 0; r < R; ++r) {
        panel.region_ids[r] = r;
        panel.region_names[r] = "region" + std::to_string(r);
    }
    parallel_for(sc.words, workers, [&](int i) {
        Rng rng = substream(sc.seed, {static_cast<std::uint64_t>(i), kCountTag});
        const MatrixXd& eta = latent[i];
        for (int t = 0; t < T; ++t)
            for (int r = 0; r < R; ++r) {
                int s = panel.s(r, t);
                if (s <= 0)
                    continue;
                double p = emission::logistic(sc.nu[i] + sc.tau(r, t) + eta(R, t) + eta(r, t));
                std::binomial_distribution<int> binom(s, p);
                panel.c(i, r, t) = binom(rng);
            }
    });
    return panel;
}

nlohmann::json truth_to_json(const Scenario& sc)
{
    nlohmann::json planted = nlohmann::json::array();
    for (const auto& e : sc.planted)
        planted.push_back({{"sender_id", e.sender}, {"receiver_id", e.receiver}, {"weight", e.weight}});
    MatrixXd gamma = MatrixXd::Identity(sc.regions + 1, sc.regions + 1) * sc.gamma;
    gamma(sc.regions, sc.regions) = sc.gamma_global;
    return {{"format", "lexinf-truth"},
            {"format_version", kFormatVersion},
            {"preset", to_string(sc.preset)},
            {"seed", sc.seed},
            {"R", sc.regions},
            {"V", sc.words},
            {"T", sc.weeks},
            {"exposure", sc.exposure},
            {"A_true", matrix_to_json(sc.a_true)},
            {"a_global", sc.a_global},
            {"gamma", matrix_to_json(gamma)},
            {"nu", vector_to_json(sc.nu)},
            {"tau", matrix_to_json(sc.tau)},
            {"spectral_radius", spectral_radius(sc.a_true)},
            {"planted_edges", planted}};
}

void write_scenario(const Scenario& sc, const CountsPanel& panel, const std::filesystem::path& dir)
{
    write_panel(panel, dir);
    std::ofstream out(dir / "truth.json", std::ios::binary);
    if (!out)
        throw DataError("cannot write " + (dir / "truth.json").string());
    out << truth_to_json(sc).dump(2) << '\n';
    analysis::write_attributes_csv(sc.attrs, dir / "attrs.csv");
}

} // namespace lexinf::synth
