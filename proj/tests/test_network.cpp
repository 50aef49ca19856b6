#include <doctest.h>

#include "lexinf/errors.hpp"
#include "lexinf/network.hpp"
#include "lexinf/rng.hpp"
#include "lexinf/synth.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace lexinf;
using namespace lexinf::network;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd with_bias(const MatrixXd& x)
{
    MatrixXd out(x.rows(), x.cols() + 1);
    out << x, VectorXd::Ones(x.rows());
    return out;
}

MatrixXd random_matrix(int rows, int cols, std::mt19937_64& gen, double sd = 1.0)
{
    std::normal_distribution<double> nd(0, sd);
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = nd(gen);
    return m;
}

// Draws of a word: its true trajectory plus independent noise.
std::vector<MatrixXd> noisy_draws(const MatrixXd& truth, int draws, double sd, std::mt19937_64& gen)
{
    std::vector<MatrixXd> out;
    for (int k = 0; k < draws; ++k)
        out.push_back(truth + random_matrix(static_cast<int>(truth.rows()), static_cast<int>(truth.cols()), gen, sd));
    return out;
}

std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("lexinf_network_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("least squares on small fixtures")
{
    MatrixXd x(2, 2), y(2, 1);
    x << 1, 1, 2, 1;
    y << 2, 4;
    auto fit = ols_fit(x, y);
    CHECK(fit.A(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(fit.bias[0]) < 1e-12);

    std::mt19937_64 gen(1);
    MatrixXd lag = random_matrix(40, 3, gen);
    auto zero = ols_fit(with_bias(lag), MatrixXd::Zero(40, 3));
    CHECK(zero.A.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(zero.bias.cwiseAbs().maxCoeff() < 1e-14);

    // Exact linear transitions: A is recovered to rounding.
    MatrixXd a(2, 2);
    a << 0.5, 0.2, -0.3, 0.7;
    VectorXd b(2);
    b << 0.1, -0.2;
    MatrixXd xs = random_matrix(49, 2, gen);
    MatrixXd ys = (xs * a.transpose()).rowwise() + b.transpose();
    auto exact = ols_fit(with_bias(xs), ys);
    CHECK((exact.A - a).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((exact.bias - b).cwiseAbs().maxCoeff() < 1e-8);

    MatrixXd dup(10, 3);
    dup << random_matrix(10, 1, gen), random_matrix(10, 1, gen), VectorXd::Ones(10);
    dup.col(1) = dup.col(0);
    CHECK_THROWS_AS(ols_fit(dup, random_matrix(10, 2, gen)), NumericalError);
}

TEST_CASE("least squares matches a dense normal-equation solve")
{
    std::mt19937_64 gen(2);
    for (int f = 0; f < 25; ++f) {
        int r = 1 + f % 5;
        int n = 3 * (r + 1) + 5 * f;
        MatrixXd x = with_bias(random_matrix(n, r, gen));
        MatrixXd y = random_matrix(n, r, gen);
        auto fit = ols_fit(x, y);
        auto want = oracle::dense_ols(oracle::to_mat(x), oracle::to_mat(y));
        for (int m = 0; m < r; ++m) {
            for (int k = 0; k < r; ++k)
                CHECK(std::abs(fit.A(m, k) - want[k][m]) < 1e-8);
            CHECK(std::abs(fit.bias[m] - want[r][m]) < 1e-8);
        }
        // The same fit through accumulated moments, split in two batches.
        LagMoments mom(r), part(r);
        mom.add_rows(x.topRows(n / 2), y.topRows(n / 2));
        part.add_rows(x.bottomRows(n - n / 2), y.bottomRows(n - n / 2));
        mom += part;
        CHECK(mom.rows == n);
        auto via = solve_moments(mom);
        CHECK((via.A - fit.A).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("ridge")
{
    std::mt19937_64 gen(3);
    MatrixXd x = with_bias(random_matrix(60, 3, gen));
    MatrixXd y = random_matrix(60, 3, gen);
    auto ols = ols_fit(x, y);
    auto r0 = ridge_fit(x, y, 0.0);
    CHECK((ols.A - r0.A).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ols.bias - r0.bias).cwiseAbs().maxCoeff() < 1e-10);
    auto big = ridge_fit(x, y, 1e9);
    CHECK(big.A.cwiseAbs().maxCoeff() < 1e-6);
    // The bias is not shrunk: it tends to the mean outcome.
    VectorXd ybar = y.colwise().mean();
    CHECK((big.bias - ybar).cwiseAbs().maxCoeff() < 1e-5);

    MatrixXd a(2, 2);
    a << 0.6, 0.0, 0.3, 0.5;
    std::vector<MatrixXd> series;
    for (int w = 0; w < 5; ++w) {
        MatrixXd eta = MatrixXd::Zero(3, 120);
        MatrixXd noise = random_matrix(3, 120, gen, 0.3);
        for (int t = 1; t < 120; ++t)
            eta.col(t).head(2) = a * eta.col(t - 1).head(2) + noise.col(t).head(2);
        series.push_back(eta);
    }
    const std::array<double, 4> grid{0.0, 1.0, 100.0, 1e6};
    auto sel = select_ridge_lambda(series, 2, grid, 4);
    REQUIRE(sel.scores.size() == grid.size());
    for (double s : sel.scores)
        CHECK(std::isfinite(s));
    CHECK(std::find(grid.begin(), grid.end(), sel.lambda) != grid.end());
    // Heavy shrinkage discards real signal and scores worse.
    CHECK(sel.lambda < 1e6);
    CHECK_THROWS_AS(select_ridge_lambda(series, 2, {}, 4), UsageError);
}

TEST_CASE("draw summaries")
{
    std::vector<MatrixXd> draws;
    for (double v : {1.0, 2.0, 3.0}) {
        MatrixXd m = MatrixXd::Constant(2, 2, 5.0);
        m(0, 1) = v;
        draws.push_back(m);
    }
    auto est = summarize_draws(draws, ZMode::wald, 0.01);
    CHECK(est.mu(0, 1) == doctest::Approx(2.0));
    CHECK(est.sigma2(0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(est.z(0, 1) == doctest::Approx(2.0 / std::sqrt(2.0 / 3.0)));
    CHECK(est.degenerate(1, 0));
    CHECK_FALSE(est.significant(1, 0));
    CHECK_FALSE(est.degenerate(0, 1));
    CHECK(est.draws == 3);
    auto lit = summarize_draws(draws, ZMode::literal, 0.01);
    CHECK(lit.z(0, 1) == doctest::Approx(2.0 / (2.0 / 3.0)));

    CHECK_THROWS_AS(estimate_network({{MatrixXd::Zero(3, 5)}}), DataError);
}

TEST_CASE("false discovery threshold")
{
    // Reported values from the large study are mutually consistent.
    double ratio = 39800.0 * oracle::upper_tail(3.12) / 3544.0;
    CHECK(ratio == doctest::Approx(0.0102).epsilon(0.01));

    std::vector<double> z{4.0, 3.0, 2.0, 1.0};
    CHECK(fdr_threshold(z, 4, 0.01) == 3.0);
    std::vector<double> tens(10, 10.0);
    CHECK(fdr_threshold(tens, 10, 0.01) == 10.0);
    std::vector<double> weak{0.5, -1.0, 1.2};
    CHECK(std::isinf(fdr_threshold(weak, 6, 0.01)));
    std::vector<double> odd{std::nan(""), 5.0, std::numeric_limits<double>::infinity()};
    CHECK(fdr_threshold(odd, 2, 0.01) == 5.0);
    CHECK(std::isinf(fdr_threshold(std::vector<double>{}, 2, 0.01)));

    std::mt19937_64 gen(5);
    for (int f = 0; f < 200; ++f) {
        int n = 2 + f % 60;
        std::vector<double> zs;
        std::normal_distribution<double> nd(0, 1);
        for (int j = 0; j < n; ++j)
            zs.push_back(j % 4 == 0 ? 3 + std::abs(nd(gen)) : nd(gen));
        if (f % 3 == 0)
            zs.push_back(zs.front()); // ties
        double tests = static_cast<double>(zs.size());
        for (double q : {0.01, 0.05, 0.2})
            CHECK(fdr_threshold(zs, tests, q) == oracle::brute_fdr_threshold(zs, tests, q));
    }
}

TEST_CASE("network estimate is invariant to word and draw order")
{
    std::mt19937_64 gen(6);
    std::vector<std::vector<MatrixXd>> samples;
    for (int w = 0; w < 6; ++w)
        samples.push_back(noisy_draws(random_matrix(4, 30, gen), 8, 0.2, gen));
    auto base = estimate_network(samples);

    auto words = samples;
    std::reverse(words.begin(), words.end());
    auto draws = samples;
    for (auto& w : draws)
        std::rotate(w.begin(), w.begin() + 3, w.end());
    for (const auto& other : {estimate_network(words), estimate_network(draws)}) {
        CHECK((other.mu - base.mu).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((other.sigma2 - base.sigma2).cwiseAbs().maxCoeff() < 1e-12);
    }

    // Pooled estimate of one draw equals stacking every word's lag pairs.
    MatrixXd lag(6 * 29, 3), next(6 * 29, 3);
    for (int w = 0; w < 6; ++w) {
        const MatrixXd& eta = samples[w][0];
        lag.middleRows(w * 29, 29) = eta.topLeftCorner(3, 29).transpose();
        next.middleRows(w * 29, 29) = eta.topRightCorner(3, 29).transpose();
    }
    DrawAccumulator acc(3, 8, Pooling::pooled);
    for (const auto& w : samples)
        acc.add_word(w);
    CHECK((acc.coefficient_draws()[0] - ols_fit(with_bias(lag), next).A).cwiseAbs().maxCoeff() < 1e-8);

    // Per-word mode averages the separate fits.
    NetworkOptions opt;
    opt.pooling = Pooling::per_word;
    auto per = estimate_network(samples, opt);
    MatrixXd avg = MatrixXd::Zero(3, 3);
    for (int k = 0; k < 8; ++k)
        for (const auto& w : samples) {
            LagMoments m(3);
            m.add_trajectory(w[k]);
            avg += solve_moments(m).A / (8.0 * samples.size());
        }
    CHECK((per.mu - avg).cwiseAbs().maxCoeff() < 1e-10);

    DrawAccumulator locked(3, 8, Pooling::per_word);
    locked.add_word(samples[0]);
    CHECK_THROWS_AS(locked.set_ridge_lambda(1.0), UsageError);
}

TEST_CASE("a strong planted link stands out")
{
    synth::ScenarioOptions so;
    so.planted_edges = 1;
    so.edge_min = 0.5;
    so.edge_max = 0.5;
    int top = 0;
    for (int rep = 0; rep < 20; ++rep) {
        auto sc = synth::make_scenario(synth::Preset::planted_edges, 10, 50, 200, 100 + rep, so);
        auto latent = synth::generate_latent(sc);
        std::mt19937_64 gen(rep);
        std::vector<std::vector<MatrixXd>> samples;
        for (const auto& eta : latent)
            samples.push_back(noisy_draws(eta, 10, 0.2, gen));
        auto est = estimate_network(samples);
        const auto& e = sc.planted.front();
        double planted = est.z(e.receiver, e.sender);
        bool best = true;
        for (int m = 0; m < 10; ++m)
            for (int n = 0; n < 10; ++n)
                if (m != n && !(m == e.receiver && n == e.sender) && est.z(m, n) >= planted)
                    best = false;
        top += best;
    }
    CHECK(top >= 19);
}

TEST_CASE("edge extraction and output files")
{
    NetworkEstimate est;
    est.mu = MatrixXd::Zero(3, 3);
    est.sigma2 = MatrixXd::Ones(3, 3);
    est.z = MatrixXd::Zero(3, 3);
    est.degenerate = decltype(est.degenerate)::Constant(3, 3, false);
    est.significant = decltype(est.significant)::Constant(3, 3, false);
    est.threshold = std::numeric_limits<double>::infinity();
    CHECK(extract_edges(est).empty());

    est.threshold = 4.0;
    est.z(1, 0) = 5.0; // 0 -> 1
    est.z(0, 2) = 5.0; // 2 -> 0
    est.z(2, 1) = 6.0; // 1 -> 2
    est.mu(1, 0) = 0.2;
    est.mu(0, 2) = 0.01;
    est.mu(2, 1) = 0.3;
    est.significant(1, 0) = est.significant(0, 2) = est.significant(2, 1) = true;
    auto edges = extract_edges(est);
    REQUIRE(edges.size() == 3);
    CHECK(edges[0].sender == 1);
    CHECK(edges[1].sender == 0);
    CHECK(edges[1].receiver == 1);
    CHECK(edges[2].sender == 2);
    auto strong = extract_edges(est, 0.025);
    CHECK(strong.size() == 2);

    auto dir = scratch("files");
    std::vector<int> ids{10, 20, 30};
    write_edges_csv(est, ids, dir / "edges.csv");
    std::ifstream in(dir / "edges.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "sender_id,receiver_id,mu,sigma,z,significant");
    auto back = read_edges_csv(dir / "edges.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[0].sender == 20);
    CHECK(back[0].receiver == 30);
    CHECK(read_edges_csv(dir / "edges.csv", false).size() == 6);

    auto j = network_to_json(est, ids, {{"seed", 4}});
    CHECK(j.at("threshold").get<double>() == 4.0);
    CHECK(j.at("mu").size() == 3);
    write_network_dot(est, {"a", "b", "c"}, dir / "net.dot");
    std::stringstream dot;
    dot << std::ifstream(dir / "net.dot").rdbuf();
    CHECK(dot.str().find("digraph") != std::string::npos);
    CHECK(dot.str().find("n1 -> n2") != std::string::npos);
    CHECK(dot.str().find("label=\"b\"") != std::string::npos);
}
