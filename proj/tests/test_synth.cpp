#include <doctest.h>

#include "lexinf/emission.hpp"
#include "lexinf/errors.hpp"
#include "lexinf/panel.hpp"
#include "lexinf/synth.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

using namespace lexinf;
using namespace lexinf::synth;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

int offdiag_nonzeros(const MatrixXd& a)
{
    int n = 0;
    for (Eigen::Index m = 0; m < a.rows(); ++m)
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            n += m != k && a(m, k) != 0.0;
    return n;
}

double lag_corr(const VectorXd& x, const VectorXd& y)
{
    // corr(x_{t-1}, y_t)
    const auto n = x.size() - 1;
    VectorXd a = x.head(n), b = y.tail(n);
    a.array() -= a.mean();
    b.array() -= b.mean();
    return a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
}

} // namespace

TEST_CASE("scenario presets")
{
    auto null = make_scenario(Preset::null, 8, 5, 20, 1);
    CHECK(offdiag_nonzeros(null.a_true) == 0);
    CHECK(null.planted.empty());

    auto planted = make_scenario(Preset::planted_edges, 10, 5, 20, 2);
    CHECK(offdiag_nonzeros(planted.a_true) == 10);
    CHECK(planted.planted.size() == 10);
    for (const auto& e : planted.planted) {
        CHECK(e.sender != e.receiver);
        CHECK(std::abs(e.weight) >= 0.3);
        CHECK(std::abs(e.weight) <= 0.6);
        CHECK(planted.a_true(e.receiver, e.sender) == e.weight);
    }
    CHECK(spectral_radius(planted.a_true) < 1.0);

    auto cascade = make_scenario(Preset::cascade, 6, 5, 20, 3);
    CHECK(offdiag_nonzeros(cascade.a_true) == 5);
    for (int k = 1; k < 6; ++k) {
        CHECK(cascade.a_true(k, k - 1) != 0.0);
        CHECK(cascade.attrs[k - 1].population >= cascade.attrs[k].population);
    }

    auto gravity = make_scenario(Preset::gravity, 12, 5, 20, 4);
    CHECK(spectral_radius(gravity.a_true) <= 0.95 + 1e-9);
    CHECK(offdiag_nonzeros(gravity.a_true) == 12 * 11);

    CHECK(parse_preset("planted-edges") == Preset::planted_edges);
    CHECK(to_string(Preset::gravity) == "gravity");
    CHECK_THROWS_AS(parse_preset("bogus"), UsageError);

    auto a = make_scenario(Preset::planted_edges, 10, 5, 20, 9);
    auto b = make_scenario(Preset::planted_edges, 10, 5, 20, 9);
    CHECK(a.a_true == b.a_true);
    CHECK(a.tau == b.tau);
}

TEST_CASE("latent dynamics")
{
    auto sc = make_scenario(Preset::null, 3, 2, 50, 5);
    sc.gamma = sc.gamma_global = 0.0;
    sc.stationary_start = false;
    for (const auto& eta : generate_latent(sc))
        CHECK(eta.cwiseAbs().maxCoeff() == 0.0);

    auto ar = make_scenario(Preset::null, 2, 3, 2000, 6);
    ar.a_true = 0.9 * MatrixXd::Identity(2, 2);
    ar.a_global = 0.9;
    auto latent = generate_latent(ar);
    REQUIRE(latent.size() == 3);
    CHECK(latent[0].rows() == 3);
    CHECK(latent[0].cols() == 2000);
    for (const auto& eta : latent)
        for (int d = 0; d < 3; ++d)
            CHECK(lag_corr(eta.row(d), eta.row(d)) == doctest::Approx(0.9).epsilon(0.05 / 0.9));

    // Stationary variance of each regional series.
    auto mom = make_scenario(Preset::null, 4, 4, 5000, 7);
    auto series = generate_latent(mom);
    for (const auto& eta : series)
        for (int r = 0; r < 4; ++r) {
            double a = mom.a_true(r, r);
            double want = mom.gamma / (1 - a * a);
            VectorXd x = eta.row(r).transpose();
            double var = (x.array() - x.mean()).square().mean();
            CHECK(var == doctest::Approx(want).epsilon(0.05));
        }

    // A planted edge shows up as lagged cross-correlation.
    int positive = 0;
    for (int rep = 0; rep < 5; ++rep) {
        auto pe = make_scenario(Preset::null, 2, 1, 1000, 20 + rep);
        pe.a_true(1, 0) = 0.5;
        auto eta = generate_latent(pe).front();
        positive += lag_corr(eta.row(0), eta.row(1)) > 3 / std::sqrt(1000.0);
    }
    CHECK(positive == 5);

    auto bad = make_scenario(Preset::null, 2, 1, 10, 1);
    bad.a_true = 1.1 * MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(generate_latent(bad), UsageError);

    CHECK(generate_latent(mom, 1) == generate_latent(mom, 3));
}

TEST_CASE("counts")
{
    auto sc = make_scenario(Preset::null, 3, 2, 30, 8);
    sc.exposure = 10000;
    sc.nu = VectorXd::Constant(2, std::log(0.2 / 0.8));
    sc.tau = MatrixXd::Zero(3, 30);
    std::vector<MatrixXd> zero(2, MatrixXd::Zero(4, 30));
    auto p = generate_counts(zero, sc);
    p.validate();
    for (int i = 0; i < 2; ++i) {
        double c = 0, s = 0;
        for (int r = 0; r < 3; ++r)
            for (int t = 0; t < 30; ++t) {
                c += p.c(i, r, t);
                s += p.s(r, t);
            }
        CHECK(c / s == doctest::Approx(0.2).epsilon(0.01 / 0.2));
    }

    sc.exposure_matrix = Eigen::MatrixXi::Constant(3, 30, 500);
    sc.exposure_matrix(1, 4) = 0;
    auto holes = generate_counts(zero, sc);
    CHECK(holes.s(1, 4) == 0);
    CHECK(holes.c(0, 1, 4) == 0);
    CHECK(holes.c(1, 1, 4) == 0);
    CHECK(holes.s(0, 0) == 500);

    CHECK(generate_counts(zero, sc, 1) == generate_counts(zero, sc, 2));
}

TEST_CASE("scenario files")
{
    auto sc = make_scenario(Preset::planted_edges, 5, 4, 12, 11);
    auto panel = generate_counts(generate_latent(sc), sc);
    auto dir = std::filesystem::temp_directory_path() / "lexinf_synth_files";
    std::filesystem::remove_all(dir);
    write_scenario(sc, panel, dir);
    CHECK(read_panel(dir) == panel);
    auto truth = nlohmann::json::parse(std::ifstream(dir / "truth.json"));
    CHECK(truth.at("format") == "lexinf-truth");
    CHECK(truth.at("A_true").size() == 5);
    CHECK(truth.at("planted_edges").size() == sc.planted.size());
    CHECK(std::filesystem::exists(dir / "attrs.csv"));
}
