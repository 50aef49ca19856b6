#ifndef LEXINF_NETWORK_HPP
#define LEXINF_NETWORK_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lexinf::network {

/// Test statistic: mu / sigma (Wald) or the literal mu / sigma^2 variant.
enum class ZMode { wald, literal };

/// One regression over lag pairs pooled across words, or one per word
/// with the coefficient matrices averaged.
enum class Pooling { pooled, per_word };

inline constexpr double kMaxCondition = 1e12;

/// y_t = A x_{t-1} + bias. A(m, n) is the effect of lagged region n on region m.
struct OlsFit {
    Eigen::MatrixXd A;
    Eigen::VectorXd bias;
};

/// Normal-equation accumulator over lag pairs; the bias is the last regressor.
struct LagMoments {
    Eigen::MatrixXd xtx; // (R+1) x (R+1)
    Eigen::MatrixXd xty; // (R+1) x R
    long rows = 0;

    explicit LagMoments(int regions = 0);
    int regions() const noexcept { return static_cast<int>(xty.cols()); }
    /// Adds pairs (eta[:R, t-1], eta[:R, t]) for t = 1..T-1. eta may carry
    /// extra trailing state rows (the global activation), which are ignored.
    void add_trajectory(const Eigen::MatrixXd& eta);
    void add_rows(const Eigen::MatrixXd& lagged, const Eigen::MatrixXd& outcomes);
    LagMoments& operator+=(const LagMoments& other);
};

/// lagged is N x (R+1) with a trailing column of ones; outcomes N x R.
/// Throws NumericalError if the Gram matrix condition number exceeds 1e12.
OlsFit ols_fit(const Eigen::MatrixXd& lagged, const Eigen::MatrixXd& outcomes);

/// (X'X + lambda I')^{-1} X'Y with the bias left unpenalized.
OlsFit ridge_fit(const Eigen::MatrixXd& lagged, const Eigen::MatrixXd& outcomes, double lambda);

OlsFit solve_moments(const LagMoments& moments, double lambda = 0.0);

struct RidgeSelection {
    double lambda = 0.0;
    std::vector<double> grid;
    std::vector<double> scores; // mean held-out squared error per grid point
};

/// Forward-chaining CV over time: fold f trains on weeks before a cut and
/// scores the next block. trajectories are D x T (or R x T) per word.
RidgeSelection select_ridge_lambda(const std::vector<Eigen::MatrixXd>& trajectories, int regions,
                                   std::span<const double> grid, int folds = 4);

struct NetworkEstimate {
    Eigen::MatrixXd mu;
    Eigen::MatrixXd sigma2;
    Eigen::MatrixXd z;
    double threshold = 0.0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> significant;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;
    int draws = 0;
    ZMode z_mode = ZMode::wald;
    double q = 0.01;

    int regions() const noexcept { return static_cast<int>(mu.rows()); }
    int discoveries() const;
};

struct NetworkOptions {
    ZMode z_mode = ZMode::wald;
    Pooling pooling = Pooling::pooled;
    double q = 0.01;
    double ridge_lambda = 0.0;
};

/// Collects per-draw regressions one word at a time.
class DrawAccumulator {
public:
    DrawAccumulator(int regions, int draws, Pooling pooling, double ridge_lambda = 0.0);
    /// draws[k] is the k-th trajectory (D x T) of one word.
    void add_word(const std::vector<Eigen::MatrixXd>& draws);
    /// One coefficient matrix A^(k) per draw.
    std::vector<Eigen::MatrixXd> coefficient_draws() const;
    /// Pooled mode only, or before any word was added.
    void set_ridge_lambda(double lambda);
    int words() const noexcept { return words_; }

private:
    int regions_;
    Pooling pooling_;
    double lambda_;
    int words_ = 0;
    std::vector<LagMoments> moments_;
    std::vector<Eigen::MatrixXd> sums_;
};

/// Gaussian summary of coefficient draws: mean, population variance (1/K),
/// z-score and FDR selection over off-diagonal entries.
NetworkEstimate summarize_draws(const std::vector<Eigen::MatrixXd>& coefficient_draws, ZMode z_mode, double q);

/// samples[word][draw] trajectories. Requires at least two draws.
NetworkEstimate estimate_network(const std::vector<std::vector<Eigen::MatrixXd>>& samples,
                                 const NetworkOptions& options = {});

/// Smallest observed z such that tests * (1 - Phi(z)) / #{z_j >= z} <= q;
/// +infinity if no candidate qualifies. Non-finite z values are ignored.
double fdr_threshold(std::span<const double> z, double tests, double q = 0.01);

struct InfluenceEdge {
    int sender = 0;   // lagged region n
    int receiver = 0; // region m
    double mu = 0.0;
    double sigma = 0.0;
    double z = 0.0;
    bool significant = true;
};

/// Significant edges (optionally also mu > mu_min), sorted by z descending,
/// ties by (sender, receiver).
std::vector<InfluenceEdge> extract_edges(const NetworkEstimate& estimate, std::optional<double> mu_min = {});

/// edges.csv over every ordered off-diagonal pair. Indices are mapped through region_ids.
void write_edges_csv(const NetworkEstimate& estimate, const std::vector<int>& region_ids,
                     const std::filesystem::path& path);
std::vector<InfluenceEdge> read_edges_csv(const std::filesystem::path& path, bool significant_only = true);

nlohmann::json network_to_json(const NetworkEstimate& estimate, const std::vector<int>& region_ids,
                               const nlohmann::json& metadata = {});
void write_network_dot(const NetworkEstimate& estimate, const std::vector<std::string>& names,
                       const std::filesystem::path& path, std::optional<double> mu_min = {});

} // namespace lexinf::network

#endif // LEXINF_NETWORK_HPP
