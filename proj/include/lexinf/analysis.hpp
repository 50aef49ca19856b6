#ifndef LEXINF_ANALYSIS_HPP
#define LEXINF_ANALYSIS_HPP

#include "lexinf/network.hpp"

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lexinf::analysis {

struct RegionAttributes {
    int region_id = 0;
    double population = 1.0;
    double latitude = 0.0;
    double longitude = 0.0;
    double pct_white = 0.0;
    double pct_afam = 0.0;
    double pct_hispanic = 0.0;
    double pct_urban = 0.0;
    double pct_renter = 0.0;
    double log_income = 0.0;
};

using AttributeTable = std::map<int, RegionAttributes>;

/// attrs.csv: region_id,population,lat,lon,pct_white,pct_afam,pct_hispanic,pct_urban,pct_renter,log_income
AttributeTable read_attributes_csv(const std::filesystem::path& path);
void write_attributes_csv(const std::vector<RegionAttributes>& attrs, const std::filesystem::path& path);

/// Order of pair_features entries.
inline const std::array<std::string, 8> kPairFeatureNames = {
    "product of populations", "distance",         "abs. diff. % White",   "abs. diff. % Af. Am.",
    "abs. diff. % Hispanic",  "abs. diff. % urban", "abs. diff. % renters", "abs. diff. log income"};

/// Order of sender-minus-receiver differences in the asymmetric analysis.
inline const std::array<std::string, 7> kDirectedFeatureNames = {
    "Log pop.", "% White", "% Af. Am", "% Hispanic", "% Urban", "% Renters", "Log income"};

/// [log(pop_a * pop_b), distance km, |d white|, |d afam|, |d hispanic|,
///  |d urban|, |d renter|, |d log income|]; symmetric in its arguments.
Eigen::VectorXd pair_features(const RegionAttributes& a, const RegionAttributes& b);

/// Signed a - b over [log pop, white, afam, hispanic, urban, renter, log income].
Eigen::VectorXd directed_difference(const RegionAttributes& a, const RegionAttributes& b);

const RegionAttributes& lookup(const AttributeTable& attrs, int region_id);

struct PairObservation {
    int sender = 0;
    int receiver = 0;
    bool label = false;
    Eigen::VectorXd features;
};

/// Draws sender and receiver independently from the empirical edge
/// marginals, rejecting self-pairs and linked pairs. Throws DataError when
/// more than 99% of proposals are rejected.
std::vector<std::pair<int, int>> sample_null_pairs(const std::vector<network::InfluenceEdge>& edges, int n,
                                                   std::uint64_t seed);

/// Column-wise z-scoring. Constant columns keep sd = 1 and are flagged.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    std::vector<bool> constant;

    static Standardizer fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// weights/std_errors/t_values are [intercept, features...].
struct RegressionFit {
    Eigen::VectorXd weights;
    Eigen::VectorXd std_errors;
    Eigen::VectorXd t_values;
    bool converged = false;
    int iterations = 0;
    double log_likelihood = 0.0;
};

/// Logistic regression with intercept by damped Newton. Constant columns get
/// weight 0 and NaN standard error. Stops with converged = false if any
/// |weight| exceeds 30 (separation).
RegressionFit fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, int max_iter = 100,
                           double tol = 1e-8);

enum class Ablation { all, no_population, no_geography, no_demographics };

/// Columns of pair_features kept under each ablation.
std::vector<int> ablation_columns(Ablation ablation);
std::string to_string(Ablation ablation);

/// Stratified k-fold accuracy at a 0.5 cutoff, standardizing on each
/// training split. Observations are put in canonical order before the
/// seeded shuffle, so input order does not matter.
double cv_accuracy(const std::vector<PairObservation>& observations, int folds, const std::vector<int>& columns,
                   std::uint64_t seed);

struct GroupSummary {
    int n = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd half_width; // two-tailed p < .01 normal interval
};

struct SymmetricComparison {
    std::vector<std::string> columns;
    GroupSummary linked;
    GroupSummary unlinked;
};

/// Distance and absolute demographic differences for linked vs sampled pairs.
SymmetricComparison symmetric_comparison(const std::vector<network::InfluenceEdge>& edges,
                                         const AttributeTable& attrs, int n_null, std::uint64_t seed);

struct AsymmetricReport {
    std::vector<std::pair<int, int>> pairs; // (sender, receiver)
    Eigen::VectorXd difference;
    Eigen::VectorXd std_error;
    Eigen::VectorXd z;
    std::optional<RegressionFit> fit;
    double accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// Pairs significant in exactly one direction.
std::vector<std::pair<int, int>> asymmetric_pairs(const std::vector<network::InfluenceEdge>& edges);

AsymmetricReport asymmetric_analysis(const std::vector<network::InfluenceEdge>& edges, const AttributeTable& attrs,
                                     std::uint64_t seed, int folds = 5);

struct AnalysisOptions {
    std::uint64_t seed = 0;
    int n_null = -1; // default: as many as linked pairs
    int folds = 5;
};

/// Runs all five tables. edges are significant edges in region-id space.
nlohmann::json analysis_report(const std::vector<network::InfluenceEdge>& edges, const AttributeTable& attrs,
                               const AnalysisOptions& options);

std::string report_markdown(const nlohmann::json& report);

} // namespace lexinf::analysis

#endif // LEXINF_ANALYSIS_HPP
