#ifndef LEXINF_SYNTH_HPP
#define LEXINF_SYNTH_HPP

#include "lexinf/analysis.hpp"
#include "lexinf/kalman.hpp"
#include "lexinf/panel.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace lexinf::synth {

enum class Preset { null, planted_edges, cascade, gravity };

Preset parse_preset(const std::string& name); // throws UsageError
std::string to_string(Preset preset);

struct ScenarioOptions {
    double a_self = 0.2;
    int planted_edges = 10;
    double edge_min = 0.3;
    double edge_max = 0.6;
    double gamma = 0.1;
    double gamma_global = -1.0; // negative: same as gamma
    int exposure = 2000;
    double rate_min = 0.001;
    double rate_max = 0.005;
    double tau_sd = 0.1;
    double cascade_weight = 0.4;
    double target_radius = 0.95;
    bool stationary_start = true;
};

struct PlantedEdge {
    int sender = 0;   // n in A(m, n)
    int receiver = 0; // m
    double weight = 0.0;
};

struct Scenario {
    Preset preset = Preset::null;
    int regions = 0;
    int words = 0;
    int weeks = 0;
    int exposure = 0;
    Eigen::MatrixXd a_true;        // R x R, A(m, n) = effect of n on m
    double a_global = 0.0;         // autocorrelation of the global activation
    double gamma = 0.0;            // regional process variance
    double gamma_global = 0.0;
    Eigen::VectorXd nu;            // V
    Eigen::MatrixXd tau;           // R x T
    Eigen::MatrixXi exposure_matrix; // optional R x T override
    bool stationary_start = true;
    std::uint64_t seed = 0;
    std::vector<analysis::RegionAttributes> attrs;
    std::vector<PlantedEdge> planted;

    /// Dynamics of the full (R+1)-dimensional state in the fitting layout;
    /// only meaningful when a_true is diagonal.
    kalman::DynamicsParams diagonal_dynamics() const;
};

Scenario make_scenario(Preset preset, int regions, int words, int weeks, std::uint64_t seed,
                       const ScenarioOptions& options = {});

double spectral_radius(const Eigen::MatrixXd& a);

/// Populations (descending in region id), coordinates inside the
/// contiguous US box, and demographics.
std::vector<analysis::RegionAttributes> synthetic_attributes(int regions, std::uint64_t seed);

/// One (R+1) x T trajectory per word; global activation in the last row.
/// Throws UsageError when the spectral radius of A is not below one.
std::vector<Eigen::MatrixXd> generate_latent(const Scenario& scenario, int workers = 1);

CountsPanel generate_counts(const std::vector<Eigen::MatrixXd>& latent, const Scenario& scenario, int workers = 1);

nlohmann::json truth_to_json(const Scenario& scenario);

/// panel directory plus truth.json and attrs.csv.
void write_scenario(const Scenario& scenario, const CountsPanel& panel, const std::filesystem::path& dir);

} // namespace lexinf::synth

#endif // LEXINF_SYNTH_HPP
