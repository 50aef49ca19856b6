#ifndef LEXINF_CLI_HPP
#define LEXINF_CLI_HPP

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

namespace lexinf::cli {

/// Every knob of every stage. Values come from defaults, then the config
/// file, then command-line flags.
struct RunConfig {
    // paths
    std::string messages;
    std::string centroids;
    std::string panel;
    std::string out = "out";
    std::string checkpoint; // default: <panel>/checkpoint.json
    std::string edges;      // default: <out>/edges.csv
    std::string attrs;
    // corpus
    int min_author_messages = 10;
    int max_author_messages = 1000;
    int top_n = 10000;
    int min_peak_count = 5;
    std::string origin; // YYYY-MM-DD
    int weeks = 0;      // 0: infer
    double max_malformed_fraction = 0.10;
    // simulation
    std::string preset = "planted-edges";
    int regions = 10;
    int words = 50;
    int sim_weeks = 200;
    int exposure = 2000;
    int planted_edges = 10;
    double a_self = 0.2;
    double sim_gamma = 0.1;
    double rate_min = 0.001;
    double rate_max = 0.005;
    // fit
    int em_iterations = 100;
    double rel_tol = 1e-6;
    int inner_iterations = 25;
    double zeta_tol = 1e-4;
    double bound_tol = 1e-8;
    double alpha = 0.5;
    double init_a = 0.5;
    double init_gamma = 0.1;
    double init_cov_scale = 1.0;
    bool full_gamma = false;
    bool resume = false;
    // network
    int particles = 200;
    int samples = 100;
    bool resample = false;
    double ess_fraction = 0.5;
    double q = 0.01;
    double mu_min = -1.0; // negative: no magnitude filter
    bool literal_wald = false;
    bool per_word = false;
    double ridge_lambda = 0.0;
    bool ridge_cv = false;
    // analysis
    int n_null = -1;
    int folds = 5;
    // run
    std::uint64_t seed = 0;
    int workers = 1;
    bool quiet = false;
};

nlohmann::json to_json(const RunConfig& config);

/// Stage report skeleton: format, version, command and resolved config.
nlohmann::json make_report(const std::string& command, const RunConfig& config);

nlohmann::json cmd_ingest(const RunConfig& config);
nlohmann::json cmd_simulate(const RunConfig& config);
nlohmann::json cmd_fit(const RunConfig& config);
nlohmann::json cmd_network(const RunConfig& config);
nlohmann::json cmd_analyze(const RunConfig& config);
nlohmann::json cmd_pipeline(const RunConfig& config);

/// Parses arguments, dispatches, and maps errors to exit codes
/// (0 ok, 1 usage, 2 data, 3 numerical).
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

} // namespace lexinf::cli

#endif // LEXINF_CLI_HPP
