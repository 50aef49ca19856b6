#include "lexinf/analysis.hpp"
#include "lexinf/checkpoint.hpp"
#include "lexinf/cli.hpp"
#include "lexinf/corpus.hpp"
#include "lexinf/emission.hpp"
#include "lexinf/errors.hpp"
#include "lexinf/kalman.hpp"
#include "lexinf/network.hpp"
#include "lexinf/smc.hpp"
#include "lexinf/synth.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace lexinf::cli {

namespace {

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path out_dir(const RunConfig& c)
{
    fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
    fs::create_directories(dir);
    return dir;
}

fs::path panel_dir(const RunConfig& c)
{
    return c.panel.empty() ? fs::path(c.out) : fs::path(c.panel);
}

fs::path checkpoint_path(const RunConfig& c)
{
    return c.checkpoint.empty() ? fs::path(c.out) / "checkpoint.json" : fs::path(c.checkpoint);
}

fs::path edges_path(const RunConfig& c)
{
    return c.edges.empty() ? fs::path(c.out) / "edges.csv" : fs::path(c.edges);
}

void write_json(const nlohmann::json& j, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void finish(nlohmann::json& report, const RunConfig& c, const std::string& command)
{
    write_json(report, out_dir(c) / ("run_" + command + ".json"));
    if (!c.quiet)
        for (const auto& w : report["warnings"])
            std::cerr << "warning: " << w.get<std::string>() << '\n';
}

void require_file(const fs::path& path, const std::string& what)
{
    if (path.empty())
        throw UsageError(what + " path is required");
    if (!fs::exists(path))
        throw UsageError(what + " not found: " + path.string());
}

CountsPanel load_panel(const RunConfig& c)
{
    fs::path dir = panel_dir(c);
    if (!fs::is_directory(dir) || !fs::exists(dir / "meta.json"))
        throw UsageError("panel directory not found: " + dir.string());
    return read_panel(dir);
}

nlohmann::json trace_json(const std::vector<kalman::EmTraceEntry>& trace)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : trace)
        out.push_back({{"iteration", e.iteration},
                       {"sweep", e.sweep},
                       {"bound", e.bound},
                       {"zeta_change", std::isfinite(e.zeta_change) ? nlohmann::json(e.zeta_change) : nlohmann::json()}});
    return out;
}

} // namespace

nlohmann::json cmd_ingest(const RunConfig& c)
{
    Stopwatch clock;
    auto report = make_report("ingest", c);
    require_file(c.messages, "messages file");
    require_file(c.centroids, "centroids file");
    auto centroids = corpus::read_centroids_csv(c.centroids);

    corpus::IngestStats stats;
    std::ifstream in(c.messages);
    if (!in)
        throw DataError("cannot read " + c.messages);
    auto records = corpus::read_messages_jsonl(in, stats);
    if (stats.records_read > 0
        && static_cast<double>(stats.malformed_lines) > c.max_malformed_fraction * static_cast<double>(stats.records_read))
        throw DataError(std::to_string(stats.malformed_lines) + " of " + std::to_string(stats.records_read)
                        + " input lines are malformed; aborting");
    if (stats.records_read == 0)
        report["warnings"].push_back("input contains no messages");
    if (stats.malformed_lines > 0)
        report["warnings"].push_back(std::to_string(stats.malformed_lines) + " malformed lines skipped");

    corpus::CorpusOptions opts;
    opts.min_author_messages = c.min_author_messages;
    opts.max_author_messages = c.max_author_messages;
    opts.top_n = static_cast<std::size_t>(std::max(c.top_n, 0));
    opts.min_peak_count = c.min_peak_count;
    if (!c.origin.empty())
        opts.origin = corpus::parse_iso_date(c.origin);
    if (c.weeks > 0)
        opts.weeks = c.weeks;
    auto panel = corpus::ingest(std::move(records), centroids, opts, stats);
    fs::path dir = out_dir(c);
    write_panel(panel, dir);

    for (const auto& w : stats.warnings)
        report["warnings"].push_back(w);
    report["ingest"] = {{"records_read", stats.records_read},
                        {"malformed_lines", stats.malformed_lines},
                        {"dropped_messages", stats.dropped_messages},
                        {"authors_seen", stats.authors_seen},
                        {"authors_kept", stats.authors_kept},
                        {"authors_dropped", stats.authors_dropped},
                        {"records_before_origin", stats.records_before_origin},
                        {"records_out_of_range", stats.records_out_of_range},
                        {"vocab_candidates", stats.vocab_candidates},
                        {"vocab_size", stats.vocab_size},
                        {"regions", panel.regions()},
                        {"weeks", panel.weeks()},
                        {"week_start", panel.week_start}};
    report["timings"]["ingest"] = clock.seconds();
    finish(report, c, "ingest");
    if (!c.quiet)
        std::cout << "ingested " << stats.records_read << " records: " << stats.authors_kept << " authors kept, "
                  << panel.words() << " words, " << panel.regions() << " regions, " << panel.weeks() << " weeks\n";
    return report;
}

nlohmann::json cmd_simulate(const RunConfig& c)
{
    Stopwatch clock;
    auto report = make_report("simulate", c);
    synth::ScenarioOptions so;
    so.a_self = c.a_self;
    so.planted_edges = c.planted_edges;
    so.gamma = c.sim_gamma;
    so.exposure = c.exposure;
    so.rate_min = c.rate_min;
    so.rate_max = c.rate_max;
    auto scenario = synth::make_scenario(synth::parse_preset(c.preset), c.regions, c.words, c.sim_weeks, c.seed, so);
    auto latent = synth::generate_latent(scenario, c.workers);
    auto panel = synth::generate_counts(latent, scenario, c.workers);
    fs::path dir = out_dir(c);
    synth::write_scenario(scenario, panel, dir);
    report["simulate"] = {{"preset", synth::to_string(scenario.preset)},
                          {"planted_edges", static_cast<int>(scenario.planted.size())},
                          {"spectral_radius", synth::spectral_radius(scenario.a_true)}};
    report["timings"]["simulate"] = clock.seconds();
    finish(report, c, "simulate");
    if (!c.quiet)
        std::cout << "simulated " << synth::to_string(scenario.preset) << " panel: " << panel.words() << " words, "
                  << panel.regions() << " regions, " << panel.weeks() << " weeks\n";
    return report;
}

nlohmann::json cmd_fit(const RunConfig& c)
{
    Stopwatch clock;
    auto report = make_report("fit", c);
    auto panel = load_panel(c);
    if (panel.words() == 0)
        throw DataError("panel has no words to fit");
    const int D = panel.regions() + 1;
    const fs::path ckpt_path = checkpoint_path(c);
    const auto mode = c.full_gamma ? kalman::CovarianceMode::full : kalman::CovarianceMode::diagonal;

    Checkpoint ckpt;
    ckpt.mode = mode;
    if (c.resume && fs::exists(ckpt_path)) {
        ckpt = read_checkpoint(ckpt_path);
        if (ckpt.state.dynamics.dim() != D || static_cast<int>(ckpt.state.zeta.size()) != panel.words())
            throw DataError("checkpoint does not match the panel dimensions");
        if (ckpt.mode != mode)
            throw UsageError("checkpoint was fit with a different covariance mode");
        report["resumed_from_iteration"] = ckpt.state.iteration;
    } else {
        if (c.resume)
            report["warnings"].push_back("no checkpoint to resume from; starting fresh");
        ckpt.background = emission::estimate_background(panel, c.alpha);
        ckpt.state = kalman::em_init(panel, kalman::DynamicsParams::isotropic(D, c.init_a, c.init_gamma), c.alpha);
    }
    report["timings"]["background"] = clock.seconds();

    kalman::EmOptions opts;
    opts.max_iterations = c.em_iterations;
    opts.rel_tol = c.rel_tol;
    opts.max_inner_iterations = c.inner_iterations;
    opts.zeta_tol = c.zeta_tol;
    opts.bound_tol = c.bound_tol;
    opts.alpha = c.alpha;
    opts.init_cov_scale = c.init_cov_scale;
    opts.mode = mode;
    opts.workers = c.workers;
    auto progress = [&](const kalman::EmTraceEntry& e) {
        if (!c.quiet)
            std::cerr << "em iteration " << e.iteration << " sweep " << e.sweep << " bound " << e.bound << '\n';
    };
    Stopwatch em_clock;
    auto result = kalman::em_fit(panel, ckpt.background, ckpt.state, opts, progress);
    ckpt.state = std::move(result.state);
    write_checkpoint(ckpt, ckpt_path);

    const auto& st = ckpt.state;
    if (!st.converged)
        report["warnings"].push_back("EM stopped after " + std::to_string(st.iteration)
                                     + " iterations without converging");
    int repairs = 0;
    for (const auto& b : result.beliefs)
        repairs += b.psd_repairs;
    if (repairs > 0)
        report["warnings"].push_back(std::to_string(repairs) + " covariance repairs during smoothing");
    report["fit"] = {{"iterations", st.iteration},
                     {"converged", st.converged},
                     {"final_bound", st.trace.empty() ? nlohmann::json() : nlohmann::json(st.trace.back().bound)},
                     {"a_diag", vector_to_json(st.dynamics.a_diag)},
                     {"gamma", matrix_to_json(st.dynamics.gamma)},
                     {"checkpoint", ckpt_path.string()}};
    report["trace"] = trace_json(st.trace);
    report["timings"]["em"] = em_clock.seconds();
    report["timings"]["fit"] = clock.seconds();
    finish(report, c, "fit");
    if (!c.quiet)
        std::cout << "EM " << (st.converged ? "converged" : "stopped") << " after " << st.iteration
                  << " iterations\n";
    return report;
}

nlohmann::json cmd_network(const RunConfig& c)
{
    Stopwatch clock;
    auto report = make_report("network", c);
    auto panel = load_panel(c);
    const fs::path ckpt_path = checkpoint_path(c);
    require_file(ckpt_path, "checkpoint");
    auto ckpt = read_checkpoint(ckpt_path);
    const int R = panel.regions();
    if (ckpt.state.dynamics.dim() != R + 1 || ckpt.background.nu.size() != panel.words())
        throw DataError("checkpoint does not match the panel dimensions");

    smc::SamplingOptions so;
    so.forward.particles = c.particles;
    so.forward.resample = c.resample;
    so.forward.ess_fraction = c.ess_fraction;
    so.n_samples = c.samples;
    so.seed = c.seed;
    so.workers = c.workers;
    so.alpha = c.alpha;
    so.init_cov_scale = c.init_cov_scale;

    const auto pooling = c.per_word ? network::Pooling::per_word : network::Pooling::pooled;
    if (c.ridge_cv && pooling == network::Pooling::per_word)
        throw UsageError("--ridge-cv needs pooled regressions");
    network::DrawAccumulator acc(R, c.samples, pooling, c.ridge_lambda);
    std::vector<Eigen::MatrixXd> cv_trajectories;
    std::vector<int> failed;
    int resamples = 0;
    smc::for_each_word_samples(panel, ckpt.background, ckpt.state.dynamics, so,
                               [&](int word, const smc::WordSamples& ws) {
                                   resamples += ws.resample_count;
                                   if (ws.failed) {
                                       failed.push_back(word);
                                       report["warnings"].push_back("word " + panel.vocab[word]
                                                                    + " skipped: " + ws.error);
                                       return;
                                   }
                                   acc.add_word(ws.draws);
                                   if (c.ridge_cv)
                                       cv_trajectories.push_back(ws.draws.front());
                               });
    report["timings"]["sampling"] = clock.seconds();
    if (acc.words() == 0)
        throw NumericalError("sampling failed for every word");

    double lambda = c.ridge_lambda;
    if (c.ridge_cv) {
        const std::vector<double> grid = {0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
        auto sel = network::select_ridge_lambda(cv_trajectories, R, grid);
        lambda = sel.lambda;
        acc.set_ridge_lambda(lambda);
        report["ridge_cv"] = {{"grid", sel.grid}, {"scores", sel.scores}, {"lambda", sel.lambda}};
        if (!c.quiet)
            std::cerr << "ridge lambda selected by CV: " << lambda << '\n';
    }

    auto est = network::summarize_draws(acc.coefficient_draws(),
                                        c.literal_wald ? network::ZMode::literal : network::ZMode::wald, c.q);
    if (c.mu_min >= 0)
        for (int m = 0; m < R; ++m)
            for (int n = 0; n < R; ++n)
                est.significant(m, n) = est.significant(m, n) && est.mu(m, n) > c.mu_min;

    fs::path dir = out_dir(c);
    network::write_edges_csv(est, panel.region_ids, edges_path(c));
    nlohmann::json meta = {{"seed", c.seed},
                           {"particles", c.particles},
                           {"samples", c.samples},
                           {"resample", c.resample},
                           {"pooling", c.per_word ? "per-word" : "pooled"},
                           {"ridge_lambda", lambda},
                           {"words_used", acc.words()},
                           {"failed_words", failed}};
    write_json(network::network_to_json(est, panel.region_ids, meta), dir / "network.json");
    write_network_dot(est, panel.region_names, dir / "network.dot",
                      c.mu_min >= 0 ? std::optional<double>(c.mu_min) : std::nullopt);

    const int tested = R * (R - 1);
    report["network"] = {{"discoveries", est.discoveries()},
                         {"tested_pairs", tested},
                         {"threshold", std::isfinite(est.threshold) ? nlohmann::json(est.threshold) : nlohmann::json()},
                         {"words_used", acc.words()},
                         {"failed_words", failed.size()},
                         {"resample_events", resamples},
                         {"ridge_lambda", lambda}};
    report["timings"]["network"] = clock.seconds();
    finish(report, c, "network");
    if (!c.quiet) {
        std::cout << "discoveries: " << est.discoveries() << " of " << tested << " tested pairs, z threshold ";
        if (std::isfinite(est.threshold))
            std::cout << est.threshold;
        else
            std::cout << "none";
        std::cout << '\n';
    }
    return report;
}

nlohmann::json cmd_analyze(const RunConfig& c)
{
    Stopwatch clock;
    auto report = make_report("analyze", c);
    const fs::path edges = edges_path(c);
    const fs::path attrs = c.attrs.empty() ? panel_dir(c) / "attrs.csv" : fs::path(c.attrs);
    require_file(edges, "edge list");
    require_file(attrs, "attributes file");
    auto edge_list = network::read_edges_csv(edges, true);
    auto table = analysis::read_attributes_csv(attrs);
    analysis::AnalysisOptions opts;
    opts.seed = c.seed;
    opts.n_null = c.n_null;
    opts.folds = c.folds;
    auto result = analysis::analysis_report(edge_list, table, opts);
    fs::path dir = out_dir(c);
    write_json(result, dir / "analysis_report.json");
    {
        std::ofstream md(dir / "analysis_report.md", std::ios::binary);
        md << analysis::report_markdown(result);
    }
    for (const auto& w : result["warnings"])
        report["warnings"].push_back(w);
    report["analyze"] = {{"linked_pairs", result["linked_pairs"]},
                         {"null_pairs", result["null_pairs"]},
                         {"asymmetric_pairs", result["asymmetric_pairs"]}};
    report["timings"]["analyze"] = clock.seconds();
    finish(report, c, "analyze");
    if (!c.quiet)
        std::cout << "analysis of " << edge_list.size() << " edges written to "
                  << (dir / "analysis_report.md").string() << '\n';
    return report;
}

nlohmann::json cmd_pipeline(const RunConfig& config)
{
    Stopwatch clock;
    RunConfig c = config;
    if (c.panel.empty())
        c.panel = c.out;
    auto report = make_report("pipeline", config);
    nlohmann::json stages = nlohmann::json::object();
    const bool from_messages = !c.messages.empty();
    if (from_messages) {
        RunConfig ingest = c;
        ingest.out = c.panel;
        stages["ingest"] = cmd_ingest(ingest);
    } else {
        RunConfig simulate = c;
        simulate.out = c.panel;
        stages["simulate"] = cmd_simulate(simulate);
    }
    stages["fit"] = cmd_fit(c);
    stages["network"] = cmd_network(c);
    const fs::path attrs = c.attrs.empty() ? fs::path(c.panel) / "attrs.csv" : fs::path(c.attrs);
    if (fs::exists(attrs))
        stages["analyze"] = cmd_analyze(c);
    else
        report["warnings"].push_back("no attributes file; analysis skipped");
    for (auto& [name, stage] : stages.items()) {
        report["timings"][name] = stage["timings"];
        for (const auto& w : stage["warnings"])
            report["warnings"].push_back(name + ": " + w.get<std::string>());
    }
    report["trace"] = stages["fit"]["trace"];
    report["network"] = stages["network"]["network"];
    report["timings"]["total"] = clock.seconds();
    RunConfig silent = c;
    silent.quiet = true; // stage warnings were already printed
    finish(report, silent, "pipeline");
    return report;
}

} // namespace lexinf::cli
