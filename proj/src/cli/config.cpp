#include "lexinf/cli.hpp"

#include "lexinf/errors.hpp"
#include "lexinf/panel.hpp"

#include <CLI11.hpp>
#include <iostream>

namespace lexinf::cli {

nlohmann::json to_json(const RunConfig& c)
{
    return {
        {"messages", c.messages},
        {"centroids", c.centroids},
        {"panel", c.panel},
        {"out", c.out},
        {"checkpoint", c.checkpoint},
        {"edges", c.edges},
        {"attrs", c.attrs},
        {"min_author_messages", c.min_author_messages},
        {"max_author_messages", c.max_author_messages},
        {"top_n", c.top_n},
        {"min_peak_count", c.min_peak_count},
        {"origin", c.origin},
        {"weeks", c.weeks},
        {"max_malformed_fraction", c.max_malformed_fraction},
        {"preset", c.preset},
        {"regions", c.regions},
        {"words", c.words},
        {"sim_weeks", c.sim_weeks},
        {"exposure", c.exposure},
        {"planted_edges", c.planted_edges},
        {"a_self", c.a_self},
        {"sim_gamma", c.sim_gamma},
        {"rate_min", c.rate_min},
        {"rate_max", c.rate_max},
        {"em_iterations", c.em_iterations},
        {"rel_tol", c.rel_tol},
        {"inner_iterations", c.inner_iterations},
        {"zeta_tol", c.zeta_tol},
        {"bound_tol", c.bound_tol},
        {"alpha", c.alpha},
        {"init_a", c.init_a},
        {"init_gamma", c.init_gamma},
        {"init_cov_scale", c.init_cov_scale},
        {"full_gamma", c.full_gamma},
        {"resume", c.resume},
        {"particles", c.particles},
        {"samples", c.samples},
        {"resample", c.resample},
        {"ess_fraction", c.ess_fraction},
        {"q", c.q},
        {"mu_min", c.mu_min},
        {"literal_wald", c.literal_wald},
        {"per_word", c.per_word},
        {"ridge_lambda", c.ridge_lambda},
        {"ridge_cv", c.ridge_cv},
        {"n_null", c.n_null},
        {"folds", c.folds},
        {"seed", c.seed},
        {"workers", c.workers},
    };
}

nlohmann::json make_report(const std::string& command, const RunConfig& config)
{
    return {{"format", "lexinf-run-report"},
            {"format_version", kFormatVersion},
            {"command", command},
            {"config", to_json(config)},
            {"timings", nlohmann::json::object()},
            {"warnings", nlohmann::json::array()}};
}

namespace {

void bind_options(CLI::App& app, RunConfig& c)
{
    app.set_config("--config", "", "key=value configuration file; flags override its values");
    app.allow_config_extras(false);

    app.add_option("--messages", c.messages, "message JSONL input (ingest)");
    app.add_option("--centroids", c.centroids, "region centroid CSV (ingest)");
    app.add_option("--panel", c.panel, "panel directory (default: --out)");
    app.add_option("--out", c.out, "output directory")->capture_default_str();
    app.add_option("--checkpoint", c.checkpoint, "checkpoint file (default: <out>/checkpoint.json)");
    app.add_option("--edges", c.edges, "edge list (default: <out>/edges.csv)");
    app.add_option("--attrs", c.attrs, "region attributes CSV (default: <panel>/attrs.csv)");

    app.add_option("--min-author-messages", c.min_author_messages)->capture_default_str();
    app.add_option("--max-author-messages", c.max_author_messages)->capture_default_str();
    app.add_option("--top-n", c.top_n, "vocabulary candidates kept by frequency")->capture_default_str();
    app.add_option("--min-peak-count", c.min_peak_count)->capture_default_str();
    app.add_option("--origin", c.origin, "first day of week 0 (YYYY-MM-DD)");
    app.add_option("--weeks", c.weeks, "number of weeks (0: infer)")->capture_default_str();
    app.add_option("--max-malformed-fraction", c.max_malformed_fraction)->capture_default_str();

    app.add_option("--preset", c.preset, "null, planted-edges, cascade or gravity")->capture_default_str();
    app.add_option("--regions", c.regions)->capture_default_str();
    app.add_option("--words", c.words)->capture_default_str();
    app.add_option("--sim-weeks", c.sim_weeks)->capture_default_str();
    app.add_option("--exposure", c.exposure)->capture_default_str();
    app.add_option("--planted-edges", c.planted_edges)->capture_default_str();
    app.add_option("--a-self", c.a_self)->capture_default_str();
    app.add_option("--sim-gamma", c.sim_gamma)->capture_default_str();
    app.add_option("--rate-min", c.rate_min)->capture_default_str();
    app.add_option("--rate-max", c.rate_max)->capture_default_str();

    app.add_option("--em-iterations", c.em_iterations)->capture_default_str();
    app.add_option("--rel-tol", c.rel_tol)->capture_default_str();
    app.add_option("--inner-iterations", c.inner_iterations)->capture_default_str();
    app.add_option("--zeta-tol", c.zeta_tol)->capture_default_str();
    app.add_option("--bound-tol", c.bound_tol)->capture_default_str();
    app.add_option("--alpha", c.alpha, "additive smoothing for background and zeta")->capture_default_str();
    app.add_option("--init-a", c.init_a)->capture_default_str();
    app.add_option("--init-gamma", c.init_gamma)->capture_default_str();
    app.add_option("--init-cov-scale", c.init_cov_scale)->capture_default_str();
    app.add_flag("--full-gamma", c.full_gamma, "estimate a full process covariance");
    app.add_flag("--resume", c.resume, "continue from an existing checkpoint");

    app.add_option("--particles", c.particles)->capture_default_str();
    app.add_option("--samples", c.samples)->capture_default_str();
    app.add_flag("--resample", c.resample, "ESS-triggered resampling in the particle filter");
    app.add_option("--ess-fraction", c.ess_fraction)->capture_default_str();
    app.add_option("-q,--q", c.q, "false discovery rate")->capture_default_str();
    app.add_option("--mu-min", c.mu_min, "also require mu above this (negative: off)")->capture_default_str();
    app.add_flag("--literal-wald", c.literal_wald, "z = mu / sigma^2");
    app.add_flag("--per-word", c.per_word, "one regression per word, averaged");
    app.add_option("--ridge-lambda", c.ridge_lambda)->capture_default_str();
    app.add_flag("--ridge-cv", c.ridge_cv, "pick the ridge penalty by forward-chaining CV");

    app.add_option("--n-null", c.n_null, "null pairs (negative: as many as linked)")->capture_default_str();
    app.add_option("--folds", c.folds)->capture_default_str();

    app.add_option("--seed", c.seed)->capture_default_str();
    app.add_option("--workers", c.workers)->capture_default_str();
    app.add_flag("--quiet", c.quiet);
}

void validate(const RunConfig& c)
{
    if (c.workers < 1)
        throw UsageError("--workers must be at least 1");
    if (c.particles < 2)
        throw UsageError("--particles must be at least 2");
    if (c.samples < 2)
        throw UsageError("--samples must be at least 2");
    if (!(c.q > 0 && c.q < 1))
        throw UsageError("--q must lie in (0, 1)");
    if (c.em_iterations < 0)
        throw UsageError("--em-iterations must be non-negative");
    if (c.alpha <= 0)
        throw UsageError("--alpha must be positive");
    if (c.folds < 2)
        throw UsageError("--folds must be at least 2");
}

} // namespace

int run(int argc, const char* const* argv)
{
    CLI::App app{"Lexical influence networks from regional word counts"};
    app.fallthrough();
    app.require_subcommand(1, 1);
    RunConfig config;
    bind_options(app, config);

    struct Command {
        const char* name;
        const char* help;
        nlohmann::json (*fn)(const RunConfig&);
    };
    const Command commands[] = {
        {"ingest", "build a counts panel from geotagged messages", cmd_ingest},
        {"simulate", "draw a synthetic panel with known dynamics", cmd_simulate},
        {"fit", "estimate background and dynamics by EM", cmd_fit},
        {"network", "sample trajectories and test influence edges", cmd_network},
        {"analyze", "geographic and demographic analysis of the edges", cmd_analyze},
        {"pipeline", "run every stage in sequence", cmd_pipeline},
    };
    for (const auto& cmd : commands)
        app.add_subcommand(cmd.name, cmd.help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        validate(config);
        for (const auto& cmd : commands)
            if (app.got_subcommand(cmd.name)) {
                cmd.fn(config);
                return 0;
            }
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

int run(const std::vector<std::string>& args)
{
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("lexinf");
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace lexinf::cli
