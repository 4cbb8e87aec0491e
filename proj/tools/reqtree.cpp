#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "reqtree/app.hpp"

using namespace reqtree;

namespace {

void configure_logging() {
    spdlog::set_default_logger(spdlog::stderr_color_mt("reqtree"));
    if (const char* level = std::getenv("REQTREE_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    } else {
        spdlog::set_level(spdlog::level::warn);
    }
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();

    CLI::App app{"Requirement elicitation dialogue toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
    std::string corpus;
    std::string models;
    std::string library;
    std::string user;
    std::string root;
    std::size_t threads = 0;
    app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "population seed");
    app.add_option("--mode", mode, "policy mode")->check(CLI::IsMember({"pus", "global"}));
    app.add_option("--out", out, "output directory");
    app.add_option("--threads", threads, "worker threads, 0 for all cores");

    auto* generate = app.add_subcommand("generate", "synthesize a user population and its corpora");
    auto* train = app.add_subcommand("train-pus", "train act models, requirement planner and preference stores");
    train->add_option("--corpus", corpus, "JSON-lines corpus");
    train->add_option("--models", models, "model directory (when --out is not given)");
    auto* mine = app.add_subcommand("mine-patterns", "mine the requirement pattern library");
    mine->add_option("--corpus", corpus, "JSON-lines corpus");
    auto* evaluate = app.add_subcommand("evaluate", "run simulated sessions and write the report");
    evaluate->add_option("--corpus", corpus, "goals taken from this corpus instead of a generated population");
    evaluate->add_option("--models", models, "trained model directory; trains in-run when absent");
    evaluate->add_option("--library", library, "pattern library overriding <models>/library.json");
    auto* repl = app.add_subcommand("repl", "talk to the policy with act-level commands");
    repl->add_option("--models", models, "trained model directory")->required();
    repl->add_option("--library", library, "pattern library overriding <models>/library.json");
    repl->add_option("--user", user, "user id whose models personalize the session");
    repl->add_option("--root", root, "scenario root label");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    AppConfig cfg;
    const int loaded = run_command(
        [&] {
            if (!config_path.empty()) cfg = load_app_config(config_path);
        },
        std::cerr);
    if (loaded != kExitOk) return loaded;
    if (seed) cfg.experiment.population.seed = *seed;
    if (!mode.empty()) {
        cfg.experiment.policy.mode = parse_policy_mode(mode);
        cfg.experiment.modes = {cfg.experiment.policy.mode};
    }
    if (!out.empty()) cfg.out = out;
    if (!corpus.empty()) cfg.experiment.corpus_path = corpus;
    if (!models.empty()) cfg.experiment.models_dir = models;
    if (!library.empty()) cfg.library = library;
    if (!user.empty()) cfg.user = user;
    if (!root.empty()) cfg.root = root;
    if (app.count("--threads")) cfg.experiment.threads = threads;

    return run_command(
        [&] {
            if (generate->parsed()) cmd_generate(cfg, std::cout);
            if (train->parsed()) cmd_train_pus(cfg, std::cout);
            if (mine->parsed()) cmd_mine_patterns(cfg, std::cout);
            if (evaluate->parsed()) cmd_evaluate(cfg, std::cout);
            if (repl->parsed()) cmd_repl(cfg, std::cin, std::cout);
        },
        std::cerr);
}
