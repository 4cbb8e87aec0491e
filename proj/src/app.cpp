#include "reqtree/app.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace reqtree {

namespace {

namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

const fs::path& require_corpus(const AppConfig& cfg) {
    if (!cfg.experiment.corpus_path) throw Error(ErrorKind::InvalidSpec, "no corpus given (--corpus or \"corpus\")");
    if (!fs::exists(*cfg.experiment.corpus_path)) {
        throw Error(ErrorKind::Io, "corpus not found: " + cfg.experiment.corpus_path->string());
    }
    return *cfg.experiment.corpus_path;
}

fs::path require_out(const AppConfig& cfg) {
    if (!cfg.out) throw Error(ErrorKind::InvalidSpec, "no output directory given (--out or \"out\")");
    fs::create_directories(*cfg.out);
    return *cfg.out;
}

ModelBundle load_bundle(const AppConfig& cfg) {
    if (!cfg.experiment.models_dir) throw Error(ErrorKind::InvalidSpec, "no models directory given (--models)");
    if (cfg.library && !fs::exists(*cfg.library)) {
        throw Error(ErrorKind::MissingModel, cfg.library->string());
    }
    ModelBundle bundle = load_models(*cfg.experiment.models_dir);
    if (cfg.library) {
        try {
            bundle.library = read_json_file(*cfg.library).get<PatternLibrary>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, cfg.library->string() + ": " + e.what());
        }
    }
    return bundle;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::optional<double> parse_number(std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

void render(const RTree& tree, const NodeId& id, std::ostream& out) {
    const auto& node = tree.node(id);
    out << node.req;
    if (node.status != NodeStatus::Confirmed) out << "[" << to_string(node.status) << "]";
    if (!node.slots.empty()) {
        out << "{";
        for (std::size_t i = 0; i < node.slots.size(); ++i) {
            out << (i ? ", " : "") << node.slots[i].name << "=" << to_string(node.slots[i].value);
        }
        out << "}";
    }
    if (!node.sub_reqs.empty()) {
        out << "(";
        for (std::size_t i = 0; i < node.sub_reqs.size(); ++i) {
            if (i) out << " ";
            render(tree, node.sub_reqs[i], out);
        }
        out << ")";
    }
}

}  // namespace

AppConfig parse_app_config(const json& j) {
    AppConfig cfg;
    cfg.experiment = parse_experiment(j);
    try {
        if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
        if (j.contains("library")) cfg.library = j.at("library").get<std::string>();
        cfg.user = j.value("user", cfg.user);
        cfg.root = j.value("root", cfg.root);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidSpec, e.what());
    }
    return cfg;
}

AppConfig load_app_config(const fs::path& path) {
    AppConfig cfg = parse_app_config(read_json_file(path));
    // Relative paths in the file are relative to the file.
    const fs::path base = path.parent_path();
    auto rebase = [&](std::optional<fs::path>& p) {
        if (p && p->is_relative()) p = base / *p;
    };
    rebase(cfg.experiment.corpus_path);
    rebase(cfg.experiment.models_dir);
    rebase(cfg.out);
    rebase(cfg.library);
    return cfg;
}

int exit_code_for(const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    if (!err) return kExitInternal;
    switch (err->kind()) {
        case ErrorKind::UnknownState:
        case ErrorKind::SessionFinished:
        case ErrorKind::UnknownNode:
            return kExitInternal;
        default:
            return kExitData;
    }
}

void cmd_generate(const AppConfig& cfg, std::ostream& log) {
    const fs::path out = require_out(cfg);
    const auto pop = generate_synthetic_population(cfg.experiment.population);
    save_corpus(pop.corpus, out / "corpus.jsonl");
    save_corpus(pop.test_corpus, out / "test.jsonl");
    write_file(out / "truth.json", truth_to_json(pop).dump(1) + "\n");
    log << "users " << pop.users.size() << ", training dialogues " << pop.corpus.dialogues.size()
        << ", test dialogues " << pop.test_corpus.dialogues.size() << "\n";
}

void cmd_train_pus(const AppConfig& cfg, std::ostream& log) {
    const Corpus corpus = load_corpus(require_corpus(cfg));
    const fs::path out = cfg.out ? require_out(cfg) : cfg.experiment.models_dir.value_or(fs::path{});
    if (out.empty()) throw Error(ErrorKind::InvalidSpec, "no output directory given (--out or --models)");
    const ModelBundle bundle = train_models(corpus, cfg.experiment.training, cfg.experiment.threads);
    save_models(bundle, out);

    const auto seqs = da_sequences_by_user(corpus);
    log << "users " << bundle.user_ast.size() << "\n";
    for (const auto& [user, model] : bundle.user_ast) {
        log << "  " << user << ": states " << model.states.size() << ", perplexity "
            << perplexity(model, seqs.at(user)) << "\n";
    }
    log << "global act model: states " << bundle.global_ast.states.size() << "\n";
    log << "s-bpr final loss "
        << (bundle.fpmc.epoch_loss.empty() ? 0.0 : bundle.fpmc.epoch_loss.back()) << "\n";
    log << "patterns " << bundle.library.patterns.size() << "\n";
}

void cmd_mine_patterns(const AppConfig& cfg, std::ostream& log) {
    const Corpus corpus = load_corpus(require_corpus(cfg));
    const fs::path out = require_out(cfg);
    const PatternLibrary lib = mine_library(corpus, cfg.experiment.training);
    if (lib.min_support > corpus.dialogues.size()) {
        spdlog::warn("min_support {} exceeds the corpus size {}; the library is empty", lib.min_support,
                     corpus.dialogues.size());
    }
    write_file(out / "library.json", json(lib).dump(1) + "\n");

    std::map<std::size_t, std::size_t> by_size;
    std::map<std::size_t, std::size_t> by_support;
    for (const auto& p : lib.patterns) {
        ++by_size[p.structure.size()];
        ++by_support[p.support];
    }
    log << "patterns " << lib.patterns.size() << " (min_support " << lib.min_support << ", corpus "
        << lib.corpus_size << ")\n";
    for (const auto& [size, n] : by_size) log << "  size " << size << ": " << n << "\n";
    log << "support histogram\n";
    for (const auto& [support, n] : by_support) log << "  " << support << ": " << n << "\n";
}

void cmd_evaluate(const AppConfig& cfg, std::ostream& log) {
    const fs::path out = require_out(cfg);
    if (cfg.experiment.corpus_path) require_corpus(cfg);
    ExperimentSpec spec = cfg.experiment;
    ExperimentOutput output;
    if (cfg.library) {
        // run_experiment only knows model directories; load here so the override applies.
        Corpus corpus;
        std::vector<SessionJob> jobs;
        if (spec.corpus_path) {
            corpus = load_corpus(*spec.corpus_path);
            jobs = jobs_for_corpus(corpus, spec.default_style, spec.modes);
        } else {
            auto pop = generate_synthetic_population(spec.population);
            jobs = jobs_for_population(pop, spec.modes);
        }
        const ModelBundle bundle = load_bundle(cfg);
        output.results = run_sessions(bundle, jobs, spec.policy, spec.threads);
        output.report = aggregate(output.results, spec.bucket_edges);
    } else {
        output = run_experiment(spec);
    }
    write_outputs(output, out);
    log << format_report(output.report);
}

// ---------------------------------------------------------------- repl

const char* const kReplHelp =
    "commands:\n"
    "  <act> [requirement] [name=value ...]   one user action\n"
    "  bye                                    end the session (General)\n"
    "  help                                   this text\n"
    "  quit                                   leave without ending the session\n"
    "acts: state_in state_out ques_select ques_rec ques_req resp_acc resp_deny resp_vag general\n"
    "values: cheap, 4..5, 4..5:stars\n"
    "example: state_in hotel price=cheap stars=4..5:stars\n";

Slot parse_slot(std::string_view token) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == token.size()) {
        throw Error(ErrorKind::ParseError, "expected name=value, got '" + std::string(token) + "'");
    }
    Slot slot;
    slot.name = std::string(token.substr(0, eq));
    const std::string_view value = token.substr(eq + 1);
    if (const auto dots = value.find(".."); dots != std::string_view::npos) {
        std::string_view rest = value.substr(dots + 2);
        std::string unit;
        if (const auto colon = rest.find(':'); colon != std::string_view::npos) {
            unit = std::string(rest.substr(colon + 1));
            rest = rest.substr(0, colon);
        }
        const auto lo = parse_number(value.substr(0, dots));
        const auto hi = parse_number(rest);
        if (!lo || !hi) throw Error(ErrorKind::ParseError, "bad interval '" + std::string(value) + "'");
        slot.value = interval(*lo, *hi, std::move(unit));
    } else {
        slot.value = discrete(std::string(value));
    }
    return slot;
}

ReplCommand parse_repl_command(std::string_view line) {
    std::istringstream in{std::string(line)};
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(std::move(t));
    if (tokens.empty()) throw Error(ErrorKind::ParseError, "empty command");

    const std::string head = lower(tokens.front());
    if (head == "help" || head == "?") return ReplHelp{};
    if (head == "quit" || head == "exit") return ReplQuit{};
    if (head == "bye") {
        if (tokens.size() > 1) throw Error(ErrorKind::ParseError, "bye takes no arguments");
        return DialogAction::general();
    }

    std::optional<DialogueAct> act;
    for (auto a : kAllActs) {
        if (lower(to_string(a)) == head) act = a;
    }
    if (!act) throw Error(ErrorKind::UnknownActLabel, "unknown act '" + tokens.front() + "'");

    DialogAction action{*act, std::nullopt, {}};
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (tokens[i].find('=') == std::string::npos) {
            if (action.req || !action.slots.empty()) {
                throw Error(ErrorKind::ParseError, "unexpected '" + tokens[i] + "'");
            }
            action.req = tokens[i];
        } else {
            action.slots.push_back(parse_slot(tokens[i]));
        }
    }
    if (action.da == DialogueAct::StateIn && !action.req) {
        throw Error(ErrorKind::ParseError, "state_in needs a requirement label");
    }
    if (!action.valid()) throw Error(ErrorKind::ParseError, "'" + std::string(line) + "' is not a valid action");
    return action;
}

ReplOutcome run_repl(const Policy& policy, const std::string& root, std::istream& in, std::ostream& out) {
    ReplOutcome outcome{policy.init_session(root), 0};
    auto& state = outcome.state;
    out << "tree: ";
    render(state.tree, state.tree.root, out);
    out << "\n> " << std::flush;

    for (std::string line; !state.finished && std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            out << "> " << std::flush;
            continue;
        }
        ReplCommand cmd;
        try {
            cmd = parse_repl_command(line);
        } catch (const Error& e) {
            out << e.what() << "\n" << kReplHelp << "> " << std::flush;
            continue;
        }
        if (std::holds_alternative<ReplQuit>(cmd)) break;
        if (std::holds_alternative<ReplHelp>(cmd)) {
            out << kReplHelp << "> " << std::flush;
            continue;
        }
        auto [next, response] = policy.handle_user_action(state, std::get<DialogAction>(cmd));
        state = std::move(next);
        ++outcome.turns;
        out << "sys: " << describe(response) << "\n";
        out << "tree: ";
        render(state.tree, state.tree.root, out);
        out << "\n";
        if (!state.finished) out << "> " << std::flush;
    }
    out << json(state.tree).dump() << "\n";
    return outcome;
}

void cmd_repl(const AppConfig& cfg, std::istream& in, std::ostream& out) {
    const ModelBundle bundle = load_bundle(cfg);
    PolicyConfig pc = cfg.experiment.policy;
    if (cfg.experiment.modes.size() == 1) pc.mode = cfg.experiment.modes.front();
    const Policy policy(policy_models(bundle, pc.mode, cfg.user), pc);
    run_repl(policy, cfg.root, in, out);
}

}  // namespace reqtree
