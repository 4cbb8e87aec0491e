#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "reqtree/harness.hpp"

namespace reqtree {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

/// Command-line configuration. The JSON config file holds the experiment keys
/// plus `out`, `library`, `user` and `root`.
struct AppConfig {
    ExperimentSpec experiment;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> library;  // overrides <models>/library.json
    std::string user;
    std::string root = "travel";
};

/// Throws InvalidSpec on malformed JSON, Io when the file cannot be read.
AppConfig load_app_config(const std::filesystem::path& path);
AppConfig parse_app_config(const json& j);

/// Maps an exception to an exit code: library data errors 2, anything else 3.
int exit_code_for(const std::exception& e);

/// Each command writes its artifacts and a short summary on `log`. They throw
/// on failure; `run_command` turns that into an exit code.
void cmd_generate(const AppConfig& cfg, std::ostream& log);
void cmd_train_pus(const AppConfig& cfg, std::ostream& log);
void cmd_mine_patterns(const AppConfig& cfg, std::ostream& log);
/// Runs the sessions for `cfg.experiment.modes`.
void cmd_evaluate(const AppConfig& cfg, std::ostream& log);

template <typename Fn>
int run_command(Fn&& fn, std::ostream& err) {
    try {
        fn();
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// ---------------------------------------------------------------- repl

struct ReplHelp {};
struct ReplQuit {};
using ReplCommand = std::variant<DialogAction, ReplHelp, ReplQuit>;

/// `state_in hotel price=cheap stars=4..5:stars`, `resp_acc`, `bye`, `help`,
/// `quit`. Act keywords are case-insensitive and accept the corpus spelling.
/// Throws ParseError on anything else.
ReplCommand parse_repl_command(std::string_view line);

/// `name=value`; `lo..hi` or `lo..hi:unit` gives an interval.
Slot parse_slot(std::string_view token);

extern const char* const kReplHelp;

struct ReplOutcome {
    DialogueState state;
    std::size_t turns = 0;
};

/// Reads one command per line until the session finishes, `quit` or end of
/// input. Bad commands print the help text and do not consume a turn.
ReplOutcome run_repl(const Policy& policy, const std::string& root, std::istream& in, std::ostream& out);

/// Loads the models named by `cfg` and runs the REPL for `cfg.user`.
void cmd_repl(const AppConfig& cfg, std::istream& in, std::ostream& out);

}  // namespace reqtree
