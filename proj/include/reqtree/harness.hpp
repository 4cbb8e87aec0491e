#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reqtree/corpus.hpp"
#include "reqtree/fpmc.hpp"
#include "reqtree/patterns.hpp"
#include "reqtree/policy.hpp"
#include "reqtree/population.hpp"
#include "reqtree/preferences.hpp"
#include "reqtree/simulator.hpp"
#include "reqtree/wfst.hpp"

namespace reqtree {

// ---------------------------------------------------------------- training

struct TrainingOptions {
    std::size_t wfst_max_states = 8;
    double wfst_alpha = 0.1;
    TrainConfig fpmc;
    std::size_t ra_window = kDefaultWindow;
    std::size_t min_support = 0;  // 0 = 5% of the corpus
    std::size_t max_pattern_size = 4;
};

struct ModelBundle {
    PatternLibrary library;
    WfstModel global_ast;
    std::map<std::string, WfstModel> user_ast;
    FpmcModel fpmc;
    RequirementBigram bigram;
    std::map<std::string, RaPreferenceStore> preferences;
};

PatternLibrary mine_library(const Corpus& corpus, const TrainingOptions& opts);

/// Per-user and global act models, FPMC, bigram, preference stores and the
/// pattern library. Users train in parallel on `threads` workers (0 = hardware).
ModelBundle train_models(const Corpus& corpus, const TrainingOptions& opts, std::size_t threads = 1);

/// Files: ast.json, fpmc.json, bigram.json, ra.json, library.json.
void save_models(const ModelBundle& bundle, const std::filesystem::path& dir);
/// Throws MissingModel naming every absent file.
ModelBundle load_models(const std::filesystem::path& dir);

/// Views for one user. Pus mode takes the user's act model (global when the
/// user is unknown); GlobalTendency always takes the global one.
PolicyModels policy_models(const ModelBundle& bundle, PolicyMode mode, const std::string& user_id);

// ---------------------------------------------------------------- metrics

struct Prf {
    double p = 0.0;
    double r = 0.0;
    double f1 = 0.0;
};

/// f1 = 2pr/(p+r), 0 when p + r = 0.
double f1_of(double p, double r);
Prf make_prf(double overlap, double generated, double goal);

struct SessionScore {
    Prf node;
    Prf slot;  // nodes and slots counted together
};

SessionScore score_session(const RTree& goal, const RTree& generated);

// ---------------------------------------------------------------- sessions

struct SessionJob {
    std::string user_id;
    std::size_t goal_index = 0;
    GoalSpec goal;
    StyleWeights style;
    PolicyMode mode = PolicyMode::Pus;
};

struct SessionResult {
    std::string user_id;
    std::size_t goal_index = 0;
    PolicyMode mode = PolicyMode::Pus;
    std::size_t rounds = 0;
    RTree goal;
    RTree generated;
    bool finished = false;
    bool success = false;
    SessionScore score;
};

/// Simulator against policy until the session finishes. Appends one record
/// per turn to `transcript` when given.
SessionResult run_session(const Policy& policy, const SessionJob& job, std::vector<json>* transcript = nullptr);

struct BucketMetrics {
    std::string label;
    std::size_t lo = 0;
    std::size_t hi = 0;  // inclusive; SIZE_MAX for the open bucket
    std::size_t count = 0;
    double avg_rounds = 0.0;
    Prf node;
    Prf slot;
    double success_rate = 0.0;
};

struct ModeReport {
    PolicyMode mode = PolicyMode::Pus;
    std::vector<BucketMetrics> buckets;
    BucketMetrics overall;
};

struct MetricsReport {
    std::vector<ModeReport> modes;
    const ModeReport* find(PolicyMode mode) const;
};

/// Bucket edges {2, 4, 6, 8} give 2-3, 4-5, 6-7, 8+ goal nodes (root included).
/// p and r are session means; f1 is computed from those means.
MetricsReport aggregate(const std::vector<SessionResult>& results, const std::vector<std::size_t>& edges);
std::string format_report(const MetricsReport& report);

// ---------------------------------------------------------------- experiments

struct ExperimentSpec {
    std::optional<std::filesystem::path> corpus_path;
    std::optional<std::filesystem::path> models_dir;
    PopulationConfig population;
    TrainingOptions training;
    PolicyConfig policy;
    std::vector<PolicyMode> modes{PolicyMode::Pus, PolicyMode::GlobalTendency};
    std::vector<std::size_t> bucket_edges{2, 4, 6, 8};
    StyleWeights default_style;  // for goals taken from a corpus file
    std::size_t threads = 0;
};

/// Throws InvalidSpec on malformed input.
ExperimentSpec parse_experiment(const json& j);
json experiment_to_json(const ExperimentSpec& spec);

struct ExperimentOutput {
    std::vector<SessionResult> results;  // sorted by (user, goal, mode)
    MetricsReport report;
};

/// Sessions for already trained models. Results do not depend on `threads`.
std::vector<SessionResult> run_sessions(const ModelBundle& bundle, const std::vector<SessionJob>& jobs,
                                        const PolicyConfig& policy, std::size_t threads);

std::vector<SessionJob> jobs_for_population(const Population& population, const std::vector<PolicyMode>& modes);
std::vector<SessionJob> jobs_for_corpus(const Corpus& corpus, const StyleWeights& style,
                                        const std::vector<PolicyMode>& modes);

ExperimentOutput run_experiment(const ExperimentSpec& spec);

json result_to_json(const SessionResult& r);
std::string results_jsonl(const std::vector<SessionResult>& results);
/// Writes results.jsonl and report.txt.
void write_outputs(const ExperimentOutput& output, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------- response acts

struct ActScore {
    std::string user_id;
    double personal_f1 = 0.0;
    double global_f1 = 0.0;
    std::size_t turns = 0;
};

/// Macro F1 over act labels of argmax predictions against the user's true
/// table argmax, on every user turn of `test` that the system answered.
std::vector<ActScore> response_act_scores(const Population& population, const Corpus& test, const ModelBundle& bundle);

double macro_f1(const std::vector<DialogueAct>& truth, const std::vector<DialogueAct>& predicted);

}  // namespace reqtree
