#include "reqtree/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <spdlog/spdlog.h>

#include "reqtree/hashing.hpp"

namespace reqtree {

namespace {

std::size_t worker_count(std::size_t requested, std::size_t jobs) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs fn(i) for i in [0, n) on a small pool. Each index writes its own slot,
// so results never depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    const std::size_t workers = worker_count(threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

}  // namespace

// ---------------------------------------------------------------- training

PatternLibrary mine_library(const Corpus& corpus, const TrainingOptions& opts) {
    std::vector<RTree> trees;
    trees.reserve(corpus.dialogues.size());
    for (const auto& d : corpus.dialogues) trees.push_back(d.goal);
    const std::size_t support = opts.min_support ? opts.min_support : default_min_support(trees.size());
    return mine_patterns(trees, support, opts.max_pattern_size);
}

ModelBundle train_models(const Corpus& corpus, const TrainingOptions& opts, std::size_t threads) {
    ModelBundle b;
    b.library = mine_library(corpus, opts);

    const auto by_user = da_sequences_by_user(corpus);
    std::vector<DaSequence> pooled;
    for (const auto& [user, seqs] : by_user) pooled.insert(pooled.end(), seqs.begin(), seqs.end());
    b.global_ast = train_wfst(pooled, {opts.wfst_max_states, opts.wfst_alpha, ""});

    std::vector<std::string> users;
    for (const auto& [user, seqs] : by_user) users.push_back(user);
    std::vector<WfstModel> models(users.size());
    parallel_for(users.size(), threads, [&](std::size_t i) {
        models[i] = train_wfst(by_user.at(users[i]), {opts.wfst_max_states, opts.wfst_alpha, users[i]});
    });
    for (std::size_t i = 0; i < users.size(); ++i) b.user_ast.emplace(users[i], std::move(models[i]));

    const auto sequences = requirement_sequences_by_user(corpus);
    b.fpmc = train_fpmc(sequences, opts.fpmc);
    b.bigram = count_bigrams(sequences);
    b.preferences = mine_all(corpus, opts.ra_window);
    return b;
}

void save_models(const ModelBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json ast{{"global", b.global_ast}, {"users", b.user_ast}};
    write_text(dir / "ast.json", ast.dump(1) + "\n");
    write_text(dir / "fpmc.json", json(b.fpmc).dump(1) + "\n");
    write_text(dir / "bigram.json", json(b.bigram).dump(1) + "\n");
    write_text(dir / "ra.json", json(b.preferences).dump(1) + "\n");
    write_text(dir / "library.json", json(b.library).dump(1) + "\n");
}

ModelBundle load_models(const std::filesystem::path& dir) {
    std::vector<std::string> missing;
    for (const char* f : {"ast.json", "fpmc.json", "bigram.json", "ra.json", "library.json"}) {
        if (!std::filesystem::exists(dir / f)) missing.push_back((dir / f).string());
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(ErrorKind::MissingModel, list);
    }
    ModelBundle b;
    try {
        const auto ast = read_json(dir / "ast.json");
        b.global_ast = ast.at("global").get<WfstModel>();
        b.user_ast = ast.at("users").get<std::map<std::string, WfstModel>>();
        b.fpmc = read_json(dir / "fpmc.json").get<FpmcModel>();
        b.bigram = read_json(dir / "bigram.json").get<RequirementBigram>();
        b.preferences = read_json(dir / "ra.json").get<std::map<std::string, RaPreferenceStore>>();
        b.library = read_json(dir / "library.json").get<PatternLibrary>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, dir.string() + ": " + e.what());
    }
    return b;
}

PolicyModels policy_models(const ModelBundle& b, PolicyMode mode, const std::string& user_id) {
    PolicyModels m;
    m.library = &b.library;
    m.user_id = user_id;
    if (mode == PolicyMode::Pus) {
        auto it = b.user_ast.find(user_id);
        m.ast = it != b.user_ast.end() ? &it->second : &b.global_ast;
        m.fpmc = &b.fpmc;
        if (auto p = b.preferences.find(user_id); p != b.preferences.end()) m.preferences = &p->second;
    } else {
        m.ast = &b.global_ast;
        m.bigram = &b.bigram;
    }
    return m;
}

// ---------------------------------------------------------------- metrics

double f1_of(double p, double r) {
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

Prf make_prf(double overlap, double generated, double goal) {
    Prf out;
    out.p = generated > 0 ? overlap / generated : 0.0;
    out.r = goal > 0 ? overlap / goal : 0.0;
    out.f1 = f1_of(out.p, out.r);
    return out;
}

SessionScore score_session(const RTree& goal, const RTree& generated) {
    const auto overlap = tree_intersection_size(goal, generated);
    SessionScore s;
    s.node = make_prf(static_cast<double>(overlap.node_overlap), static_cast<double>(generated.nodes.size()),
                      static_cast<double>(goal.nodes.size()));
    s.slot = make_prf(static_cast<double>(overlap.node_overlap + overlap.slot_overlap),
                      static_cast<double>(generated.nodes.size() + slot_count(generated)),
                      static_cast<double>(goal.nodes.size() + slot_count(goal)));
    return s;
}

// ---------------------------------------------------------------- sessions

SessionResult run_session(const Policy& policy, const SessionJob& job, std::vector<json>* transcript) {
    Agenda agenda = build_agenda(job.goal.goal, job.goal.order);
    const CounterRng rng = CounterRng{job.style.seed}.split(job.goal_index);
    auto state = policy.init_session(agenda.root);
    DialogAction sys = DialogAction::general();
    // The policy always finishes by max_rounds; the guard only protects against bugs.
    const std::size_t guard = policy.config().max_rounds + 1;
    for (std::size_t t = 0; !state.finished; ++t) {
        if (t > guard) throw Error(ErrorKind::InvalidValue, "session exceeded its round cap");
        const DialogAction user = user_step(agenda, job.style, sys, rng);
        if (transcript) transcript->push_back(transcript_entry(t + 1, Speaker::User, user, state));
        std::tie(state, sys) = policy.handle_user_action(std::move(state), user);
        if (transcript) transcript->push_back(transcript_entry(t + 1, Speaker::System, sys, state));
    }
    SessionResult r;
    r.user_id = job.user_id;
    r.goal_index = job.goal_index;
    r.mode = job.mode;
    r.rounds = state.turn_count;
    r.goal = job.goal.goal;
    r.generated = state.tree;
    r.finished = state.finished;
    r.score = score_session(r.goal, r.generated);
    const auto overlap = tree_intersection_size(r.goal, r.generated);
    r.success = overlap.node_overlap == r.goal.nodes.size() && r.rounds <= policy.config().max_rounds;
    return r;
}

const ModeReport* MetricsReport::find(PolicyMode mode) const {
    for (const auto& m : modes) {
        if (m.mode == mode) return &m;
    }
    return nullptr;
}

namespace {

BucketMetrics summarize(std::string label, std::size_t lo, std::size_t hi, const std::vector<const SessionResult*>& rs) {
    BucketMetrics b;
    b.label = std::move(label);
    b.lo = lo;
    b.hi = hi;
    b.count = rs.size();
    if (rs.empty()) return b;
    double rounds = 0, np = 0, nr = 0, sp = 0, sr = 0, ok = 0;
    for (const auto* r : rs) {
        rounds += static_cast<double>(r->rounds);
        np += r->score.node.p;
        nr += r->score.node.r;
        sp += r->score.slot.p;
        sr += r->score.slot.r;
        ok += r->success ? 1 : 0;
    }
    const double n = static_cast<double>(rs.size());
    b.avg_rounds = rounds / n;
    b.node = {np / n, nr / n, f1_of(np / n, nr / n)};
    b.slot = {sp / n, sr / n, f1_of(sp / n, sr / n)};
    b.success_rate = ok / n;
    return b;
}

}  // namespace

MetricsReport aggregate(const std::vector<SessionResult>& results, const std::vector<std::size_t>& edges) {
    std::set<PolicyMode> modes;
    for (const auto& r : results) modes.insert(r.mode);
    MetricsReport report;
    for (auto mode : modes) {
        ModeReport mr;
        mr.mode = mode;
        std::vector<const SessionResult*> all;
        for (const auto& r : results) {
            if (r.mode == mode) all.push_back(&r);
        }
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const std::size_t lo = edges[i];
            const std::size_t hi = i + 1 < edges.size() ? edges[i + 1] - 1 : std::numeric_limits<std::size_t>::max();
            std::vector<const SessionResult*> in;
            for (const auto* r : all) {
                const auto n = r->goal.nodes.size();
                if (n >= lo && n <= hi) in.push_back(r);
            }
            std::string label = i + 1 < edges.size()
                                    ? (lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi))
                                    : std::to_string(lo) + "+";
            mr.buckets.push_back(summarize(std::move(label), lo, hi, in));
        }
        mr.overall = summarize("all", 0, std::numeric_limits<std::size_t>::max(), all);
        report.modes.push_back(std::move(mr));
    }
    return report;
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-7s %-6s %6s %7s %6s %6s %6s %6s %6s %6s %7s\n", "mode", "nodes", "n", "rounds",
                  "nodeP", "nodeR", "nodeF1", "slotP", "slotR", "slotF1", "success");
    os << line;
    for (const auto& m : report.modes) {
        auto row = [&](const BucketMetrics& b) {
            std::snprintf(line, sizeof line, "%-7s %-6s %6zu %7.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %7.3f\n",
                          to_string(m.mode), b.label.c_str(), b.count, b.avg_rounds, b.node.p, b.node.r, b.node.f1,
                          b.slot.p, b.slot.r, b.slot.f1, b.success_rate);
            os << line;
        };
        for (const auto& b : m.buckets) row(b);
        row(m.overall);
    }
    return os.str();
}

// ---------------------------------------------------------------- experiments

ExperimentSpec parse_experiment(const json& j) {
    ExperimentSpec spec;
    try {
        if (!j.is_object()) throw Error(ErrorKind::InvalidSpec, "experiment spec must be a JSON object");
        if (j.contains("corpus")) spec.corpus_path = j.at("corpus").get<std::string>();
        if (j.contains("models_dir")) spec.models_dir = j.at("models_dir").get<std::string>();
        if (j.contains("population")) spec.population = j.at("population").get<PopulationConfig>();
        if (j.contains("seed")) spec.population.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("training")) {
            const auto& t = j.at("training");
            spec.training.wfst_max_states = t.value("wfst_max_states", spec.training.wfst_max_states);
            spec.training.wfst_alpha = t.value("wfst_alpha", spec.training.wfst_alpha);
            if (t.contains("fpmc")) spec.training.fpmc = t.at("fpmc").get<TrainConfig>();
            spec.training.ra_window = t.value("ra_window", spec.training.ra_window);
            spec.training.min_support = t.value("min_support", spec.training.min_support);
            spec.training.max_pattern_size = t.value("max_pattern_size", spec.training.max_pattern_size);
        }
        if (j.contains("policy")) spec.policy = j.at("policy").get<PolicyConfig>();
        if (j.contains("modes")) {
            spec.modes.clear();
            for (const auto& m : j.at("modes")) spec.modes.push_back(parse_policy_mode(m.get<std::string>()));
            if (spec.modes.empty()) throw Error(ErrorKind::InvalidSpec, "modes must not be empty");
        }
        if (j.contains("bucket_edges")) {
            spec.bucket_edges = j.at("bucket_edges").get<std::vector<std::size_t>>();
            if (spec.bucket_edges.empty() || !std::is_sorted(spec.bucket_edges.begin(), spec.bucket_edges.end()) ||
                std::adjacent_find(spec.bucket_edges.begin(), spec.bucket_edges.end()) != spec.bucket_edges.end()) {
                throw Error(ErrorKind::InvalidSpec, "bucket_edges must be strictly increasing");
            }
        }
        if (j.contains("default_style")) spec.default_style = j.at("default_style").get<StyleWeights>();
        spec.threads = j.value("threads", spec.threads);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidSpec, e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidSpec) throw;
        throw Error(ErrorKind::InvalidSpec, e.what());
    }
    return spec;
}

json experiment_to_json(const ExperimentSpec& spec) {
    json modes = json::array();
    for (auto m : spec.modes) modes.push_back(to_string(m));
    json j{{"population", spec.population},
           {"training",
            {{"wfst_max_states", spec.training.wfst_max_states},
             {"wfst_alpha", spec.training.wfst_alpha},
             {"fpmc", spec.training.fpmc},
             {"ra_window", spec.training.ra_window},
             {"min_support", spec.training.min_support},
             {"max_pattern_size", spec.training.max_pattern_size}}},
           {"policy", spec.policy},
           {"modes", std::move(modes)},
           {"bucket_edges", spec.bucket_edges},
           {"default_style", spec.default_style},
           {"threads", spec.threads}};
    if (spec.corpus_path) j["corpus"] = spec.corpus_path->string();
    if (spec.models_dir) j["models_dir"] = spec.models_dir->string();
    return j;
}

std::vector<SessionResult> run_sessions(const ModelBundle& bundle, const std::vector<SessionJob>& jobs,
                                        const PolicyConfig& policy, std::size_t threads) {
    std::vector<const SessionJob*> order;
    for (const auto& j : jobs) order.push_back(&j);
    std::stable_sort(order.begin(), order.end(), [](const SessionJob* a, const SessionJob* b) {
        return std::tie(a->user_id, a->goal_index, a->mode) < std::tie(b->user_id, b->goal_index, b->mode);
    });
    std::vector<SessionResult> results(order.size());
    parallel_for(order.size(), threads, [&](std::size_t i) {
        const auto& job = *order[i];
        PolicyConfig cfg = policy;
        cfg.mode = job.mode;
        const Policy p(policy_models(bundle, job.mode, job.user_id), cfg);
        results[i] = run_session(p, job);
    });
    return results;
}

std::vector<SessionJob> jobs_for_population(const Population& pop, const std::vector<PolicyMode>& modes) {
    std::vector<SessionJob> jobs;
    for (const auto& u : pop.users) {
        for (std::size_t g = 0; g < u.eval_goals.size(); ++g) {
            for (auto m : modes) jobs.push_back({u.user_id, g, u.eval_goals[g], u.style, m});
        }
    }
    return jobs;
}

std::vector<SessionJob> jobs_for_corpus(const Corpus& corpus, const StyleWeights& style,
                                        const std::vector<PolicyMode>& modes) {
    std::vector<SessionJob> jobs;
    for (const auto& user : corpus.user_ids()) {
        StyleWeights w = style;
        w.seed = fnv1a64(user, style.seed ? style.seed : 0xcbf29ce484222325ULL);
        const auto dialogues = corpus.dialogues_of(user);
        for (std::size_t g = 0; g < dialogues.size(); ++g) {
            GoalSpec spec;
            spec.goal = dialogues[g]->goal;
            spec.order = extract_requirement_sequence(*dialogues[g]);
            try {
                (void)build_agenda(spec.goal, spec.order);
            } catch (const Error&) {
                spec.order.clear();
                for (const auto& id : preorder(spec.goal)) {
                    if (id != spec.goal.root) spec.order.push_back(spec.goal.node(id).req);
                }
            }
            for (auto m : modes) jobs.push_back({user, g, spec, w, m});
        }
    }
    return jobs;
}

ExperimentOutput run_experiment(const ExperimentSpec& spec) {
    Corpus corpus;
    std::vector<SessionJob> jobs;
    if (spec.corpus_path) {
        corpus = load_corpus(*spec.corpus_path);
        jobs = jobs_for_corpus(corpus, spec.default_style, spec.modes);
    } else {
        auto pop = generate_synthetic_population(spec.population);
        jobs = jobs_for_population(pop, spec.modes);
        corpus = std::move(pop.corpus);
    }
    spdlog::info("experiment: {} dialogues, {} sessions", corpus.dialogues.size(), jobs.size());

    ModelBundle bundle;
    if (spec.models_dir) {
        bundle = load_models(*spec.models_dir);
    } else {
        bundle = train_models(corpus, spec.training, spec.threads);
    }
    ExperimentOutput out;
    out.results = run_sessions(bundle, jobs, spec.policy, spec.threads);
    out.report = aggregate(out.results, spec.bucket_edges);
    return out;
}

json result_to_json(const SessionResult& r) {
    auto prf = [](const Prf& p) { return json{{"p", p.p}, {"r", p.r}, {"f1", p.f1}}; };
    return json{{"user_id", r.user_id},
                {"goal_index", r.goal_index},
                {"mode", to_string(r.mode)},
                {"rounds", r.rounds},
                {"success", r.success},
                {"finished", r.finished},
                {"goal_nodes", r.goal.nodes.size()},
                {"node", prf(r.score.node)},
                {"node_slot", prf(r.score.slot)},
                {"goal", r.goal},
                {"generated", r.generated}};
}

std::string results_jsonl(const std::vector<SessionResult>& results) {
    std::string out;
    for (const auto& r : results) out += result_to_json(r).dump() + "\n";
    return out;
}

void write_outputs(const ExperimentOutput& output, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "results.jsonl", results_jsonl(output.results));
    write_text(out_dir / "report.txt", format_report(output.report));
}

// ---------------------------------------------------------------- response acts

double macro_f1(const std::vector<DialogueAct>& truth, const std::vector<DialogueAct>& predicted) {
    if (truth.size() != predicted.size()) throw Error(ErrorKind::InvalidValue, "label vectors differ in length");
    std::set<DialogueAct> labels(truth.begin(), truth.end());
    labels.insert(predicted.begin(), predicted.end());
    if (labels.empty()) return 0.0;
    double total = 0;
    for (auto l : labels) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == l;
            const bool p = predicted[i] == l;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        total += 2 * tp / (2 * tp + fp + fn);
    }
    return total / static_cast<double>(labels.size());
}

std::vector<ActScore> response_act_scores(const Population& pop, const Corpus& test, const ModelBundle& bundle) {
    std::vector<ActScore> out;
    for (const auto& user : pop.users) {
        auto it = bundle.user_ast.find(user.user_id);
        const WfstModel& personal = it != bundle.user_ast.end() ? it->second : bundle.global_ast;
        const WfstModel& global = bundle.global_ast;
        std::vector<DialogueAct> truth, pred_p, pred_g;
        for (const auto* d : test.dialogues_of(user.user_id)) {
            const auto seq = extract_da_sequence(*d);
            StateId sp = personal.start_state, sg = global.start_state;
            for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                if (seq[i].first != Speaker::User || seq[i + 1].first != Speaker::System) continue;
                const auto u = seq[i].second;
                const auto o = seq[i + 1].second;
                // The closing General exchange is scripted, not drawn from the table.
                if (u != DialogueAct::General) {
                    truth.push_back(table_argmax(user.act_table, u));
                    pred_p.push_back(predict(personal, sp, u));
                    pred_g.push_back(predict(global, sg, u));
                }
                sp = personal.next_state(u, o);
                sg = global.next_state(u, o);
                ++i;
            }
        }
        out.push_back({user.user_id, macro_f1(truth, pred_p), macro_f1(truth, pred_g), truth.size()});
    }
    return out;
}

}  // namespace reqtree
