#include "reqtree/fpmc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

namespace reqtree {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// -ln sigma(x), stable for large |x|.
double neg_log_sigmoid(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct Example {
    std::size_t user;
    std::size_t prev;
    std::size_t next;
};

}  // namespace

FpmcModel make_fpmc(const std::vector<std::string>& users, const std::vector<std::string>& items, std::size_t k) {
    if (k < 1) throw Error(ErrorKind::InvalidValue, "embedding dimension k must be >= 1");
    FpmcModel m;
    m.k = k;
    m.config.k = k;
    std::set<std::string> u(users.begin(), users.end());
    std::set<std::string> it(items.begin(), items.end());
    it.insert(kStartItem);
    for (const auto& name : u) m.user_index.emplace(name, m.user_index.size());
    for (const auto& name : it) m.item_index.emplace(name, m.item_index.size());
    m.user_factors = Matrix(m.user_index.size(), k);
    m.item_user_factors = Matrix(m.item_index.size(), k);
    m.item_prev_factors = Matrix(m.item_index.size(), k);
    m.prev_item_factors = Matrix(m.item_index.size(), k);
    return m;
}

double score_next(const FpmcModel& model, const std::string& user, const std::string& previous,
                  const std::string& candidate) {
    auto ci = model.item_index.find(candidate);
    if (ci == model.item_index.end()) throw Error(ErrorKind::UnknownLabel, "'" + candidate + "' is not indexed");
    auto pi = model.item_index.find(previous);
    if (pi == model.item_index.end()) throw Error(ErrorKind::UnknownLabel, "'" + previous + "' is not indexed");
    double s = dot(model.item_prev_factors.row(ci->second), model.prev_item_factors.row(pi->second));
    if (auto ui = model.user_index.find(user); ui != model.user_index.end()) {
        s += dot(model.user_factors.row(ui->second), model.item_user_factors.row(ci->second));
    }
    return s;
}

FpmcModel train_fpmc(const UserSequences& sequences, const TrainConfig& cfg) {
    if (cfg.k < 1) throw Error(ErrorKind::InvalidValue, "embedding dimension k must be >= 1");
    if (!(cfg.learning_rate > 0)) throw Error(ErrorKind::InvalidValue, "learning rate must be positive");

    std::vector<std::string> users, labels;
    std::set<std::string> distinct;
    for (const auto& [user, seqs] : sequences) {
        users.push_back(user);
        for (const auto& seq : seqs) distinct.insert(seq.begin(), seq.end());
    }
    distinct.erase(kStartItem);
    if (distinct.size() < 2) throw Error(ErrorKind::DegenerateCorpus, "need at least two distinct requirement labels");
    labels.assign(distinct.begin(), distinct.end());

    FpmcModel m = make_fpmc(users, labels, cfg.k);
    m.config = cfg;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> init(0.0, cfg.init_stddev);
    for (auto* mat : {&m.user_factors, &m.item_user_factors, &m.item_prev_factors, &m.prev_item_factors}) {
        for (auto& v : mat->data) v = init(rng);
    }

    std::vector<Example> examples;
    const std::size_t start = m.item_index.at(kStartItem);
    for (const auto& [user, seqs] : sequences) {
        const std::size_t u = m.user_index.at(user);
        for (const auto& seq : seqs) {
            std::size_t prev = start;
            for (const auto& label : seq) {
                if (label == kStartItem) continue;
                const std::size_t next = m.item_index.at(label);
                examples.push_back({u, prev, next});
                prev = next;
            }
        }
    }

    std::vector<std::size_t> real_items;
    for (const auto& [label, idx] : m.item_index) {
        if (idx != start) real_items.push_back(idx);
    }
    std::uniform_int_distribution<std::size_t> pick(0, real_items.size() - 2);
    const std::size_t k = cfg.k;
    const double lr = cfg.learning_rate;
    const double reg = cfg.regularization;
    std::vector<double> tmp_u(k), tmp_l(k);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(examples.begin(), examples.end(), rng);
        double loss = 0;
        std::size_t updates = 0;
        for (const auto& ex : examples) {
            for (std::size_t s = 0; s < cfg.negative_samples; ++s) {
                // Uniform over real items other than the observed one.
                std::size_t pos = pick(rng);
                std::size_t j = real_items[pos];
                if (j == ex.next) j = real_items.back();
                if (j == ex.next) continue;

                auto vu = m.user_factors.row(ex.user);
                auto vi_u = m.item_user_factors.row(ex.next);
                auto vj_u = m.item_user_factors.row(j);
                auto vi_l = m.item_prev_factors.row(ex.next);
                auto vj_l = m.item_prev_factors.row(j);
                auto vl = m.prev_item_factors.row(ex.prev);

                const double x = dot(vu, vi_u) - dot(vu, vj_u) + dot(vi_l, vl) - dot(vj_l, vl);
                loss += neg_log_sigmoid(x);
                ++updates;
                const double delta = 1.0 - sigmoid(x);

                for (std::size_t f = 0; f < k; ++f) {
                    tmp_u[f] = vu[f];
                    tmp_l[f] = vl[f];
                }
                for (std::size_t f = 0; f < k; ++f) {
                    vu[f] += lr * (delta * (vi_u[f] - vj_u[f]) - reg * vu[f]);
                    vl[f] += lr * (delta * (vi_l[f] - vj_l[f]) - reg * vl[f]);
                    vi_u[f] += lr * (delta * tmp_u[f] - reg * vi_u[f]);
                    vj_u[f] += lr * (-delta * tmp_u[f] - reg * vj_u[f]);
                    vi_l[f] += lr * (delta * tmp_l[f] - reg * vi_l[f]);
                    vj_l[f] += lr * (-delta * tmp_l[f] - reg * vj_l[f]);
                }
            }
        }
        m.epoch_loss.push_back(updates ? loss / static_cast<double>(updates) : 0.0);
    }
    return m;
}

double score_or_zero(const FpmcModel& model, const std::string& user, const std::string& previous,
                     const std::string& candidate) {
    const auto ci = model.item_index.find(candidate);
    if (ci == model.item_index.end()) return 0.0;
    double s = 0;
    if (auto pi = model.item_index.find(previous); pi != model.item_index.end()) {
        s += dot(model.item_prev_factors.row(ci->second), model.prev_item_factors.row(pi->second));
    }
    if (auto ui = model.user_index.find(user); ui != model.user_index.end()) {
        s += dot(model.user_factors.row(ui->second), model.item_user_factors.row(ci->second));
    }
    return s;
}

std::vector<std::string> rank_candidates(const FpmcModel& model, const std::string& user,
                                         const std::optional<std::string>& recent,
                                         const std::vector<std::string>& candidates) {
    const std::string prev = recent.value_or(kStartItem);
    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(candidates.size());
    for (const auto& c : candidates) scored.emplace_back(score_or_zero(model, user, prev, c), c);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    out.reserve(scored.size());
    for (auto& [s, c] : scored) out.push_back(std::move(c));
    return out;
}

std::size_t RequirementBigram::count(const std::string& prev, const std::string& next) const {
    auto it = counts.find(prev);
    if (it == counts.end()) return 0;
    auto jt = it->second.find(next);
    return jt == it->second.end() ? 0 : jt->second;
}

std::optional<std::string> RequirementBigram::argmax_after(const std::string& prev) const {
    auto it = counts.find(prev);
    if (it == counts.end() || it->second.empty()) return std::nullopt;
    const std::string* best = nullptr;
    std::size_t best_n = 0;
    for (const auto& [next, n] : it->second) {
        if (!best || n > best_n) {
            best = &next;
            best_n = n;
        }
    }
    return *best;
}

RequirementBigram count_bigrams(const UserSequences& sequences) {
    RequirementBigram b;
    for (const auto& [user, seqs] : sequences) {
        for (const auto& seq : seqs) {
            std::string prev = kStartItem;
            for (const auto& label : seq) {
                ++b.counts[prev][label];
                prev = label;
            }
        }
    }
    return b;
}

std::vector<std::string> rank_by_bigram(const RequirementBigram& bigram, const std::optional<std::string>& recent,
                                        const std::vector<std::string>& candidates) {
    const std::string prev = recent.value_or(kStartItem);
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto& c : candidates) scored.emplace_back(bigram.count(prev, c), c);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& [n, c] : scored) out.push_back(std::move(c));
    return out;
}

void to_json(json& j, const TrainConfig& cfg) {
    j = json{{"k", cfg.k},
             {"epochs", cfg.epochs},
             {"learning_rate", cfg.learning_rate},
             {"regularization", cfg.regularization},
             {"negative_samples", cfg.negative_samples},
             {"seed", cfg.seed},
             {"init_stddev", cfg.init_stddev}};
}

void from_json(const json& j, TrainConfig& cfg) {
    TrainConfig d;
    cfg.k = j.value("k", d.k);
    cfg.epochs = j.value("epochs", d.epochs);
    cfg.learning_rate = j.value("learning_rate", d.learning_rate);
    cfg.regularization = j.value("regularization", d.regularization);
    cfg.negative_samples = j.value("negative_samples", d.negative_samples);
    cfg.seed = j.value("seed", d.seed);
    cfg.init_stddev = j.value("init_stddev", d.init_stddev);
    if (cfg.k < 1) throw Error(ErrorKind::InvalidValue, "k must be >= 1");
    if (!(cfg.learning_rate > 0)) throw Error(ErrorKind::InvalidValue, "learning_rate must be > 0");
}

namespace {

json matrix_json(const Matrix& m) { return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}}; }

Matrix matrix_from(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw Error(ErrorKind::InvalidValue, "matrix data has wrong length");
    return m;
}

}  // namespace

void to_json(json& j, const FpmcModel& model) {
    j = json{{"k", model.k},
             {"user_index", model.user_index},
             {"item_index", model.item_index},
             {"user_factors", matrix_json(model.user_factors)},
             {"item_user_factors", matrix_json(model.item_user_factors)},
             {"item_prev_factors", matrix_json(model.item_prev_factors)},
             {"prev_item_factors", matrix_json(model.prev_item_factors)},
             {"config", model.config},
             {"epoch_loss", model.epoch_loss}};
}

void from_json(const json& j, FpmcModel& model) {
    model = FpmcModel{};
    model.k = j.at("k").get<std::size_t>();
    model.user_index = j.at("user_index").get<std::map<std::string, std::size_t>>();
    model.item_index = j.at("item_index").get<std::map<std::string, std::size_t>>();
    model.user_factors = matrix_from(j.at("user_factors"));
    model.item_user_factors = matrix_from(j.at("item_user_factors"));
    model.item_prev_factors = matrix_from(j.at("item_prev_factors"));
    model.prev_item_factors = matrix_from(j.at("prev_item_factors"));
    model.config = j.at("config").get<TrainConfig>();
    model.epoch_loss = j.value("epoch_loss", std::vector<double>{});
    const auto ok = [&](const Matrix& m, std::size_t rows) { return m.rows == rows && m.cols == model.k; };
    if (!ok(model.user_factors, model.user_index.size()) || !ok(model.item_user_factors, model.item_index.size()) ||
        !ok(model.item_prev_factors, model.item_index.size()) ||
        !ok(model.prev_item_factors, model.item_index.size())) {
        throw Error(ErrorKind::InvalidValue, "FPMC matrices disagree with indices or k");
    }
}

void to_json(json& j, const RequirementBigram& bigram) { j = json{{"counts", bigram.counts}}; }

void from_json(const json& j, RequirementBigram& bigram) {
    bigram.counts = j.at("counts").get<std::map<std::string, std::map<std::string, std::size_t>>>();
}

}  // namespace reqtree
