#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reqtree/core_model.hpp"

namespace reqtree {

/// Reserved item standing in for "no requirement confirmed yet".
inline const std::string kStartItem = "<start>";

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    bool operator==(const Matrix&) const = default;
};

struct TrainConfig {
    std::size_t k = 16;
    std::size_t epochs = 200;
    double learning_rate = 0.05;
    double regularization = 0.01;
    std::size_t negative_samples = 3;
    std::uint64_t seed = 42;
    double init_stddev = 0.1;

    bool operator==(const TrainConfig&) const = default;
};

/// Factorized personalized Markov chain over requirement labels, first order
/// with size-1 baskets:
///   score(u, prev, c) = <user[u], item_user[c]> + <item_prev[c], prev_item[prev]>
struct FpmcModel {
    std::map<std::string, std::size_t> user_index;
    std::map<std::string, std::size_t> item_index;  // includes kStartItem
    Matrix user_factors;       // users x k
    Matrix item_user_factors;  // items x k
    Matrix item_prev_factors;  // items x k, candidate side of the transition term
    Matrix prev_item_factors;  // items x k, previous-item side
    std::size_t k = 0;
    TrainConfig config;
    std::vector<double> epoch_loss;  // mean -ln sigma(x) per epoch

    bool operator==(const FpmcModel&) const = default;
};

/// Zero-initialised model with the given index sets (kStartItem added).
FpmcModel make_fpmc(const std::vector<std::string>& users, const std::vector<std::string>& items, std::size_t k);

/// Unknown user -> item-item term only. Unknown label -> UnknownLabel.
double score_next(const FpmcModel& model, const std::string& user, const std::string& previous,
                  const std::string& candidate);

/// Like score_next, but labels the model has never seen (on either side)
/// contribute a zero embedding instead of throwing.
double score_or_zero(const FpmcModel& model, const std::string& user, const std::string& previous,
                     const std::string& candidate);

using UserSequences = std::map<std::string, std::vector<std::vector<std::string>>>;

/// S-BPR stochastic gradient ascent. Needs at least two distinct labels.
FpmcModel train_fpmc(const UserSequences& sequences, const TrainConfig& cfg);

/// Descending score, ties by label. `recent` empty means the start item.
/// Labels the model has never seen contribute a zero embedding.
std::vector<std::string> rank_candidates(const FpmcModel& model, const std::string& user,
                                         const std::optional<std::string>& recent,
                                         const std::vector<std::string>& candidates);

/// Pooled requirement-bigram counts; the non-personalized ranking used by the
/// global-tendency baseline.
struct RequirementBigram {
    std::map<std::string, std::map<std::string, std::size_t>> counts;  // prev -> next -> n

    std::size_t count(const std::string& prev, const std::string& next) const;
    /// Label with the largest count after `prev` (ties by label), if any.
    std::optional<std::string> argmax_after(const std::string& prev) const;
};

RequirementBigram count_bigrams(const UserSequences& sequences);

/// Descending bigram count from `recent`, ties by label.
std::vector<std::string> rank_by_bigram(const RequirementBigram& bigram, const std::optional<std::string>& recent,
                                        const std::vector<std::string>& candidates);

void to_json(json& j, const TrainConfig& cfg);
void from_json(const json& j, TrainConfig& cfg);
void to_json(json& j, const FpmcModel& model);
void from_json(const json& j, FpmcModel& model);
void to_json(json& j, const RequirementBigram& bigram);
void from_json(const json& j, RequirementBigram& bigram);

}  // namespace reqtree
