#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reqtree/core_model.hpp"

namespace reqtree {

/// Stateless generator: every draw is a pure function of (seed, turn, draw),
/// so per-turn randomness does not depend on how many draws earlier turns made.
struct CounterRng {
    std::uint64_t seed = 0;

    std::uint64_t bits(std::uint64_t turn, std::uint64_t draw) const;
    /// Uniform in [0, 1).
    double uniform(std::uint64_t turn, std::uint64_t draw) const;
    /// Child generator for an independent stream.
    CounterRng split(std::uint64_t stream) const;
};

std::uint64_t splitmix64(std::uint64_t x);

struct StyleWeights {
    double proactivity = 0.5;
    double accept_threshold = 1.0;
    std::size_t verbosity = 2;
    std::uint64_t seed = 0;
};

void validate(const StyleWeights& w);

struct AgendaItem {
    std::string label;
    std::optional<std::string> parent;
    std::vector<Slot> goal_slots;
    std::vector<Slot> remaining;
    bool expressed = false;

    bool done() const { return expressed && remaining.empty(); }
};

struct Agenda {
    std::string root;
    std::vector<AgendaItem> items;  // popping order
    std::uint64_t turn = 0;

    bool done() const;
    AgendaItem* find(const std::string& label);
    const AgendaItem* find(const std::string& label) const;
    /// First item that is not done yet.
    AgendaItem* next_pending();
    std::vector<std::string> order() const;
};

/// `order` must list the goal's non-root labels exactly once each (as a
/// multiset); throws OrderMismatch otherwise.
Agenda build_agenda(const RTree& goal, const std::vector<std::string>& order);

/// One user turn in reply to `system_action`. Updates the agenda.
DialogAction user_step(Agenda& agenda, const StyleWeights& weights, const DialogAction& system_action,
                       const CounterRng& rng);

void to_json(json& j, const StyleWeights& w);
void from_json(const json& j, StyleWeights& w);

}  // namespace reqtree
