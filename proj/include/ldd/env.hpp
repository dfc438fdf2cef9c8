#pragma once

// Deterministic language-grounded gridworld. Each episode binds entity
// classes to roles (goal / avoid / neutral) and movement patterns; the
// manual describes the bindings in templated text, so an agent must read
// to know which symbol to reach and which to avoid. Generalization splits
// hold out (goal, avoid) class pairs.
//
// All randomness is consumed at reset(); step() is a pure function of
// state and action, which makes trajectories replayable from (seed,
// actions) and keeps every transition exactly predictable from a single
// observation plus the manual.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldd/vocab.hpp"

namespace ldd {

enum class Role : uint8_t { goal = 0, avoid = 1, neutral = 2 };
enum class MovePattern : uint8_t { still = 0, chase = 1, flee = 2 };
enum class Side { train, eval };

// actions: fixed order used for tie-breaking everywhere
enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
constexpr int kNumActions = 5;

struct SplitSpec {
    std::vector<std::pair<uint8_t, uint8_t>> train_pairs;  // (goal class, avoid class)
    std::vector<std::pair<uint8_t, uint8_t>> eval_pairs;
    uint64_t seed = 0;
    const std::vector<std::pair<uint8_t, uint8_t>>& side(Side s) const {
        return s == Side::train ? train_pairs : eval_pairs;
    }
};

SplitSpec generate_split(int n_classes, double holdout_fraction, uint64_t seed);

struct EpisodeConfig {
    int grid = 8;           // square grid side
    int max_steps = 64;
    double step_penalty = 0.01;
    double gamma = 0.99;
    int n_classes = 12;     // prefix of the registry used by episodes
    double holdout_fraction = 0.25;
    uint64_t split_seed = 0;
    bool manual_on = true;
    bool message_on = true;

    void validate() const;
    uint64_t hash() const;  // covers everything that affects observations
};

struct Observation {
    std::vector<uint8_t> grid;                    // grid*grid symbol ids
    std::vector<std::vector<uint16_t>> manual;    // one token line per entity
    std::vector<uint16_t> message;                // empty when no event / ablated
    int step_index = 0;

    bool operator==(const Observation&) const = default;
};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
    bool win = false;
};

struct EntityState {
    uint8_t class_id;
    Role role;
    MovePattern pattern;
    int r, c;
    bool adjacent = false;  // adjacency to agent at the previous step
};

struct Event {
    enum class Kind : uint8_t { newly_adjacent, reached_goal, caught_by_avoid } kind;
    uint16_t synonym;  // the synonym token bound to the entity this episode
};

std::vector<uint16_t> render_message(const std::vector<Event>& events, bool channel_on);

class Env {
public:
    Env(EpisodeConfig cfg, SplitSpec split, Side side);

    const Observation& reset(uint64_t episode_seed);
    StepResult step(int action);

    // First action of a shortest winning action sequence, found by breadth-
    // first search over the joint (agent, entities) state space; transitions
    // are deterministic, so the search is exact up to a node budget. Ties
    // break in fixed action order. If no winning plan fits the budget or the
    // horizon, falls back to maximizing distance from the avoid entity.
    int expert_action() const;

    bool done() const { return done_; }
    int steps_taken() const { return step_count_; }
    const Observation& obs() const { return obs_; }
    const EpisodeConfig& config() const { return cfg_; }
    const SplitSpec& split() const { return split_; }
    std::pair<uint8_t, uint8_t> role_pair() const;  // (goal, avoid) class ids
    const std::vector<EntityState>& entities() const { return entities_; }
    int agent_r() const { return agent_r_; }
    int agent_c() const { return agent_c_; }

private:
    // compact joint position state used by step() and the expert planner
    struct SimState {
        int8_t ar, ac;
        int8_t er[3], ec[3];
        uint64_t key() const;
    };
    struct StepOutcome {
        int result = 0;  // +1 win, -1 lose, 0 ongoing
        size_t actor = 3;  // entity involved in a terminal collision
    };

    void render_grid();
    void build_manual(Rng& rng);
    bool goal_reachable() const;
    std::pair<int, int> pattern_move(int er, int ec, MovePattern pattern, int target_r, int target_c) const;
    SimState sim_state() const;
    StepOutcome advance(SimState& s, int action) const;
    bool plan_expert(std::vector<int>& actions) const;

    EpisodeConfig cfg_;
    SplitSpec split_;
    Side side_;

    int agent_r_ = 0, agent_c_ = 0;
    std::vector<EntityState> entities_;
    std::vector<uint16_t> synonyms_;  // per-entity synonym token for this episode
    int step_count_ = 0;
    bool done_ = true;
    Observation obs_;

    // cached winning plan; replayed while the episode follows it
    mutable std::vector<int> plan_;
    mutable std::vector<uint64_t> plan_keys_;  // state key before each planned action
    mutable size_t plan_pos_ = 0;
};

// Greedy argmax with lowest-index tie break; shared by evaluation paths.
int argmax_action(const std::vector<double>& probs);

const char* action_name(int a);

}  // namespace ldd
