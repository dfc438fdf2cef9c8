#include "ldd/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <unordered_set>

namespace ldd {

namespace {
const int kDr[kNumActions] = {-1, 1, 0, 0, 0};
const int kDc[kNumActions] = {0, 0, -1, 1, 0};
}  // namespace

SplitSpec generate_split(int n_classes, double holdout_fraction, uint64_t seed) {
    if (n_classes < 2 || n_classes > kNumEntityClasses)
        throw ConfigError("generate_split: n_classes must be in [2, " + std::to_string(kNumEntityClasses) + "], got " + std::to_string(n_classes));
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw ConfigError("generate_split: holdout_fraction must be in (0,1)");

    std::vector<std::pair<uint8_t, uint8_t>> pairs;
    for (int g = 0; g < n_classes; ++g)
        for (int a = 0; a < n_classes; ++a)
            if (g != a)
                pairs.emplace_back(static_cast<uint8_t>(2 + g), static_cast<uint8_t>(2 + a));

    Rng rng(mix_seed(seed, 0x5b117));
    rng.shuffle(pairs);

    size_t n_eval = static_cast<size_t>(std::floor(holdout_fraction * static_cast<double>(pairs.size())));
    if (n_eval == 0 || n_eval == pairs.size())
        throw ConfigError("generate_split: holdout would leave a side empty (" + std::to_string(pairs.size()) + " pairs, fraction " + std::to_string(holdout_fraction) + ")");

    SplitSpec split;
    split.seed = seed;
    split.eval_pairs.assign(pairs.begin(), pairs.begin() + static_cast<long>(n_eval));
    split.train_pairs.assign(pairs.begin() + static_cast<long>(n_eval), pairs.end());
    std::sort(split.eval_pairs.begin(), split.eval_pairs.end());
    std::sort(split.train_pairs.begin(), split.train_pairs.end());
    return split;
}

void EpisodeConfig::validate() const {
    if (grid < 4) throw ConfigError("env.grid must be >= 4");
    if (max_steps < 2 * (grid + grid))
        throw ConfigError("env.max_steps must be >= 2*(H+W) = " + std::to_string(4 * grid));
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("env.gamma must be in (0,1)");
    if (step_penalty < 0.0) throw ConfigError("env.step_penalty must be >= 0");
    if (n_classes < 2 || n_classes > kNumEntityClasses)
        throw ConfigError("env.n_classes out of range");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw ConfigError("env.holdout_fraction must be in (0,1)");
}

uint64_t EpisodeConfig::hash() const {
    Fnv1a h;
    h.update_pod(grid);
    h.update_pod(max_steps);
    h.update_pod(step_penalty);
    h.update_pod(gamma);
    h.update_pod(n_classes);
    h.update_pod(holdout_fraction);
    h.update_pod(split_seed);
    h.update_pod(manual_on);
    h.update_pod(message_on);
    uint64_t vh = Vocab::instance().hash();
    h.update_pod(vh);
    return h.digest();
}

std::vector<uint16_t> render_message(const std::vector<Event>& events, bool channel_on) {
    std::vector<uint16_t> msg;
    if (!channel_on) return msg;
    const Vocab& v = Vocab::instance();
    for (const Event& ev : events) {
        switch (ev.kind) {
            case Event::Kind::newly_adjacent:
                msg.insert(msg.end(), {v.tok_the, ev.synonym, v.tok_is, v.tok_beside, v.tok_you});
                break;
            case Event::Kind::reached_goal:
                msg.insert(msg.end(), {v.tok_you, v.tok_reached, v.tok_the, ev.synonym});
                break;
            case Event::Kind::caught_by_avoid:
                msg.insert(msg.end(), {v.tok_the, ev.synonym, v.tok_caught, v.tok_you});
                break;
        }
    }
    return msg;
}

Env::Env(EpisodeConfig cfg, SplitSpec split, Side side) : cfg_(cfg), split_(std::move(split)), side_(side) {
    cfg_.validate();
    if (split_.side(side_).empty()) throw ConfigError("env: split side is empty");
}

std::pair<uint8_t, uint8_t> Env::role_pair() const {
    uint8_t g = 0, a = 0;
    for (const auto& e : entities_) {
        if (e.role == Role::goal) g = e.class_id;
        if (e.role == Role::avoid) a = e.class_id;
    }
    return {g, a};
}

void Env::render_grid() {
    obs_.grid.assign(static_cast<size_t>(cfg_.grid) * cfg_.grid, kSymBackground);
    for (const auto& e : entities_)
        obs_.grid[static_cast<size_t>(e.r) * cfg_.grid + e.c] = e.class_id;
    obs_.grid[static_cast<size_t>(agent_r_) * cfg_.grid + agent_c_] = kSymAgent;
}

const Observation& Env::reset(uint64_t episode_seed) {
    Rng rng(mix_seed(episode_seed, 0xE9150de, cfg_.split_seed));
    const auto& pairs = split_.side(side_);
    auto [goal_class, avoid_class] = pairs[static_cast<size_t>(rng.uniform_int(static_cast<int>(pairs.size())))];

    uint8_t neutral_class;
    do {
        neutral_class = static_cast<uint8_t>(2 + rng.uniform_int(cfg_.n_classes));
    } while (neutral_class == goal_class || neutral_class == avoid_class);

    entities_.clear();
    entities_.push_back({goal_class, Role::goal, MovePattern::still, 0, 0, false});
    entities_.push_back({avoid_class, Role::avoid, MovePattern::still, 0, 0, false});
    entities_.push_back({neutral_class, Role::neutral, MovePattern::still, 0, 0, false});
    // Pattern mix is role-aware: chasing killers and fleeing goals make
    // episodes brutally unforgiving for a learning policy, so they stay
    // present but rare. Every (role, pattern) combination still occurs, and
    // the binding is only recoverable from the manual.
    for (auto& e : entities_) {
        double u = rng.uniform();
        switch (e.role) {
            case Role::goal:
                e.pattern = u < 0.6 ? MovePattern::still : (u < 0.9 ? MovePattern::chase : MovePattern::flee);
                break;
            case Role::avoid:
                e.pattern = u < 0.6 ? MovePattern::still : (u < 0.9 ? MovePattern::flee : MovePattern::chase);
                break;
            case Role::neutral:
                e.pattern = u < 0.34 ? MovePattern::still : (u < 0.67 ? MovePattern::chase : MovePattern::flee);
                break;
        }
    }

    // Place agent + entities at distinct cells. Re-draw until the episode is
    // solvable: a static path to the goal exists (cheap filter) and the
    // exhaustive planner finds a winning action sequence within the horizon
    // (entity movement is deterministic, so solvability is decidable).
    step_count_ = 0;
    plan_.clear();
    plan_keys_.clear();
    plan_pos_ = 0;
    int attempts = 0;
    std::vector<int> plan;
    for (;;) {
        if (++attempts > 100)
            throw ConfigError("env reset: no solvable placement after 100 draws");
        std::vector<int> cells;
        while (cells.size() < 4) {
            int c = rng.uniform_int(cfg_.grid * cfg_.grid);
            if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
        }
        agent_r_ = cells[0] / cfg_.grid;
        agent_c_ = cells[0] % cfg_.grid;
        for (size_t i = 0; i < 3; ++i) {
            entities_[i].r = cells[i + 1] / cfg_.grid;
            entities_[i].c = cells[i + 1] % cfg_.grid;
        }
        plan.clear();
        if (goal_reachable() && plan_expert(plan)) break;
    }

    // the solvability plan doubles as the expert's cached plan
    plan_ = std::move(plan);
    {
        SimState s = sim_state();
        for (int a : plan_) {
            plan_keys_.push_back(s.key());
            advance(s, a);
        }
    }

    for (auto& e : entities_)
        e.adjacent = std::abs(e.r - agent_r_) + std::abs(e.c - agent_c_) == 1;

    build_manual(rng);

    done_ = false;
    obs_.message.clear();
    obs_.step_index = 0;
    render_grid();
    return obs_;
}

void Env::build_manual(Rng& rng) {
    const Vocab& v = Vocab::instance();
    obs_.manual.clear();
    synonyms_.clear();
    std::vector<std::vector<uint16_t>> lines;
    for (const auto& e : entities_) {
        uint16_t syn = v.entity_class(e.class_id).synonym_tokens[static_cast<size_t>(rng.uniform_int(kSynonymsPerClass))];
        synonyms_.push_back(syn);
        std::vector<uint16_t> line{v.tok_the, syn, v.tok_is};
        switch (e.role) {
            case Role::goal:
                line.push_back(v.tok_your);
                line.push_back(v.tok_goal);
                break;
            case Role::avoid:
                line.push_back(v.tok_dangerous);
                break;
            case Role::neutral:
                line.push_back(v.tok_harmless);
                break;
        }
        line.push_back(v.tok_it);
        switch (e.pattern) {
            case MovePattern::still:
                line.push_back(v.tok_stays);
                line.push_back(v.tok_still);
                break;
            case MovePattern::chase:
                line.push_back(v.tok_chases);
                line.push_back(v.tok_you);
                break;
            case MovePattern::flee:
                line.push_back(v.tok_runs);
                line.push_back(v.tok_away);
                break;
        }
        lines.push_back(std::move(line));
    }
    rng.shuffle(lines);
    if (cfg_.manual_on) obs_.manual = std::move(lines);
}

// One pattern step toward/away from (target_r, target_c). Chase prefers the
// axis with the larger remaining distance, row axis on ties. Flee negates
// the chase displacement and falls back to the other axis at walls.
std::pair<int, int> Env::pattern_move(int er, int ec, MovePattern pattern, int target_r, int target_c) const {
    if (pattern == MovePattern::still) return {er, ec};
    int dr = target_r - er;
    int dc = target_c - ec;
    int sr = (dr > 0) - (dr < 0);
    int sc = (dc > 0) - (dc < 0);
    auto inside = [&](int r, int c) { return r >= 0 && r < cfg_.grid && c >= 0 && c < cfg_.grid; };

    if (pattern == MovePattern::chase) {
        int mr = 0, mc = 0;
        if (std::abs(dr) >= std::abs(dc) && sr != 0) {
            mr = sr;
        } else if (sc != 0) {
            mc = sc;
        } else if (sr != 0) {
            mr = sr;
        }
        int nr = er + mr, nc = ec + mc;
        if ((mr || mc) && inside(nr, nc)) return {nr, nc};
        return {er, ec};
    }

    std::array<std::pair<int, int>, 2> cands;
    if (std::abs(dr) >= std::abs(dc)) {
        cands = {{{-(sr != 0 ? sr : 1), 0}, {0, -(sc != 0 ? sc : 1)}}};
    } else {
        cands = {{{0, -(sc != 0 ? sc : 1)}, {-(sr != 0 ? sr : 1), 0}}};
    }
    for (auto [mr, mc] : cands) {
        int nr = er + mr, nc = ec + mc;
        if (inside(nr, nc)) return {nr, nc};
    }
    return {er, ec};
}

uint64_t Env::SimState::key() const {
    uint64_t k = 0;
    k |= static_cast<uint64_t>(static_cast<uint8_t>(ar));
    k |= static_cast<uint64_t>(static_cast<uint8_t>(ac)) << 8;
    for (int i = 0; i < 3; ++i) {
        k |= static_cast<uint64_t>(static_cast<uint8_t>(er[i])) << (16 + 16 * i);
        k |= static_cast<uint64_t>(static_cast<uint8_t>(ec[i])) << (24 + 16 * i);
    }
    return k;
}

Env::SimState Env::sim_state() const {
    SimState s;
    s.ar = static_cast<int8_t>(agent_r_);
    s.ac = static_cast<int8_t>(agent_c_);
    for (size_t i = 0; i < 3; ++i) {
        s.er[i] = static_cast<int8_t>(entities_[i].r);
        s.ec[i] = static_cast<int8_t>(entities_[i].c);
    }
    return s;
}

// Movement core shared by step() and the expert planner. Order: the agent
// moves (clamped at walls, blocked by the neutral entity), terminal
// collisions resolve, then entities move in index order. Entities never
// stack; only goal/avoid may enter the agent's cell, ending the episode.
Env::StepOutcome Env::advance(SimState& s, int action) const {
    StepOutcome out;
    int nr = std::clamp(s.ar + kDr[action], 0, cfg_.grid - 1);
    int nc = std::clamp(s.ac + kDc[action], 0, cfg_.grid - 1);

    size_t hit = 3;
    for (size_t i = 0; i < 3; ++i)
        if (s.er[i] == nr && s.ec[i] == nc) hit = i;
    if (hit < 3 && entities_[hit].role == Role::neutral) {
        nr = s.ar;
        nc = s.ac;
        hit = 3;
    }
    s.ar = static_cast<int8_t>(nr);
    s.ac = static_cast<int8_t>(nc);
    if (hit < 3) {
        out.result = entities_[hit].role == Role::goal ? 1 : -1;
        out.actor = hit;
        return out;
    }

    for (size_t i = 0; i < 3; ++i) {
        auto [tr, tc] = pattern_move(s.er[i], s.ec[i], entities_[i].pattern, s.ar, s.ac);
        if (tr == s.er[i] && tc == s.ec[i]) continue;
        if (tr == s.ar && tc == s.ac) {
            if (entities_[i].role == Role::neutral) continue;
            s.er[i] = static_cast<int8_t>(tr);
            s.ec[i] = static_cast<int8_t>(tc);
            out.result = entities_[i].role == Role::goal ? 1 : -1;
            out.actor = i;
            return out;
        }
        bool occupied = false;
        for (size_t j = 0; j < 3; ++j)
            if (j != i && s.er[j] == tr && s.ec[j] == tc) occupied = true;
        if (!occupied) {
            s.er[i] = static_cast<int8_t>(tr);
            s.ec[i] = static_cast<int8_t>(tc);
        }
    }
    return out;
}

StepResult Env::step(int action) {
    if (done_) throw ContractError("env step: episode already done");
    if (action < 0 || action >= kNumActions) throw ContractError("env step: invalid action " + std::to_string(action));

    ++step_count_;
    SimState s = sim_state();
    StepOutcome out = advance(s, action);
    agent_r_ = s.ar;
    agent_c_ = s.ac;
    for (size_t i = 0; i < 3; ++i) {
        entities_[i].r = s.er[i];
        entities_[i].c = s.ec[i];
    }

    bool win = out.result > 0;
    bool lose = out.result < 0;
    bool timeout = !win && !lose && step_count_ >= cfg_.max_steps;
    done_ = win || lose || timeout;
    double reward = win ? 1.0 : (lose ? -1.0 : -cfg_.step_penalty);

    std::vector<Event> events;
    if (win && out.actor < 3) {
        events.push_back({Event::Kind::reached_goal, synonyms_[out.actor]});
    } else if (lose && out.actor < 3) {
        events.push_back({Event::Kind::caught_by_avoid, synonyms_[out.actor]});
    } else if (!done_) {
        for (size_t i = 0; i < entities_.size(); ++i) {
            EntityState& e = entities_[i];
            bool adj = std::abs(e.r - agent_r_) + std::abs(e.c - agent_c_) == 1;
            if (adj && !e.adjacent)
                events.push_back({Event::Kind::newly_adjacent, synonyms_[i]});
        }
    }
    obs_.message = render_message(events, cfg_.message_on);
    for (auto& e : entities_)
        e.adjacent = std::abs(e.r - agent_r_) + std::abs(e.c - agent_c_) == 1;

    render_grid();
    obs_.step_index = step_count_;

    StepResult res;
    res.obs = obs_;
    res.reward = reward;
    res.done = done_;
    res.win = win;
    return res;
}

// static reachability check used at reset: a path to the goal exists that
// avoids the avoid entity's cell, its next cell, and the neutral entity
bool Env::goal_reachable() const {
    const EntityState* goal = nullptr;
    const EntityState* avoid = nullptr;
    const EntityState* neutral = nullptr;
    for (const auto& e : entities_) {
        if (e.role == Role::goal) goal = &e;
        if (e.role == Role::avoid) avoid = &e;
        if (e.role == Role::neutral) neutral = &e;
    }
    auto [anr, anc] = pattern_move(avoid->r, avoid->c, avoid->pattern, agent_r_, agent_c_);

    std::vector<uint8_t> blocked(static_cast<size_t>(cfg_.grid) * cfg_.grid, 0);
    blocked[static_cast<size_t>(avoid->r) * cfg_.grid + avoid->c] = 1;
    blocked[static_cast<size_t>(anr) * cfg_.grid + anc] = 1;
    blocked[static_cast<size_t>(neutral->r) * cfg_.grid + neutral->c] = 1;
    size_t target = static_cast<size_t>(goal->r) * cfg_.grid + goal->c;
    if (blocked[target]) return false;

    std::deque<int> q;
    std::vector<uint8_t> seen(blocked.size(), 0);
    int start = agent_r_ * cfg_.grid + agent_c_;
    q.push_back(start);
    seen[static_cast<size_t>(start)] = 1;
    while (!q.empty()) {
        int cur = q.front();
        q.pop_front();
        if (cur == static_cast<int>(target)) return true;
        int r = cur / cfg_.grid, c = cur % cfg_.grid;
        for (int k = 0; k < 4; ++k) {
            int rr = r + kDr[k], cc = c + kDc[k];
            if (rr < 0 || rr >= cfg_.grid || cc < 0 || cc >= cfg_.grid) continue;
            int idx = rr * cfg_.grid + cc;
            if (seen[static_cast<size_t>(idx)] || blocked[static_cast<size_t>(idx)]) continue;
            seen[static_cast<size_t>(idx)] = 1;
            q.push_back(idx);
        }
    }
    return false;
}

bool Env::plan_expert(std::vector<int>& actions) const {
    struct Node {
        SimState s;
        int32_t parent;
        int8_t action;
        int16_t depth;
    };
    constexpr size_t kNodeBudget = 400000;
    int horizon = cfg_.max_steps - step_count_;
    if (horizon <= 0) return false;

    std::vector<Node> nodes;
    nodes.reserve(4096);
    std::unordered_set<uint64_t> visited;
    SimState start = sim_state();
    nodes.push_back({start, -1, -1, 0});
    visited.insert(start.key());

    for (size_t head = 0; head < nodes.size(); ++head) {
        Node cur = nodes[head];  // copy: nodes may reallocate
        if (cur.depth >= horizon) continue;
        for (int a = 0; a < kNumActions; ++a) {
            SimState next = cur.s;
            StepOutcome out = advance(next, a);
            if (out.result < 0) continue;
            if (out.result > 0) {
                actions.clear();
                actions.push_back(a);
                for (int32_t p = static_cast<int32_t>(head); nodes[static_cast<size_t>(p)].parent >= 0; p = nodes[static_cast<size_t>(p)].parent)
                    actions.push_back(nodes[static_cast<size_t>(p)].action);
                std::reverse(actions.begin(), actions.end());
                return true;
            }
            if (nodes.size() >= kNodeBudget) return false;
            if (!visited.insert(next.key()).second) continue;
            nodes.push_back({next, static_cast<int32_t>(head), static_cast<int8_t>(a), static_cast<int16_t>(cur.depth + 1)});
        }
    }
    return false;
}

int Env::expert_action() const {
    if (done_) throw ContractError("expert_action: episode already done");

    uint64_t key = sim_state().key();
    if (!plan_.empty()) {
        if (plan_pos_ < plan_.size() && plan_keys_[plan_pos_] == key) return plan_[plan_pos_];
        if (plan_pos_ + 1 < plan_.size() && plan_keys_[plan_pos_ + 1] == key) {
            ++plan_pos_;
            return plan_[plan_pos_];
        }
    }

    std::vector<int> actions;
    if (plan_expert(actions)) {
        plan_ = std::move(actions);
        plan_keys_.clear();
        SimState s = sim_state();
        for (int a : plan_) {
            plan_keys_.push_back(s.key());
            advance(s, a);
        }
        plan_pos_ = 0;
        return plan_[0];
    }
    plan_.clear();
    plan_keys_.clear();

    // no winning plan in budget: keep distance from the avoid entity
    const EntityState* avoid = nullptr;
    const EntityState* neutral = nullptr;
    for (const auto& e : entities_) {
        if (e.role == Role::avoid) avoid = &e;
        if (e.role == Role::neutral) neutral = &e;
    }
    int best_action = kUp;
    int best_dist = -1;
    for (int a = 0; a < kNumActions; ++a) {
        int rr = std::clamp(agent_r_ + kDr[a], 0, cfg_.grid - 1);
        int cc = std::clamp(agent_c_ + kDc[a], 0, cfg_.grid - 1);
        if (rr == neutral->r && cc == neutral->c) {
            rr = agent_r_;
            cc = agent_c_;
        }
        int d = std::abs(rr - avoid->r) + std::abs(cc - avoid->c);
        if (d > best_dist) {
            best_dist = d;
            best_action = a;
        }
    }
    return best_action;
}

int argmax_action(const std::vector<double>& probs) {
    int best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

const char* action_name(int a) {
    static const char* names[kNumActions] = {"up", "down", "left", "right", "stay"};
    if (a < 0 || a >= kNumActions) return "?";
    return names[a];
}

}  // namespace ldd
