#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>
#include <set>

#include "ldd/demos.hpp"
#include "ldd/env.hpp"

using namespace ldd;

namespace {

EpisodeConfig default_cfg() {
    EpisodeConfig cfg;
    return cfg;
}

SplitSpec default_split(const EpisodeConfig& cfg) {
    return generate_split(cfg.n_classes, cfg.holdout_fraction, cfg.split_seed);
}

// Brute-force oracle: exhaustive breadth-first search for the shortest
// winning action sequence, with the transition rules re-implemented here
// from their documented semantics, independent of Env's internals.
struct OracleState {
    int ar, ac;
    int er[3], ec[3];
    uint64_t key() const {
        uint64_t k = static_cast<uint64_t>(ar) | (static_cast<uint64_t>(ac) << 8);
        for (int i = 0; i < 3; ++i)
            k |= (static_cast<uint64_t>(er[i]) << (16 + 16 * i)) | (static_cast<uint64_t>(ec[i]) << (24 + 16 * i));
        return k;
    }
};

struct OracleSim {
    int n;
    Role roles[3];
    MovePattern patterns[3];

    std::pair<int, int> entity_move(int er, int ec, MovePattern pat, int tr, int tc) const {
        if (pat == MovePattern::still) return {er, ec};
        int dr = tr - er, dc = tc - ec;
        int sr = (dr > 0) - (dr < 0), sc = (dc > 0) - (dc < 0);
        auto inside = [&](int r, int c) { return r >= 0 && r < n && c >= 0 && c < n; };
        if (pat == MovePattern::chase) {
            int mr = 0, mc = 0;
            if (std::abs(dr) >= std::abs(dc) && sr != 0) mr = sr;
            else if (sc != 0) mc = sc;
            else if (sr != 0) mr = sr;
            if ((mr || mc) && inside(er + mr, ec + mc)) return {er + mr, ec + mc};
            return {er, ec};
        }
        std::vector<std::pair<int, int>> cands;
        if (std::abs(dr) >= std::abs(dc)) {
            cands = {{-(sr ? sr : 1), 0}, {0, -(sc ? sc : 1)}};
        } else {
            cands = {{0, -(sc ? sc : 1)}, {-(sr ? sr : 1), 0}};
        }
        for (auto [mr, mc] : cands)
            if (inside(er + mr, ec + mc)) return {er + mr, ec + mc};
        return {er, ec};
    }

    // returns +1 win, -1 lose, 0 ongoing
    int advance(OracleState& s, int action) const {
        static const int dr[kNumActions] = {-1, 1, 0, 0, 0};
        static const int dc[kNumActions] = {0, 0, -1, 1, 0};
        int nr = std::clamp(s.ar + dr[action], 0, n - 1);
        int nc = std::clamp(s.ac + dc[action], 0, n - 1);
        int hit = -1;
        for (int i = 0; i < 3; ++i)
            if (s.er[i] == nr && s.ec[i] == nc) hit = i;
        if (hit >= 0 && roles[hit] == Role::neutral) {
            nr = s.ar;
            nc = s.ac;
            hit = -1;
        }
        s.ar = nr;
        s.ac = nc;
        if (hit >= 0) return roles[hit] == Role::goal ? 1 : -1;
        for (int i = 0; i < 3; ++i) {
            auto [tr, tc] = entity_move(s.er[i], s.ec[i], patterns[i], s.ar, s.ac);
            if (tr == s.er[i] && tc == s.ec[i]) continue;
            if (tr == s.ar && tc == s.ac) {
                if (roles[i] == Role::neutral) continue;
                s.er[i] = tr;
                s.ec[i] = tc;
                return roles[i] == Role::goal ? 1 : -1;
            }
            bool occ = false;
            for (int j = 0; j < 3; ++j)
                if (j != i && s.er[j] == tr && s.ec[j] == tc) occ = true;
            if (!occ) {
                s.er[i] = tr;
                s.ec[i] = tc;
            }
        }
        return 0;
    }
};

// shortest number of steps to a win from the env's current state, or -1
int oracle_shortest_win(const Env& env, int horizon) {
    OracleSim sim;
    sim.n = env.config().grid;
    OracleState start;
    start.ar = env.agent_r();
    start.ac = env.agent_c();
    for (int i = 0; i < 3; ++i) {
        sim.roles[i] = env.entities()[static_cast<size_t>(i)].role;
        sim.patterns[i] = env.entities()[static_cast<size_t>(i)].pattern;
        start.er[i] = env.entities()[static_cast<size_t>(i)].r;
        start.ec[i] = env.entities()[static_cast<size_t>(i)].c;
    }
    struct Node {
        OracleState s;
        int depth;
    };
    std::deque<Node> q{{start, 0}};
    std::set<uint64_t> seen{start.key()};
    while (!q.empty()) {
        Node cur = q.front();
        q.pop_front();
        if (cur.depth >= horizon) continue;
        for (int a = 0; a < kNumActions; ++a) {
            OracleState next = cur.s;
            int out = sim.advance(next, a);
            if (out < 0) continue;
            if (out > 0) return cur.depth + 1;
            if (seen.insert(next.key()).second) q.push_back({next, cur.depth + 1});
        }
    }
    return -1;
}

}  // namespace

TEST_CASE("generate_split: 4 classes, quarter holdout -> 12 pairs split 9/3") {
    SplitSpec s = generate_split(4, 0.25, 0);
    CHECK(s.train_pairs.size() == 9);
    CHECK(s.eval_pairs.size() == 3);
}

TEST_CASE("generate_split: 2 classes, half holdout -> 2 pairs split 1/1") {
    SplitSpec s = generate_split(2, 0.5, 7);
    CHECK(s.train_pairs.size() == 1);
    CHECK(s.eval_pairs.size() == 1);
}

TEST_CASE("generate_split: train and eval are always disjoint and exhaustive") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SplitSpec s = generate_split(12, 0.25, seed);
        std::set<std::pair<uint8_t, uint8_t>> train(s.train_pairs.begin(), s.train_pairs.end());
        std::set<std::pair<uint8_t, uint8_t>> eval(s.eval_pairs.begin(), s.eval_pairs.end());
        CHECK(train.size() + eval.size() == 132);
        for (const auto& p : eval) CHECK(train.count(p) == 0);
    }
}

TEST_CASE("generate_split rejects degenerate holdouts") {
    CHECK_THROWS_AS(generate_split(2, 0.05, 0), ConfigError);  // eval side would be empty
    CHECK_THROWS_AS(generate_split(1, 0.5, 0), ConfigError);
    CHECK_THROWS_AS(generate_split(4, 0.0, 0), ConfigError);
    CHECK_THROWS_AS(generate_split(4, 1.0, 0), ConfigError);
}

TEST_CASE("reset is byte-for-byte deterministic") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env a(cfg, split, Side::train), b(cfg, split, Side::train);
    for (uint64_t seed : {1ull, 42ull, 31337ull}) {
        Observation oa = a.reset(seed);
        Observation ob = b.reset(seed);
        CHECK(oa == ob);
    }
}

TEST_CASE("8x8 reset shows exactly 4 non-background symbols, one agent") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const Observation& o = env.reset(seed);
        int non_bg = 0, agents = 0;
        for (uint8_t c : o.grid) {
            if (c != kSymBackground) ++non_bg;
            if (c == kSymAgent) ++agents;
            CHECK(c < kNumSymbols);
        }
        CHECK(non_bg == 4);
        CHECK(agents == 1);
        CHECK(o.manual.size() == 3);
        CHECK(o.message.empty());
    }
}

TEST_CASE("message channel off yields empty messages, identical dynamics") {
    EpisodeConfig on = default_cfg();
    EpisodeConfig off = default_cfg();
    off.message_on = false;
    SplitSpec split = default_split(on);
    Env env_on(on, split, Side::train), env_off(off, split, Side::train);
    Rng rng(5);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Observation a = env_on.reset(seed);
        Observation b = env_off.reset(seed);
        CHECK(a.grid == b.grid);
        CHECK(a.manual == b.manual);
        while (!env_on.done()) {
            int action = rng.uniform_int(kNumActions);
            StepResult ra = env_on.step(action);
            StepResult rb = env_off.step(action);
            CHECK(ra.obs.grid == rb.obs.grid);
            CHECK(ra.reward == rb.reward);
            CHECK(ra.done == rb.done);
            CHECK(ra.win == rb.win);
            CHECK(rb.obs.message.empty());
        }
    }
}

TEST_CASE("plain move: up shifts the agent one row, costs the step penalty") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int tested = 0;
    for (uint64_t seed = 0; seed < 300 && tested < 10; ++seed) {
        env.reset(seed);
        int r = env.agent_r(), c = env.agent_c();
        if (r == 0) continue;
        bool clear = true;
        for (const auto& e : env.entities())
            if (std::abs(e.r - (r - 1)) + std::abs(e.c - c) <= 2) clear = false;
        if (!clear) continue;
        StepResult res = env.step(kUp);
        CHECK(env.agent_r() == r - 1);
        CHECK(env.agent_c() == c);
        CHECK(res.reward == doctest::Approx(-cfg.step_penalty));
        CHECK_FALSE(res.done);
        ++tested;
    }
    CHECK(tested == 10);
}

TEST_CASE("stepping onto a static goal wins with +1") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int tested = 0;
    for (uint64_t seed = 0; seed < 2000 && tested < 5; ++seed) {
        env.reset(seed);
        const EntityState* goal = nullptr;
        for (const auto& e : env.entities())
            if (e.role == Role::goal) goal = &e;
        if (goal->pattern != MovePattern::still) continue;
        if (std::abs(goal->r - env.agent_r()) + std::abs(goal->c - env.agent_c()) != 1) continue;
        int action;
        if (goal->r == env.agent_r() - 1) action = kUp;
        else if (goal->r == env.agent_r() + 1) action = kDown;
        else if (goal->c == env.agent_c() - 1) action = kLeft;
        else action = kRight;
        StepResult res = env.step(action);
        CHECK(res.reward == 1.0);
        CHECK(res.done);
        CHECK(res.win);
        ++tested;
    }
    CHECK(tested == 5);
}

TEST_CASE("replaying the same state and action gives an identical StepResult") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    Rng rng(3);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        env.reset(seed);
        while (!env.done()) {
            Env copy = env;  // value semantics snapshot the whole state
            int action = rng.uniform_int(kNumActions);
            StepResult a = env.step(action);
            StepResult b = copy.step(action);
            CHECK(a.obs == b.obs);
            CHECK(a.reward == b.reward);
            CHECK(a.done == b.done);
            CHECK(a.win == b.win);
        }
    }
}

TEST_CASE("step after done is a contract violation") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    env.reset(1);
    while (!env.done()) env.step(env.expert_action());
    CHECK_THROWS_AS(env.step(kUp), ContractError);
}

TEST_CASE("trajectories are bitwise reproducible under a fixed seed and action sequence") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Rng rng(17);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        std::vector<int> actions;
        std::vector<Observation> first_run;
        Env env(cfg, split, Side::train);
        first_run.push_back(env.reset(seed));
        while (!env.done()) {
            int a = rng.uniform_int(kNumActions);
            actions.push_back(a);
            first_run.push_back(env.step(a).obs);
        }
        Env env2(cfg, split, Side::train);
        CHECK(env2.reset(seed) == first_run[0]);
        for (size_t i = 0; i < actions.size(); ++i)
            CHECK(env2.step(actions[i]).obs == first_run[i + 1]);
    }
}

TEST_CASE("expert picks 'up' when the goal is straight above and nothing threatens") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int tested = 0;
    for (uint64_t seed = 0; seed < 3000 && tested < 5; ++seed) {
        env.reset(seed);
        const EntityState *goal = nullptr, *avoid = nullptr, *neutral = nullptr;
        for (const auto& e : env.entities()) {
            if (e.role == Role::goal) goal = &e;
            if (e.role == Role::avoid) avoid = &e;
            if (e.role == Role::neutral) neutral = &e;
        }
        if (goal->c != env.agent_c() || goal->r >= env.agent_r()) continue;
        bool clear = true;
        for (int r = goal->r; r < env.agent_r(); ++r) {
            if (neutral->r == r && neutral->c == env.agent_c()) clear = false;
            if (avoid->r == r && avoid->c == env.agent_c()) clear = false;
        }
        if (std::abs(avoid->r - env.agent_r()) + std::abs(avoid->c - env.agent_c()) < 5) clear = false;
        if (!clear) continue;
        CHECK(env.expert_action() == kUp);
        ++tested;
    }
    CHECK(tested == 5);
}

TEST_CASE("expert trajectories are exactly as short as the brute-force oracle's") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int wins = 0;
    for (uint64_t seed = 0; seed < 60; ++seed) {
        env.reset(seed);
        int oracle_len = oracle_shortest_win(env, cfg.max_steps);
        bool win = false;
        while (!env.done()) win = env.step(env.expert_action()).win;
        if (win && oracle_len > 0) {
            CHECK(env.steps_taken() == oracle_len);
            ++wins;
        }
    }
    CHECK(wins >= 55);
}

TEST_CASE("expert detours when the direct cell holds the avoid entity") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int found = 0;
    for (uint64_t seed = 0; seed < 5000 && found < 5; ++seed) {
        env.reset(seed);
        while (!env.done()) {
            const EntityState *goal = nullptr, *avoid = nullptr;
            for (const auto& e : env.entities()) {
                if (e.role == Role::goal) goal = &e;
                if (e.role == Role::avoid) avoid = &e;
            }
            int a = env.expert_action();
            // goal further up the same column, avoid entity directly above
            if (goal->c == env.agent_c() && goal->r < env.agent_r() - 1 &&
                avoid->r == env.agent_r() - 1 && avoid->c == env.agent_c()) {
                CHECK(a != kUp);  // stepping onto the avoid entity loses
                ++found;
            }
            env.step(a);
        }
    }
    CHECK(found == 5);
}

TEST_CASE("expert wins at least 99% of 1000 seeded episodes") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int wins = 0;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        env.reset(seed);
        bool win = false;
        while (!env.done()) win = env.step(env.expert_action()).win;
        wins += win ? 1 : 0;
    }
    double rate = wins / 1000.0;
    CHECK(rate >= 0.99);
    // observed rate, pinned: reset re-draws placements until the exhaustive
    // planner certifies a winning sequence, so the expert never fails
    CHECK(rate == 1.0);
}

TEST_CASE("split hygiene: episodes never use the other side's role pairs") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    std::set<std::pair<uint8_t, uint8_t>> eval(split.eval_pairs.begin(), split.eval_pairs.end());
    Env env(cfg, split, Side::train);
    for (uint64_t seed = 0; seed < 300; ++seed) {
        env.reset(seed);
        CHECK(eval.count(env.role_pair()) == 0);
    }
    Env eval_env(cfg, split, Side::eval);
    std::set<std::pair<uint8_t, uint8_t>> train(split.train_pairs.begin(), split.train_pairs.end());
    for (uint64_t seed = 0; seed < 300; ++seed) {
        eval_env.reset(seed);
        CHECK(train.count(eval_env.role_pair()) == 0);
    }
}

TEST_CASE("render_message templates") {
    const Vocab& v = Vocab::instance();
    uint16_t syn = v.entity_class(2).synonym_tokens[0];

    std::vector<uint16_t> adj = render_message({{Event::Kind::newly_adjacent, syn}}, true);
    CHECK(v.detokenize(adj) == "the wolf is beside you");

    CHECK(render_message({}, true).empty());
    CHECK(render_message({{Event::Kind::newly_adjacent, syn}}, false).empty());

    std::vector<uint16_t> win = render_message({{Event::Kind::reached_goal, syn}}, true);
    CHECK(v.detokenize(win) == "you reached the wolf");
    std::vector<uint16_t> lose = render_message({{Event::Kind::caught_by_avoid, syn}}, true);
    CHECK(v.detokenize(lose) == "the wolf caught you");
}

TEST_CASE("terminal and adjacency messages appear in expert episodes") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    const Vocab& v = Vocab::instance();
    bool saw_beside = false, saw_reached = false;
    for (uint64_t seed = 0; seed < 200 && !(saw_beside && saw_reached); ++seed) {
        env.reset(seed);
        while (!env.done()) {
            StepResult res = env.step(env.expert_action());
            std::string msg = v.detokenize(res.obs.message);
            if (msg.find("beside you") != std::string::npos) saw_beside = true;
            if (res.win) {
                CHECK(msg.find("you reached the") == 0);
                saw_reached = true;
            }
        }
    }
    CHECK(saw_beside);
    CHECK(saw_reached);
}

TEST_CASE("entity class synonyms have no lexical overlap with symbol surfaces") {
    const Vocab& v = Vocab::instance();
    std::set<uint16_t> seen_ids;
    std::set<uint8_t> class_ids;
    for (const auto& ec : v.entity_classes()) {
        CHECK(class_ids.insert(ec.class_id).second);
        const std::string& sym = v.symbol_surface(ec.class_id);
        for (uint16_t tok : ec.synonym_tokens) {
            CHECK(seen_ids.insert(tok).second);
            const std::string& word = v.token_surface(tok);
            CHECK(word.find(sym) == std::string::npos);
            CHECK(sym.find(word) == std::string::npos);
        }
    }
    CHECK(v.entity_classes().size() == kNumEntityClasses);
}

TEST_CASE("vocab.tsv writes and hashes stably") {
    std::filesystem::path tmp = std::filesystem::temp_directory_path() / "ldd_vocab_test.tsv";
    write_vocab_tsv(tmp);
    CHECK(read_vocab_tsv_hash(tmp) == Vocab::instance().hash());
    std::filesystem::remove(tmp);
}

TEST_CASE("config validation rejects bad episode parameters") {
    EpisodeConfig cfg = default_cfg();
    cfg.gamma = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = default_cfg();
    cfg.max_steps = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = default_cfg();
    cfg.holdout_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("timeout ends the episode with the step penalty") {
    EpisodeConfig cfg = default_cfg();
    SplitSpec split = default_split(cfg);
    Env env(cfg, split, Side::train);
    int timeouts = 0;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        env.reset(seed);
        StepResult last;
        while (!env.done()) last = env.step(kStay);
        if (!last.win && last.reward == -cfg.step_penalty) {
            CHECK(env.steps_taken() == cfg.max_steps);
            ++timeouts;
        }
    }
    CHECK(timeouts > 0);
}
