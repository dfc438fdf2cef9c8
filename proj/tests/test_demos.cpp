#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "ldd/demos.hpp"

using namespace ldd;

namespace {

EpisodeConfig cfg_default() { return EpisodeConfig{}; }

SplitSpec split_of(const EpisodeConfig& cfg) {
    return generate_split(cfg.n_classes, cfg.holdout_fraction, cfg.split_seed);
}

bool trajectories_equal(const Trajectory& a, const Trajectory& b) {
    return a.seed == b.seed && a.obs == b.obs && a.actions == b.actions && a.win == b.win &&
           a.pseudo_labeled == b.pseudo_labeled;
}

bool stores_equal(const DemoStore& a, const DemoStore& b) {
    if (a.header.env_hash != b.header.env_hash || a.header.vocab_hash != b.header.vocab_hash ||
        a.header.policy_id != b.header.policy_id || a.header.labeled != b.header.labeled ||
        a.header.count != b.header.count || a.header.win_rate != b.header.win_rate)
        return false;
    if (a.trajs.size() != b.trajs.size()) return false;
    for (size_t i = 0; i < a.trajs.size(); ++i)
        if (!trajectories_equal(a.trajs[i], b.trajs[i])) return false;
    return true;
}

// replay a labeled trajectory to accumulate its raw return
double replay_return(const Trajectory& t, const EpisodeConfig& cfg, const SplitSpec& split) {
    Env env(cfg, split, Side::train);
    env.reset(t.seed);
    double ret = 0;
    for (uint8_t a : t.actions) ret += env.step(a).reward;
    return ret;
}

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("expert collection: stripped stores are unlabeled with a high win rate") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    DemoStore store = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 100, 9, true);
    CHECK(store.header.labeled == false);
    CHECK(store.header.count == 100);
    CHECK(store.header.win_rate >= 0.99);
    CHECK(store.header.manual_on);
    CHECK(store.header.message_on);
    for (const auto& t : store.trajs) {
        CHECK(t.actions.empty());
        CHECK(t.length() >= 2);
    }
}

TEST_CASE("random policy demos earn strictly lower mean return than expert demos") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    DemoStore expert = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 200, 5, false);
    DemoStore random = collect_demos(cfg, split, Side::train, DemoPolicy::random_policy, nullptr, 200, 5, false);

    double expert_mean = 0, random_mean = 0;
    for (const auto& t : expert.trajs) expert_mean += replay_return(t, cfg, split);
    for (const auto& t : random.trajs) random_mean += replay_return(t, cfg, split);
    expert_mean /= 200;
    random_mean /= 200;
    CHECK(expert_mean > random_mean);
    CHECK(random.header.win_rate < expert.header.win_rate);
}

TEST_CASE("labeled stores replay to the stored observations bitwise") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    DemoStore store = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 50, 11, false);
    CHECK(store.header.labeled);
    verify_replay(store, cfg, split, Side::train);  // throws on mismatch

    // random-policy trajectories replay too (timeouts included)
    DemoStore random = collect_demos(cfg, split, Side::train, DemoPolicy::random_policy, nullptr, 30, 13, false);
    verify_replay(random, cfg, split, Side::train);
}

TEST_CASE("save then load is a bit-exact round trip") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    DemoStore store = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 40, 21, false);
    auto path = tmp_path("ldd_demo_roundtrip.bin");
    save_demos(store, path);
    DemoStore loaded = load_demos(path, cfg.hash(), Vocab::instance().hash());
    CHECK(stores_equal(store, loaded));

    // byte-identical on re-save
    save_demos(loaded, tmp_path("ldd_demo_roundtrip2.bin"));
    std::ifstream a(path, std::ios::binary), b(tmp_path("ldd_demo_roundtrip2.bin"), std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    std::filesystem::remove(path);
    std::filesystem::remove(tmp_path("ldd_demo_roundtrip2.bin"));
}

TEST_CASE("corruption and mismatches yield distinct error codes") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    DemoStore store = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 10, 3, true);
    auto path = tmp_path("ldd_demo_corrupt.bin");
    save_demos(store, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto write_bytes = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    // flip one payload byte -> checksum
    {
        std::string b = bytes;
        b[b.size() - 5] ^= 0x40;
        write_bytes(b);
        try {
            load_demos(path);
            FAIL("expected checksum error");
        } catch (const IoError& e) {
            CHECK(e.code == IoError::Code::checksum_mismatch);
        }
    }
    // bump the version field -> version error
    {
        std::string b = bytes;
        b[4] = 99;
        write_bytes(b);
        try {
            load_demos(path);
            FAIL("expected version error");
        } catch (const IoError& e) {
            CHECK(e.code == IoError::Code::version_mismatch);
        }
    }
    // truncate -> truncated
    {
        std::string b = bytes.substr(0, 30);
        write_bytes(b);
        try {
            load_demos(path);
            FAIL("expected truncation error");
        } catch (const IoError& e) {
            CHECK(e.code == IoError::Code::truncated);
        }
    }
    // wrong expected vocab hash -> vocab error
    {
        write_bytes(bytes);
        try {
            load_demos(path, std::nullopt, 0xdeadbeefull);
            FAIL("expected vocab hash error");
        } catch (const IoError& e) {
            CHECK(e.code == IoError::Code::vocab_hash_mismatch);
        }
    }
    // wrong expected env hash -> env error
    {
        try {
            load_demos(path, 0x1234ull, std::nullopt);
            FAIL("expected env hash error");
        } catch (const IoError& e) {
            CHECK(e.code == IoError::Code::env_hash_mismatch);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("unlabeled stores carry no action bytes at all") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    DemoStore labeled = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 25, 8, false);
    DemoStore stripped = labeled;
    stripped.header.labeled = false;
    for (auto& t : stripped.trajs) t.actions.clear();

    auto pl = tmp_path("ldd_demo_labeled.bin");
    auto pu = tmp_path("ldd_demo_unlabeled.bin");
    save_demos(labeled, pl);
    save_demos(stripped, pu);
    int64_t actions = 0;
    for (const auto& t : labeled.trajs) actions += t.length() - 1;
    CHECK(std::filesystem::file_size(pl) == std::filesystem::file_size(pu) + static_cast<uintmax_t>(actions));
    std::filesystem::remove(pl);
    std::filesystem::remove(pu);
}

TEST_CASE("split_holdout partitions 1000 trajectories into 900/100") {
    // synthetic store: partition arithmetic does not need real episodes
    DemoStore store;
    store.header.labeled = false;
    store.header.grid = 8;
    for (uint32_t i = 0; i < 1000; ++i) {
        Trajectory t;
        t.seed = i;
        Observation o;
        o.grid.assign(64, 0);
        o.step_index = 0;
        t.obs.push_back(o);
        o.step_index = 1;
        t.obs.push_back(o);
        t.win = i % 2 == 0;
        store.trajs.push_back(std::move(t));
    }
    store.header.count = 1000;

    auto [train, held] = split_holdout(store, 0.1, 3);
    CHECK(train.trajs.size() == 900);
    CHECK(held.trajs.size() == 100);

    // disjoint and exhaustive on seeds
    std::set<uint32_t> seen;
    for (const auto& t : train.trajs) seen.insert(t.seed);
    for (const auto& t : held.trajs) seen.insert(t.seed);
    CHECK(seen.size() == 1000);

    // deterministic
    auto [train2, held2] = split_holdout(store, 0.1, 3);
    CHECK(stores_equal(train, train2));
    CHECK(stores_equal(held, held2));

    CHECK_THROWS_AS(split_holdout(store, 0.0001, 3), ConfigError);
    CHECK_THROWS_AS(split_holdout(store, 0.0, 3), ConfigError);
}

TEST_CASE("language-ablated stores contain empty message fields in every record") {
    EpisodeConfig cfg = cfg_default();
    cfg.message_on = false;
    SplitSpec split = split_of(cfg);
    DemoStore store = collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 30, 17, true);
    CHECK_FALSE(store.header.message_on);
    for (const auto& t : store.trajs)
        for (const auto& o : t.obs) CHECK(o.message.empty());
}

TEST_CASE("collect_demos rejects invalid requests") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    CHECK_THROWS_AS(collect_demos(cfg, split, Side::train, DemoPolicy::expert, nullptr, 0, 1, true), ConfigError);
    CHECK_THROWS_AS(collect_demos(cfg, split, Side::train, DemoPolicy::checkpoint, nullptr, 5, 1, true), ConfigError);
}

TEST_CASE("checkpoint-policy collection samples from the model") {
    EpisodeConfig cfg = cfg_default();
    SplitSpec split = split_of(cfg);
    ModelConfig mcfg;
    mcfg.grid = cfg.grid;
    mcfg.d_tok = 8;
    mcfg.d_sym = 4;
    mcfg.d_key = 4;
    mcfg.d_val = 4;
    mcfg.hidden = 8;
    mcfg.repr = 64;
    Model model(mcfg, 3);
    DemoStore store = collect_demos(cfg, split, Side::train, DemoPolicy::checkpoint, &model, 10, 31, false);
    CHECK(store.header.count == 10);
    CHECK(store.header.policy_id == "checkpoint");
    verify_replay(store, cfg, split, Side::train);
}
