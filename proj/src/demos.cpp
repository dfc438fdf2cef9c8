#include "ldd/demos.hpp"

#include <fstream>
#include <sstream>

namespace ldd {

static constexpr char kMagic[4] = {'L', 'D', 'D', 'M'};
static constexpr uint32_t kVersion = 1;

std::string to_string(DemoPolicy p) {
    switch (p) {
        case DemoPolicy::expert: return "expert";
        case DemoPolicy::random_policy: return "random";
        case DemoPolicy::checkpoint: return "checkpoint";
    }
    return "?";
}

int64_t DemoStore::transitions() const {
    int64_t n = 0;
    for (const auto& t : trajs) n += t.length() - 1;
    return n;
}

uint64_t DemoStore::content_hash() const {
    Fnv1a h;
    h.update_pod(header.env_hash);
    h.update_pod(header.vocab_hash);
    h.update(header.policy_id);
    for (const auto& t : trajs) {
        h.update_pod(t.seed);
        for (const auto& o : t.obs) {
            h.update(o.grid.data(), o.grid.size());
            for (const auto& line : o.manual) h.update(line.data(), line.size() * 2);
            h.update(o.message.data(), o.message.size() * 2);
        }
        if (!t.actions.empty()) h.update(t.actions.data(), t.actions.size());
    }
    return h.digest();
}

DemoStore collect_demos(const EpisodeConfig& cfg, const SplitSpec& split, Side side,
                        DemoPolicy policy, const Model* checkpoint_policy, int n,
                        uint64_t seed, bool strip_actions) {
    if (n < 1) throw ConfigError("collect_demos: n must be >= 1");
    if (policy == DemoPolicy::checkpoint) {
        if (!checkpoint_policy) throw ConfigError("collect_demos: checkpoint policy requires a model");
        if (checkpoint_policy->config().n_tokens != Vocab::instance().n_tokens())
            throw ConfigError("collect_demos: checkpoint vocabulary does not match this build");
        if (checkpoint_policy->config().grid != cfg.grid)
            throw ConfigError("collect_demos: checkpoint grid does not match environment");
    }

    DemoStore store;
    store.header.env_hash = cfg.hash();
    store.header.vocab_hash = Vocab::instance().hash();
    store.header.grid = static_cast<uint16_t>(cfg.grid);
    store.header.policy_id = to_string(policy);
    store.header.labeled = !strip_actions;
    store.header.manual_on = cfg.manual_on;
    store.header.message_on = cfg.message_on;

    Env env(cfg, split, side);
    int wins = 0;
    for (int ep = 0; ep < n; ++ep) {
        uint32_t ep_seed = static_cast<uint32_t>(mix_seed(seed, 0xde30, static_cast<uint64_t>(ep)));
        Rng policy_rng(mix_seed(seed, 0xac7, static_cast<uint64_t>(ep)));

        Trajectory traj;
        traj.seed = ep_seed;
        traj.obs.push_back(env.reset(ep_seed));

        std::vector<const Observation*> window;
        bool win = false;
        while (!env.done()) {
            int a;
            switch (policy) {
                case DemoPolicy::expert:
                    a = env.expert_action();
                    break;
                case DemoPolicy::random_policy:
                    a = policy_rng.uniform_int(kNumActions);
                    break;
                case DemoPolicy::checkpoint: {
                    window.clear();
                    int fs = checkpoint_policy->config().frame_stack;
                    int t = static_cast<int>(traj.obs.size());
                    for (int f = std::max(0, t - fs); f < t; ++f) window.push_back(&traj.obs[static_cast<size_t>(f)]);
                    std::vector<double> probs = checkpoint_policy->policy_probs(window);
                    double u = policy_rng.uniform();
                    double acc = 0.0;
                    a = kNumActions - 1;
                    for (int i = 0; i < kNumActions; ++i) {
                        acc += probs[static_cast<size_t>(i)];
                        if (u < acc) {
                            a = i;
                            break;
                        }
                    }
                    break;
                }
            }
            StepResult res = env.step(a);
            traj.actions.push_back(static_cast<uint8_t>(a));
            traj.obs.push_back(std::move(res.obs));
            win = res.win;
        }
        traj.win = win;
        wins += win ? 1 : 0;
        if (strip_actions) traj.actions.clear();
        store.trajs.push_back(std::move(traj));
    }
    store.header.count = static_cast<uint32_t>(store.trajs.size());
    store.header.win_rate = static_cast<double>(wins) / static_cast<double>(n);
    return store;
}

// --- serialization ------------------------------------------------------------

static void write_token_seq(std::ostream& os, const std::vector<uint16_t>& seq) {
    io::write_u16(os, static_cast<uint16_t>(seq.size()));
    for (uint16_t t : seq) io::write_u16(os, t);
}

static std::vector<uint16_t> read_token_seq(std::istream& is) {
    uint16_t n = io::read_u16(is);
    std::vector<uint16_t> seq(n);
    for (uint16_t i = 0; i < n; ++i) seq[i] = io::read_u16(is);
    return seq;
}

static void write_record(std::ostream& os, const Trajectory& t, bool labeled, int grid) {
    io::write_u32(os, t.seed);
    io::write_u16(os, static_cast<uint16_t>(t.obs.size()));
    uint8_t flags = (t.win ? 1 : 0) | (t.pseudo_labeled ? 2 : 0);
    io::write_u8(os, flags);

    // manual dictionary: the manual is invariant within an episode, so one
    // entry suffices; steps store an index into this dictionary
    io::write_u16(os, 1);
    const auto& manual = t.obs.front().manual;
    io::write_u16(os, static_cast<uint16_t>(manual.size()));
    for (const auto& line : manual) write_token_seq(os, line);

    size_t cells = static_cast<size_t>(grid) * static_cast<size_t>(grid);
    for (size_t i = 0; i < t.obs.size(); ++i) {
        const Observation& o = t.obs[i];
        if (o.grid.size() != cells)
            throw ContractError("demo record: observation grid size mismatch");
        io::write_bytes(os, o.grid.data(), cells);
        write_token_seq(os, o.message);
        io::write_u16(os, 0);  // manual dictionary reference
        if (labeled && i + 1 < t.obs.size()) io::write_u8(os, t.actions[i]);
    }
}

static Trajectory read_record(std::istream& is, bool labeled, int grid) {
    Trajectory t;
    t.seed = io::read_u32(is);
    uint16_t steps = io::read_u16(is);
    uint8_t flags = io::read_u8(is);
    t.win = flags & 1;
    t.pseudo_labeled = flags & 2;

    uint16_t dict_n = io::read_u16(is);
    if (dict_n != 1) throw IoError(IoError::Code::malformed, "demo record: expected 1 manual dictionary entry");
    uint16_t n_lines = io::read_u16(is);
    std::vector<std::vector<uint16_t>> manual(n_lines);
    for (uint16_t i = 0; i < n_lines; ++i) manual[i] = read_token_seq(is);

    size_t cells = static_cast<size_t>(grid) * static_cast<size_t>(grid);
    for (uint16_t i = 0; i < steps; ++i) {
        Observation o;
        o.grid.resize(cells);
        io::read_bytes(is, o.grid.data(), cells);
        o.message = read_token_seq(is);
        uint16_t ref = io::read_u16(is);
        if (ref != 0) throw IoError(IoError::Code::malformed, "demo record: bad manual reference");
        o.manual = manual;
        o.step_index = i;
        t.obs.push_back(std::move(o));
        if (labeled && i + 1 < steps) t.actions.push_back(io::read_u8(is));
    }
    return t;
}

void save_demos(const DemoStore& store, const std::filesystem::path& path) {
    std::ostringstream records(std::ios::binary);
    for (const auto& t : store.trajs)
        write_record(records, t, store.header.labeled, store.header.grid);
    std::string payload = records.str();
    Fnv1a csum;
    csum.update(payload.data(), payload.size());

    std::ostringstream os(std::ios::binary);
    io::write_bytes(os, kMagic, 4);
    io::write_u32(os, kVersion);
    io::write_u64(os, store.header.env_hash);
    io::write_u64(os, store.header.vocab_hash);
    io::write_u16(os, store.header.grid);
    io::write_string(os, store.header.policy_id);
    io::write_u8(os, store.header.labeled ? 1 : 0);
    io::write_u8(os, store.header.manual_on ? 1 : 0);
    io::write_u8(os, store.header.message_on ? 1 : 0);
    io::write_u32(os, static_cast<uint32_t>(store.trajs.size()));
    io::write_f64(os, store.header.win_rate);
    io::write_u64(os, csum.digest());
    io::write_bytes(os, payload.data(), payload.size());
    write_file_atomic(path, os.str());
}

DemoStore load_demos(const std::filesystem::path& path,
                     std::optional<uint64_t> expected_env_hash,
                     std::optional<uint64_t> expected_vocab_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Code::truncated, "cannot open " + path.string());
    char magic[4];
    io::read_bytes(is, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(IoError::Code::malformed, "bad demo store magic in " + path.string());
    uint32_t version = io::read_u32(is);
    if (version != kVersion)
        throw IoError(IoError::Code::version_mismatch, "demo store version " + std::to_string(version) + ", expected " + std::to_string(kVersion));

    DemoStore store;
    store.header.version = version;
    store.header.env_hash = io::read_u64(is);
    store.header.vocab_hash = io::read_u64(is);
    store.header.grid = io::read_u16(is);
    store.header.policy_id = io::read_string(is);
    store.header.labeled = io::read_u8(is) != 0;
    store.header.manual_on = io::read_u8(is) != 0;
    store.header.message_on = io::read_u8(is) != 0;
    store.header.count = io::read_u32(is);
    store.header.win_rate = io::read_f64(is);
    uint64_t stored_csum = io::read_u64(is);

    if (expected_vocab_hash && store.header.vocab_hash != *expected_vocab_hash)
        throw IoError(IoError::Code::vocab_hash_mismatch, "demo store vocabulary hash mismatch");
    if (expected_env_hash && store.header.env_hash != *expected_env_hash)
        throw IoError(IoError::Code::env_hash_mismatch, "demo store environment hash mismatch");

    std::ostringstream rest(std::ios::binary);
    rest << is.rdbuf();
    std::string payload = rest.str();
    Fnv1a csum;
    csum.update(payload.data(), payload.size());
    if (csum.digest() != stored_csum)
        throw IoError(IoError::Code::checksum_mismatch, "demo store checksum mismatch in " + path.string());

    std::istringstream ps(payload, std::ios::binary);
    for (uint32_t i = 0; i < store.header.count; ++i)
        store.trajs.push_back(read_record(ps, store.header.labeled, store.header.grid));
    return store;
}

std::pair<DemoStore, DemoStore> split_holdout(const DemoStore& store, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("split_holdout: fraction must be in (0,1)");
    if (store.trajs.size() < 2)
        throw ConfigError("split_holdout: need at least 2 trajectories");
    size_t n_held = static_cast<size_t>(std::floor(fraction * static_cast<double>(store.trajs.size())));
    if (n_held == 0 || n_held == store.trajs.size())
        throw ConfigError("split_holdout: degenerate partition sizes");

    std::vector<size_t> order(store.trajs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x501d));
    rng.shuffle(order);

    DemoStore held, train;
    held.header = store.header;
    train.header = store.header;
    for (size_t i = 0; i < order.size(); ++i) {
        (i < n_held ? held : train).trajs.push_back(store.trajs[order[i]]);
    }
    auto finish = [](DemoStore& s) {
        s.header.count = static_cast<uint32_t>(s.trajs.size());
        int wins = 0;
        for (const auto& t : s.trajs) wins += t.win ? 1 : 0;
        s.header.win_rate = static_cast<double>(wins) / static_cast<double>(s.trajs.size());
    };
    finish(held);
    finish(train);
    return {std::move(train), std::move(held)};
}

void verify_replay(const DemoStore& store, const EpisodeConfig& cfg, const SplitSpec& split, Side side) {
    if (!store.header.labeled) throw ContractError("verify_replay: store is unlabeled");
    if (store.header.env_hash != cfg.hash())
        throw IoError(IoError::Code::env_hash_mismatch, "verify_replay: environment hash mismatch");
    Env env(cfg, split, side);
    for (size_t ti = 0; ti < store.trajs.size(); ++ti) {
        const Trajectory& t = store.trajs[ti];
        const Observation& first = env.reset(t.seed);
        if (!(first == t.obs[0]))
            throw ContractError("replay mismatch at trajectory " + std::to_string(ti) + " step 0");
        for (size_t k = 0; k < t.actions.size(); ++k) {
            StepResult res = env.step(t.actions[k]);
            if (!(res.obs == t.obs[k + 1]))
                throw ContractError("replay mismatch at trajectory " + std::to_string(ti) + " step " + std::to_string(k + 1));
        }
        if (!env.done()) throw ContractError("replay: trajectory " + std::to_string(ti) + " ends before episode end");
    }
}

}  // namespace ldd
