#pragma once

// Demonstration sets: rollouts stored as observation sequences, optionally
// action-labeled. The binary format is versioned, self-delimiting per
// record, checksummed with FNV-1a, and dedups the per-episode manual into
// a record-local dictionary. Unlabeled stores carry no action bytes at all.

#include <filesystem>
#include <optional>

#include "ldd/env.hpp"
#include "ldd/model.hpp"

namespace ldd {

struct Trajectory {
    uint32_t seed = 0;
    std::vector<Observation> obs;     // s_1..s_T
    std::vector<uint8_t> actions;     // a_1..a_{T-1}; empty when unlabeled
    bool win = false;
    bool pseudo_labeled = false;

    int length() const { return static_cast<int>(obs.size()); }
};

struct DemoHeader {
    uint32_t version = 1;
    uint64_t env_hash = 0;
    uint64_t vocab_hash = 0;
    uint16_t grid = 8;
    std::string policy_id;  // expert | random | agent@<frames> [+pseudo]
    bool labeled = false;
    bool manual_on = true;
    bool message_on = true;
    uint32_t count = 0;
    double win_rate = 0.0;
};

struct DemoStore {
    DemoHeader header;
    std::vector<Trajectory> trajs;

    int64_t transitions() const;
    uint64_t content_hash() const;
};

enum class DemoPolicy { expert, random_policy, checkpoint };
std::string to_string(DemoPolicy p);

DemoStore collect_demos(const EpisodeConfig& cfg, const SplitSpec& split, Side side,
                        DemoPolicy policy, const Model* checkpoint_policy, int n,
                        uint64_t seed, bool strip_actions);

void save_demos(const DemoStore& store, const std::filesystem::path& path);
DemoStore load_demos(const std::filesystem::path& path,
                     std::optional<uint64_t> expected_env_hash = std::nullopt,
                     std::optional<uint64_t> expected_vocab_hash = std::nullopt);

// Deterministic seeded partition at trajectory granularity.
std::pair<DemoStore, DemoStore> split_holdout(const DemoStore& store, double fraction, uint64_t seed);

// Replays (seed, actions) of every labeled trajectory and checks stored
// observations byte-for-byte. Throws ContractError on the first mismatch.
void verify_replay(const DemoStore& store, const EpisodeConfig& cfg, const SplitSpec& split, Side side);

}  // namespace ldd
