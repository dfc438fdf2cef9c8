#pragma once

// Fixed symbol and token registry. Symbol ids render the grid; token ids
// feed the text channels. The registry is compiled in so ids are stable
// across runs; vocab.tsv is the serialized form consumed by external
// tooling and hashed into demo-store headers.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ldd/common.hpp"

namespace ldd {

constexpr uint8_t kSymBackground = 0;
constexpr uint8_t kSymAgent = 1;
constexpr int kNumEntityClasses = 12;
constexpr int kNumSymbols = 2 + kNumEntityClasses;
constexpr int kSynonymsPerClass = 3;

struct EntityClass {
    uint8_t class_id;  // doubles as the grid symbol id
    std::array<uint16_t, kSynonymsPerClass> synonym_tokens;
};

class Vocab {
public:
    static const Vocab& instance();

    int n_tokens() const { return static_cast<int>(tokens_.size()); }
    int n_symbols() const { return kNumSymbols; }

    const std::string& token_surface(uint16_t id) const { return tokens_.at(id); }
    const std::string& symbol_surface(uint8_t id) const { return symbols_.at(id); }
    uint16_t token_id(const std::string& surface) const;

    const EntityClass& entity_class(uint8_t class_id) const;
    const std::vector<EntityClass>& entity_classes() const { return classes_; }

    // template fragments used by the environment
    uint16_t tok_the, tok_is, tok_your, tok_goal, tok_it, tok_dangerous, tok_harmless;
    uint16_t tok_stays, tok_still, tok_chases, tok_you, tok_runs, tok_away;
    uint16_t tok_beside, tok_reached, tok_caught;

    std::string to_tsv() const;
    uint64_t hash() const { return hash_; }

    std::string detokenize(const std::vector<uint16_t>& ids) const;

private:
    Vocab();
    uint16_t add_token(const std::string& surface);

    std::vector<std::string> tokens_;
    std::vector<std::string> symbols_;
    std::vector<EntityClass> classes_;
    uint64_t hash_ = 0;
};

void write_vocab_tsv(const std::filesystem::path& path);
// Parses a vocab.tsv and returns its hash; throws IoError on malformed input.
uint64_t read_vocab_tsv_hash(const std::filesystem::path& path);

}  // namespace ldd
