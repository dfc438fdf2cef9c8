#pragma once

// Flat key=value configuration with dotted sections. Every key is declared
// in a registry with a type and default; unknown keys, type mismatches and
// bad enum values are rejected with line numbers. serialize() emits a
// canonical sorted form whose reparse compares equal, and whose FNV-1a
// hash identifies the run configuration.

#include <cstdint>
#include <map>
#include <string>

#include "ldd/env.hpp"
#include "ldd/inverse.hpp"
#include "ldd/model.hpp"
#include "ldd/pretrain.hpp"
#include "ldd/rl.hpp"

namespace ldd {

class Config {
public:
    static Config defaults();
    static Config parse_file(const std::filesystem::path& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<config>");

    // `key=value`, validated against the registry ("line" feeds error messages)
    void set_line(const std::string& line, const std::string& origin, int lineno);
    void set(const std::string& key, const std::string& value);

    int64_t geti(const std::string& key) const;
    double getd(const std::string& key) const;
    bool getb(const std::string& key) const;
    const std::string& gets(const std::string& key) const;

    std::string serialize() const;
    uint64_t hash() const { return fnv1a(serialize()); }
    bool operator==(const Config& o) const { return values_ == o.values_; }

    // typed views over the flat keys
    EpisodeConfig episode_config() const;
    ModelConfig model_config() const;
    PretrainConfig pretrain_config() const;
    VaeConfig vae_config() const;
    TrainConfig train_config() const;
    InverseConfig inverse_config() const;
    BcConfig bc_config() const;
    OptimConfig optim_config(const std::string& prefix) const;  // "rl" | "pretrain"

private:
    std::map<std::string, std::string> values_;  // canonical string form
};

}  // namespace ldd
