#pragma once

// Run manifests: enough to reconstruct a run (config hash, seeds live in
// the config) and to support matrix resume. Written atomically.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ldd {

struct RunManifest {
    std::string run_id;
    uint64_t config_hash = 0;
    std::string source_rev;
    std::vector<std::string> artifacts;
    double wall_clock_sec = 0.0;
    std::string status;  // "completed" | "failed"

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);

    void save(const std::filesystem::path& path) const;
    static std::optional<RunManifest> load(const std::filesystem::path& path);
};

std::string source_revision();

}  // namespace ldd
