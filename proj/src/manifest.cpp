#include "ldd/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ldd/common.hpp"

namespace ldd {

std::string source_revision() {
#ifdef LDD_SOURCE_REV
    return LDD_SOURCE_REV;
#else
    return "unknown";
#endif
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["run_id"] = run_id;
    j["config_hash"] = config_hash;
    j["source_rev"] = source_rev;
    j["artifacts"] = artifacts;
    j["wall_clock_sec"] = wall_clock_sec;
    j["status"] = status;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<uint64_t>();
    m.source_rev = j.at("source_rev").get<std::string>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.wall_clock_sec = j.at("wall_clock_sec").get<double>();
    m.status = j.at("status").get<std::string>();
    return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json());
}

std::optional<RunManifest> RunManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return from_json(ss.str());
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace ldd
