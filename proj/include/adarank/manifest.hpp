#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace adarank {

// One manifest per CLI invocation. Everything except the timestamps is a
// pure function of the inputs, so manifests from identical configs differ
// only in started_at/finished_at.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::string template_hash;
    std::string backend;  // identifiers only, never credentials
    std::string version;
    std::string started_at;
    std::string finished_at;

    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;
};

std::string utc_now_iso8601();
std::string build_version();

}  // namespace adarank
