#include "adarank/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

namespace adarank {

nlohmann::json RunManifest::to_json() const {
    return nlohmann::json{{"subcommand", subcommand}, {"config", config},
                          {"seed", seed},            {"template_hash", template_hash},
                          {"backend", backend},      {"version", version},
                          {"started_at", started_at}, {"finished_at", finished_at}};
}

void RunManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << to_json().dump(2) << "\n";
}

std::string utc_now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string build_version() {
#ifdef ADARANK_VERSION
    return ADARANK_VERSION;
#else
    return "0.1.0";
#endif
}

}  // namespace adarank
