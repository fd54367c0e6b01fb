#include "branchnet/runio.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "branchnet/sha256.hpp"
#include "branchnet/util.hpp"

namespace fs = std::filesystem;

namespace branchnet {

RunDir::RunDir(const std::string& dir) : dir_(dir), lock_path_(dir + "/.branchnet_lock") {
    if (dir_.empty()) throw ConfigError("output directory must not be empty");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_ + ": " + ec.message());
    int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw IoError("output directory " + dir_ +
                          " is owned by another run (found .branchnet_lock); "
                          "use a distinct --out per run");
        throw IoError("cannot claim output directory " + dir_ + ": " + std::strerror(errno));
    }
    const std::string token = "pid " + std::to_string(::getpid()) + "\n";
    ssize_t n = ::write(fd, token.data(), token.size());
    (void)n;
    ::close(fd);
}

RunDir::~RunDir() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::out | std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("short write to " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_manifest(const RunDir& run, const nlohmann::ordered_json& config_echo,
                    const std::vector<uint64_t>& seeds, double wall_ms,
                    const std::vector<std::string>& artifact_names) {
    nlohmann::ordered_json m;
    m["config"] = config_echo;
    m["seeds"] = seeds;
    m["deterministic"] = deterministic_mode();
    m["threads"] = num_threads();
    m["wall_time_ms"] = deterministic_mode() ? nlohmann::ordered_json() : nlohmann::ordered_json(wall_ms);
    nlohmann::ordered_json artifacts;
    for (const auto& name : artifact_names) {
        const std::string p = run.file(name);
        artifacts[name] = fs::exists(p) ? "sha256:" + sha256_file_hex(p) : "missing";
    }
    m["artifacts"] = artifacts;
    write_text_file(run.file("manifest.json"), m.dump(2) + "\n");
}

void write_error_record(const std::string& out_dir, const std::string& subcommand,
                        const std::string& kind, const std::string& message) noexcept {
    try {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        nlohmann::ordered_json e;
        e["subcommand"] = subcommand;
        e["error"] = kind;
        e["message"] = message;
        write_text_file(out_dir + "/error.json", e.dump(2) + "\n");
    } catch (...) {
    }
}

}  // namespace branchnet
