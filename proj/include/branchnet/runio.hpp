#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace branchnet {

// Exclusive ownership of an output directory for the lifetime of one run.
// A second run targeting the same directory fails fast instead of
// interleaving artifacts.
class RunDir {
  public:
    explicit RunDir(const std::string& dir);
    ~RunDir();
    RunDir(const RunDir&) = delete;
    RunDir& operator=(const RunDir&) = delete;

    const std::string& path() const { return dir_; }
    std::string file(const std::string& name) const { return dir_ + "/" + name; }

  private:
    std::string dir_;
    std::string lock_path_;
};

// manifest.json: config echo, seeds, environment, wall time, and a sha256
// digest per artifact written by the run.
void write_manifest(const RunDir& run, const nlohmann::ordered_json& config_echo,
                    const std::vector<uint64_t>& seeds, double wall_ms,
                    const std::vector<std::string>& artifact_names);

// error.json for nonzero exits; best effort, never throws.
void write_error_record(const std::string& out_dir, const std::string& subcommand,
                        const std::string& kind, const std::string& message) noexcept;

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace branchnet
