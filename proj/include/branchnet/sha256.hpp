#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace branchnet {

// Minimal SHA-256, enough for artifact digests in run manifests.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

}  // namespace branchnet
