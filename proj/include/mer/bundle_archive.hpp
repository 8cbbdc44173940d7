#pragma once

#include <filesystem>
#include <string>

namespace mer {

// Minimal POSIX ustar support for shipping bundle directories over HTTP.
// Only regular files and directories are handled; entries are written in
// sorted path order with zeroed metadata.
std::string pack_directory(const std::filesystem::path& dir);

// Extracts into `dest`. Rejects absolute paths, `..` components, links and
// truncated archives with Error(MalformedHeader).
void unpack_archive(const std::string& archive, const std::filesystem::path& dest);

}  // namespace mer
