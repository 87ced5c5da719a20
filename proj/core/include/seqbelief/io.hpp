#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace seqbelief {

/// Write `content` to `<path>.partial`, then rename over `path`. On failure
/// the partial file is removed and IoError is thrown.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Read a whole file; throws IoError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace seqbelief
