#pragma once

#include <string>
#include <vector>

namespace paracycle::io {

// Write content to path atomically (temp file in the same directory, then
// rename). Throws IoError on failure.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Fixed 6-decimal formatting used by every CSV we emit (locale-independent).
std::string format_fixed6(double v);

// One CSV cell per (index, value) row under the given header pair.
std::string series_csv(const std::string& index_name, const std::string& value_name,
                       const std::vector<std::pair<int, double>>& rows);

}  // namespace paracycle::io
