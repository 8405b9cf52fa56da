#pragma once

#include <filesystem>
#include <string>

namespace countmix {

// Shortest decimal string that parses back to the same double.
std::string format_shortest(double v);
// printf("%.*f") without locale surprises.
std::string format_fixed(double v, int decimals);

// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace countmix
