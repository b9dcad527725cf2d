#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string_view>

namespace idrank {

/// Writes through a sibling temporary file, then renames it over `path`.
/// On any failure the temporary is removed and `path` is left untouched.
void write_file_atomically(const std::filesystem::path& path,
                           const std::function<void(std::ostream&)>& writer);

void write_text_atomically(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace idrank
