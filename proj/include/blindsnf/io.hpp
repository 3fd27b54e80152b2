#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace blindsnf {

/// Runs `write(tmp)` against a sibling temporary path, then renames it onto
/// `path`. The temporary is removed if `write` throws.
void write_atomic(const std::filesystem::path& path, const std::function<void(const std::filesystem::path&)>& write);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

/// Paths listed one per line (blank lines and '#' comments skipped), resolved
/// against the manifest's directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

/// Sorted *.png files directly inside `dir`.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace blindsnf
