#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace utk {

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's bytes. Throws Error(IoError) when unreadable.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace utk
