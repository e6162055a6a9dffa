#ifndef GSEDD_IO_HPP
#define GSEDD_IO_HPP

#include <filesystem>
#include <string>

namespace gsedd {

/// Writes via a temp file plus rename so readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace gsedd

#endif
