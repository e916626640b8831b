#ifndef IPDQ_IO_HPP
#define IPDQ_IO_HPP

#include <filesystem>
#include <string>

#include "json.hpp"

namespace ipdq {

// Shortest round-trip-safe decimal form: 17 significant digits, '.' separator.
std::string fmt17(double x);

// Writes text to path, creating parent directories. Throws std::runtime_error
// carrying the path on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace ipdq

#endif  // IPDQ_IO_HPP
