#pragma once

#include "langevin/types.hpp"

#include <json.hpp>

#include <string>

namespace langevin {

// Writes content to path.tmp and renames it over path. Throws IoError.
void atomic_write(const std::string& path, const std::string& content);
void write_json_file(const std::string& path, const nlohmann::json& value);
nlohmann::json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);
void ensure_directory(const std::string& path);
bool file_exists(const std::string& path);

// Shortest decimal text that round-trips through strtod.
std::string format_double(double x);

nlohmann::json to_json(const Vec& v);
nlohmann::json to_json(const Mat& m);
Vec vec_from_json(const nlohmann::json& j);
Mat mat_from_json(const nlohmann::json& j);

}  // namespace langevin
