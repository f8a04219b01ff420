#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cqc::cli {

using Json = nlohmann::json;

// defaults <- config file <- flags. Every key must already exist in
// `defaults`, and replacement values must match the default's JSON type
// (a null default accepts anything).
Json merge_config(const Json& defaults, const std::optional<std::filesystem::path>& file,
                  const Json& flags);

// Typed access with ConfigError on a wrong type.
double get_double(const Json& j, const std::string& key);
std::size_t get_count(const Json& j, const std::string& key);
std::uint64_t get_u64(const Json& j, const std::string& key);
bool get_bool(const Json& j, const std::string& key);
std::string get_string(const Json& j, const std::string& key);
std::optional<std::string> get_optional_string(const Json& j, const std::string& key);
std::optional<double> get_optional_double(const Json& j, const std::string& key);
std::vector<double> get_doubles(const Json& j, const std::string& key);
std::vector<std::string> get_strings(const Json& j, const std::string& key);
std::vector<std::size_t> get_counts(const Json& j, const std::string& key);

// Array entries as text; numbers keep their JSON spelling.
std::vector<std::string> get_labels(const Json& j, const std::string& key);

// Writes the effective config next to an output: <out>.config.json.
void echo_config(const Json& config, const std::filesystem::path& out);

// CQC_JOBS when set and positive, otherwise 1.
unsigned default_jobs();

}  // namespace cqc::cli
