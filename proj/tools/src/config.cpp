#include "config.hpp"

#include <cstdlib>
#include <fstream>

#include "cqc/error.hpp"
#include "cqc/serialize.hpp"

namespace cqc::cli {

namespace {

bool same_kind(const Json& def, const Json& value) {
  if (def.is_null()) return true;
  if (def.is_number()) return value.is_number();
  if (def.is_string()) return value.is_string();
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_array()) return value.is_array();
  if (def.is_object()) return value.is_object();
  return false;
}

void overlay(Json& target, const Json& source, const std::string& origin) {
  if (!source.is_object()) throw ConfigError(origin + ": expected a key-value object");
  for (const auto& [key, value] : source.items()) {
    if (!target.contains(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
    if (!same_kind(target[key], value) && !value.is_null()) {
      throw ConfigError(origin + ": key '" + key + "' has the wrong type");
    }
    target[key] = value;
  }
}

const Json& at(const Json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing config key '" + key + "'");
  return j.at(key);
}

}  // namespace

Json merge_config(const Json& defaults, const std::optional<std::filesystem::path>& file,
                  const Json& flags) {
  Json merged = defaults;
  if (file) overlay(merged, read_json(*file), file->string());
  overlay(merged, flags, "command line");
  return merged;
}

double get_double(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

std::size_t get_count(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("'" + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t get_u64(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError("'" + key + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

bool get_bool(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (!v.is_boolean()) throw ConfigError("'" + key + "' must be true or false");
  return v.get<bool>();
}

std::string get_string(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<std::string> get_optional_string(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<double> get_optional_double(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

std::vector<double> get_doubles(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("'" + key + "' must be a list of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::string> get_strings(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError("'" + key + "' must be a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<std::size_t> get_counts(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 1) {
      throw ConfigError("'" + key + "' must be a list of positive integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::vector<std::string> get_labels(const Json& j, const std::string& key) {
  const Json& v = at(j, key);
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
  return out;
}

void echo_config(const Json& config, const std::filesystem::path& out) {
  std::filesystem::path p = out;
  p += ".config.json";
  write_json(config, p);
}

unsigned default_jobs() {
  if (const char* env = std::getenv("CQC_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

}  // namespace cqc::cli
