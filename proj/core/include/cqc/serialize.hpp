#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "cqc/cqc_model.hpp"
#include "cqc/nuisance.hpp"

namespace cqc {

// {"beta": [...], "beta0": b, "clip": c}
nlohmann::json to_json(const PropensityModel& model);
PropensityModel propensity_from_json(const nlohmann::json& j);

// {"arm": a, "bandwidth": h, "dim": d, "y": [...], "x": [[...], ...]}
nlohmann::json to_json(const CcdfModel& model);
CcdfModel ccdf_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

std::unique_ptr<CqcModel> load_model(const std::filesystem::path& path);
void save_model(const CqcModel& model, const std::filesystem::path& path);

}  // namespace cqc
