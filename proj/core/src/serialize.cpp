#include "cqc/serialize.hpp"

#include <fstream>

#include "cqc/error.hpp"

namespace cqc {

nlohmann::json to_json(const PropensityModel& model) {
  return {{"beta", model.beta()}, {"beta0", model.beta0()}, {"clip", model.clip()}};
}

PropensityModel propensity_from_json(const nlohmann::json& j) {
  try {
    return PropensityModel(j.at("beta").get<std::vector<double>>(), j.at("beta0").get<double>(),
                           j.at("clip").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed propensity JSON: ") + e.what());
  }
}

nlohmann::json to_json(const CcdfModel& model) {
  nlohmann::json xs = nlohmann::json::array();
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto x = model.covariates(i);
    xs.push_back(std::vector<double>(x.begin(), x.end()));
  }
  const auto y = model.outcomes();
  return {{"arm", model.arm()},
          {"bandwidth", model.bandwidth()},
          {"dim", model.dim()},
          {"y", std::vector<double>(y.begin(), y.end())},
          {"x", xs}};
}

CcdfModel ccdf_from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    auto y = j.at("y").get<std::vector<double>>();
    const auto& xs = j.at("x");
    if (xs.size() != y.size()) throw ConfigError("CCDF JSON: x and y differ in length");
    std::vector<double> x;
    x.reserve(y.size() * dim);
    for (const auto& row : xs) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != dim) throw ConfigError("CCDF JSON: covariate row has wrong dimension");
      x.insert(x.end(), r.begin(), r.end());
    }
    return CcdfModel(j.at("arm").get<int>(), j.at("bandwidth").get<double>(), std::move(y),
                     std::move(x), dim);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed CCDF JSON: ") + e.what());
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::unique_ptr<CqcModel> load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

void save_model(const CqcModel& model, const std::filesystem::path& path) {
  write_json(model.to_json(), path);
}

}  // namespace cqc
