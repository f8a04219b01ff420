#pragma once

#include <ostream>

#include "config.hpp"

namespace cqc::cli {

Json simulate_defaults();
Json fit_defaults();
Json delta_surface_defaults();
Json experiment_defaults();
Json validate_model_defaults();

int cmd_simulate(const Json& config, std::ostream& out, std::ostream& err);
int cmd_fit(const Json& config, std::ostream& out, std::ostream& err);
int cmd_delta_surface(const Json& config, std::ostream& out, std::ostream& err);
int cmd_experiment(const Json& config, std::ostream& out, std::ostream& err);
int cmd_validate_model(const Json& config, std::ostream& out, std::ostream& err);

}  // namespace cqc::cli
