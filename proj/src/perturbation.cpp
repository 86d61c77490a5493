#include "enkf/perturbation.hpp"

namespace enkf {

std::string to_string(Distribution d) {
  return d == Distribution::Gaussian ? "gaussian" : "rademacher";
}

Distribution distribution_from_string(std::string_view name) {
  if (name == "gaussian") return Distribution::Gaussian;
  if (name == "rademacher") return Distribution::Rademacher;
  throw ConfigError("unknown distribution '" + std::string(name) + "' (expected gaussian or rademacher)");
}

void PerturbationSpec::validate() const {
  if (dimension < 1) throw ConfigError("perturbation dimension must be positive");
  if (particle_count < 1) throw ConfigError("particle_count must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive and finite");
  if (!(sigma_decay > 0.0) || !std::isfinite(sigma_decay)) throw ConfigError("sigma_decay must be positive and finite");
}

}  // namespace enkf
