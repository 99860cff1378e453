#include "topoforge/material.hpp"

#include <cmath>
#include <string>

#include "topoforge/error.hpp"

namespace topoforge {

void MaterialModel::validate() const {
  if (!(e0 > e_min && e_min > 0.0)) {
    fail(ErrorCode::InvalidArgument, "material requires E0 > E_min > 0");
  }
  if (!(penal >= 1.0)) fail(ErrorCode::InvalidArgument, "penalisation exponent must be >= 1");
  if (!(poisson >= 0.0 && poisson < 0.5)) {
    fail(ErrorCode::InvalidPoissonRatio, "Poisson ratio must lie in [0, 0.5)");
  }
}

double simp_modulus(double rho, const MaterialModel& material) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    fail(ErrorCode::OutOfRangeDensity, "density " + std::to_string(rho) + " outside [0, 1]");
  }
  return material.e_min + std::pow(rho, material.penal) * (material.e0 - material.e_min);
}

double simp_modulus_derivative(double rho, const MaterialModel& material) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    fail(ErrorCode::OutOfRangeDensity, "density " + std::to_string(rho) + " outside [0, 1]");
  }
  if (rho == 0.0) return material.penal == 1.0 ? material.e0 - material.e_min : 0.0;
  return material.penal * std::pow(rho, material.penal - 1.0) * (material.e0 - material.e_min);
}

}  // namespace topoforge
