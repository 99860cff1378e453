#pragma once

namespace topoforge {

/// Solid/void interpolation parameters. Defaults follow the classic SIMP
/// codes: unit solid modulus, 1e-9 void modulus, cubic penalisation.
struct MaterialModel {
  double e0 = 1.0;
  double e_min = 1e-9;
  double penal = 3.0;
  double poisson = 0.3;

  void validate() const;
};

/// E_min + rho^p (E0 - E_min); throws OutOfRangeDensity outside [0, 1].
double simp_modulus(double rho, const MaterialModel& material);

/// d/drho of simp_modulus.
double simp_modulus_derivative(double rho, const MaterialModel& material);

}  // namespace topoforge
