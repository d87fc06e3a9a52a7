#include "spforce/core_models.hpp"

#include <cmath>
#include <stdexcept>

#include "spforce/constants.hpp"

namespace spforce {

namespace k = constants;

CapacitanceDerivs pfa_capacitance(double x, double sphere_radius) {
  if (!(sphere_radius > 0.0)) throw std::domain_error("pfa_capacitance: R must be > 0");
  if (!(x > 0.0) || x > sphere_radius)
    throw std::domain_error("pfa_capacitance: gap must satisfy 0 < x <= R");
  const double a = 2.0 * k::pi * k::eps0 * sphere_radius;
  return {a * std::log(sphere_radius / x), -a / x, a / (x * x)};
}

double frequency_shift_from_gradient(double force_gradient, double mass_effective) {
  if (!(mass_effective > 0.0))
    throw std::domain_error("frequency_shift_from_gradient: m_eff must be > 0");
  return -force_gradient / (4.0 * k::pi * k::pi * mass_effective);
}

double roughness_correction(double x, double h2_sphere, double h2_plane) {
  if (!(x > 0.0)) throw std::domain_error("roughness_correction: x must be > 0");
  if (h2_sphere < 0.0 || h2_plane < 0.0)
    throw std::domain_error("roughness_correction: variances must be >= 0");
  return 1.0 + h2_sphere / (x * x) + h2_plane / (x * x);
}

bool roughness_perturbative(double x, double h2_sphere, double h2_plane) {
  const double rms = std::sqrt(std::max(h2_sphere, h2_plane));
  return x >= 3.0 * rms;
}

double equivalent_casimir_voltage(double x) {
  if (!(x > 0.0)) throw std::domain_error("equivalent_casimir_voltage: x must be > 0");
  // d/dx [pi eps0 R V^2 / x] = d/dx [pi^3 hbar c R / (360 x^3)]
  //   => V = (pi / sqrt(120)) sqrt(hbar c / eps0) / x
  return k::pi / std::sqrt(120.0) * std::sqrt(k::hbar * k::c_light / k::eps0) / x;
}

CantileverPredictions cantilever_predictions(const Cantilever& c) {
  for (double v : {c.length, c.width, c.thickness, c.density, c.youngs_modulus})
    if (!(v > 0.0)) throw std::domain_error("cantilever_predictions: inputs must be > 0");
  const double nu_p =
      0.162 * c.thickness / (c.length * c.length) * std::sqrt(c.youngs_modulus / c.density);
  const double k_stiff = 1.036 * c.youngs_modulus * c.width *
                         c.thickness * c.thickness * c.thickness /
                         (c.length * c.length * c.length);
  const double m_phys = c.density * c.length * c.width * c.thickness;
  return {nu_p, k_stiff, m_phys};
}

bool pfa_gap_valid(double x, double sphere_radius) {
  return x > 0.0 && x / sphere_radius <= 1.0e-2;
}

}  // namespace spforce
