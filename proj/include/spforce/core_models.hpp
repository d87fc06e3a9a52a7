#ifndef SPFORCE_CORE_MODELS_HPP
#define SPFORCE_CORE_MODELS_HPP

#include "spforce/geometry.hpp"

namespace spforce {

/// Sphere-plane capacitance in the proximity force approximation,
/// C(x) = 2 pi eps0 R ln(R/x), together with its first two x-derivatives.
struct CapacitanceDerivs {
  double C;   // F
  double C1;  // dC/dx  (F/m)
  double C2;  // d2C/dx2 (F/m^2)
};

CapacitanceDerivs pfa_capacitance(double x, double sphere_radius);

/// Frequency-shift relation for a resonator in a force gradient:
/// dnu^2 = -F'(x) / (4 pi^2 m_eff).
double frequency_shift_from_gradient(double force_gradient, double mass_effective);

/// Second-order perturbative roughness factor 1 + <h_s^2>/x^2 + <h_p^2>/x^2
/// multiplying the smooth-surface sphere-plane electrostatic force.
double roughness_correction(double x, double h2_sphere, double h2_plane);

/// True while x >= 3 * max rms roughness amplitude, the validity condition of
/// the perturbative correction.
bool roughness_perturbative(double x, double h2_sphere, double h2_plane);

/// Bias mimicking the ideal (T=0, perfect conductor) Casimir frequency shift
/// at gap x: obtained by matching the gradient of the PFA electrostatic force
/// pi eps0 R V^2 / x to the gradient of the ideal sphere-plane Casimir force.
/// Scales exactly as 1/x.
double equivalent_casimir_voltage(double x);

/// Flexural-mode predictions for a rectangular cantilever:
/// nu_p = 0.162 (t/L^2) sqrt(E/rho), k = 1.036 E w t^3 / L^3, m = rho L w t.
struct CantileverPredictions {
  double proper_frequency;  // Hz
  double stiffness;         // N/m
  double mass_physical;     // kg
};

CantileverPredictions cantilever_predictions(const Cantilever& c);

/// Gap must be small against the radius of curvature for the PFA mapping;
/// false signals that results should be treated as out of regime.
bool pfa_gap_valid(double x, double sphere_radius);

}  // namespace spforce

#endif
