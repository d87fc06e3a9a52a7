#ifndef SPFORCE_ELECTROSTATICS_HPP
#define SPFORCE_ELECTROSTATICS_HPP

#include "spforce/contact_model.hpp"
#include "spforce/core_models.hpp"
#include "spforce/geometry.hpp"

namespace spforce {

/// Coefficients of E_el'' regrouped as A (V - V_c + B)^2 + D.
struct ElectrostaticCoefficients {
  double A;  // J/m^2/V^2
  double B;  // V
  double D;  // J/m^2
};

/// Second x-derivative of the stored electrostatic energy for a biased
/// sphere-plane capacitor with a distance-dependent contact potential:
///   E'' = (C''/2)(V-V_c)^2 - [2C'V_c' + C V_c''](V-V_c) + C V_c'^2.
double energy_second_derivative(double x, double bias, const ContactPotentialModel& vc,
                                const Geometry& g);

ElectrostaticCoefficients regrouped_coefficients(double x, const ContactPotentialModel& vc,
                                                 const Geometry& g);

/// External bias minimizing the electrostatic frequency shift at gap x:
///   V_0 = V_c + (2C'V_c' + C V_c'') / C''.
double minimizing_potential(double x, const ContactPotentialModel& vc, const Geometry& g);

/// Parabola curvature of nu^2 versus bias, K_el = eps0 R / (4 pi m_eff x^2),
/// reported positive (the frequency model subtracts it).
double electrostatic_curvature(double x, double sphere_radius, double mass_effective);

/// Bias-independent electrostatic shift, the piece that survives at V = V_0:
///   dnu_e^2(x, V_0) = [ (2C'V_c'+CV_c'')^2/(2C'') - C V_c'^2 ] / (4 pi^2 m_eff).
/// Zero exactly when the contact potential is constant.
double bias_independent_shift(double x, const ContactPotentialModel& vc, const Geometry& g,
                              double mass_effective);

/// Full Coulombian frequency model:
///   nu^2 = nu0^2 - [C''/(8 pi^2 m)] (V-V_0)^2 + dnu_e^2(x, V_0).
double coulombian_frequency_sq(double x, double bias, const ContactPotentialModel& vc,
                               const Geometry& g, const Cantilever& cant, double nu0_sq);

}  // namespace spforce

#endif
