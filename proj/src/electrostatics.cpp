#include "spforce/electrostatics.hpp"

#include <cmath>
#include <stdexcept>

#include "spforce/constants.hpp"

namespace spforce {

namespace k = constants;

double energy_second_derivative(double x, double bias, const ContactPotentialModel& vc,
                                const Geometry& g) {
  const auto cap = pfa_capacitance(x, g.sphere_radius);
  const auto p = vc.eval(x);
  const double dv = bias - p.v;
  const double cross = 2.0 * cap.C1 * p.v1 + cap.C * p.v2;
  return 0.5 * cap.C2 * dv * dv - cross * dv + cap.C * p.v1 * p.v1;
}

ElectrostaticCoefficients regrouped_coefficients(double x, const ContactPotentialModel& vc,
                                                 const Geometry& g) {
  const auto cap = pfa_capacitance(x, g.sphere_radius);
  const auto p = vc.eval(x);
  const double cross = 2.0 * cap.C1 * p.v1 + cap.C * p.v2;
  const double A = 0.5 * cap.C2;
  const double B = -cross / cap.C2;
  const double D = cap.C * p.v1 * p.v1 - cross * cross / (2.0 * cap.C2);
  return {A, B, D};
}

double minimizing_potential(double x, const ContactPotentialModel& vc, const Geometry& g) {
  const auto cap = pfa_capacitance(x, g.sphere_radius);
  const auto p = vc.eval(x);
  return p.v + (2.0 * cap.C1 * p.v1 + cap.C * p.v2) / cap.C2;
}

double electrostatic_curvature(double x, double sphere_radius, double mass_effective) {
  if (!(x > 0.0) || x >= sphere_radius)
    throw std::domain_error("electrostatic_curvature: need 0 < x < R");
  if (!(mass_effective > 0.0))
    throw std::domain_error("electrostatic_curvature: m_eff must be > 0");
  return k::eps0 * sphere_radius / (4.0 * k::pi * mass_effective * x * x);
}

double bias_independent_shift(double x, const ContactPotentialModel& vc, const Geometry& g,
                              double mass_effective) {
  if (!(mass_effective > 0.0))
    throw std::domain_error("bias_independent_shift: m_eff must be > 0");
  const auto cap = pfa_capacitance(x, g.sphere_radius);
  const auto p = vc.eval(x);
  const double cross = 2.0 * cap.C1 * p.v1 + cap.C * p.v2;
  return (cross * cross / (2.0 * cap.C2) - cap.C * p.v1 * p.v1) /
         (4.0 * k::pi * k::pi * mass_effective);
}

double coulombian_frequency_sq(double x, double bias, const ContactPotentialModel& vc,
                               const Geometry& g, const Cantilever& cant, double nu0_sq) {
  const auto cap = pfa_capacitance(x, g.sphere_radius);
  const double v0 = minimizing_potential(x, vc, g);
  const double dv = bias - v0;
  const double m = cant.mass_effective;
  if (!(m > 0.0)) throw std::domain_error("coulombian_frequency_sq: m_eff must be > 0");
  return nu0_sq - cap.C2 / (8.0 * k::pi * k::pi * m) * dv * dv +
         bias_independent_shift(x, vc, g, m);
}

}  // namespace spforce
