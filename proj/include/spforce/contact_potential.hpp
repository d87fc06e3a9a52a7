#ifndef SPFORCE_CONTACT_POTENTIAL_HPP
#define SPFORCE_CONTACT_POTENTIAL_HPP

#include <vector>

#include "spforce/contact_model.hpp"
#include "spforce/fitting.hpp"
#include "spforce/geometry.hpp"

namespace spforce {

/// Boundary data for the contact-potential equation, placed at the largest
/// measured distance x_n where V_c is taken flat and pinned to V_0.
struct BoundaryCondition {
  double x_n;        // m
  double vc_at_xn;   // V
  double vc1_at_xn;  // V/m

  static BoundaryCondition asymptotic(const ContactPotentialModel& v0, double x_n);
};

struct OdeOptions {
  double abs_tol = 1e-9;  // V
  double rel_tol = 1e-9;
  int max_steps = 200000;
  // Step cap relative to the current distance; keeps the node spacing fine
  // enough for the quintic dense output to satisfy the equation between
  // nodes.
  double max_step_factor = 0.02;
};

/// Numerical solution of x^2 ln(R/x) V_c'' - 2x V_c' + V_c = V_0(x),
/// integrated downward from x_n. Nodes store the state and the second
/// derivative recovered algebraically from the equation itself; evaluation
/// between nodes uses quintic Hermite interpolation of all three.
struct OdeSolution {
  std::vector<double> x;    // strictly decreasing, x[0] = x_n
  std::vector<double> vc;   // V
  std::vector<double> vc1;  // V/m
  std::vector<double> vc2;  // V/m^2, from the ODE relation
  BoundaryCondition bc{};
  double sphere_radius = 0.0;
  double error_estimate = 0.0;  // accumulated local truncation error bound (V)

  struct Point {
    double vc, vc1, vc2;
  };
  Point eval(double xq) const;

  double x_min() const { return x.back(); }
  double x_max() const { return x.front(); }
};

OdeSolution solve_vc_ode(const ContactPotentialModel& v0, double sphere_radius,
                         const BoundaryCondition& bc, double x_min,
                         const OdeOptions& opts = {});

/// Repackages an ODE solution as a twice-differentiable potential law
/// (used to feed a derived V_c back into the forward model).
ContactPotentialModel to_contact_model(const OdeSolution& sol);

/// Bias-independent electrostatic frequency shift evaluated on the solution:
/// dnu_e^2 = [ (2C'V_c' + C V_c'')^2/(2C'') - C V_c'^2 ] / (4 pi^2 m_eff).
double bias_independent_residual(double x, const OdeSolution& sol, const Geometry& g,
                                 double mass_effective);

// ---------------------------------------------------------------------------
// V_0(x) model fitting
// ---------------------------------------------------------------------------

enum class V0Form { exponential, logarithmic };

struct V0FitResult {
  ContactPotentialModel model;
  FitResult fit;
};

/// Weighted nonlinear fit of minimizing-potential data with one of the two
/// trial laws: V0 + dV (1 - exp(-x/lambda)) or Vlog + dVlog ln(x/Lambda).
/// Points carry (x, V0, sigma).
V0FitResult fit_v0_model(const std::vector<WeightedPoint>& points, V0Form form);

/// V_c(x_min) under x_n moved by +-20%, quantifying the boundary-placement
/// sensitivity (pronounced for the logarithmic law, which has no asymptote).
struct XnSensitivity {
  double x_n;
  double vc_at_xmin_nominal;
  double vc_at_xmin_low;   // x_n * 0.8
  double vc_at_xmin_high;  // x_n * 1.2
  double spread() const;
};

XnSensitivity assess_xn_sensitivity(const ContactPotentialModel& v0, double sphere_radius,
                                    double x_n, double x_min, const OdeOptions& opts = {});

}  // namespace spforce

#endif
