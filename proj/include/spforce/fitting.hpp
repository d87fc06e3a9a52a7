#ifndef SPFORCE_FITTING_HPP
#define SPFORCE_FITTING_HPP

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spforce {

/// Result of a weighted least-squares fit: parameter estimates, covariance,
/// goodness of fit and convergence diagnostics.
struct FitResult {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;
  std::vector<std::vector<double>> covariance;
  double chi2 = 0.0;
  int dof = 0;
  double chi2_red = 0.0;
  bool converged = false;
  int n_iter = 0;
  std::vector<double> chi2_trace;  // chi^2 after each accepted step

  double value(std::string_view name) const;
  double sigma(std::string_view name) const;
};

struct WeightedPoint {
  double x;
  double y;
  double sigma;
};

struct LmModel {
  std::function<double(double, const std::vector<double>&)> f;
  std::function<void(double, const std::vector<double>&, std::vector<double>&)> jacobian;
};

struct LmOptions {
  int max_iter = 200;
  double step_tol = 1e-10;
  double lambda_init = 1e-3;
};

/// Damped (Levenberg-style) weighted least squares with analytic Jacobians.
/// Parameters are scaled to order unity internally via `scales`. Trial steps
/// that evaluate to non-finite chi^2 are rejected by growing the damping.
FitResult lm_fit(const std::vector<WeightedPoint>& pts, const LmModel& model,
                 std::vector<double> p0, std::vector<std::string> names,
                 std::vector<double> scales, const LmOptions& opts = {});

/// Exact weighted linear least squares; basis_rows[i] holds the regressors of
/// point i. Scale regressors to order unity before calling.
FitResult linear_fit(const std::vector<std::vector<double>>& basis_rows,
                     const std::vector<double>& y, const std::vector<double>& sigma,
                     std::vector<std::string> names);

// ---------------------------------------------------------------------------
// Bias parabola
// ---------------------------------------------------------------------------

/// nu^2(V) = nu0_sq - k_el (V - v0)^2; k_el > 0 for the attractive convention.
struct VoltageParabola {
  double nu0_sq;  // Hz^2, vertex value
  double k_el;    // Hz^2/V^2, curvature
  double v0;      // V, vertex abscissa (minimizing potential)
};

struct ParabolaFit {
  VoltageParabola parabola;
  FitResult fit;   // parameters nu0_sq, k_el, v0 with propagated covariance
  bool concave;    // false flags k_el <= 0
};

/// Exact quadratic least squares in (1, V, V^2) followed by the vertex
/// transform. Duplicate bias values are aggregated with inverse-variance
/// weights; at least 3 distinct biases required.
ParabolaFit fit_parabola(const std::vector<WeightedPoint>& samples);

// ---------------------------------------------------------------------------
// Curvature power law
// ---------------------------------------------------------------------------

/// K_el(V_pzt) = alpha (V0_pzt - V_pzt)^e. alpha is stored in the bias-space
/// parameterization; its unit depends on the fitted exponent and is recorded
/// as a tag rather than normalized away.
struct PowerLawModel {
  double alpha = 0.0;
  double v0_pzt = 0.0;   // PZT voltage of contact (asymptote)
  double exponent = -2.0;
  double x0 = 0.0;       // m, beta * (v0_pzt - max measured V_pzt)
  double beta = 0.0;     // m/V

  double kel_at(double v_pzt) const;
  std::string alpha_unit() const;
};

enum class ExponentMode { fixed_minus_2, free };

struct PowerLawFit {
  PowerLawModel model;
  FitResult fit;
};

PowerLawFit fit_power_law(const std::vector<WeightedPoint>& pts, ExponentMode mode, double beta);

/// m_eff = eps0 R / (4 pi alpha beta^2), meaningful for the fixed -2 exponent.
double effective_mass_from_alpha(double alpha, double sphere_radius, double beta);

// ---------------------------------------------------------------------------
// Capacitance, PZT sinusoid
// ---------------------------------------------------------------------------

struct CapacitanceFit {
  double c0;       // F, stray offset
  double a_coeff;  // F, ln coefficient; theory -2 pi eps0 R
  double v0_pzt;   // V
  FitResult fit;
  double theory_a;            // -2 pi eps0 R for the provided radius
  double theory_discrepancy;  // |a_coeff - theory_a| / |theory_a|
};

/// C(V_pzt) = C0 + A ln(beta (V0_pzt - V_pzt)).
CapacitanceFit fit_capacitance(const std::vector<WeightedPoint>& pts, double beta,
                               double sphere_radius);

struct SinusoidFit {
  double beta;   // m/V, from the fitted fringe period (half wavelength per fringe)
  double i0, i1, phase;
  FitResult fit;
};

/// I(V_pzt) = I0 + I1 sin(4 pi beta V / lambda + phi).
SinusoidFit fit_sinusoid(const std::vector<std::pair<double, double>>& pts, double wavelength);

// ---------------------------------------------------------------------------
// Stability and sensitivity diagnostics
// ---------------------------------------------------------------------------

/// Repeated power-law fits, starting from the points at the largest distances
/// and progressively including closer ones.
struct StabilityScan {
  struct Step {
    int n_points = 0;
    bool ok = false;
    std::string error;
    PowerLawFit fit;
  };
  std::vector<Step> steps;
};

StabilityScan stability_scan(const std::vector<WeightedPoint>& pts, ExponentMode mode,
                             double beta);

/// Free-exponent refits with the closest-approach point's distance moved by
/// +-delta_x (applied as a bias shift of that point alone).
struct DisplacementSensitivity {
  double delta_x = 0.0;
  PowerLawFit forward;   // distance reduced by delta_x
  PowerLawFit nominal;
  PowerLawFit backward;  // distance increased by delta_x
};

DisplacementSensitivity displacement_sensitivity(const std::vector<WeightedPoint>& pts,
                                                 double delta_x, double beta);

/// Centered moving-average detrending of a drift series; returns the residual
/// series (valid region only) and the relative scatter of the residuals.
struct DetrendResult {
  std::vector<double> t;
  std::vector<double> residual;
  double relative_error = 0.0;
};

DetrendResult detrend_moving_average(const std::vector<std::pair<double, double>>& series,
                                     int window);

namespace detail {

// Model kernels behind the fitters, exposed so their analytic Jacobians can
// be cross-checked against finite differences.
LmModel power_law_fixed_model();
LmModel power_law_free_model();
LmModel capacitance_model(double beta);
LmModel sinusoid_model(double wavelength);
LmModel v0_exponential_model();
LmModel v0_logarithmic_model();

}  // namespace detail

}  // namespace spforce

#endif
