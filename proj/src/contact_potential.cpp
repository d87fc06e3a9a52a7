#include "spforce/contact_potential.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "spforce/constants.hpp"
#include "spforce/core_models.hpp"
#include "spforce/errors.hpp"

namespace spforce {

namespace k = constants;

BoundaryCondition BoundaryCondition::asymptotic(const ContactPotentialModel& v0, double x_n) {
  return {x_n, v0.value(x_n), 0.0};
}

namespace {

using State = std::array<double, 2>;  // (V_c, V_c')

// V_c'' from the equation itself: (V_0 - V_c + 2x V_c') / (x^2 ln(R/x)).
double vc2_from_ode(double x, double vc, double vc1, double v0_at_x, double radius) {
  const double coef = x * x * std::log(radius / x);
  return (v0_at_x - vc + 2.0 * x * vc1) / coef;
}

// Cash-Karp embedded 4(5) tableau.
constexpr double A21 = 1.0 / 5.0;
constexpr double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0;
constexpr double A41 = 3.0 / 10.0, A42 = -9.0 / 10.0, A43 = 6.0 / 5.0;
constexpr double A51 = -11.0 / 54.0, A52 = 5.0 / 2.0, A53 = -70.0 / 27.0, A54 = 35.0 / 27.0;
constexpr double A61 = 1631.0 / 55296.0, A62 = 175.0 / 512.0, A63 = 575.0 / 13824.0,
                 A64 = 44275.0 / 110592.0, A65 = 253.0 / 4096.0;
constexpr double B1 = 37.0 / 378.0, B3 = 250.0 / 621.0, B4 = 125.0 / 594.0, B6 = 512.0 / 1771.0;
constexpr double E1 = B1 - 2825.0 / 27648.0, E3 = B3 - 18575.0 / 48384.0,
                 E4 = B4 - 13525.0 / 55296.0, E5 = -277.0 / 14336.0, E6 = B6 - 1.0 / 4.0;

}  // namespace

OdeSolution solve_vc_ode(const ContactPotentialModel& v0, double sphere_radius,
                         const BoundaryCondition& bc, double x_min, const OdeOptions& opts) {
  if (!(sphere_radius > 0.0)) throw std::domain_error("solve_vc_ode: R must be > 0");
  if (!(x_min > 0.0) || !(x_min < bc.x_n))
    throw std::domain_error("solve_vc_ode: need 0 < x_min < x_n");
  if (bc.x_n >= 0.99 * sphere_radius)
    throw numerical_error("solve_vc_ode: singular coefficient, x_n too close to R");

  auto deriv = [&](double x, const State& y) -> State {
    return {y[1], vc2_from_ode(x, y[0], y[1], v0.value(x), sphere_radius)};
  };

  OdeSolution sol;
  sol.bc = bc;
  sol.sphere_radius = sphere_radius;

  double x = bc.x_n;
  State y = {bc.vc_at_xn, bc.vc1_at_xn};
  sol.x.push_back(x);
  sol.vc.push_back(y[0]);
  sol.vc1.push_back(y[1]);
  sol.vc2.push_back(vc2_from_ode(x, y[0], y[1], v0.value(x), sphere_radius));

  // Integrating downward: negative steps, magnitude adapted to the local
  // error versus (abs_tol, rel_tol); the derivative component is controlled
  // on the scale of V per local distance.
  double h = -(bc.x_n - x_min) / 64.0;
  int steps = 0;
  const double x_dir_end = x_min;

  while (x > x_dir_end) {
    if (++steps > opts.max_steps) {
      std::ostringstream os;
      os << "solve_vc_ode: step budget exhausted at x=" << x << " m (h=" << h << ")";
      throw numerical_error(os.str());
    }
    if (-h > opts.max_step_factor * x) h = -opts.max_step_factor * x;
    if (x + h < x_dir_end) h = x_dir_end - x;
    // Keep the evaluation window positive and below R.
    if (x + h <= 0.0) h = -0.5 * x;

    const State k1 = deriv(x, y);
    const State k2 = deriv(x + A21 * h, {y[0] + h * A21 * k1[0], y[1] + h * A21 * k1[1]});
    const State k3 = deriv(x + 0.3 * h, {y[0] + h * (A31 * k1[0] + A32 * k2[0]),
                                         y[1] + h * (A31 * k1[1] + A32 * k2[1])});
    const State k4 = deriv(x + 0.6 * h, {y[0] + h * (A41 * k1[0] + A42 * k2[0] + A43 * k3[0]),
                                         y[1] + h * (A41 * k1[1] + A42 * k2[1] + A43 * k3[1])});
    const State k5 = deriv(x + h, {y[0] + h * (A51 * k1[0] + A52 * k2[0] + A53 * k3[0] + A54 * k4[0]),
                                   y[1] + h * (A51 * k1[1] + A52 * k2[1] + A53 * k3[1] + A54 * k4[1])});
    const State k6 = deriv(x + 0.875 * h,
                           {y[0] + h * (A61 * k1[0] + A62 * k2[0] + A63 * k3[0] + A64 * k4[0] + A65 * k5[0]),
                            y[1] + h * (A61 * k1[1] + A62 * k2[1] + A63 * k3[1] + A64 * k4[1] + A65 * k5[1])});

    State y_new, err;
    for (int i = 0; i < 2; ++i) {
      y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B6 * k6[i]);
      err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]);
    }

    const double x_scale = std::max(std::abs(x), x_min);
    const double tol0 = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[0]), std::abs(y_new[0]));
    const double tol1 = opts.abs_tol / x_scale +
                        opts.rel_tol * std::max(std::abs(y[1]), std::abs(y_new[1]));
    const double scale = std::max(std::abs(err[0]) / tol0, std::abs(err[1]) / tol1);

    if (scale <= 1.0) {
      x += h;
      y = y_new;
      sol.x.push_back(x);
      sol.vc.push_back(y[0]);
      sol.vc1.push_back(y[1]);
      sol.vc2.push_back(vc2_from_ode(x, y[0], y[1], v0.value(x), sphere_radius));
      sol.error_estimate += std::abs(err[0]);
      const double grow = 0.9 * std::pow(std::max(scale, 1e-10), -0.2);
      h *= std::min(grow, 5.0);
    } else {
      const double shrink = std::max(0.9 * std::pow(scale, -0.25), 0.1);
      h *= shrink;
      if (std::abs(h) < 1e-18 * x_scale) {
        std::ostringstream os;
        os << "solve_vc_ode: step size underflow at x=" << x << " m";
        throw numerical_error(os.str());
      }
    }
  }
  return sol;
}

OdeSolution::Point OdeSolution::eval(double xq) const {
  if (x.size() < 2) throw numerical_error("OdeSolution: empty solution");
  if (xq > x.front() * (1.0 + 1e-12) || xq < x.back() * (1.0 - 1e-12))
    throw std::domain_error("OdeSolution: evaluation outside the integrated range");
  xq = std::clamp(xq, x.back(), x.front());

  // Nodes are stored in decreasing order.
  auto it = std::lower_bound(x.begin(), x.end(), xq, std::greater<double>());
  std::size_t i = static_cast<std::size_t>(it - x.begin());
  if (i == 0) i = 1;
  if (i >= x.size()) i = x.size() - 1;
  const std::size_t lo = i - 1;  // x[lo] >= xq >= x[i]

  const double h = x[i] - x[lo];
  const double s = (xq - x[lo]) / h;
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;

  const double H0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
  const double H1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
  const double H2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
  const double H3 = 0.5 * s3 - s4 + 0.5 * s5;
  const double H4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
  const double H5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;

  const double dH0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
  const double dH1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
  const double dH2 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
  const double dH3 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
  const double dH4 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
  const double dH5 = 30.0 * s2 - 60.0 * s3 + 30.0 * s4;

  const double d2H0 = -60.0 * s + 180.0 * s2 - 120.0 * s3;
  const double d2H1 = -36.0 * s + 96.0 * s2 - 60.0 * s3;
  const double d2H2 = 1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3;
  const double d2H3 = 3.0 * s - 12.0 * s2 + 10.0 * s3;
  const double d2H4 = -24.0 * s + 84.0 * s2 - 60.0 * s3;
  const double d2H5 = 60.0 * s - 180.0 * s2 + 120.0 * s3;

  Point p;
  p.vc = H0 * vc[lo] + H5 * vc[i] + h * (H1 * vc1[lo] + H4 * vc1[i]) +
         h * h * (H2 * vc2[lo] + H3 * vc2[i]);
  p.vc1 = (dH0 * vc[lo] + dH5 * vc[i]) / h + (dH1 * vc1[lo] + dH4 * vc1[i]) +
          h * (dH2 * vc2[lo] + dH3 * vc2[i]);
  p.vc2 = (d2H0 * vc[lo] + d2H5 * vc[i]) / (h * h) +
          (d2H1 * vc1[lo] + d2H4 * vc1[i]) / h +
          (d2H2 * vc2[lo] + d2H3 * vc2[i]);
  return p;
}

ContactPotentialModel to_contact_model(const OdeSolution& sol) {
  std::vector<double> x(sol.x.rbegin(), sol.x.rend());
  std::vector<double> v(sol.vc.rbegin(), sol.vc.rend());
  std::vector<double> v1(sol.vc1.rbegin(), sol.vc1.rend());
  std::vector<double> v2(sol.vc2.rbegin(), sol.vc2.rend());
  return ContactPotentialModel::hermite_table(std::move(x), std::move(v), std::move(v1),
                                              std::move(v2));
}

double bias_independent_residual(double x, const OdeSolution& sol, const Geometry& g,
                                 double mass_effective) {
  if (!(mass_effective > 0.0))
    throw std::domain_error("bias_independent_residual: m_eff must be > 0");
  const auto p = sol.eval(x);
  const auto cap = pfa_capacitance(x, g.sphere_radius);
  const double cross = 2.0 * cap.C1 * p.vc1 + cap.C * p.vc2;
  return (cross * cross / (2.0 * cap.C2) - cap.C * p.vc1 * p.vc1) /
         (4.0 * k::pi * k::pi * mass_effective);
}

// ---------------------------------------------------------------------------

V0FitResult fit_v0_model(const std::vector<WeightedPoint>& points, V0Form form) {
  if (points.size() < 4) throw std::domain_error("fit_v0_model: need >= 4 points");
  for (const auto& p : points) {
    if (!(p.sigma > 0.0)) throw std::domain_error("fit_v0_model: sigmas must be > 0");
    if (form == V0Form::logarithmic && !(p.x > 0.0))
      throw std::domain_error("fit_v0_model: logarithmic form rejects x <= 0");
  }

  auto sorted = points;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.x < b.x; });
  const double x_lo = sorted.front().x, x_hi = sorted.back().x;
  const double v_lo = sorted.front().y, v_hi = sorted.back().y;

  V0FitResult out;
  if (form == V0Form::exponential) {
    const double lambda0 = std::max(0.25 * (x_hi - x_lo), x_lo);
    out.fit = lm_fit(points, detail::v0_exponential_model(), {v_lo, v_hi - v_lo, lambda0},
                     {"v0", "dv", "lambda"},
                     {std::max(std::abs(v_lo), 0.01), std::max(std::abs(v_hi - v_lo), 0.01),
                      lambda0});
    if (!(out.fit.value("lambda") > 0.0))
      throw numerical_error("fit_v0_model: nonpositive lambda");
    out.model = ContactPotentialModel::exponential(out.fit.value("v0"), out.fit.value("dv"),
                                                   out.fit.value("lambda"));
  } else {
    // Slope seeded by the endpoint secant in ln x.
    const double slope0 = (v_hi - v_lo) / std::log(x_hi / x_lo);
    out.fit = lm_fit(points, detail::v0_logarithmic_model(),
                     {0.0, slope0, std::sqrt(x_lo * x_hi)}, {"vlog", "dvlog", "Lambda"},
                     {std::max(std::abs(v_lo), 0.01), std::max(std::abs(slope0), 0.01),
                      std::sqrt(x_lo * x_hi)});
    if (!(out.fit.value("Lambda") > 0.0))
      throw numerical_error("fit_v0_model: nonpositive Lambda");
    out.model = ContactPotentialModel::logarithmic(out.fit.value("vlog"),
                                                   out.fit.value("dvlog"),
                                                   out.fit.value("Lambda"));
  }
  if (!out.fit.converged) {
    std::ostringstream os;
    os << "fit_v0_model: no convergence in " << out.fit.n_iter << " iterations; chi2 trace:";
    for (double c : out.fit.chi2_trace) os << " " << c;
    throw numerical_error(os.str());
  }
  return out;
}

double XnSensitivity::spread() const {
  return std::max(std::abs(vc_at_xmin_low - vc_at_xmin_nominal),
                  std::abs(vc_at_xmin_high - vc_at_xmin_nominal));
}

XnSensitivity assess_xn_sensitivity(const ContactPotentialModel& v0, double sphere_radius,
                                    double x_n, double x_min, const OdeOptions& opts) {
  XnSensitivity s;
  s.x_n = x_n;
  const auto solve_at = [&](double xn) {
    const auto sol =
        solve_vc_ode(v0, sphere_radius, BoundaryCondition::asymptotic(v0, xn), x_min, opts);
    return sol.vc.back();
  };
  s.vc_at_xmin_nominal = solve_at(x_n);
  s.vc_at_xmin_low = solve_at(0.8 * x_n);
  s.vc_at_xmin_high = solve_at(1.2 * x_n);
  return s;
}

}  // namespace spforce
