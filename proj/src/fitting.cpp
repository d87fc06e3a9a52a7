#include "spforce/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "spforce/constants.hpp"
#include "spforce/errors.hpp"

namespace spforce {

namespace k = constants;

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> solve_linear(Matrix m, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-300) throw numerical_error("singular linear system");
    std::swap(m[piv], m[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * x[c];
    x[i] = s / m[i][i];
  }
  return x;
}

// Inverse of a (near) SPD normal matrix; escalating ridge keeps rank-deficient
// fits (degenerate model directions) from aborting -- the corresponding
// sigmas come out honestly enormous.
Matrix invert_normal(const Matrix& m) {
  const std::size_t n = m.size();
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += m[i][i];
  double ridge = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    try {
      Matrix a = m;
      for (std::size_t i = 0; i < n; ++i) a[i][i] += ridge;
      Matrix inv(n, std::vector<double>(n, 0.0));
      for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> e(n, 0.0);
        e[c] = 1.0;
        auto col = solve_linear(a, e);
        for (std::size_t r = 0; r < n; ++r) inv[r][c] = col[r];
      }
      return inv;
    } catch (const numerical_error&) {
      ridge = (ridge == 0.0) ? 1e-14 * std::max(trace, 1e-300) : ridge * 100.0;
    }
  }
  throw numerical_error("normal matrix not invertible");
}

void finalize_statistics(FitResult& r, const Matrix& cov) {
  const std::size_t np = r.values.size();
  r.covariance = cov;
  r.sigmas.resize(np);
  for (std::size_t i = 0; i < np; ++i)
    r.sigmas[i] = cov[i][i] > 0.0 ? std::sqrt(cov[i][i]) : 0.0;
  r.chi2_red = r.dof > 0 ? r.chi2 / r.dof : 0.0;
}

}  // namespace

double FitResult::value(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw std::invalid_argument("FitResult: unknown parameter " + std::string(name));
}

double FitResult::sigma(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return sigmas[i];
  throw std::invalid_argument("FitResult: unknown parameter " + std::string(name));
}

FitResult lm_fit(const std::vector<WeightedPoint>& pts, const LmModel& model,
                 std::vector<double> p0, std::vector<std::string> names,
                 std::vector<double> scales, const LmOptions& opts) {
  const std::size_t n = pts.size(), np = p0.size();
  if (scales.size() != np || names.size() != np)
    throw std::invalid_argument("lm_fit: inconsistent parameter metadata");
  for (const auto& pt : pts)
    if (!(pt.sigma > 0.0)) throw std::domain_error("lm_fit: sigmas must be > 0");
  for (double& s : scales)
    if (s == 0.0) s = 1.0;

  std::vector<double> q(np);
  for (std::size_t i = 0; i < np; ++i) q[i] = p0[i] / scales[i];

  auto params_of = [&](const std::vector<double>& qv) {
    std::vector<double> p(np);
    for (std::size_t i = 0; i < np; ++i) p[i] = qv[i] * scales[i];
    return p;
  };
  auto chi2_of = [&](const std::vector<double>& qv) {
    const auto p = params_of(qv);
    double s = 0.0;
    for (const auto& pt : pts) {
      const double f = model.f(pt.x, p);
      if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
      const double r = (pt.y - f) / pt.sigma;
      s += r * r;
    }
    return s;
  };

  FitResult res;
  res.names = std::move(names);
  res.dof = static_cast<int>(n) - static_cast<int>(np);

  double chi2_cur = chi2_of(q);
  res.chi2_trace.push_back(chi2_cur);
  double lambda = opts.lambda_init;
  bool converged = false;
  int iter = 0;

  std::vector<double> dfdp(np);
  Matrix jac(n, std::vector<double>(np, 0.0));
  std::vector<double> resid(n, 0.0);

  while (iter < opts.max_iter) {
    const auto p = params_of(q);
    for (std::size_t i = 0; i < n; ++i) {
      model.jacobian(pts[i].x, p, dfdp);
      for (std::size_t j = 0; j < np; ++j) jac[i][j] = dfdp[j] * scales[j] / pts[i].sigma;
      resid[i] = (pts[i].y - model.f(pts[i].x, p)) / pts[i].sigma;
    }
    Matrix normal(np, std::vector<double>(np, 0.0));
    std::vector<double> grad(np, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < np; ++a) {
        grad[a] += jac[i][a] * resid[i];
        for (std::size_t b = a; b < np; ++b) normal[a][b] += jac[i][a] * jac[i][b];
      }
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = 0; b < a; ++b) normal[a][b] = normal[b][a];

    bool accepted = false;
    while (iter < opts.max_iter) {
      ++iter;
      Matrix damped = normal;
      for (std::size_t a = 0; a < np; ++a)
        damped[a][a] += lambda * (normal[a][a] > 0.0 ? normal[a][a] : 1.0);
      std::vector<double> step;
      try {
        step = solve_linear(damped, grad);
      } catch (const numerical_error&) {
        lambda *= 10.0;
        if (lambda > 1e14) break;
        continue;
      }
      std::vector<double> q_try(np);
      for (std::size_t a = 0; a < np; ++a) q_try[a] = q[a] + step[a];
      const double chi2_try = chi2_of(q_try);
      if (chi2_try <= chi2_cur && std::isfinite(chi2_try)) {
        double rel_step = 0.0;
        for (std::size_t a = 0; a < np; ++a)
          rel_step = std::max(rel_step, std::abs(step[a]) / (std::abs(q_try[a]) + 1e-30));
        q = std::move(q_try);
        chi2_cur = chi2_try;
        res.chi2_trace.push_back(chi2_cur);
        lambda = std::max(lambda * 0.5, 1e-14);
        accepted = true;
        if (rel_step < opts.step_tol) converged = true;
        break;
      }
      lambda *= 2.0;
      if (lambda > 1e14) break;
    }
    if (converged || !accepted) break;
  }

  res.values = params_of(q);
  res.chi2 = chi2_cur;
  res.converged = converged || chi2_cur == 0.0;
  res.n_iter = iter;

  // Covariance from the undamped normal matrix at the optimum.
  const auto p = params_of(q);
  Matrix normal(np, std::vector<double>(np, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    model.jacobian(pts[i].x, p, dfdp);
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = a; b < np; ++b)
        normal[a][b] += dfdp[a] * dfdp[b] / (pts[i].sigma * pts[i].sigma);
  }
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < a; ++b) normal[a][b] = normal[b][a];
  finalize_statistics(res, invert_normal(normal));
  return res;
}

FitResult linear_fit(const Matrix& basis_rows, const std::vector<double>& y,
                     const std::vector<double>& sigma, std::vector<std::string> names) {
  const std::size_t n = y.size();
  if (basis_rows.size() != n || sigma.size() != n)
    throw std::invalid_argument("linear_fit: inconsistent input sizes");
  const std::size_t np = names.size();
  Matrix normal(np, std::vector<double>(np, 0.0));
  std::vector<double> rhs(np, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sigma[i] > 0.0)) throw std::domain_error("linear_fit: sigmas must be > 0");
    const double w = 1.0 / (sigma[i] * sigma[i]);
    for (std::size_t a = 0; a < np; ++a) {
      rhs[a] += w * basis_rows[i][a] * y[i];
      for (std::size_t b = a; b < np; ++b)
        normal[a][b] += w * basis_rows[i][a] * basis_rows[i][b];
    }
  }
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < a; ++b) normal[a][b] = normal[b][a];

  FitResult res;
  res.names = std::move(names);
  res.values = solve_linear(normal, rhs);
  res.dof = static_cast<int>(n) - static_cast<int>(np);
  res.chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = 0.0;
    for (std::size_t a = 0; a < np; ++a) f += basis_rows[i][a] * res.values[a];
    const double r = (y[i] - f) / sigma[i];
    res.chi2 += r * r;
  }
  res.converged = true;
  res.n_iter = 1;
  finalize_statistics(res, invert_normal(normal));
  return res;
}

// ---------------------------------------------------------------------------

ParabolaFit fit_parabola(const std::vector<WeightedPoint>& samples) {
  // Aggregate duplicate bias values with inverse-variance weights.
  std::map<double, std::pair<double, double>> agg;  // V -> (sum w*y, sum w)
  for (const auto& s : samples) {
    if (!(s.sigma > 0.0)) throw std::domain_error("fit_parabola: sigmas must be > 0");
    const double w = 1.0 / (s.sigma * s.sigma);
    auto& e = agg[s.x];
    e.first += w * s.y;
    e.second += w;
  }
  if (agg.size() < 3)
    throw std::domain_error("fit_parabola: need >= 3 distinct bias values");

  std::vector<double> v, y, sg;
  for (const auto& [bias, e] : agg) {
    v.push_back(bias);
    y.push_back(e.first / e.second);
    sg.push_back(1.0 / std::sqrt(e.second));
  }
  const double v_mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();

  Matrix rows;
  for (double vi : v) {
    const double u = vi - v_mean;
    rows.push_back({1.0, u, u * u});
  }
  FitResult quad = linear_fit(rows, y, sg, {"c0", "c1", "c2"});
  const double c0 = quad.values[0], c1 = quad.values[1], c2 = quad.values[2];

  ParabolaFit out;
  out.concave = c2 < 0.0;
  const double safe_c2 = (c2 != 0.0) ? c2 : -1e-300;
  out.parabola.k_el = -c2;
  out.parabola.v0 = v_mean - c1 / (2.0 * safe_c2);
  out.parabola.nu0_sq = c0 - c1 * c1 / (4.0 * safe_c2);

  // Propagate (c0,c1,c2) covariance through the vertex transform.
  const double t[3][3] = {
      {1.0, -c1 / (2.0 * safe_c2), c1 * c1 / (4.0 * safe_c2 * safe_c2)},
      {0.0, 0.0, -1.0},
      {0.0, -1.0 / (2.0 * safe_c2), c1 / (2.0 * safe_c2 * safe_c2)},
  };
  Matrix cov(3, std::vector<double>(3, 0.0));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += t[a][i] * quad.covariance[i][j] * t[b][j];
      cov[a][b] = s;
    }
  out.fit.names = {"nu0_sq", "k_el", "v0"};
  out.fit.values = {out.parabola.nu0_sq, out.parabola.k_el, out.parabola.v0};
  out.fit.chi2 = quad.chi2;
  out.fit.dof = quad.dof;
  out.fit.converged = true;
  out.fit.n_iter = 1;
  finalize_statistics(out.fit, cov);
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

LmModel power_law_fixed_model() {
  LmModel m;
  m.f = [](double v, const std::vector<double>& p) {
    const double d = p[1] - v;
    if (!(d > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return p[0] / (d * d);
  };
  m.jacobian = [](double v, const std::vector<double>& p, std::vector<double>& j) {
    const double d = p[1] - v;
    j[0] = 1.0 / (d * d);
    j[1] = -2.0 * p[0] / (d * d * d);
  };
  return m;
}

LmModel power_law_free_model() {
  LmModel m;
  m.f = [](double v, const std::vector<double>& p) {
    const double d = p[1] - v;
    if (!(d > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return p[0] * std::pow(d, p[2]);
  };
  m.jacobian = [](double v, const std::vector<double>& p, std::vector<double>& j) {
    const double d = p[1] - v;
    const double f = p[0] * std::pow(d, p[2]);
    j[0] = std::pow(d, p[2]);
    j[1] = p[0] * p[2] * std::pow(d, p[2] - 1.0);
    j[2] = f * std::log(d);
  };
  return m;
}

LmModel capacitance_model(double beta) {
  LmModel m;
  m.f = [beta](double v, const std::vector<double>& p) {
    const double d = p[2] - v;
    if (!(d > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return p[0] + p[1] * std::log(beta * d);
  };
  m.jacobian = [beta](double v, const std::vector<double>& p, std::vector<double>& j) {
    const double d = p[2] - v;
    j[0] = 1.0;
    j[1] = std::log(beta * d);
    j[2] = p[1] / d;
  };
  return m;
}

LmModel sinusoid_model(double wavelength) {
  LmModel m;
  m.f = [wavelength](double v, const std::vector<double>& p) {
    return p[0] + p[1] * std::sin(4.0 * k::pi * p[2] * v / wavelength + p[3]);
  };
  m.jacobian = [wavelength](double v, const std::vector<double>& p, std::vector<double>& j) {
    const double th = 4.0 * k::pi * p[2] * v / wavelength + p[3];
    j[0] = 1.0;
    j[1] = std::sin(th);
    j[2] = p[1] * std::cos(th) * 4.0 * k::pi * v / wavelength;
    j[3] = p[1] * std::cos(th);
  };
  return m;
}

LmModel v0_exponential_model() {
  LmModel m;
  m.f = [](double x, const std::vector<double>& p) {
    return p[0] + p[1] * (1.0 - std::exp(-x / p[2]));
  };
  m.jacobian = [](double x, const std::vector<double>& p, std::vector<double>& j) {
    const double e = std::exp(-x / p[2]);
    j[0] = 1.0;
    j[1] = 1.0 - e;
    j[2] = -p[1] * x / (p[2] * p[2]) * e;
  };
  return m;
}

LmModel v0_logarithmic_model() {
  LmModel m;
  m.f = [](double x, const std::vector<double>& p) {
    if (!(p[2] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return p[0] + p[1] * std::log(x / p[2]);
  };
  m.jacobian = [](double x, const std::vector<double>& p, std::vector<double>& j) {
    j[0] = 1.0;
    j[1] = std::log(x / p[2]);
    j[2] = -p[1] / p[2];
  };
  return m;
}

}  // namespace detail

double PowerLawModel::kel_at(double v_pzt) const {
  const double d = v0_pzt - v_pzt;
  if (!(d > 0.0)) throw std::domain_error("PowerLawModel: V_pzt beyond contact");
  return alpha * std::pow(d, exponent);
}

std::string PowerLawModel::alpha_unit() const {
  std::ostringstream os;
  os << "Hz^2 V^" << -exponent << " (e=" << exponent << ")";
  return os.str();
}

namespace {

struct PowerLawInit {
  double alpha, v0_pzt;
};

PowerLawInit power_law_init(const std::vector<WeightedPoint>& pts, double exponent) {
  auto [mn, mx] = std::minmax_element(pts.begin(), pts.end(),
                                      [](auto& a, auto& b) { return a.x < b.x; });
  const double span = mx->x - mn->x;
  // Two-point exponent-consistent estimate of the contact voltage.
  const double ratio = std::pow(mx->y / mn->y, 1.0 / exponent);  // (V0-Vmax)/(V0-Vmin)
  double v0 = mx->x + span * 0.1;
  if (ratio > 0.0 && ratio < 1.0) {
    const double cand = (mx->x - ratio * mn->x) / (1.0 - ratio);
    if (cand > mx->x) v0 = cand;
  }
  const double alpha = mx->y * std::pow(v0 - mx->x, exponent);
  return {alpha, v0};
}

}  // namespace

PowerLawFit fit_power_law(const std::vector<WeightedPoint>& pts, ExponentMode mode, double beta) {
  const std::size_t min_pts = (mode == ExponentMode::fixed_minus_2) ? 4 : 5;
  if (pts.size() < min_pts)
    throw std::domain_error("fit_power_law: not enough points for the requested mode");
  if (!(beta > 0.0)) throw std::domain_error("fit_power_law: beta must be > 0");
  for (const auto& p : pts)
    if (!(p.y > 0.0))
      throw std::domain_error("fit_power_law: curvature values must be > 0");

  const double v_max = std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                         return a.x < b.x;
                       })->x;

  FitResult fit;
  if (mode == ExponentMode::fixed_minus_2) {
    const auto init = power_law_init(pts, -2.0);
    fit = lm_fit(pts, detail::power_law_fixed_model(), {init.alpha, init.v0_pzt},
                 {"alpha", "v0_pzt"}, {std::abs(init.alpha), std::max(std::abs(init.v0_pzt), 1.0)});
  } else {
    // Free exponent initialized from the fixed-exponent solution.
    const PowerLawFit fixed = fit_power_law(pts, ExponentMode::fixed_minus_2, beta);
    fit = lm_fit(pts, detail::power_law_free_model(),
                 {fixed.model.alpha, fixed.model.v0_pzt, -2.0}, {"alpha", "v0_pzt", "e"},
                 {std::abs(fixed.model.alpha), std::max(std::abs(fixed.model.v0_pzt), 1.0), 1.0});
  }

  PowerLawFit out;
  out.fit = fit;
  out.model.alpha = fit.value("alpha");
  out.model.v0_pzt = fit.value("v0_pzt");
  out.model.exponent = (mode == ExponentMode::fixed_minus_2) ? -2.0 : fit.value("e");
  out.model.beta = beta;
  out.model.x0 = beta * (out.model.v0_pzt - v_max);
  if (out.model.v0_pzt <= v_max)
    throw numerical_error("fit_power_law: contact voltage at bound (V0_pzt <= max V_pzt)");
  return out;
}

double effective_mass_from_alpha(double alpha, double sphere_radius, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(sphere_radius > 0.0))
    throw std::domain_error("effective_mass_from_alpha: positive inputs required");
  return k::eps0 * sphere_radius / (4.0 * k::pi * alpha * beta * beta);
}

// ---------------------------------------------------------------------------

CapacitanceFit fit_capacitance(const std::vector<WeightedPoint>& pts, double beta,
                               double sphere_radius) {
  if (pts.size() < 4) throw std::domain_error("fit_capacitance: need >= 4 points");
  if (!(beta > 0.0)) throw std::domain_error("fit_capacitance: beta must be > 0");

  const double v_max = std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                         return a.x < b.x;
                       })->x;

  // Coarse scan of the contact voltage, linear solve for (C0, A) at each
  // candidate, then a full 3-parameter refinement.
  double best_chi2 = std::numeric_limits<double>::infinity();
  double best_v0 = v_max + 50e-9 / beta, best_c0 = 0.0, best_a = -1e-12;
  for (int i = 0; i < 25; ++i) {
    const double gap = 5e-9 * std::pow(400.0, i / 24.0);  // 5 nm .. 2 um
    const double v0 = v_max + gap / beta;
    Matrix rows;
    std::vector<double> y, sg;
    for (const auto& p : pts) {
      rows.push_back({1.0, std::log(beta * (v0 - p.x))});
      y.push_back(p.y);
      sg.push_back(p.sigma);
    }
    try {
      FitResult lin = linear_fit(rows, y, sg, {"c0", "a"});
      if (lin.chi2 < best_chi2) {
        best_chi2 = lin.chi2;
        best_v0 = v0;
        best_c0 = lin.values[0];
        best_a = lin.values[1];
      }
    } catch (const numerical_error&) {
    }
  }

  FitResult fit = lm_fit(pts, detail::capacitance_model(beta), {best_c0, best_a, best_v0},
                         {"c0", "a", "v0_pzt"},
                         {std::max(std::abs(best_c0), 1e-12), std::abs(best_a),
                          std::max(std::abs(best_v0), 1.0)});

  CapacitanceFit out;
  out.fit = fit;
  out.c0 = fit.value("c0");
  out.a_coeff = fit.value("a");
  out.v0_pzt = fit.value("v0_pzt");
  out.theory_a = -2.0 * k::pi * k::eps0 * sphere_radius;
  out.theory_discrepancy = std::abs(out.a_coeff - out.theory_a) / std::abs(out.theory_a);
  if (out.v0_pzt <= v_max)
    throw numerical_error("fit_capacitance: contact voltage at bound");
  return out;
}

SinusoidFit fit_sinusoid(const std::vector<std::pair<double, double>>& pts, double wavelength) {
  if (pts.size() < 6) throw std::domain_error("fit_sinusoid: need >= 6 points");
  if (!(wavelength > 0.0)) throw std::domain_error("fit_sinusoid: wavelength must be > 0");

  auto sorted = pts;
  std::sort(sorted.begin(), sorted.end());
  const double span = sorted.back().first - sorted.front().first;
  double mean = 0.0;
  for (const auto& p : sorted) mean += p.second;
  mean /= sorted.size();

  // Period estimate from zero crossings of the detrended trace.
  int crossings = 0;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double a = sorted[i - 1].second - mean, b = sorted[i].second - mean;
    if (a == 0.0) continue;
    if ((a < 0.0) != (b < 0.0)) ++crossings;
  }
  if (crossings < 2 || span <= 0.0)
    throw numerical_error("fit_sinusoid: fringe period not resolvable");
  const double period_v = 2.0 * span / crossings;
  const double beta0 = wavelength / (2.0 * period_v);

  // Linear phase/amplitude estimate at the crude period, then full refinement.
  const double omega0 = 4.0 * k::pi * beta0 / wavelength;
  Matrix rows;
  std::vector<double> y, sg;
  for (const auto& p : sorted) {
    rows.push_back({1.0, std::sin(omega0 * p.first), std::cos(omega0 * p.first)});
    y.push_back(p.second);
    sg.push_back(1.0);
  }
  FitResult lin = linear_fit(rows, y, sg, {"i0", "s", "c"});
  const double i1_0 = std::hypot(lin.values[1], lin.values[2]);
  const double phase0 = std::atan2(lin.values[2], lin.values[1]);

  std::vector<WeightedPoint> wpts;
  for (const auto& p : sorted) wpts.push_back({p.first, p.second, 1.0});
  FitResult fit = lm_fit(wpts, detail::sinusoid_model(wavelength),
                         {lin.values[0], i1_0, beta0, phase0}, {"i0", "i1", "beta", "phase"},
                         {std::max(std::abs(lin.values[0]), 1.0), std::max(i1_0, 1.0), beta0, 1.0});

  SinusoidFit out;
  out.fit = fit;
  out.i0 = fit.value("i0");
  out.i1 = fit.value("i1");
  out.beta = std::abs(fit.value("beta"));
  out.phase = fit.value("phase");
  return out;
}

// ---------------------------------------------------------------------------

StabilityScan stability_scan(const std::vector<WeightedPoint>& pts, ExponentMode mode,
                             double beta) {
  const std::size_t min_pts = (mode == ExponentMode::fixed_minus_2) ? 4 : 5;
  if (pts.size() < min_pts)
    throw std::domain_error("stability_scan: not enough points for the first step");

  // Ascending PZT voltage = descending distance: start far, add closer points.
  auto sorted = pts;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.x < b.x; });

  StabilityScan scan;
  for (std::size_t n = min_pts; n <= sorted.size(); ++n) {
    StabilityScan::Step step;
    step.n_points = static_cast<int>(n);
    try {
      std::vector<WeightedPoint> sub(sorted.begin(), sorted.begin() + n);
      step.fit = fit_power_law(sub, mode, beta);
      step.ok = true;
    } catch (const std::exception& e) {
      step.ok = false;
      step.error = e.what();
    }
    scan.steps.push_back(std::move(step));
  }
  return scan;
}

DisplacementSensitivity displacement_sensitivity(const std::vector<WeightedPoint>& pts,
                                                 double delta_x, double beta) {
  if (!(beta > 0.0)) throw std::domain_error("displacement_sensitivity: beta must be > 0");
  auto closest = std::max_element(pts.begin(), pts.end(),
                                  [](auto& a, auto& b) { return a.x < b.x; });
  const std::size_t idx = static_cast<std::size_t>(closest - pts.begin());

  auto shifted = [&](double dx) {
    auto copy = pts;
    copy[idx].x += dx / beta;  // x = beta (V0 - V): moving closer raises V_pzt
    return copy;
  };

  DisplacementSensitivity out;
  out.delta_x = delta_x;
  out.nominal = fit_power_law(pts, ExponentMode::free, beta);
  out.forward = fit_power_law(shifted(delta_x), ExponentMode::free, beta);
  out.backward = fit_power_law(shifted(-delta_x), ExponentMode::free, beta);
  return out;
}

DetrendResult detrend_moving_average(const std::vector<std::pair<double, double>>& series,
                                     int window) {
  if (window < 2) throw std::domain_error("detrend_moving_average: window must be >= 2");
  const int n = static_cast<int>(series.size());
  if (n <= window) throw std::domain_error("detrend_moving_average: series too short");

  const int half = window / 2;
  const bool even = (window % 2) == 0;

  DetrendResult out;
  double mean_y = 0.0;
  for (const auto& s : series) mean_y += s.second;
  mean_y /= n;

  for (int i = half; i < n - half; ++i) {
    double acc = 0.0;
    int cnt = 0;
    for (int j = i - half; j <= i + half; ++j) {
      if (even && j == i) continue;  // even windows: neighbors only
      acc += series[j].second;
      ++cnt;
    }
    out.t.push_back(series[i].first);
    out.residual.push_back(series[i].second - acc / cnt);
  }

  double var = 0.0, mean_r = 0.0;
  for (double r : out.residual) mean_r += r;
  mean_r /= out.residual.size();
  for (double r : out.residual) var += (r - mean_r) * (r - mean_r);
  var /= out.residual.size();
  out.relative_error = std::sqrt(var) / std::abs(mean_y);
  return out;
}

}  // namespace spforce
