#include "spforce/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "spforce/constants.hpp"
#include "spforce/core_models.hpp"
#include "spforce/errors.hpp"
#include "spforce/rng.hpp"

namespace spforce {

namespace k = constants;

void SimulationConfig::validate() const {
  geometry.validate();
  cantilever.validate();
  if (grid.v_pzt.empty()) throw std::invalid_argument("SimulationConfig: empty distance grid");
  if (!(grid.beta > 0.0)) throw std::invalid_argument("SimulationConfig: beta must be > 0");
  if (bias.n_bias < 3) throw std::invalid_argument("SimulationConfig: need >= 3 bias points");
  if (!(bias.target_shift_hz > 0.0))
    throw std::invalid_argument("SimulationConfig: target shift must be > 0");
  if (noise.freq_sigma_hz < 0.0 || noise.kel_rel_sigma < 0.0 || cap_sigma < 0.0 ||
      drift.amplitude < 0.0)
    throw std::invalid_argument("SimulationConfig: noise/drift sigmas must be >= 0");
  if (drift.amplitude > 0.0 && !(drift.timescale > 0.0))
    throw std::invalid_argument("SimulationConfig: drift timescale must be > 0");
  for (double v : grid.v_pzt) {
    const double x = grid.beta * (grid.v0_pzt - v);
    if (!(x > 0.0) || x >= 0.5 * geometry.sphere_radius)
      throw std::invalid_argument("SimulationConfig: grid distance outside (0, R/2)");
  }
  if (anomaly_exponent && !(*anomaly_exponent < 0.0))
    throw std::invalid_argument("SimulationConfig: anomaly exponent must be negative");
}

namespace {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_canonical(const SimulationConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.geometry.sphere_radius << '|' << c.geometry.mirror_diameter << '|'
     << c.geometry.roughness_var_sphere << '|' << c.geometry.roughness_var_plane << '|'
     << c.cantilever.mass_effective << '|' << c.cantilever.proper_frequency << '|'
     << c.vc_model.describe() << '|' << static_cast<int>(c.vc_role) << '|'
     << c.include_casimir << '|' << c.ideal_casimir << '|' << c.grid.beta << '|'
     << c.grid.v0_pzt << '|' << c.bias.n_bias << '|' << c.bias.target_shift_hz << '|'
     << c.noise.freq_sigma_hz << '|' << c.noise.kel_rel_sigma << '|' << c.drift.amplitude << '|'
     << c.drift.timescale << '|' << c.stray_capacitance << '|' << c.cap_sigma << '|'
     << c.sample_interval << '|' << c.seed << '|'
     << (c.anomaly_exponent ? *c.anomaly_exponent : 0.0);
  for (double v : c.grid.v_pzt) os << ',' << v;
  return os.str();
}

}  // namespace

RunDataset simulate_run(const SimulationConfig& cfg) {
  cfg.validate();

  const Geometry& g = cfg.geometry;
  const double beta = cfg.grid.beta;
  const double m_eff = cfg.cantilever.mass_effective;
  const double nu_p = cfg.cantilever.proper_frequency;
  const double nu_p_sq = nu_p * nu_p;

  std::vector<double> x_nominal;
  for (double v : cfg.grid.v_pzt) x_nominal.push_back(beta * (cfg.grid.v0_pzt - v));
  const double x_max = *std::max_element(x_nominal.begin(), x_nominal.end());
  const double x_min = *std::min_element(x_nominal.begin(), x_nominal.end());

  // Resolve the effective contact-potential law. In the minimizing-potential
  // role, V_c comes from integrating the contact-potential equation on a
  // range wide enough for the configured gap drift.
  ContactPotentialModel vc = cfg.vc_model;
  if (cfg.vc_role == ContactModelRole::minimizing_potential && !cfg.vc_model.is_constant()) {
    const double margin = cfg.drift.amplitude;
    const double xn_solve = x_max + margin;
    const double xmin_solve = std::max(x_min - margin, 0.25 * x_min);
    OdeOptions tight;
    tight.abs_tol = 1e-12;
    tight.rel_tol = 1e-12;
    const auto sol = solve_vc_ode(cfg.vc_model, g.sphere_radius,
                                  BoundaryCondition::asymptotic(cfg.vc_model, xn_solve),
                                  xmin_solve, tight);
    vc = to_contact_model(sol);
  }

  GaussianRng rng(cfg.seed);
  const double drift_phase = 2.0 * k::pi * rng.uniform();
  auto gap_drift = [&](double t) {
    if (cfg.drift.amplitude == 0.0) return 0.0;
    return cfg.drift.amplitude * std::sin(2.0 * k::pi * t / cfg.drift.timescale + drift_phase);
  };

  // Physical or anomaly-overridden curvature law, matched to the physical
  // value at the largest grid distance.
  const double k_ref = electrostatic_curvature(x_max, g.sphere_radius, m_eff);
  auto curvature_nominal = [&](double x) {
    if (cfg.anomaly_exponent)
      return k_ref * std::pow(x / x_max, *cfg.anomaly_exponent);
    return electrostatic_curvature(x, g.sphere_radius, m_eff);
  };

  const double k_cas = ideal_casimir_coefficient(g.sphere_radius, m_eff);
  std::map<double, double> casimir_cache;
  auto casimir_shift = [&](double x) {
    if (!cfg.include_casimir) return 0.0;
    if (cfg.ideal_casimir) return -k_cas / (x * x * x * x);
    auto it = casimir_cache.find(x);
    if (it != casimir_cache.end()) return it->second;
    const double v = sphere_plane_casimir_shift(x, g, cfg.cantilever, cfg.material, cfg.lifshitz);
    casimir_cache.emplace(x, v);
    return v;
  };

  RunDataset run;
  run.metadata.format_version = 1;
  run.metadata.beta = beta;
  run.metadata.sphere_radius = g.sphere_radius;
  run.metadata.nu_p = nu_p;
  run.metadata.temperature = cfg.lifshitz.temperature;
  run.metadata.seed = cfg.seed;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_canonical(cfg))));
  run.metadata.config_hash = hash;

  double t = 0.0;
  for (std::size_t i = 0; i < cfg.grid.v_pzt.size(); ++i) {
    const double v_pzt = cfg.grid.v_pzt[i];
    const double x0 = x_nominal[i];

    const double kel_factor =
        (cfg.noise.kel_rel_sigma > 0.0) ? 1.0 + cfg.noise.kel_rel_sigma * rng.gaussian() : 1.0;
    const double v_center = minimizing_potential(x0, vc, g);

    // Bias span targeting the configured peak frequency shift on both sides.
    const double target_sq = (nu_p + cfg.bias.target_shift_hz) * (nu_p + cfg.bias.target_shift_hz) -
                             nu_p_sq;
    const double half_span = std::sqrt(target_sq / curvature_nominal(x0));

    auto nu_measured = [&](std::optional<double> bias) {
      const double x = x0 + gap_drift(t);
      double nu_sq = nu_p_sq + casimir_shift(x);
      const double v0x = minimizing_potential(x, vc, g);
      const double dv = (bias ? *bias : 0.0) - v0x;
      nu_sq += -curvature_nominal(x) * kel_factor * dv * dv +
               bias_independent_shift(x, vc, g, m_eff);
      double nu = std::sqrt(nu_sq);
      if (cfg.noise.freq_sigma_hz > 0.0) nu += cfg.noise.freq_sigma_hz * rng.gaussian();
      return nu;
    };

    auto push = [&](std::optional<double> bias) {
      run.samples.push_back({v_pzt, bias, nu_measured(bias), t});
      t += cfg.sample_interval;
    };

    push(std::nullopt);  // reference before the sweep
    for (int b = 0; b < cfg.bias.n_bias; ++b) {
      const double frac = (cfg.bias.n_bias == 1)
                              ? 0.0
                              : -1.0 + 2.0 * b / static_cast<double>(cfg.bias.n_bias - 1);
      push(v_center + frac * half_span);
      push(std::nullopt);  // reference after each biased sample
    }

    double cap = cfg.stray_capacitance + pfa_capacitance(x0, g.sphere_radius).C;
    if (cfg.cap_sigma > 0.0) cap += cfg.cap_sigma * rng.gaussian();
    run.capacitance_samples.push_back({v_pzt, cap});
  }
  return run;
}

// ---------------------------------------------------------------------------

std::vector<DistanceCalibration> extract_calibration(const RunDataset& run) {
  // Group rows by PZT setpoint, preserving first-appearance order.
  std::vector<double> order;
  std::map<double, std::vector<const FrequencySample*>> groups;
  for (const auto& s : run.samples) {
    auto [it, fresh] = groups.try_emplace(s.v_pzt);
    if (fresh) order.push_back(s.v_pzt);
    it->second.push_back(&s);
  }

  std::vector<DistanceCalibration> out;
  for (double v_pzt : order) {
    const auto& rows = groups[v_pzt];
    std::vector<WeightedPoint> pts;
    std::vector<double> refs;
    for (const auto* r : rows)
      if (!r->v_bias) refs.push_back(r->nu_m * r->nu_m);

    const bool with_refs = !refs.empty();
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (!rows[j]->v_bias) continue;
      double y = rows[j]->nu_m * rows[j]->nu_m;
      if (with_refs) {
        // Bracketing unbiased references: previous and next in record order.
        double before = 0.0, after = 0.0;
        bool has_before = false, has_after = false;
        for (std::size_t p = j; p-- > 0;)
          if (!rows[p]->v_bias) {
            before = rows[p]->nu_m * rows[p]->nu_m;
            has_before = true;
            break;
          }
        for (std::size_t p = j + 1; p < rows.size(); ++p)
          if (!rows[p]->v_bias) {
            after = rows[p]->nu_m * rows[p]->nu_m;
            has_after = true;
            break;
          }
        double ref;
        if (has_before && has_after)
          ref = 0.5 * (before + after);
        else
          ref = has_before ? before : after;
        y -= ref;
      }
      pts.push_back({*rows[j]->v_bias, y, 1.0});
    }
    if (pts.size() < 3) continue;  // insufficient sweep: skip and report

    DistanceCalibration cal;
    cal.v_pzt = v_pzt;
    cal.n_bias = static_cast<int>(pts.size());
    try {
      cal.parabola = fit_parabola(pts);
    } catch (const std::exception&) {
      continue;
    }

    // Unit input weights: rescale the covariance by the observed scatter.
    if (cal.parabola.fit.dof > 0 && cal.parabola.fit.chi2 > 0.0) {
      const double s2 = cal.parabola.fit.chi2 / cal.parabola.fit.dof;
      for (auto& row : cal.parabola.fit.covariance)
        for (double& c : row) c *= s2;
      for (double& s : cal.parabola.fit.sigmas) s *= std::sqrt(s2);
    }

    if (with_refs) {
      // The sweep was referenced: restore the absolute vertex level against
      // the mean unbiased frequency of this setpoint.
      const double ref_mean = std::accumulate(refs.begin(), refs.end(), 0.0) / refs.size();
      cal.parabola.parabola.nu0_sq += ref_mean;
      cal.parabola.fit.values[0] = cal.parabola.parabola.nu0_sq;
    }
    out.push_back(std::move(cal));
  }
  return out;
}

DistanceEstimates infer_absolute_distance(const PowerLawModel& model, double beta, double v_pzt,
                                          double k_el) {
  if (!(k_el > 0.0)) throw std::domain_error("infer_absolute_distance: K_el must be > 0");
  DistanceEstimates d;
  d.v_pzt = v_pzt;
  d.x_asymptote = beta * (model.v0_pzt - v_pzt);
  d.x_curvature = beta * std::pow(model.alpha / k_el, -1.0 / model.exponent);
  return d;
}

// ---------------------------------------------------------------------------

namespace {

FitResult casimir_coefficient_fit(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<double>& sigma) {
  // nu^2(x) = nu_p^2 - K_Cas/x^4, with the regressor scaled to order unity.
  constexpr double x_ref = 100e-9;
  std::vector<std::vector<double>> rows;
  for (double xi : x) {
    const double u = (x_ref / xi);
    rows.push_back({1.0, -(u * u * u * u)});
  }
  FitResult fit = linear_fit(rows, y, sigma, {"nu_p_sq", "k_cas"});
  const double scale = x_ref * x_ref * x_ref * x_ref;
  fit.values[1] *= scale;
  fit.sigmas[1] *= scale;
  fit.covariance[0][1] *= scale;
  fit.covariance[1][0] *= scale;
  fit.covariance[1][1] *= scale * scale;
  return fit;
}

// k_cas from a given V_0 law over a fixed grid; the kernel behind both the
// main branch fit and the sensitivity refits.
double casimir_with_model(const ContactPotentialModel& v0_model, double x_n,
                          const std::vector<double>& x, const std::vector<double>& raw,
                          const std::vector<double>& raw_sigma, const Geometry& g,
                          double mass_effective, const OdeOptions& ode) {
  double x_lo = x_n;
  for (double xi : x) x_lo = std::min(x_lo, xi);
  const auto sol = solve_vc_ode(v0_model, g.sphere_radius,
                                BoundaryCondition::asymptotic(v0_model, x_n), x_lo, ode);
  std::vector<double> corrected;
  for (std::size_t i = 0; i < x.size(); ++i)
    corrected.push_back(raw[i] - bias_independent_residual(x[i], sol, g, mass_effective));
  return casimir_coefficient_fit(x, corrected, raw_sigma).value("k_cas");
}

ContactPotentialModel model_with_params(V0Form form, const std::vector<double>& p) {
  if (form == V0Form::exponential)
    return ContactPotentialModel::exponential(p[0], p[1], p[2]);
  return ContactPotentialModel::logarithmic(p[0], p[1], p[2]);
}

BranchResult analyze_branch(V0Form form, const std::vector<WeightedPoint>& v0_points,
                            const std::vector<double>& x, const std::vector<double>& raw,
                            const std::vector<double>& raw_sigma, const Geometry& g,
                            double mass_effective, const AnalysisOptions& opts) {
  BranchResult br;
  br.x = x;
  br.residual_raw = raw;
  br.residual_sigma = raw_sigma;
  try {
    br.v0 = fit_v0_model(v0_points, form);
    // Integration range: the residual grid, with the boundary condition at
    // its largest distance.
    br.x_n = *std::max_element(x.begin(), x.end());
    const double x_lo = *std::min_element(x.begin(), x.end());
    if (!(x_lo > 0.0)) throw std::domain_error("analysis: residual distances must be > 0");

    br.vc = solve_vc_ode(br.v0.model, g.sphere_radius,
                         BoundaryCondition::asymptotic(br.v0.model, br.x_n), x_lo, opts.ode);
    br.xn_sensitivity =
        assess_xn_sensitivity(br.v0.model, g.sphere_radius, br.x_n, x_lo, opts.ode);

    br.residual_corrected.clear();
    for (std::size_t i = 0; i < x.size(); ++i)
      br.residual_corrected.push_back(
          raw[i] - bias_independent_residual(x[i], br.vc, g, mass_effective));

    br.casimir = casimir_coefficient_fit(x, br.residual_corrected, raw_sigma);

    // Propagate the V_0-model parameter covariance into k_cas: local
    // sensitivities by symmetric refits, contracted with the covariance so
    // that degenerate (gauge) directions drop out.
    const auto& fit = br.v0.fit;
    std::vector<double> grad(3, 0.0);
    for (int j = 0; j < 3; ++j) {
      const double pj = fit.values[j];
      double h = 0.5 * fit.sigmas[j];
      const double cap = 0.2 * std::abs(pj);
      if (cap > 0.0 && h > cap) h = cap;
      if (!(h > 0.0)) continue;
      auto plus = fit.values, minus = fit.values;
      plus[j] += h;
      minus[j] -= h;
      const double kp = casimir_with_model(model_with_params(form, plus), br.x_n, x, raw,
                                           raw_sigma, g, mass_effective, opts.ode);
      const double km = casimir_with_model(model_with_params(form, minus), br.x_n, x, raw,
                                           raw_sigma, g, mass_effective, opts.ode);
      grad[j] = (kp - km) / (2.0 * h);
    }
    double var_model = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) var_model += grad[a] * fit.covariance[a][b] * grad[b];

    const double stat = br.casimir.sigma("k_cas");
    br.k_cas_sigma_total = std::sqrt(stat * stat + std::max(var_model, 0.0));
    br.ok = true;
  } catch (const std::exception& e) {
    br.ok = false;
    br.error = e.what();
  }
  return br;
}

void run_branches(AnalysisReport& rep, const std::vector<WeightedPoint>& v0_points,
                  const std::vector<double>& x, const std::vector<double>& raw,
                  const std::vector<double>& raw_sigma, const Geometry& g,
                  double mass_effective, const AnalysisOptions& opts) {
  rep.exponential_branch = analyze_branch(V0Form::exponential, v0_points, x, raw, raw_sigma, g,
                                          mass_effective, opts);
  rep.logarithmic_branch = analyze_branch(V0Form::logarithmic, v0_points, x, raw, raw_sigma, g,
                                          mass_effective, opts);
}

void lifshitz_overlay(AnalysisReport& rep, const std::vector<double>& x, const Geometry& g,
                      double mass_effective, double nu_p, const AnalysisOptions& opts) {
  if (!opts.lifshitz_overlay) return;
  Cantilever cant;  // only the effective mass enters the shift
  cant.mass_effective = mass_effective;
  LifshitzConfig cfg;
  cfg.temperature = opts.overlay_temperature;
  cfg.quad_rel_tol = opts.quad_rel_tol;
  double nu_p_sq = nu_p * nu_p;
  if (rep.exponential_branch.ok)
    nu_p_sq = rep.exponential_branch.casimir.value("nu_p_sq");
  else if (rep.logarithmic_branch.ok)
    nu_p_sq = rep.logarithmic_branch.casimir.value("nu_p_sq");
  for (double xi : x) {
    try {
      const double shift =
          sphere_plane_casimir_shift(xi, g, cant, opts.overlay_material, cfg);
      rep.overlay_x.push_back(xi);
      rep.overlay_nu_sq.push_back(nu_p_sq + shift);
    } catch (const std::exception&) {
      // Skip points the material model cannot cover; the overlay is advisory.
    }
  }
}

}  // namespace

AnalysisReport analyze_run(const RunDataset& run, const AnalysisOptions& opts) {
  AnalysisReport rep;
  rep.tolerances["ode_abs_tol"] = opts.ode.abs_tol;
  rep.tolerances["ode_rel_tol"] = opts.ode.rel_tol;
  rep.tolerances["quad_rel_tol"] = opts.quad_rel_tol;

  rep.calibration = extract_calibration(run);
  if (rep.calibration.empty())
    throw numerical_error("analyze_run: no usable bias sweeps in the dataset");

  const double beta = run.metadata.beta;
  Geometry g;
  g.sphere_radius = run.metadata.sphere_radius;

  // Independent contact-voltage assessment from the capacitance bridge.
  if (run.capacitance_samples.size() >= 4) {
    try {
      std::vector<WeightedPoint> cap_pts;
      for (const auto& s : run.capacitance_samples)
        cap_pts.push_back({s.v_pzt, s.capacitance, 1e-13});
      rep.capacitance = fit_capacitance(cap_pts, beta, g.sphere_radius);
      if (rep.capacitance.fit.dof > 0 && rep.capacitance.fit.chi2 > 0.0) {
        const double s2 = rep.capacitance.fit.chi2 / rep.capacitance.fit.dof;
        for (auto& row : rep.capacitance.fit.covariance)
          for (double& c : row) c *= s2;
        for (double& s : rep.capacitance.fit.sigmas) s *= std::sqrt(s2);
      }
      rep.capacitance_ok = true;
    } catch (const std::exception& e) {
      rep.capacitance_error = e.what();
    }
  }

  // Curvature points for the power-law calibration; the documented 4% default
  // applies where the parabola fits carry no scatter information.
  std::vector<WeightedPoint> kel_pts;
  for (const auto& c : rep.calibration) {
    const double kel = c.parabola.parabola.k_el;
    if (!(kel > 0.0)) continue;
    double sig = c.parabola.fit.sigma("k_el");
    if (!(sig > 0.0) || !std::isfinite(sig)) sig = 0.04 * kel;
    kel_pts.push_back({c.v_pzt, kel, sig});
  }

  try {
    rep.power_fixed = fit_power_law(kel_pts, ExponentMode::fixed_minus_2, beta);
    rep.power_fixed_ok = true;
  } catch (const std::exception& e) {
    rep.power_fixed_error = e.what();
  }
  try {
    rep.power_free = fit_power_law(kel_pts, ExponentMode::free, beta);
    rep.power_free_ok = true;
  } catch (const std::exception& e) {
    rep.power_free_error = e.what();
  }
  if (!rep.power_free_ok)
    throw numerical_error("analyze_run: power-law calibration failed: " + rep.power_free_error);

  if (rep.power_fixed_ok)
    rep.effective_mass =
        effective_mass_from_alpha(rep.power_fixed.model.alpha, g.sphere_radius, beta);
  const double m_eff = rep.power_fixed_ok
                           ? rep.effective_mass
                           : effective_mass_from_alpha(rep.power_free.model.alpha,
                                                       g.sphere_radius, beta);

  for (const auto& c : rep.calibration) {
    const double kel = c.parabola.parabola.k_el;
    if (!(kel > 0.0)) continue;
    if (rep.power_fixed_ok)
      rep.distances_fixed.push_back(
          infer_absolute_distance(rep.power_fixed.model, beta, c.v_pzt, kel));
    rep.distances_free.push_back(
        infer_absolute_distance(rep.power_free.model, beta, c.v_pzt, kel));
  }

  // Distance mapping for the residual chain: the fixed-exponent asymptote
  // when the free fit is consistent with the inverse square (it is the
  // better-conditioned estimate of the contact voltage), the free-exponent
  // one otherwise (the anomalous case, where forcing -2 is known to bias
  // the distances).
  const PowerLawModel* mapping = &rep.power_free.model;
  double mapping_v0_sigma = rep.power_free.fit.sigma("v0_pzt");
  if (rep.power_fixed_ok) {
    const double e = rep.power_free.model.exponent;
    const double se = rep.power_free.fit.sigma("e");
    if (std::abs(e + 2.0) <= std::max(2.0 * se, 0.02)) {
      mapping = &rep.power_fixed.model;
      mapping_v0_sigma = rep.power_fixed.fit.sigma("v0_pzt");
    }
  }

  std::vector<WeightedPoint> v0_points;
  std::vector<double> x, raw, raw_sigma;
  for (const auto& c : rep.calibration) {
    const double xi = beta * (mapping->v0_pzt - c.v_pzt);
    if (!(xi > 0.0)) continue;
    double sv = c.parabola.fit.sigma("v0");
    if (!(sv > 0.0) || !std::isfinite(sv))
      sv = opts.default_v0_sigma.value_or(1e-3);
    v0_points.push_back({xi, c.parabola.parabola.v0, sv});
    double sn = c.parabola.fit.sigma("nu0_sq");
    if (!(sn > 0.0) || !std::isfinite(sn)) sn = 1.0;
    x.push_back(xi);
    raw.push_back(c.parabola.parabola.nu0_sq);
    raw_sigma.push_back(sn);
  }

  run_branches(rep, v0_points, x, raw, raw_sigma, g, m_eff, opts);

  // Contact-voltage mapping uncertainty: a common shift of every distance by
  // beta * sigma(V0_pzt), propagated into k_cas through a full branch redo.
  if (mapping_v0_sigma > 0.0 && std::isfinite(mapping_v0_sigma)) {
    const double dx = beta * mapping_v0_sigma;
    auto shifted_k = [&](V0Form form, double delta) {
      auto v0p = v0_points;
      for (auto& p : v0p) p.x += delta;
      auto xs = x;
      for (auto& xi : xs) xi += delta;
      const auto vfit = fit_v0_model(v0p, form);
      const double xn = *std::max_element(xs.begin(), xs.end());
      return casimir_with_model(vfit.model, xn, xs, raw, raw_sigma, g, m_eff, opts.ode);
    };
    for (auto [form, br] : {std::pair{V0Form::exponential, &rep.exponential_branch},
                            std::pair{V0Form::logarithmic, &rep.logarithmic_branch}}) {
      if (!br->ok) continue;
      try {
        const double kp = shifted_k(form, dx);
        const double km = shifted_k(form, -dx);
        const double var_dist = 0.25 * (kp - km) * (kp - km);
        br->k_cas_sigma_total =
            std::sqrt(br->k_cas_sigma_total * br->k_cas_sigma_total + var_dist);
      } catch (const std::exception&) {
        // Sensitivity refit failed; the statistical component stands.
      }
    }
  }

  lifshitz_overlay(rep, x, g, m_eff, run.metadata.nu_p, opts);
  return rep;
}

AnalysisReport analyze_reduced(const std::vector<WeightedPoint>& v0_points,
                               const std::vector<WeightedPoint>& residual_points,
                               const Geometry& g, double mass_effective, double nu_p,
                               const AnalysisOptions& opts) {
  if (v0_points.empty() || residual_points.empty())
    throw std::invalid_argument("analyze_reduced: empty input tables");
  AnalysisReport rep;
  rep.tolerances["ode_abs_tol"] = opts.ode.abs_tol;
  rep.tolerances["ode_rel_tol"] = opts.ode.rel_tol;
  rep.tolerances["quad_rel_tol"] = opts.quad_rel_tol;
  rep.effective_mass = mass_effective;

  std::vector<double> x, raw, raw_sigma;
  for (const auto& p : residual_points) {
    x.push_back(p.x);
    raw.push_back(p.y);
    raw_sigma.push_back(p.sigma > 0.0 ? p.sigma : 1.0);
  }
  run_branches(rep, v0_points, x, raw, raw_sigma, g, mass_effective, opts);
  lifshitz_overlay(rep, x, g, mass_effective, nu_p, opts);
  return rep;
}

}  // namespace spforce
