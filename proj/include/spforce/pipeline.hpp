#ifndef SPFORCE_PIPELINE_HPP
#define SPFORCE_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spforce/contact_potential.hpp"
#include "spforce/electrostatics.hpp"
#include "spforce/fitting.hpp"
#include "spforce/lifshitz.hpp"

namespace spforce {

// ---------------------------------------------------------------------------
// Forward simulator
// ---------------------------------------------------------------------------

/// Whether the configured potential law describes the contact potential
/// V_c(x) directly, or the minimizing potential V_0(x) from which V_c is
/// derived by integrating the contact-potential equation at setup time.
enum class ContactModelRole { contact_potential, minimizing_potential };

struct DistanceGrid {
  std::vector<double> v_pzt;  // V, one entry per approach setpoint
  double beta = 87e-9;        // m/V
  double v0_pzt = 0.0;        // V, contact voltage: x = beta (v0_pzt - v_pzt)
};

struct BiasGridPolicy {
  int n_bias = 9;                 // odd keeps the sweep bracketing the vertex
  double target_shift_hz = 1.0;   // peak |frequency shift| per sweep
};

struct NoiseConfig {
  double freq_sigma_hz = 0.0;   // per-sample frequency noise
  double kel_rel_sigma = 0.0;   // per-distance relative curvature scatter
};

struct DriftConfig {
  double amplitude = 0.0;           // m, slow gap drift
  double timescale = 12.0 * 3600.;  // s
};

struct SimulationConfig {
  Geometry geometry;
  Cantilever cantilever;

  ContactPotentialModel vc_model = ContactPotentialModel::constant(0.0);
  ContactModelRole vc_role = ContactModelRole::contact_potential;

  bool include_casimir = false;
  bool ideal_casimir = true;            // inject -K_Cas/x^4; else Lifshitz material
  MaterialResponse material = MaterialResponse::gold();
  LifshitzConfig lifshitz;

  DistanceGrid grid;
  BiasGridPolicy bias;
  NoiseConfig noise;
  DriftConfig drift;
  std::optional<double> anomaly_exponent;  // phenomenological K_el ~ x^e override

  double stray_capacitance = 175.7e-12;  // F, offset of the capacitance bridge
  double cap_sigma = 0.0;                // F, capacitance sample noise
  double sample_interval = 30.0;         // s per recorded row
  std::uint64_t seed = 0;

  void validate() const;
};

struct FrequencySample {
  double v_pzt = 0.0;
  std::optional<double> v_bias;  // absent marks an unbiased reference row
  double nu_m = 0.0;             // Hz
  double t = 0.0;                // s
};

struct CapacitanceSample {
  double v_pzt = 0.0;
  double capacitance = 0.0;  // F
};

struct RunMetadata {
  int format_version = 1;
  double beta = 0.0;
  double sphere_radius = 0.0;
  double nu_p = 0.0;
  double temperature = 300.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct RunDataset {
  RunMetadata metadata;
  std::vector<FrequencySample> samples;
  std::vector<CapacitanceSample> capacitance_samples;
};

/// Deterministic forward model: per distance, a bias sweep centred on the
/// minimizing potential with a span auto-scaled to the target peak shift,
/// bracketed by unbiased reference rows; capacitance samples from the PFA
/// formula plus the stray offset.
RunDataset simulate_run(const SimulationConfig& cfg);

// ---------------------------------------------------------------------------
// Analysis chain
// ---------------------------------------------------------------------------

struct DistanceCalibration {
  double v_pzt = 0.0;
  int n_bias = 0;
  ParabolaFit parabola;
};

/// Per-setpoint parabola fits. When unbiased reference rows are present, each
/// biased sample is referenced to the mean of its bracketing references and
/// the vertex value is restored against the mean reference level.
std::vector<DistanceCalibration> extract_calibration(const RunDataset& run);

struct DistanceEstimates {
  double v_pzt = 0.0;
  double x_asymptote = 0.0;  // beta (v0_pzt - v_pzt)
  double x_curvature = 0.0;  // beta (alpha / K_el)^(-1/e)
};

DistanceEstimates infer_absolute_distance(const PowerLawModel& model, double beta, double v_pzt,
                                          double k_el);

struct AnalysisOptions {
  OdeOptions ode;
  double quad_rel_tol = 1e-8;
  bool lifshitz_overlay = true;
  MaterialResponse overlay_material = MaterialResponse::gold();
  double overlay_temperature = 300.0;
  std::optional<double> default_v0_sigma;  // used when parabola sigmas vanish
};

/// One V_0-form branch of the residual analysis.
struct BranchResult {
  bool ok = false;
  std::string error;
  V0FitResult v0;
  double x_n = 0.0;
  OdeSolution vc;
  XnSensitivity xn_sensitivity;
  std::vector<double> x;                    // m
  std::vector<double> residual_raw;         // nu_m^2(x, V=V0)
  std::vector<double> residual_corrected;   // raw - dnu_e^2
  std::vector<double> residual_sigma;
  FitResult casimir;                        // nu_p_sq, k_cas (statistical errors)
  // Full k_cas uncertainty: statistical plus the V_0-model parameter
  // covariance and, for raw-run analyses, the contact-voltage mapping,
  // both propagated by linearized refits.
  double k_cas_sigma_total = 0.0;
};

struct AnalysisReport {
  std::vector<DistanceCalibration> calibration;
  bool capacitance_ok = false;
  std::string capacitance_error;
  CapacitanceFit capacitance;  // bridge data versus the PFA formula, when present
  bool power_fixed_ok = false, power_free_ok = false;
  std::string power_fixed_error, power_free_error;
  PowerLawFit power_fixed, power_free;
  double effective_mass = 0.0;  // from the fixed-exponent alpha
  std::vector<DistanceEstimates> distances_fixed, distances_free;
  BranchResult exponential_branch, logarithmic_branch;
  std::vector<double> overlay_x, overlay_nu_sq;  // Lifshitz prediction nu_p^2 + dnu_Cas^2
  std::map<std::string, double> tolerances;      // echoed numeric settings
};

AnalysisReport analyze_run(const RunDataset& run, const AnalysisOptions& opts = {});

/// Tail of the chain for reduced data: minimizing-potential and peak-value
/// tables versus distance (the replay path when raw sweeps are unavailable).
AnalysisReport analyze_reduced(const std::vector<WeightedPoint>& v0_points,
                               const std::vector<WeightedPoint>& residual_points,
                               const Geometry& g, double mass_effective, double nu_p,
                               const AnalysisOptions& opts = {});

}  // namespace spforce

#endif
