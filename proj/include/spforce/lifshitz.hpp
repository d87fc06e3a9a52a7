#ifndef SPFORCE_LIFSHITZ_HPP
#define SPFORCE_LIFSHITZ_HPP

#include <variant>
#include <vector>

#include "spforce/geometry.hpp"

namespace spforce {

/// Dielectric response of the coating material, evaluated on the imaginary
/// frequency axis. Tabulated loss data are turned into eps(i xi) through the
/// Kramers-Kronig integral, with a Drude continuation below the table.
struct MaterialResponse {
  struct Drude {
    double omega_p;  // rad/s
    double gamma_p;  // rad/s
  };
  struct TabulatedLoss {
    std::vector<double> omega;  // rad/s, strictly increasing
    std::vector<double> eps2;   // eps''(omega) >= 0
    Drude low_freq;             // extrapolation below omega.front()
  };
  struct PerfectConductor {};

  std::variant<Drude, TabulatedLoss, PerfectConductor> kind;

  static MaterialResponse drude(double omega_p, double gamma_p);
  static MaterialResponse drude_ev(double omega_p_ev, double gamma_p_ev);
  /// Gold parameters used throughout: omega_p = 7.5 eV, gamma_p = 0.061 eV.
  static MaterialResponse gold();
  static MaterialResponse tabulated_loss(std::vector<double> omega_rad_s,
                                         std::vector<double> eps2, Drude low_freq);
  static MaterialResponse perfect_conductor();

  bool is_ideal() const { return std::holds_alternative<PerfectConductor>(kind); }
};

struct LifshitzConfig {
  double temperature = 300.0;    // K; 0 selects the zero-temperature integral
  int max_matsubara = 200000;    // hard cap on the summation index
  int min_matsubara = 0;         // floor, used by convergence diagnostics
  double tail_rel_tol = 1e-10;   // stop when |term| < tol * |sum|
  double quad_rel_tol = 1e-8;
  double y_upper = 35.0;         // integrate y in [m gamma, m gamma + y_upper]

  void validate() const;
};

struct ReflectionPair {
  double r_te;
  double r_tm;
};

/// eps(i xi) >= 1. Drude: 1 + omega_p^2 / (xi (xi + gamma_p)). Tabulated:
/// 1 + (2/pi) Int omega eps''(omega) / (omega^2 + xi^2) d omega.
double permittivity_imaginary_axis(const MaterialResponse& mat, double xi);

/// Fresnel amplitudes of the Matsubara integrand, p_m = y/(m gamma),
/// s_m = sqrt(eps - 1 + p_m^2). The m = 0 limit is the metallic one:
/// r_tm = -1, r_te = 0.
ReflectionPair fresnel_reflection(double y, int m, double gamma, double eps);

struct FreeEnergyDiagnostics {
  int matsubara_terms = 0;  // highest index evaluated (0 for the T=0 path)
  double last_term = 0.0;   // contribution of that index (J/m^2)
};

/// Finite-temperature Casimir-Lifshitz free energy per unit area between
/// parallel plates (negative, binding). The m = 0 term carries half weight;
/// T = 0 evaluates the continuum limit of the sum.
double plane_plane_free_energy(double x, const MaterialResponse& mat, const LifshitzConfig& cfg,
                               FreeEnergyDiagnostics* diag = nullptr);

/// PFA sphere-plane force F = 2 pi R E_PP mapped to the frequency observable:
/// dnu^2_Cas = -(R / 2 pi m_eff) dE_PP/dx, the derivative taken by
/// Richardson-extrapolated central differences.
double sphere_plane_casimir_shift(double x, const Geometry& g, const Cantilever& cant,
                                  const MaterialResponse& mat, const LifshitzConfig& cfg);

/// Ideal-limit coefficient of dnu^2_Cas = -K_Cas / x^4:
/// K_Cas = pi hbar c R / (480 m_eff).
double ideal_casimir_coefficient(double sphere_radius, double mass_effective);

/// m = 0, TM-only energy term computed through the same quadrature kernel;
/// analytic value -zeta(3) k_B T / (16 pi x^2).
double classical_m0_tm_energy(double x, double temperature, const LifshitzConfig& cfg);

}  // namespace spforce

#endif
