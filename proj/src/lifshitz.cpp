#include "spforce/lifshitz.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spforce/constants.hpp"
#include "spforce/core_models.hpp"
#include "spforce/errors.hpp"
#include "spforce/quadrature.hpp"

namespace spforce {

namespace k = constants;

MaterialResponse MaterialResponse::drude(double omega_p, double gamma_p) {
  if (!(omega_p > 0.0) || !(gamma_p > 0.0))
    throw std::domain_error("MaterialResponse: Drude parameters must be > 0");
  return {Drude{omega_p, gamma_p}};
}

MaterialResponse MaterialResponse::drude_ev(double omega_p_ev, double gamma_p_ev) {
  return drude(k::ev_to_rad_s(omega_p_ev), k::ev_to_rad_s(gamma_p_ev));
}

MaterialResponse MaterialResponse::gold() { return drude_ev(7.5, 0.061); }

MaterialResponse MaterialResponse::tabulated_loss(std::vector<double> omega,
                                                  std::vector<double> eps2, Drude low_freq) {
  if (omega.empty() || omega.size() != eps2.size())
    throw std::domain_error("MaterialResponse: empty or inconsistent loss table");
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (i > 0 && !(omega[i] > omega[i - 1]))
      throw std::domain_error("MaterialResponse: omega must be strictly increasing");
    if (eps2[i] < 0.0) throw std::domain_error("MaterialResponse: eps'' must be >= 0");
  }
  return {TabulatedLoss{std::move(omega), std::move(eps2), low_freq}};
}

MaterialResponse MaterialResponse::perfect_conductor() { return {PerfectConductor{}}; }

void LifshitzConfig::validate() const {
  if (temperature < 0.0) throw std::domain_error("LifshitzConfig: T must be >= 0");
  if (!(tail_rel_tol > 0.0) || tail_rel_tol > 1e-2)
    throw std::domain_error("LifshitzConfig: tail_rel_tol must be in (0, 1e-2]");
  if (!(quad_rel_tol > 0.0) || quad_rel_tol > 1e-2)
    throw std::domain_error("LifshitzConfig: quad_rel_tol must be in (0, 1e-2]");
  if (max_matsubara < 1) throw std::domain_error("LifshitzConfig: max_matsubara must be >= 1");
  if (!(y_upper > 1.0)) throw std::domain_error("LifshitzConfig: y_upper must be > 1");
}

namespace {

double drude_eps(const MaterialResponse::Drude& d, double xi) {
  return 1.0 + d.omega_p * d.omega_p / (xi * (xi + d.gamma_p));
}

// Kramers-Kronig transform of a tabulated loss function. Each table panel is
// treated as a power-law segment eps'' ~ omega^q; the low-frequency gap below
// the table is filled with the closed-form Drude piece, and the last segment
// is continued one decade beyond the table.
double kramers_kronig_eps(const MaterialResponse::TabulatedLoss& t, double xi, double rel_tol) {
  const double xi2 = xi * xi;

  // Analytic Drude contribution over [0, omega_min]:
  // (2/pi) wp^2 gp Int_0^W dw / ((w^2+gp^2)(w^2+xi^2)).
  const double wp = t.low_freq.omega_p, gp = t.low_freq.gamma_p;
  const double w_min = t.omega.front();
  double low;
  if (std::abs(xi - gp) < 1e-9 * gp) {
    // Degenerate xi == gamma_p: Int dw/(w^2+g^2)^2.
    const double g = gp;
    low = (2.0 / k::pi) * wp * wp * gp *
          (0.5 / (g * g)) * (std::atan(w_min / g) / g + w_min / (w_min * w_min + g * g));
  } else {
    low = (2.0 / k::pi) * wp * wp * gp / (xi2 - gp * gp) *
          (std::atan(w_min / gp) / gp - std::atan(w_min / xi) / xi);
  }

  auto segment = [&](double w0, double w1, double e0, double e1) {
    const double q = std::log(e1 / e0) / std::log(w1 / w0);
    const auto f = [&](double w) {
      const double eps2 = e0 * std::pow(w / w0, q);
      return w * eps2 / (w * w + xi2);
    };
    return GaussKronrod::integrate(f, w0, w1, rel_tol).value;
  };

  double table = 0.0;
  for (std::size_t i = 0; i + 1 < t.omega.size(); ++i) {
    if (t.eps2[i] <= 0.0 || t.eps2[i + 1] <= 0.0) {
      // Zero samples: fall back to linear interpolation of eps''.
      const auto f = [&](double w) {
        const double s = (w - t.omega[i]) / (t.omega[i + 1] - t.omega[i]);
        const double eps2 = (1.0 - s) * t.eps2[i] + s * t.eps2[i + 1];
        return w * eps2 / (w * w + xi2);
      };
      table += GaussKronrod::integrate(f, t.omega[i], t.omega[i + 1], rel_tol).value;
    } else {
      table += segment(t.omega[i], t.omega[i + 1], t.eps2[i], t.eps2[i + 1]);
    }
  }

  // One-decade power-law continuation of the last panel.
  double tail = 0.0;
  const std::size_t n = t.omega.size();
  if (n >= 2 && t.eps2[n - 1] > 0.0 && t.eps2[n - 2] > 0.0) {
    const double q =
        std::log(t.eps2[n - 1] / t.eps2[n - 2]) / std::log(t.omega[n - 1] / t.omega[n - 2]);
    const double w0 = t.omega[n - 1], e0 = t.eps2[n - 1];
    const auto f = [&](double w) { return w * e0 * std::pow(w / w0, q) / (w * w + xi2); };
    tail = GaussKronrod::integrate(f, w0, 10.0 * w0, rel_tol).value;
  }

  return 1.0 + (2.0 / k::pi) * (table + tail) + low;
}

}  // namespace

double permittivity_imaginary_axis(const MaterialResponse& mat, double xi) {
  if (!(xi > 0.0)) throw std::domain_error("permittivity_imaginary_axis: xi must be > 0");
  return std::visit(
      [xi](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MaterialResponse::Drude>) {
          return drude_eps(m, xi);
        } else if constexpr (std::is_same_v<T, MaterialResponse::TabulatedLoss>) {
          return kramers_kronig_eps(m, xi, 1e-8);
        } else {
          throw std::domain_error("permittivity_imaginary_axis: undefined for a perfect conductor");
        }
      },
      mat.kind);
}

ReflectionPair fresnel_reflection(double y, int m, double gamma, double eps) {
  if (m < 0) throw std::domain_error("fresnel_reflection: m must be >= 0");
  if (m == 0) return {0.0, -1.0};  // metallic limit of the printed formulas
  const double a = m * gamma;
  if (y < a * (1.0 - 1e-12))
    throw std::domain_error("fresnel_reflection: y below the integration threshold m*gamma");
  const double p = y / a;
  const double s = std::sqrt(eps - 1.0 + p * p);
  return {-(s - p) / (s + p), (s - eps * p) / (s + eps * p)};
}

namespace {

// Inner integral Int_a^{a+y_up} y [ln(1-rTE^2 e^-2y) + ln(1-rTM^2 e^-2y)] dy.
// `eps_at` supplies the permittivity for the given lower limit a (= m gamma at
// finite T, continuous variable at T=0); ideal short-circuits to r^2 = 1.
double polarization_integral(double a, double eps, bool ideal, const LifshitzConfig& cfg) {
  const auto integrand = [&](double y) {
    double r2_te = 1.0, r2_tm = 1.0;
    if (!ideal) {
      const double p = y / a;
      const double s = std::sqrt(eps - 1.0 + p * p);
      const double rte = (s - p) / (s + p);
      const double rtm = (s - eps * p) / (s + eps * p);
      r2_te = rte * rte;
      r2_tm = rtm * rtm;
    }
    return y * (std::log1p(-r2_te * std::exp(-2.0 * y)) +
                std::log1p(-r2_tm * std::exp(-2.0 * y)));
  };
  return GaussKronrod::integrate(integrand, a, a + cfg.y_upper, cfg.quad_rel_tol).value;
}

// m = 0 term (half weight): TM-only metallic for real materials, both
// polarizations for a perfect conductor.
double m0_integral(bool ideal, const LifshitzConfig& cfg) {
  const auto integrand = [](double y) { return y * std::log1p(-std::exp(-2.0 * y)); };
  const double i0 = GaussKronrod::integrate(integrand, 0.0, cfg.y_upper, cfg.quad_rel_tol).value;
  return ideal ? i0 : 0.5 * i0;
}

double zero_temperature_energy(double x, const MaterialResponse& mat,
                               const LifshitzConfig& cfg) {
  const bool ideal = mat.is_ideal();
  const auto outer = [&](double a) {
    double eps = 1.0;
    if (!ideal) {
      const double xi = a * k::c_light / x;
      eps = permittivity_imaginary_axis(mat, xi);
    }
    return polarization_integral(a, eps, ideal, cfg);
  };
  // The integrand is finite at a -> 0 (metallic TM limit) and decays as
  // e^{-2a}; Gauss-Kronrod nodes never touch a = 0.
  const double integral =
      GaussKronrod::integrate(outer, 0.0, cfg.y_upper, cfg.quad_rel_tol).value;
  return k::hbar * k::c_light / (4.0 * k::pi * k::pi * x * x * x) * integral;
}

}  // namespace

double plane_plane_free_energy(double x, const MaterialResponse& mat, const LifshitzConfig& cfg,
                               FreeEnergyDiagnostics* diag) {
  if (!(x > 0.0)) throw std::domain_error("plane_plane_free_energy: x must be > 0");
  cfg.validate();

  if (cfg.temperature == 0.0) {
    if (diag) *diag = {};
    return zero_temperature_energy(x, mat, cfg);
  }

  const bool ideal = mat.is_ideal();
  const double gamma = 2.0 * k::pi * k::k_boltzmann * cfg.temperature * x /
                       (k::hbar * k::c_light);
  const double xi1 = 2.0 * k::pi * k::k_boltzmann * cfg.temperature / k::hbar;

  double sum = m0_integral(ideal, cfg);
  double last = sum;
  int m = 1;
  // Terms decay like e^{-2 m gamma}; the remaining tail after stopping at m is
  // bounded by |term_m| * sum_k e^{-2 gamma k} = |term_m| / (1 - e^{-2 gamma}).
  const double tail_factor = 1.0 / (1.0 - std::exp(-2.0 * gamma));
  for (; m <= cfg.max_matsubara; ++m) {
    const double a = m * gamma;
    double eps = 1.0;
    if (!ideal) eps = permittivity_imaginary_axis(mat, xi1 * m);
    const double term = polarization_integral(a, eps, ideal, cfg);
    sum += term;
    last = term;
    if (m >= std::max(cfg.min_matsubara, 3) &&
        std::abs(term) * tail_factor < cfg.tail_rel_tol * std::abs(sum))
      break;
  }
  if (m > cfg.max_matsubara) {
    std::ostringstream os;
    os << "plane_plane_free_energy: Matsubara sum not converged after " << cfg.max_matsubara
       << " terms (partial sum " << sum << ", last term " << last << ")";
    throw numerical_error(os.str());
  }
  if (diag) {
    diag->matsubara_terms = m;
    diag->last_term = k::k_boltzmann * cfg.temperature / (2.0 * k::pi * x * x) * last;
  }
  return k::k_boltzmann * cfg.temperature / (2.0 * k::pi * x * x) * sum;
}

double sphere_plane_casimir_shift(double x, const Geometry& g, const Cantilever& cant,
                                  const MaterialResponse& mat, const LifshitzConfig& cfg) {
  if (!(x > 0.0)) throw std::domain_error("sphere_plane_casimir_shift: x must be > 0");
  const auto energy = [&](double xx) { return plane_plane_free_energy(xx, mat, cfg); };

  // Richardson-extrapolated central difference of E_PP.
  const double h = 0.02 * x;
  const double d_h = (energy(x + h) - energy(x - h)) / (2.0 * h);
  const double d_h2 = (energy(x + 0.5 * h) - energy(x - 0.5 * h)) / h;
  const double deriv = (4.0 * d_h2 - d_h) / 3.0;

  return -g.sphere_radius / (2.0 * k::pi * cant.mass_effective) * deriv;
}

double ideal_casimir_coefficient(double sphere_radius, double mass_effective) {
  if (!(sphere_radius > 0.0) || !(mass_effective > 0.0))
    throw std::domain_error("ideal_casimir_coefficient: positive inputs required");
  return k::pi * k::hbar * k::c_light * sphere_radius / (480.0 * mass_effective);
}

double classical_m0_tm_energy(double x, double temperature, const LifshitzConfig& cfg) {
  if (!(x > 0.0) || !(temperature > 0.0))
    throw std::domain_error("classical_m0_tm_energy: positive inputs required");
  return k::k_boltzmann * temperature / (2.0 * k::pi * x * x) * m0_integral(false, cfg);
}

}  // namespace spforce
