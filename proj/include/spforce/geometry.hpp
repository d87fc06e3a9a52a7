#ifndef SPFORCE_GEOMETRY_HPP
#define SPFORCE_GEOMETRY_HPP

#include <cmath>
#include <optional>
#include <stdexcept>

namespace spforce {

/// Sphere-plane geometry: radius of curvature, mirror diameter and the rms
/// roughness variances of the two facing surfaces.
struct Geometry {
  double sphere_radius = 0.0;        // R (m)
  double mirror_diameter = 0.0;      // a (m), spherical mirror used instead of a full sphere
  double roughness_var_sphere = 0.0; // <h_s^2> (m^2)
  double roughness_var_plane = 0.0;  // <h_p^2> (m^2)
  std::optional<double> roughness_corr_length;  // xi (m), validity scale only

  void validate() const {
    if (!(sphere_radius > 0.0)) throw std::domain_error("Geometry: sphere_radius must be > 0");
    if (mirror_diameter < 0.0 || mirror_diameter > 2.0 * sphere_radius)
      throw std::domain_error("Geometry: mirror_diameter must satisfy 0 <= a <= 2R");
    if (roughness_var_sphere < 0.0 || roughness_var_plane < 0.0)
      throw std::domain_error("Geometry: roughness variances must be >= 0");
    if (roughness_corr_length && *roughness_corr_length <= 0.0)
      throw std::domain_error("Geometry: roughness correlation length must be > 0");
  }
};

/// Rectangular cantilever acting as the plane surface.
struct Cantilever {
  double length = 0.0;           // L (m)
  double width = 0.0;            // w (m)
  double thickness = 0.0;        // t (m)
  double density = 0.0;          // rho (kg/m^3)
  double youngs_modulus = 0.0;   // E (Pa)
  double mass_physical = 0.0;    // m_p (kg)
  double mass_effective = 0.0;   // m_eff (kg), modal mass
  double proper_frequency = 0.0; // nu_p (Hz)
  double stiffness = 0.0;        // k (N/m)

  void validate() const {
    for (double v : {length, width, thickness, density, youngs_modulus,
                     mass_physical, mass_effective, proper_frequency, stiffness})
      if (!(v > 0.0)) throw std::domain_error("Cantilever: all fields must be > 0");
    const double slab = density * length * width * thickness;
    if (std::abs(mass_physical - slab) > 0.10 * slab)
      throw std::domain_error("Cantilever: mass_physical inconsistent with rho*L*w*t");
  }
};

}  // namespace spforce

#endif
