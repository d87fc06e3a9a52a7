#ifndef SPFORCE_CONSTANTS_HPP
#define SPFORCE_CONSTANTS_HPP

namespace spforce::constants {

// CODATA 2018 exact/recommended values, SI.
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double c_light = 2.99792458e8;        // m/s
inline constexpr double eps0 = 8.8541878128e-12;       // F/m
inline constexpr double k_boltzmann = 1.380649e-23;    // J/K
inline constexpr double electron_volt = 1.602176634e-19;  // J

inline constexpr double pi = 3.14159265358979323846;

/// Photon energy in eV -> angular frequency in rad/s.
inline constexpr double ev_to_rad_s(double energy_ev) {
  return energy_ev * electron_volt / hbar;
}

}  // namespace spforce::constants

#endif
