#pragma once

#include <numbers>

namespace pdcalib {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Speed of light in vacuum [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;

/// Reduced Planck constant [J s].
inline constexpr double kHBar = 1.054571817e-34;

/// Vacuum permittivity [F/m].
inline constexpr double kEpsilon0 = 8.8541878128e-12;

/// Angular frequency of a vacuum wavelength [rad/s].
inline constexpr double angular_frequency(double wavelength) {
  return kTwoPi * kSpeedOfLight / wavelength;
}

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

inline constexpr double nm = 1e-9;
inline constexpr double um = 1e-6;
inline constexpr double mm = 1e-3;

} // namespace pdcalib
