#pragma once

#include <span>
#include <vector>

#include "pdcalib/sellmeier.hpp"

namespace pdcalib {

/// Uniaxial type-I crystal: signal and idler ordinary, pump extraordinary.
struct CrystalSpec {
  double thickness = 0.0;       ///< L [m]
  double cut_angle = 0.0;       ///< optic axis to surface normal [rad]
  double chi2_reference = 0.0;  ///< effective chi(2) at 2*lambda_p [m/V]
  SellmeierSet sellmeier;
  /// When true, tilt arguments are external rotation angles from normal
  /// incidence and are refraction-corrected; when false they are taken
  /// directly as the internal pump/optic-axis angle.
  bool tilt_is_external = true;

  void validate() const;
};

/// One detected plane-wave mode: vacuum wavelength and emission polar angle
/// (inside the crystal) relative to the pump axis.
struct PlaneWaveMode {
  double wavelength = 0.0;   ///< [m]
  double polar_angle = 0.0;  ///< [rad]
};

/// A solution of the collinear/angled phase-matching condition.
struct PhaseMatchPoint {
  double wavelength_pm = 0.0;      ///< [m]
  double tilt = 0.0;               ///< tilt at which the root was found [rad]
  double mismatch_residual = 0.0;  ///< residual mismatch at the root [1/m]
};

enum class Polarization { S, P };

/// Idler wavelength fixed by energy conservation, 1/li = 1/lp - 1/ls.
/// Throws DomainError unless lambda_signal > lambda_pump.
double idler_wavelength(double pump_wavelength, double signal_wavelength);

/// Angle between the pump wave vector inside the crystal and the optic axis.
/// External tilts solve sin(t) = n_p(theta) * sin(t - (theta - cut_angle))
/// self-consistently with the extraordinary pump index (fixed point,
/// tolerance 1e-10 rad, cap 100 iterations).
double internal_pump_angle(double tilt, const CrystalSpec& crystal,
                           double pump_wavelength);

/// Pump propagation angle from the facet normal inside the crystal (the
/// refraction angle paired with internal_pump_angle).
double pump_refraction_angle(double tilt, const CrystalSpec& crystal,
                             double pump_wavelength);

/// Inverse of internal_pump_angle for external-tilt crystals.
double external_tilt_for_internal_angle(double internal_angle,
                                        const CrystalSpec& crystal,
                                        double pump_wavelength);

/// Longitudinal wave-vector mismatch
///   dk = k_p - k_s (cos(theta) + sqrt((k_i/k_s)^2 - sin^2(theta)))
/// with the pump index extraordinary at the internal pump angle and signal /
/// idler ordinary. Throws DomainError on evanescent geometry or w_s >= w_p.
double longitudinal_mismatch(const PlaneWaveMode& mode, double tilt,
                             const CrystalSpec& crystal, double pump_wavelength);

/// All roots of the mismatch in search_range at the given emission angle.
/// 0.1 nm bracketing scan refined by bisection; a tangency detector reports
/// the degenerate double root as a single point. Accepted roots satisfy
/// |dk| * L / 2 < 1e-6.
std::vector<PhaseMatchPoint> phase_matched_wavelengths(
    double tilt, const CrystalSpec& crystal, double pump_wavelength,
    WavelengthRange search_range, double polar_angle = 0.0);

/// Internal pump angle that phase-matches the given signal wavelength
/// collinearly (closed form on the index ellipsoid). Throws DomainError when
/// no angle exists.
double internal_angle_matching(double wavelength, const CrystalSpec& crystal,
                               double pump_wavelength);

/// Tilt parameter (external or internal per crystal convention) that
/// phase-matches the given wavelength collinearly.
double tilt_matching_wavelength(double wavelength, const CrystalSpec& crystal,
                                double pump_wavelength);

/// Internal angle of collinear degenerate phase matching; a crystal cut at
/// this angle phase-matches 2*lambda_p at normal incidence.
double degenerate_cut_angle(const SellmeierSet& sellmeier, double pump_wavelength);

/// Power transmittance of a planar interface. Throws DomainError on total
/// internal reflection.
double fresnel_transmission(double n_in, double n_out, double incidence_angle,
                            Polarization polarization);

/// Wavelength dependence of the squared gain along the phase-matching curve,
/// factor by factor, each normalized to 1 at lambda = 2*lambda_p.
struct GainDispersionProfile {
  std::vector<double> wavelength;      ///< lambda_PM [m]
  std::vector<double> index_factor;    ///< 1 / (n_s n_i n_p^2)
  std::vector<double> miller_factor;   ///< (chi1_p chi1_s chi1_i)^2, chi1 = n^2 - 1
  std::vector<double> length_factor;   ///< (L_eff / L)^2 = 1 / cos^2(refraction)
  std::vector<double> fresnel_factor;  ///< pump entrance (p) x signal exit (s)
  std::vector<double> total;           ///< product of the four factors
};

GainDispersionProfile gain_dispersion_profile(std::span<const double> wavelength_grid,
                                              const CrystalSpec& crystal,
                                              double pump_wavelength);

/// Total normalized gain-squared correction at one phase-matched wavelength.
double gain_correction_factor(double wavelength, const CrystalSpec& crystal,
                              double pump_wavelength);

} // namespace pdcalib
