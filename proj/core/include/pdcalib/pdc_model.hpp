#pragma once

#include <span>
#include <vector>

#include "pdcalib/dispersion.hpp"

namespace pdcalib {

/// Monochromatic plane-wave pump. The cached field amplitude assumes a
/// flat-top temporal and spatial profile:
///   E_p = sqrt(2 E / (tau_p A_s eps0 c n)),
/// with n the refractive index used for the conversion (stored so the cached
/// value stays auditable). Substitute your own field_amplitude for other
/// beam profiles.
struct PumpSpec {
  double wavelength_p = 0.0;     ///< [m]
  double pulse_energy = 0.0;     ///< E per pulse [J]
  double pulse_duration = 0.0;   ///< tau_p [s]
  double repetition_rate = 0.0;  ///< [1/s]
  double beam_area = 0.0;        ///< A_s [m^2]
  double field_amplitude = 0.0;  ///< E_p [V/m], cached
  double conversion_index = 1.0; ///< n used in the cached conversion

  static PumpSpec from_pulse_energy(double wavelength, double energy,
                                    double duration, double repetition_rate,
                                    double area, double conversion_index = 1.0);

  /// Same pump at a different pulse energy; the field scales with sqrt(E).
  PumpSpec with_pulse_energy(double energy) const;

  void validate() const;
};

/// Flat-top field amplitude from pulse energy [V/m].
double pump_field_amplitude(double energy, double duration, double area,
                            double conversion_index = 1.0);

/// Detected-mode geometry. gamma = dOmega * dLambda * A_s * c * tau_s with
/// tau_s = m * tau_p collapses every radiometric constant of the setup.
struct DetectionGeometry {
  double solid_angle = 0.0;          ///< dOmega [sr]
  double pixel_bandwidth = 0.0;      ///< dLambda [m]
  double acquisition_time = 0.0;     ///< [s]
  long pulses_per_acquisition = 0;   ///< m
  double gamma = 0.0;                ///< [m^4 sr]

  static DetectionGeometry make(double solid_angle, double pixel_bandwidth,
                                double acquisition_time, const PumpSpec& pump);

  /// Rechecks m >= 1 and that gamma matches its factors to 1e-12 relative.
  void validate(const PumpSpec& pump) const;
};

/// Parametric gain expressed as the dimensionless phase-matched exponent at
/// the degenerate wavelength, G = G_time * omega_p / 2. The per-wavelength
/// exponent is G * q(lambda) with q = Q(lambda)/Q(2 lambda_p).
struct GainParams {
  double gain_reference = 0.0;        ///< G at 2*lambda_p, dimensionless
  double pump_normalized_gain = 0.0;  ///< G per unit pump field [m/V]; 0 = unset
  bool use_dispersion_correction = false;

  /// First-principles gain from crystal and pump parameters.
  static GainParams from_pump(const CrystalSpec& crystal, const PumpSpec& pump);

  void validate(const PumpSpec& pump) const;
};

enum class Regime { Spontaneous, HighGain };

/// Mode density factor D(lambda) = (2 pi)^3 lambda^-4 [m^-4].
double mode_density(double wavelength);

/// q(lambda) = Q(lambda) / Q(2 lambda_p) = 2 sqrt(w (w_p - w)) / w_p.
/// Throws DomainError for w >= w_p.
double q_normalized(double wavelength, double pump_wavelength);

/// Dimensionless degenerate gain from first principles,
/// c^-1 L chi2 E_p / n_o(2 lp) * (w_p / 2).
double coupling_gain(const CrystalSpec& crystal, const PumpSpec& pump);

/// sinh^2(sqrt(z)) / z continued analytically through z = 0 (sin^2 branch for
/// z < 0, series for |z| < 1e-6).
double gain_kernel(double z);

/// Per-mode photon number at an explicit dimensionless degenerate gain.
/// Spontaneous: (g q)^2 sinc^2(dk L/2).
/// HighGain:    (g q)^2 * gain_kernel((g q)^2 - (dk L/2)^2).
double per_mode_photons(const PlaneWaveMode& mode, double tilt,
                        const CrystalSpec& crystal, double pump_wavelength,
                        double gain_at_degeneracy, Regime regime);

/// Effective dimensionless gain at a wavelength: gain_reference times the
/// optional sqrt of the gain-dispersion correction.
double effective_gain(double wavelength, const CrystalSpec& crystal,
                      double pump_wavelength, const GainParams& gain);

/// Spontaneous photon number per plane-wave mode,
/// N = G^2 w (w_p - w) sinc^2(dk L / 2), gain from first principles.
double photon_number_spontaneous(const PlaneWaveMode& mode, double tilt,
                                 const CrystalSpec& crystal, const PumpSpec& pump);

/// Arbitrary-gain photon number per plane-wave mode,
/// N = G^2 Q^2 / (G^2 Q^2 - (dk L/2)^2) * sinh^2 sqrt(G^2 Q^2 - (dk L/2)^2).
double photon_number_high_gain(const PlaneWaveMode& mode, double tilt,
                               const CrystalSpec& crystal, const PumpSpec& pump,
                               const GainParams& gain);

/// Photons reaching the detector in one acquisition:
/// gamma * D(lambda) * (2 pi)^-3 * N.
double detected_photons(double wavelength, double per_mode_photons,
                        const DetectionGeometry& geometry);

/// Spectral radiance hbar w (2 pi)^-3 c D(lambda) N [W m^-2 sr^-1 m^-1].
double spectral_radiance(double wavelength, double per_mode_photons);

/// Density map D(lambda) * N over wavelength and internal emission angle.
struct SpectralMap {
  std::vector<double> wavelength_grid;  ///< [m]
  std::vector<double> angle_grid;       ///< [rad]
  std::vector<double> values;           ///< row-major, angle rows x wavelength cols

  double at(std::size_t angle_index, std::size_t wavelength_index) const {
    return values[angle_index * wavelength_grid.size() + wavelength_index];
  }
};

/// Evanescent cells are recorded as zero, not errors.
SpectralMap angular_spectral_map(std::span<const double> wavelength_grid,
                                 std::span<const double> angle_grid, double tilt,
                                 const CrystalSpec& crystal, const PumpSpec& pump,
                                 const GainParams& gain,
                                 Regime regime = Regime::Spontaneous);

} // namespace pdcalib
