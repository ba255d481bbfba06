#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pdcalib/pdc_model.hpp"

namespace pdcalib {

/// Ground-truth detector used to manufacture synthetic datasets.
struct DetectorTruth {
  std::vector<double> response_grid;  ///< [m]
  std::vector<double> response;       ///< R(lambda), R(2 lambda_p) = 1
  double scale_alpha = 1.0;           ///< alpha in (0, 1]
  std::vector<double> pixel_grid;     ///< virtual camera wavelengths [m]

  /// Linear interpolation of R; clamped at the tabulated ends.
  double response_at(double wavelength) const;

  void validate(double pump_wavelength, const DetectionGeometry* geometry = nullptr) const;
};

/// Shot noise, additive readout noise, and a deterministic pump-drift walk.
struct NoiseModel {
  bool shot_noise = false;
  double readout_sigma = 0.0;          ///< counts
  double pump_drift_amplitude = 0.0;   ///< relative walk bound, factors in (1-A, 1+A)
  double pump_drift_step = 0.0;        ///< uniform step half-width; 0 = amplitude/25

  static NoiseModel none() { return NoiseModel{}; }
  bool any() const {
    return shot_noise || readout_sigma > 0.0 || pump_drift_amplitude > 0.0;
  }
};

/// One measured or synthetic spectrum.
struct SpectrumRecord {
  std::vector<double> pixel_grid;     ///< [m]
  std::vector<double> counts;
  double tilt = 0.0;                  ///< [rad]
  double pump_energy_reading = 1.0;   ///< relative pump reading, proportional
                                      ///< to the pump field amplitude [arb]
  double acquisition_time = 0.0;      ///< [s]
  long spectrum_id = 0;
};

struct SynthOptions {
  Regime regime = Regime::Spontaneous;
  double pump_reading_scale = 1.0;   ///< reading units at nominal pump field
  std::uint64_t seed = 0;
};

/// Multiplicative pump-drift factors for n spectra: a seeded random walk
/// reflected inside (1 - A, 1 + A). Exposed so tests can freeze sequences.
std::vector<double> drift_sequence(std::size_t n, const NoiseModel& noise,
                                   std::uint64_t seed);

/// Forward model of a tilt scan: expected counts per pixel are
/// alpha R(lambda) * detected_photons(lambda, N(lambda, theta=0, tilt_j, G d_j)),
/// noise applied on top. Per-spectrum random streams are split by
/// spectrum_id, so any evaluation order yields identical output.
std::vector<SpectrumRecord> synthesize_tilt_scan(
    const CrystalSpec& crystal, const PumpSpec& pump,
    const DetectionGeometry& geometry, const DetectorTruth& truth,
    const GainParams& gain, std::span<const double> tilt_schedule,
    const NoiseModel& noise, const SynthOptions& options = {});

/// Counts at a phase-matched probe wavelength versus pump pulse energy
/// (unit-efficiency detector; the gain scales with sqrt(E)).
std::vector<std::pair<double, double>> power_scan(
    const CrystalSpec& crystal, const PumpSpec& pump_base,
    const DetectionGeometry& geometry, const GainParams& gain,
    double wavelength_probe, double tilt, std::span<const double> energies,
    const NoiseModel& noise, const SynthOptions& options = {});

/// Uniform tilt schedule of `count` steps spanning `span`, ending
/// `end_offset` past the collinear degenerate tilt (ascending).
std::vector<double> default_tilt_schedule(const CrystalSpec& crystal,
                                          double pump_wavelength,
                                          std::size_t count = 411,
                                          double span = 0.139626,
                                          double end_offset = 0.00349);

} // namespace pdcalib
