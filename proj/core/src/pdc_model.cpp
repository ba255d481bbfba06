#include "pdcalib/pdc_model.hpp"

#include <cmath>
#include <sstream>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

double pump_field_amplitude(double energy, double duration, double area,
                            double conversion_index) {
  return std::sqrt(2.0 * energy /
                   (duration * area * kEpsilon0 * kSpeedOfLight * conversion_index));
}

PumpSpec PumpSpec::from_pulse_energy(double wavelength, double energy, double duration,
                                     double repetition_rate, double area,
                                     double conversion_index) {
  PumpSpec p;
  p.wavelength_p = wavelength;
  p.pulse_energy = energy;
  p.pulse_duration = duration;
  p.repetition_rate = repetition_rate;
  p.beam_area = area;
  p.conversion_index = conversion_index;
  p.field_amplitude = pump_field_amplitude(energy, duration, area, conversion_index);
  p.validate();
  return p;
}

PumpSpec PumpSpec::with_pulse_energy(double energy) const {
  PumpSpec p = *this;
  p.pulse_energy = energy;
  p.field_amplitude = field_amplitude * std::sqrt(energy / pulse_energy);
  return p;
}

void PumpSpec::validate() const {
  if (!(wavelength_p > 0.0) || !(pulse_energy > 0.0) || !(pulse_duration > 0.0) ||
      !(repetition_rate > 0.0) || !(beam_area > 0.0) || !(field_amplitude > 0.0)) {
    throw ConfigError("all pump parameters must be > 0");
  }
  const double expected =
      pump_field_amplitude(pulse_energy, pulse_duration, beam_area, conversion_index);
  if (std::abs(field_amplitude - expected) > 1e-9 * expected) {
    throw ConfigError("cached pump field amplitude inconsistent with pulse parameters");
  }
}

DetectionGeometry DetectionGeometry::make(double solid_angle, double pixel_bandwidth,
                                          double acquisition_time, const PumpSpec& pump) {
  DetectionGeometry g;
  g.solid_angle = solid_angle;
  g.pixel_bandwidth = pixel_bandwidth;
  g.acquisition_time = acquisition_time;
  g.pulses_per_acquisition =
      std::llround(pump.repetition_rate * acquisition_time);
  const double tau_s = double(g.pulses_per_acquisition) * pump.pulse_duration;
  g.gamma = solid_angle * pixel_bandwidth * pump.beam_area * kSpeedOfLight * tau_s;
  g.validate(pump);
  return g;
}

void DetectionGeometry::validate(const PumpSpec& pump) const {
  if (!(solid_angle > 0.0) || !(pixel_bandwidth > 0.0) || !(acquisition_time > 0.0)) {
    throw ConfigError("detection geometry parameters must be > 0");
  }
  if (pulses_per_acquisition < 1) {
    throw ConfigError("acquisition must span at least one pump pulse");
  }
  const double tau_s = double(pulses_per_acquisition) * pump.pulse_duration;
  const double expected =
      solid_angle * pixel_bandwidth * pump.beam_area * kSpeedOfLight * tau_s;
  if (std::abs(gamma - expected) > 1e-12 * expected) {
    throw ConfigError("cached gamma inconsistent with geometry factors");
  }
}

GainParams GainParams::from_pump(const CrystalSpec& crystal, const PumpSpec& pump) {
  GainParams g;
  g.gain_reference = coupling_gain(crystal, pump);
  g.pump_normalized_gain = g.gain_reference / pump.field_amplitude;
  return g;
}

void GainParams::validate(const PumpSpec& pump) const {
  if (gain_reference < 0.0) throw ConfigError("gain_reference must be >= 0");
  if (pump_normalized_gain != 0.0) {
    const double expected = pump_normalized_gain * pump.field_amplitude;
    if (std::abs(gain_reference - expected) > 1e-9 * std::max(1.0, expected)) {
      throw ConfigError("gain_reference inconsistent with pump_normalized_gain");
    }
  }
}

double mode_density(double wavelength) {
  if (!(wavelength > 0.0)) throw DomainError("wavelength must be > 0");
  const double inv = 1.0 / wavelength;
  return kTwoPi * kTwoPi * kTwoPi * inv * inv * inv * inv;
}

double q_normalized(double wavelength, double pump_wavelength) {
  const double w = angular_frequency(wavelength);
  const double wp = angular_frequency(pump_wavelength);
  if (!(w < wp)) throw DomainError("signal frequency at or above the pump frequency");
  return 2.0 * std::sqrt(w * (wp - w)) / wp;
}

double coupling_gain(const CrystalSpec& crystal, const PumpSpec& pump) {
  const double n_deg = index_ordinary(2.0 * pump.wavelength_p, crystal.sellmeier);
  const double g_time = crystal.thickness * crystal.chi2_reference *
                        pump.field_amplitude / (kSpeedOfLight * n_deg);
  return g_time * angular_frequency(pump.wavelength_p) / 2.0;
}

double gain_kernel(double z) {
  if (std::abs(z) < 1e-6) {
    return 1.0 + z / 3.0 + 2.0 * z * z / 45.0;
  }
  if (z > 0.0) {
    const double s = std::sinh(std::sqrt(z));
    return s * s / z;
  }
  const double s = std::sin(std::sqrt(-z));
  return s * s / (-z);
}

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

} // namespace

double per_mode_photons(const PlaneWaveMode& mode, double tilt,
                        const CrystalSpec& crystal, double pump_wavelength,
                        double gain_at_degeneracy, Regime regime) {
  const double q = q_normalized(mode.wavelength, pump_wavelength);
  const double half_mismatch =
      longitudinal_mismatch(mode, tilt, crystal, pump_wavelength) *
      crystal.thickness / 2.0;
  const double gq = gain_at_degeneracy * q;
  if (regime == Regime::Spontaneous) {
    const double s = sinc(half_mismatch);
    return gq * gq * s * s;
  }
  return gq * gq * gain_kernel(gq * gq - half_mismatch * half_mismatch);
}

double effective_gain(double wavelength, const CrystalSpec& crystal,
                      double pump_wavelength, const GainParams& gain) {
  if (!gain.use_dispersion_correction) return gain.gain_reference;
  return gain.gain_reference *
         std::sqrt(gain_correction_factor(wavelength, crystal, pump_wavelength));
}

double photon_number_spontaneous(const PlaneWaveMode& mode, double tilt,
                                 const CrystalSpec& crystal, const PumpSpec& pump) {
  return per_mode_photons(mode, tilt, crystal, pump.wavelength_p,
                          coupling_gain(crystal, pump), Regime::Spontaneous);
}

double photon_number_high_gain(const PlaneWaveMode& mode, double tilt,
                               const CrystalSpec& crystal, const PumpSpec& pump,
                               const GainParams& gain) {
  const double g = effective_gain(mode.wavelength, crystal, pump.wavelength_p, gain);
  return per_mode_photons(mode, tilt, crystal, pump.wavelength_p, g, Regime::HighGain);
}

double detected_photons(double wavelength, double per_mode_photons,
                        const DetectionGeometry& geometry) {
  if (per_mode_photons < 0.0) throw DomainError("per-mode photon number must be >= 0");
  const double two_pi_cubed = kTwoPi * kTwoPi * kTwoPi;
  return geometry.gamma * mode_density(wavelength) / two_pi_cubed * per_mode_photons;
}

double spectral_radiance(double wavelength, double per_mode_photons) {
  if (per_mode_photons < 0.0) throw DomainError("per-mode photon number must be >= 0");
  const double two_pi_cubed = kTwoPi * kTwoPi * kTwoPi;
  return kHBar * angular_frequency(wavelength) / two_pi_cubed * kSpeedOfLight *
         mode_density(wavelength) * per_mode_photons;
}

SpectralMap angular_spectral_map(std::span<const double> wavelength_grid,
                                 std::span<const double> angle_grid, double tilt,
                                 const CrystalSpec& crystal, const PumpSpec& pump,
                                 const GainParams& gain, Regime regime) {
  SpectralMap map;
  map.wavelength_grid.assign(wavelength_grid.begin(), wavelength_grid.end());
  map.angle_grid.assign(angle_grid.begin(), angle_grid.end());
  map.values.assign(wavelength_grid.size() * angle_grid.size(), 0.0);

  const double g0 = regime == Regime::Spontaneous ? coupling_gain(crystal, pump)
                                                  : gain.gain_reference;
  for (std::size_t a = 0; a < angle_grid.size(); ++a) {
    for (std::size_t w = 0; w < wavelength_grid.size(); ++w) {
      const PlaneWaveMode mode{wavelength_grid[w], angle_grid[a]};
      double n = 0.0;
      try {
        const double g = gain.use_dispersion_correction && regime == Regime::HighGain
                             ? effective_gain(mode.wavelength, crystal,
                                              pump.wavelength_p, gain)
                             : g0;
        n = per_mode_photons(mode, tilt, crystal, pump.wavelength_p, g, regime);
      } catch (const DomainError&) {
        n = 0.0;  // evanescent cell
      }
      map.values[a * wavelength_grid.size() + w] = mode_density(mode.wavelength) * n;
    }
  }
  return map;
}

} // namespace pdcalib
