#include "pdcalib/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t stream_id) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream_id + 1)));
}

} // namespace

double DetectorTruth::response_at(double wavelength) const {
  if (wavelength <= response_grid.front()) return response.front();
  if (wavelength >= response_grid.back()) return response.back();
  const auto it = std::upper_bound(response_grid.begin(), response_grid.end(), wavelength);
  const std::size_t hi = std::size_t(it - response_grid.begin());
  const std::size_t lo = hi - 1;
  const double t = (wavelength - response_grid[lo]) / (response_grid[hi] - response_grid[lo]);
  return response[lo] + t * (response[hi] - response[lo]);
}

void DetectorTruth::validate(double pump_wavelength,
                             const DetectionGeometry* geometry) const {
  if (response_grid.size() != response.size() || response_grid.size() < 2) {
    throw ConfigError("detector truth needs a response tabulated on >= 2 points");
  }
  for (std::size_t i = 1; i < response_grid.size(); ++i) {
    if (!(response_grid[i] > response_grid[i - 1])) {
      throw ConfigError("truth response grid must be strictly increasing");
    }
  }
  for (double r : response) {
    if (r < 0.0 || r > 1.5) throw ConfigError("truth response must stay within [0, 1.5]");
  }
  if (!(scale_alpha > 0.0) || scale_alpha > 1.0) {
    throw ConfigError("truth alpha must lie in (0, 1]");
  }
  const double r_deg = response_at(2.0 * pump_wavelength);
  if (std::abs(r_deg - 1.0) > 1e-9) {
    throw ConfigError("truth response must be 1 at the degenerate wavelength");
  }
  if (pixel_grid.size() < 2) throw ConfigError("pixel grid needs >= 2 points");
  for (std::size_t i = 1; i < pixel_grid.size(); ++i) {
    if (!(pixel_grid[i] > pixel_grid[i - 1])) {
      throw ConfigError("pixel grid must be strictly increasing");
    }
  }
  if (geometry) {
    const double spacing = pixel_grid[1] - pixel_grid[0];
    if (std::abs(spacing - geometry->pixel_bandwidth) > 1e-6 * geometry->pixel_bandwidth) {
      throw ConfigError("pixel grid spacing inconsistent with the pixel bandwidth");
    }
  }
}

std::vector<double> drift_sequence(std::size_t n, const NoiseModel& noise,
                                   std::uint64_t seed) {
  std::vector<double> drift(n, 1.0);
  const double amplitude = noise.pump_drift_amplitude;
  if (amplitude <= 0.0 || n == 0) return drift;
  if (amplitude >= 0.5) throw ConfigError("pump drift amplitude must be < 0.5");
  // laser drift is slow against the shot sequence; default to a gentle walk
  const double step =
      noise.pump_drift_step > 0.0 ? noise.pump_drift_step : amplitude / 25.0;

  auto rng = stream_for(seed, 0xD81F7ull);
  std::uniform_real_distribution<double> u(-step, step);
  double level = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    level += u(rng);
    // reflect into (1 - A, 1 + A)
    if (level > 1.0 + amplitude) level = 2.0 * (1.0 + amplitude) - level;
    if (level < 1.0 - amplitude) level = 2.0 * (1.0 - amplitude) - level;
    drift[j] = level;
  }
  return drift;
}

namespace {

std::vector<double> expected_counts(const CrystalSpec& crystal, const PumpSpec& pump,
                                    const DetectionGeometry& geometry,
                                    const DetectorTruth& truth, double gain_deg,
                                    bool dispersion_correction, double tilt,
                                    Regime regime) {
  GainParams record_gain;
  record_gain.gain_reference = gain_deg;
  record_gain.use_dispersion_correction = dispersion_correction;

  std::vector<double> expected(truth.pixel_grid.size(), 0.0);
  for (std::size_t i = 0; i < truth.pixel_grid.size(); ++i) {
    const double wl = truth.pixel_grid[i];
    const PlaneWaveMode mode{wl, 0.0};
    double n = 0.0;
    try {
      const double g = effective_gain(wl, crystal, pump.wavelength_p, record_gain);
      n = per_mode_photons(mode, tilt, crystal, pump.wavelength_p, g, regime);
    } catch (const DomainError&) {
      n = 0.0;  // outside the emission range: dark pixel, not an error
    }
    expected[i] = truth.scale_alpha * truth.response_at(wl) *
                  detected_photons(wl, n, geometry);
  }
  return expected;
}

void apply_noise(std::vector<double>& counts, const NoiseModel& noise,
                 std::mt19937_64& rng) {
  if (noise.shot_noise) {
    for (double& c : counts) {
      if (c > 0.0) {
        std::poisson_distribution<long long> poisson(c);
        c = double(poisson(rng));
      }
    }
  }
  if (noise.readout_sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, noise.readout_sigma);
    for (double& c : counts) c += gauss(rng);
  }
  if (noise.shot_noise || noise.readout_sigma > 0.0) {
    for (double& c : counts) c = std::max(0.0, c);
  }
}

} // namespace

std::vector<SpectrumRecord> synthesize_tilt_scan(
    const CrystalSpec& crystal, const PumpSpec& pump,
    const DetectionGeometry& geometry, const DetectorTruth& truth,
    const GainParams& gain, std::span<const double> tilt_schedule,
    const NoiseModel& noise, const SynthOptions& options) {
  if (tilt_schedule.empty()) throw SizeError("tilt schedule must not be empty");
  crystal.validate();
  pump.validate();
  geometry.validate(pump);
  truth.validate(pump.wavelength_p, &geometry);

  const std::vector<double> drift =
      drift_sequence(tilt_schedule.size(), noise, options.seed);

  std::vector<SpectrumRecord> records(tilt_schedule.size());
  for (std::size_t j = 0; j < tilt_schedule.size(); ++j) {
    SpectrumRecord& rec = records[j];
    rec.pixel_grid = truth.pixel_grid;
    rec.tilt = tilt_schedule[j];
    rec.spectrum_id = long(j);
    rec.acquisition_time = geometry.acquisition_time;
    rec.pump_energy_reading = options.pump_reading_scale * drift[j];
    rec.counts = expected_counts(crystal, pump, geometry, truth,
                                 gain.gain_reference * drift[j],
                                 gain.use_dispersion_correction, tilt_schedule[j],
                                 options.regime);
    auto rng = stream_for(options.seed, std::uint64_t(rec.spectrum_id));
    apply_noise(rec.counts, noise, rng);
  }
  return records;
}

std::vector<std::pair<double, double>> power_scan(
    const CrystalSpec& crystal, const PumpSpec& pump_base,
    const DetectionGeometry& geometry, const GainParams& gain,
    double wavelength_probe, double tilt, std::span<const double> energies,
    const NoiseModel& noise, const SynthOptions& options) {
  crystal.validate();
  pump_base.validate();
  geometry.validate(pump_base);

  const PlaneWaveMode mode{wavelength_probe, 0.0};
  std::vector<std::pair<double, double>> scan;
  scan.reserve(energies.size());
  auto rng = stream_for(options.seed, 0x505Cull);
  for (double energy : energies) {
    const double g = gain.gain_reference * std::sqrt(energy / pump_base.pulse_energy);
    const double n = per_mode_photons(mode, tilt, crystal, pump_base.wavelength_p, g,
                                      Regime::HighGain);
    std::vector<double> counts{detected_photons(wavelength_probe, n, geometry)};
    apply_noise(counts, noise, rng);
    scan.emplace_back(energy, counts[0]);
  }
  return scan;
}

std::vector<double> default_tilt_schedule(const CrystalSpec& crystal,
                                          double pump_wavelength, std::size_t count,
                                          double span, double end_offset) {
  if (count < 2) throw SizeError("tilt schedule needs at least 2 steps");
  const double t_degenerate =
      tilt_matching_wavelength(2.0 * pump_wavelength, crystal, pump_wavelength);
  const double t_end = t_degenerate + end_offset;
  std::vector<double> schedule(count);
  for (std::size_t i = 0; i < count; ++i) {
    schedule[i] = t_end - span + span * double(i) / double(count - 1);
  }
  return schedule;
}

} // namespace pdcalib
