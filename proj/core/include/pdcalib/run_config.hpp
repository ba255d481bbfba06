#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdcalib/dataset_io.hpp"

namespace pdcalib {

/// Everything a CLI run needs, parsed strictly from one JSON file: unknown
/// keys are rejected and referenced files must exist at load time.
struct RunConfig {
  CrystalSpec crystal;
  PumpSpec pump;
  DetectionGeometry geometry;
  GainParams gain;
  Regime regime = Regime::Spontaneous;

  std::vector<double> tilt_schedule;
  std::vector<double> pixel_grid;

  NoiseModel noise;
  DetectorTruth truth;

  // calibration options
  double filter_cutoff = 1.0;
  ResponseOptions response_options;
  AbsoluteFitOptions fit_options;

  // power scan
  std::optional<double> probe_wavelength;
  std::vector<double> scan_energies;

  // inspect grids
  double inspect_min = 560e-9, inspect_max = 860e-9, inspect_step = 1e-9;
  double map_theta_max = 0.05;
  std::size_t map_theta_points = 81, map_lambda_points = 301;

  struct Paths {
    std::filesystem::path dataset_dir;
    std::filesystem::path lowgain_dataset_dir;
    std::filesystem::path response_file;
    std::filesystem::path result_file;
    std::filesystem::path truth_file;
    std::filesystem::path lamp_file;
    std::filesystem::path budget_file;
    std::filesystem::path report_file;
  } paths;

  std::uint64_t seed = 0;
  std::string config_hash;  ///< over the canonical config text + seed
};

/// Parses and validates; throws ConfigError / IoError. `seed_override`
/// replaces the configured seed (and enters the provenance hash).
RunConfig load_run_config(const std::filesystem::path& file,
                          std::optional<std::uint64_t> seed_override = {},
                          const std::filesystem::path& out_dir = {});

} // namespace pdcalib
