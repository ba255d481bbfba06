#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdcalib/calib.hpp"

namespace pdcalib {

/// A tilt-scan dataset on disk: one JSON metadata file plus one two-column
/// CSV per spectrum. Schemas are documented in the README and are stable.
struct DatasetBundle {
  CrystalSpec crystal;
  PumpSpec pump;
  DetectionGeometry geometry;
  GainParams gain;
  Regime regime = Regime::Spontaneous;
  std::uint64_t seed = 0;
  std::string truth_reference;  ///< relative path of the truth file, if any
  std::string config_hash;
  std::vector<SpectrumRecord> records;
};

std::string spectrum_filename(long spectrum_id, double tilt);

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle read_bundle(const std::filesystem::path& dir);

void write_spectrum_csv(const std::filesystem::path& file, const SpectrumRecord& record);
void read_spectrum_csv(const std::filesystem::path& file, SpectrumRecord& record);

void write_truth(const DetectorTruth& truth, const std::filesystem::path& file);
DetectorTruth read_truth(const std::filesystem::path& file);

/// Lamp reference: delimited text `wavelength_nm, response, uncertainty`.
LampReference read_lamp_csv(const std::filesystem::path& file);
void write_lamp_csv(const std::filesystem::path& file, const LampReference& lamp);

void write_response_curve(const ResponseCurve& response, double pump_wavelength,
                          const std::string& provenance_hash,
                          const std::vector<std::string>& inputs,
                          const std::filesystem::path& file);
ResponseCurve read_response_curve(const std::filesystem::path& file);

void write_calibration_result(const CalibrationResult& result, double pump_wavelength,
                              const std::string& provenance_hash,
                              const std::vector<std::string>& inputs,
                              const std::filesystem::path& file);

std::vector<EfficiencyComponent> read_budget(const std::filesystem::path& file);
void write_budget_report(const EfficiencyBudget& budget, const std::string& provenance_hash,
                         const std::filesystem::path& file);

/// Matrix as delimited text: two header rows carrying the wavelength and
/// angle grids, then one row of D*N values per angle.
void write_map_table(const SpectralMap& map, const std::string& provenance_hash,
                     const std::filesystem::path& file);

/// Generic delimited table with one comment header line of column names.
void write_table(const std::filesystem::path& file, const std::string& provenance_hash,
                 const std::vector<std::string>& columns,
                 const std::vector<std::vector<double>>& data);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t value);

} // namespace pdcalib
