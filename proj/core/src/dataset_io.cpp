#include "pdcalib/dataset_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require_keys(const json& j, std::initializer_list<const char*> keys,
                  const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : keys) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json sellmeier_to_json(const SellmeierSet& s) {
  json j;
  j["form"] = s.form == SellmeierForm::OffsetPole ? "offset_pole" : "pole_sum";
  j["ordinary"] = s.ordinary_coefficients;
  j["extraordinary"] = s.extraordinary_coefficients;
  j["valid_range_nm"] = {s.valid_range.min / nm, s.valid_range.max / nm};
  j["source"] = s.source;
  return j;
}

SellmeierSet sellmeier_from_json(const json& j, const std::string& where) {
  require_keys(j, {"form", "ordinary", "extraordinary", "valid_range_nm", "source"},
               where);
  SellmeierSet s;
  const std::string name = j.at("form").get<std::string>();
  if (name == "offset_pole") {
    s.form = SellmeierForm::OffsetPole;
  } else if (name == "pole_sum") {
    s.form = SellmeierForm::PoleSum;
  } else {
    throw ConfigError("unknown Sellmeier form '" + name + "' in " + where);
  }
  s.ordinary_coefficients = j.at("ordinary").get<std::vector<double>>();
  s.extraordinary_coefficients = j.at("extraordinary").get<std::vector<double>>();
  const auto range = j.at("valid_range_nm").get<std::vector<double>>();
  if (range.size() != 2) throw ConfigError("valid_range_nm must hold [min, max]");
  s.valid_range = {range[0] * nm, range[1] * nm};
  s.source = j.value("source", "");
  return s;
}

json open_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("malformed JSON in " + file.string() + ": " + e.what());
  }
  return j;
}

void dump_json(const json& j, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + file.string());
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::string hash_hex(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, value);
  return buf;
}

std::string spectrum_filename(long spectrum_id, double tilt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "spec_%05ld_tilt_%+011.7f.csv", spectrum_id,
                rad_to_deg(tilt));
  return buf;
}

void write_spectrum_csv(const std::filesystem::path& file, const SpectrumRecord& record) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write spectrum file " + file.string());
  out << "wavelength_nm,counts\n";
  for (std::size_t i = 0; i < record.pixel_grid.size(); ++i) {
    out << format_double(record.pixel_grid[i] / nm) << ","
        << format_double(record.counts[i]) << "\n";
  }
  if (!out) throw IoError("write failed for " + file.string());
}

void read_spectrum_csv(const std::filesystem::path& file, SpectrumRecord& record) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open spectrum file " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != "wavelength_nm,counts") {
    throw ConfigError("bad spectrum header in " + file.string());
  }
  record.pixel_grid.clear();
  record.counts.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("bad spectrum row in " + file.string());
    }
    record.pixel_grid.push_back(std::stod(line.substr(0, comma)) * nm);
    record.counts.push_back(std::stod(line.substr(comma + 1)));
  }
  if (record.pixel_grid.size() < 2) {
    throw ConfigError("spectrum file " + file.string() + " holds fewer than 2 pixels");
  }
}

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string());

  json meta;
  meta["schema"] = "pdcalib-dataset-v1";
  meta["config_hash"] = bundle.config_hash;
  meta["seed"] = bundle.seed;
  meta["regime"] = bundle.regime == Regime::Spontaneous ? "spontaneous" : "high_gain";
  meta["truth_reference"] = bundle.truth_reference;

  meta["crystal"] = {{"thickness_m", bundle.crystal.thickness},
                     {"cut_angle_rad", bundle.crystal.cut_angle},
                     {"chi2_reference_m_per_v", bundle.crystal.chi2_reference},
                     {"tilt_is_external", bundle.crystal.tilt_is_external},
                     {"sellmeier", sellmeier_to_json(bundle.crystal.sellmeier)}};
  meta["pump"] = {{"wavelength_m", bundle.pump.wavelength_p},
                  {"pulse_energy_j", bundle.pump.pulse_energy},
                  {"pulse_duration_s", bundle.pump.pulse_duration},
                  {"repetition_rate_hz", bundle.pump.repetition_rate},
                  {"beam_area_m2", bundle.pump.beam_area},
                  {"field_amplitude_v_per_m", bundle.pump.field_amplitude},
                  {"conversion_index", bundle.pump.conversion_index}};
  meta["geometry"] = {{"solid_angle_sr", bundle.geometry.solid_angle},
                      {"pixel_bandwidth_m", bundle.geometry.pixel_bandwidth},
                      {"acquisition_time_s", bundle.geometry.acquisition_time},
                      {"pulses_per_acquisition", bundle.geometry.pulses_per_acquisition},
                      {"gamma_m4_sr", bundle.geometry.gamma}};
  meta["gain"] = {{"reference", bundle.gain.gain_reference},
                  {"pump_normalized_m_per_v", bundle.gain.pump_normalized_gain},
                  {"use_dispersion_correction", bundle.gain.use_dispersion_correction}};

  json records = json::array();
  for (const auto& rec : bundle.records) {
    const std::string filename = spectrum_filename(rec.spectrum_id, rec.tilt);
    records.push_back({{"id", rec.spectrum_id},
                       {"file", filename},
                       {"tilt_rad", rec.tilt},
                       {"pump_energy_reading", rec.pump_energy_reading},
                       {"acquisition_time_s", rec.acquisition_time}});
    write_spectrum_csv(dir / filename, rec);
  }
  meta["records"] = std::move(records);
  dump_json(meta, dir / "dataset.json");
}

DatasetBundle read_bundle(const std::filesystem::path& dir) {
  const json meta = open_json(dir / "dataset.json");
  if (meta.value("schema", "") != "pdcalib-dataset-v1") {
    throw ConfigError("unrecognized dataset schema in " + dir.string());
  }

  DatasetBundle bundle;
  try {
    bundle.config_hash = meta.value("config_hash", "");
    bundle.seed = meta.value("seed", std::uint64_t{0});
    bundle.regime = meta.value("regime", "spontaneous") == "high_gain"
                        ? Regime::HighGain
                        : Regime::Spontaneous;
    bundle.truth_reference = meta.value("truth_reference", "");

    const json& c = meta.at("crystal");
    bundle.crystal.thickness = c.at("thickness_m").get<double>();
    bundle.crystal.cut_angle = c.at("cut_angle_rad").get<double>();
    bundle.crystal.chi2_reference = c.at("chi2_reference_m_per_v").get<double>();
    bundle.crystal.tilt_is_external = c.at("tilt_is_external").get<bool>();
    bundle.crystal.sellmeier = sellmeier_from_json(c.at("sellmeier"), "dataset crystal");

    const json& p = meta.at("pump");
    bundle.pump.wavelength_p = p.at("wavelength_m").get<double>();
    bundle.pump.pulse_energy = p.at("pulse_energy_j").get<double>();
    bundle.pump.pulse_duration = p.at("pulse_duration_s").get<double>();
    bundle.pump.repetition_rate = p.at("repetition_rate_hz").get<double>();
    bundle.pump.beam_area = p.at("beam_area_m2").get<double>();
    bundle.pump.field_amplitude = p.at("field_amplitude_v_per_m").get<double>();
    bundle.pump.conversion_index = p.at("conversion_index").get<double>();

    const json& g = meta.at("geometry");
    bundle.geometry.solid_angle = g.at("solid_angle_sr").get<double>();
    bundle.geometry.pixel_bandwidth = g.at("pixel_bandwidth_m").get<double>();
    bundle.geometry.acquisition_time = g.at("acquisition_time_s").get<double>();
    bundle.geometry.pulses_per_acquisition = g.at("pulses_per_acquisition").get<long>();
    bundle.geometry.gamma = g.at("gamma_m4_sr").get<double>();

    const json& gain = meta.at("gain");
    bundle.gain.gain_reference = gain.at("reference").get<double>();
    bundle.gain.pump_normalized_gain = gain.at("pump_normalized_m_per_v").get<double>();
    bundle.gain.use_dispersion_correction =
        gain.at("use_dispersion_correction").get<bool>();

    for (const json& r : meta.at("records")) {
      SpectrumRecord rec;
      rec.spectrum_id = r.at("id").get<long>();
      rec.tilt = r.at("tilt_rad").get<double>();
      rec.pump_energy_reading = r.at("pump_energy_reading").get<double>();
      rec.acquisition_time = r.at("acquisition_time_s").get<double>();
      read_spectrum_csv(dir / r.at("file").get<std::string>(), rec);
      bundle.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw ConfigError("invalid dataset metadata in " + dir.string() + ": " + e.what());
  }
  return bundle;
}

void write_truth(const DetectorTruth& truth, const std::filesystem::path& file) {
  json j;
  j["schema"] = "pdcalib-truth-v1";
  j["alpha"] = truth.scale_alpha;
  json grid = json::array(), resp = json::array(), px = json::array();
  for (double v : truth.response_grid) grid.push_back(v / nm);
  for (double v : truth.response) resp.push_back(v);
  for (double v : truth.pixel_grid) px.push_back(v / nm);
  j["response_grid_nm"] = std::move(grid);
  j["response"] = std::move(resp);
  j["pixel_grid_nm"] = std::move(px);
  dump_json(j, file);
}

DetectorTruth read_truth(const std::filesystem::path& file) {
  const json j = open_json(file);
  if (j.value("schema", "") != "pdcalib-truth-v1") {
    throw ConfigError("unrecognized truth schema in " + file.string());
  }
  DetectorTruth truth;
  truth.scale_alpha = j.at("alpha").get<double>();
  for (double v : j.at("response_grid_nm")) truth.response_grid.push_back(v * nm);
  for (double v : j.at("response")) truth.response.push_back(v);
  for (double v : j.at("pixel_grid_nm")) truth.pixel_grid.push_back(v * nm);
  return truth;
}

LampReference read_lamp_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open lamp file " + file.string());
  LampReference lamp;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (first) {
      first = false;
      if (line.find("wavelength_nm") != std::string::npos) continue;  // header
    }
    std::istringstream row(line);
    std::string cell;
    double values[3] = {0.0, 0.0, 0.0};
    int col = 0;
    while (std::getline(row, cell, ',') && col < 3) {
      values[col++] = std::stod(cell);
    }
    if (col != 3) throw ConfigError("lamp rows need wavelength_nm,response,uncertainty");
    lamp.wavelength.push_back(values[0] * nm);
    lamp.response.push_back(values[1]);
    lamp.uncertainty.push_back(values[2]);
  }
  if (lamp.wavelength.size() < 2) {
    throw ConfigError("lamp file " + file.string() + " holds fewer than 2 rows");
  }
  return lamp;
}

void write_lamp_csv(const std::filesystem::path& file, const LampReference& lamp) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write lamp file " + file.string());
  out << "wavelength_nm,response,uncertainty\n";
  for (std::size_t i = 0; i < lamp.wavelength.size(); ++i) {
    out << format_double(lamp.wavelength[i] / nm) << "," << format_double(lamp.response[i])
        << "," << format_double(lamp.uncertainty[i]) << "\n";
  }
}

void write_response_curve(const ResponseCurve& response, double pump_wavelength,
                          const std::string& provenance_hash,
                          const std::vector<std::string>& inputs,
                          const std::filesystem::path& file) {
  json j;
  j["schema"] = "pdcalib-response-v1";
  j["config_hash"] = provenance_hash;
  j["inputs"] = inputs;
  j["pump_wavelength_nm"] = pump_wavelength / nm;
  j["normalization_wavelength_nm"] = response.normalization_wavelength / nm;
  json wl = json::array(), r = json::array(), mask = json::array();
  for (std::size_t i = 0; i < response.wavelength_grid.size(); ++i) {
    wl.push_back(response.wavelength_grid[i] / nm);
    r.push_back(response.response[i]);
    mask.push_back(int(response.support_mask[i]));
  }
  j["wavelength_nm"] = std::move(wl);
  j["response"] = std::move(r);
  j["support"] = std::move(mask);
  j["warnings"] = response.warnings;
  dump_json(j, file);
}

ResponseCurve read_response_curve(const std::filesystem::path& file) {
  const json j = open_json(file);
  if (j.value("schema", "") != "pdcalib-response-v1") {
    throw ConfigError("unrecognized response schema in " + file.string());
  }
  ResponseCurve curve;
  curve.normalization_wavelength = j.at("normalization_wavelength_nm").get<double>() * nm;
  for (double v : j.at("wavelength_nm")) curve.wavelength_grid.push_back(v * nm);
  for (double v : j.at("response")) curve.response.push_back(v);
  for (int v : j.at("support")) curve.support_mask.push_back(std::uint8_t(v));
  for (const auto& w : j.value("warnings", std::vector<std::string>{})) {
    curve.warnings.push_back(w);
  }
  curve.validate();
  return curve;
}

void write_calibration_result(const CalibrationResult& result, double pump_wavelength,
                              const std::string& provenance_hash,
                              const std::vector<std::string>& inputs,
                              const std::filesystem::path& file) {
  json j;
  j["schema"] = "pdcalib-calibration-v1";
  j["config_hash"] = provenance_hash;
  j["inputs"] = inputs;
  j["pump_wavelength_nm"] = pump_wavelength / nm;
  j["alpha"] = result.alpha;
  j["alpha_sigma"] = result.alpha_sigma;
  j["pump_normalized_gain"] = result.pump_normalized_gain;
  j["pump_normalized_gain_sigma"] = result.pump_normalized_gain_sigma;
  j["covariance"] = result.covariance;
  j["residual_rms"] = result.residual_rms;
  j["alpha_elasticity_tau"] = result.alpha_elasticity_tau;
  j["alpha_elasticity_area"] = result.alpha_elasticity_area;
  j["iterations"] = result.diagnostics.iterations;
  j["gradient_norm"] = result.diagnostics.gradient_norm;
  j["objective_trace"] = result.diagnostics.objective_trace;
  j["warnings"] = result.warnings;

  json wl = json::array(), r = json::array(), eta = json::array(), mask = json::array();
  for (std::size_t i = 0; i < result.response.wavelength_grid.size(); ++i) {
    wl.push_back(result.response.wavelength_grid[i] / nm);
    r.push_back(result.response.response[i]);
    eta.push_back(result.efficiency[i]);
    mask.push_back(int(result.response.support_mask[i]));
  }
  j["wavelength_nm"] = std::move(wl);
  j["response"] = std::move(r);
  j["efficiency"] = std::move(eta);
  j["support"] = std::move(mask);

  json fit = json::object();
  json fwl = json::array(), fy = json::array(), fm = json::array(), fr = json::array();
  for (std::size_t i = 0; i < result.fit_wavelength.size(); ++i) {
    fwl.push_back(result.fit_wavelength[i] / nm);
    fy.push_back(result.fit_envelope[i]);
    fm.push_back(result.fit_model[i]);
    fr.push_back(result.fit_residuals[i]);
  }
  fit["wavelength_nm"] = std::move(fwl);
  fit["envelope"] = std::move(fy);
  fit["model"] = std::move(fm);
  fit["residuals"] = std::move(fr);
  j["fit"] = std::move(fit);
  dump_json(j, file);
}

std::vector<EfficiencyComponent> read_budget(const std::filesystem::path& file) {
  const json j = open_json(file);
  require_keys(j, {"schema", "components"}, file.string());
  if (j.value("schema", "") != "pdcalib-budget-v1") {
    throw ConfigError("unrecognized budget schema in " + file.string());
  }
  std::vector<EfficiencyComponent> components;
  for (const json& c : j.at("components")) {
    require_keys(c, {"name", "efficiency", "uncertainty", "multiplicity"},
                 file.string());
    EfficiencyComponent comp;
    comp.name = c.at("name").get<std::string>();
    comp.efficiency = c.at("efficiency").get<double>();
    comp.uncertainty = c.at("uncertainty").get<double>();
    comp.multiplicity = c.value("multiplicity", 1);
    components.push_back(std::move(comp));
  }
  return components;
}

void write_budget_report(const EfficiencyBudget& budget, const std::string& provenance_hash,
                         const std::filesystem::path& file) {
  json j;
  j["schema"] = "pdcalib-budget-report-v1";
  j["config_hash"] = provenance_hash;
  json comps = json::array();
  for (const auto& c : budget.components) {
    comps.push_back({{"name", c.name},
                     {"efficiency", c.efficiency},
                     {"uncertainty", c.uncertainty},
                     {"multiplicity", c.multiplicity}});
  }
  j["components"] = std::move(comps);
  j["total"] = budget.total;
  j["total_uncertainty"] = budget.total_uncertainty;
  j["total_uncertainty_independent"] = budget.total_uncertainty_independent;
  dump_json(j, file);
}

void write_map_table(const SpectralMap& map, const std::string& provenance_hash,
                     const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write map file " + file.string());
  out << "# pdcalib spectral map, provenance " << provenance_hash << "\n";
  out << "# lambda_nm:";
  for (double wl : map.wavelength_grid) out << " " << format_double(wl / nm);
  out << "\n# theta_rad:";
  for (double th : map.angle_grid) out << " " << format_double(th);
  out << "\n";
  for (std::size_t a = 0; a < map.angle_grid.size(); ++a) {
    for (std::size_t w = 0; w < map.wavelength_grid.size(); ++w) {
      if (w) out << " ";
      out << format_double(map.at(a, w));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for " + file.string());
}

void write_table(const std::filesystem::path& file, const std::string& provenance_hash,
                 const std::vector<std::string>& columns,
                 const std::vector<std::vector<double>>& data) {
  if (columns.size() != data.size()) throw SizeError("column/header mismatch");
  std::ofstream out(file);
  if (!out) throw IoError("cannot write table " + file.string());
  out << "# provenance " << provenance_hash << "\n#";
  for (const auto& c : columns) out << " " << c;
  out << "\n";
  const std::size_t rows = data.empty() ? 0 : data.front().size();
  for (const auto& col : data) {
    if (col.size() != rows) throw SizeError("ragged table columns");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < data.size(); ++c) {
      if (c) out << " ";
      out << format_double(data[c][r]);
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for " + file.string());
}

} // namespace pdcalib
