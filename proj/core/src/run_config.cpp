#include "pdcalib/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : keys) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown key '" + key + "' in config section " + where);
  }
}

double require_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing '" + std::string(key) + "' in " + where);
  if (!j.at(key).is_number()) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " must be a number");
  }
  return j.at(key).get<double>();
}

std::filesystem::path rebase(const std::filesystem::path& base,
                             const std::filesystem::path& p) {
  if (p.empty() || base.empty() || p.is_absolute()) return p;
  return base / p;
}

} // namespace

RunConfig load_run_config(const std::filesystem::path& file,
                          std::optional<std::uint64_t> seed_override,
                          const std::filesystem::path& out_dir) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }

  reject_unknown(j,
                 {"seed", "crystal", "pump", "geometry", "gain", "scan", "noise",
                  "truth", "calibration", "power_scan", "inspect", "paths"},
                 "(top level)");

  RunConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (seed_override) cfg.seed = *seed_override;

  const std::filesystem::path config_dir = file.parent_path();

  // ---- pump (needed before crystal-dependent pieces)
  bool has_pump = j.contains("pump");
  if (has_pump) {
    const json& p = j.at("pump");
    reject_unknown(p,
                   {"wavelength_nm", "pulse_energy_uj", "pulse_duration_ps",
                    "repetition_rate_hz", "beam_diameter_mm", "beam_area_mm2"},
                   "pump");
    const double wavelength = require_number(p, "wavelength_nm", "pump") * nm;
    const double energy = require_number(p, "pulse_energy_uj", "pump") * 1e-6;
    const double duration = require_number(p, "pulse_duration_ps", "pump") * 1e-12;
    const double rate = require_number(p, "repetition_rate_hz", "pump");
    double area = 0.0;
    if (p.contains("beam_area_mm2")) {
      area = p.at("beam_area_mm2").get<double>() * 1e-6;
    } else {
      const double d = require_number(p, "beam_diameter_mm", "pump") * mm;
      area = kPi * d * d / 4.0;
    }
    cfg.pump = PumpSpec::from_pulse_energy(wavelength, energy, duration, rate, area);
  }

  // ---- crystal
  if (j.contains("crystal")) {
    if (!has_pump) throw ConfigError("crystal section requires a pump section");
    const json& c = j.at("crystal");
    reject_unknown(c,
                   {"thickness_mm", "cut_angle_deg", "chi2_reference_pm_per_v",
                    "tilt_is_external", "sellmeier"},
                   "crystal");
    cfg.crystal.thickness = require_number(c, "thickness_mm", "crystal") * mm;
    cfg.crystal.chi2_reference =
        require_number(c, "chi2_reference_pm_per_v", "crystal") * 1e-12;
    cfg.crystal.tilt_is_external = c.value("tilt_is_external", true);

    if (!c.contains("sellmeier")) throw ConfigError("crystal.sellmeier is required");
    if (c.at("sellmeier").is_string()) {
      cfg.crystal.sellmeier = resolve_sellmeier(c.at("sellmeier").get<std::string>());
    } else {
      reject_unknown(c.at("sellmeier"), {"file"}, "crystal.sellmeier");
      const std::filesystem::path ref =
          rebase(config_dir, c.at("sellmeier").at("file").get<std::string>());
      if (!std::filesystem::exists(ref)) {
        throw ConfigError("Sellmeier file does not exist: " + ref.string());
      }
      cfg.crystal.sellmeier = load_sellmeier(ref);
    }

    if (!c.contains("cut_angle_deg")) throw ConfigError("crystal.cut_angle_deg is required");
    if (c.at("cut_angle_deg").is_string()) {
      if (c.at("cut_angle_deg").get<std::string>() != "degenerate") {
        throw ConfigError("crystal.cut_angle_deg must be a number or \"degenerate\"");
      }
      cfg.crystal.cut_angle =
          degenerate_cut_angle(cfg.crystal.sellmeier, cfg.pump.wavelength_p);
    } else {
      cfg.crystal.cut_angle = deg_to_rad(c.at("cut_angle_deg").get<double>());
    }
    cfg.crystal.validate();
  }

  // ---- geometry
  if (j.contains("geometry")) {
    if (!has_pump) throw ConfigError("geometry section requires a pump section");
    const json& g = j.at("geometry");
    reject_unknown(g,
                   {"pinhole_diameter_mm", "focal_length_mm", "solid_angle_sr",
                    "pixel_bandwidth_nm", "acquisition_time_s"},
                   "geometry");
    double solid_angle = 0.0;
    if (g.contains("solid_angle_sr")) {
      solid_angle = g.at("solid_angle_sr").get<double>();
    } else {
      const double d = require_number(g, "pinhole_diameter_mm", "geometry") * mm;
      const double f = require_number(g, "focal_length_mm", "geometry") * mm;
      solid_angle = kPi * (d / 2.0) * (d / 2.0) / (f * f);
    }
    cfg.geometry = DetectionGeometry::make(
        solid_angle, require_number(g, "pixel_bandwidth_nm", "geometry") * nm,
        require_number(g, "acquisition_time_s", "geometry"), cfg.pump);
  }

  // ---- gain
  if (j.contains("gain")) {
    const json& g = j.at("gain");
    reject_unknown(g, {"reference", "use_dispersion_correction", "regime"}, "gain");
    cfg.gain.gain_reference = require_number(g, "reference", "gain");
    cfg.gain.use_dispersion_correction = g.value("use_dispersion_correction", false);
    const std::string regime = g.value("regime", "spontaneous");
    if (regime == "spontaneous") {
      cfg.regime = Regime::Spontaneous;
    } else if (regime == "high_gain") {
      cfg.regime = Regime::HighGain;
    } else {
      throw ConfigError("gain.regime must be 'spontaneous' or 'high_gain'");
    }
  }

  // ---- scan: tilt schedule and pixel grid
  if (j.contains("scan")) {
    const json& s = j.at("scan");
    reject_unknown(s,
                   {"count", "span_deg", "end_offset_deg", "pixel_min_nm", "pixel_max_nm"},
                   "scan");
    const std::size_t count = s.value("count", std::size_t{411});
    const double span = deg_to_rad(s.value("span_deg", 8.0));
    const double offset = deg_to_rad(s.value("end_offset_deg", 0.2));
    cfg.tilt_schedule = default_tilt_schedule(cfg.crystal, cfg.pump.wavelength_p, count,
                                              span, offset);
    const double px_min = require_number(s, "pixel_min_nm", "scan") * nm;
    const double px_max = require_number(s, "pixel_max_nm", "scan") * nm;
    if (!(px_max > px_min)) throw ConfigError("scan pixel range is empty");
    const double dl = cfg.geometry.pixel_bandwidth;
    if (!(dl > 0.0)) throw ConfigError("scan section requires a geometry section");
    cfg.pixel_grid.clear();
    for (double center = px_min + dl / 2.0; center + dl / 2.0 <= px_max + 1e-15;
         center += dl) {
      cfg.pixel_grid.push_back(center);
    }
    if (cfg.pixel_grid.size() < 8) throw ConfigError("pixel grid is too short");
  }

  // ---- noise
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    reject_unknown(n, {"shot", "readout_sigma", "pump_drift", "pump_drift_step"}, "noise");
    cfg.noise.shot_noise = n.value("shot", false);
    cfg.noise.readout_sigma = n.value("readout_sigma", 0.0);
    cfg.noise.pump_drift_amplitude = n.value("pump_drift", 0.0);
    cfg.noise.pump_drift_step = n.value("pump_drift_step", 0.0);
  }

  // ---- truth
  if (j.contains("truth")) {
    if (cfg.pixel_grid.empty()) throw ConfigError("truth section requires a scan section");
    const json& t = j.at("truth");
    reject_unknown(t, {"alpha", "response"}, "truth");
    cfg.truth.scale_alpha = require_number(t, "alpha", "truth");
    cfg.truth.pixel_grid = cfg.pixel_grid;

    const json& r = t.contains("response") ? t.at("response") : json{{"type", "flat"}};
    const std::string type = r.value("type", "flat");
    const double lambda_deg = 2.0 * cfg.pump.wavelength_p;
    if (type == "flat") {
      reject_unknown(r, {"type"}, "truth.response");
      cfg.truth.response_grid = cfg.pixel_grid;
      cfg.truth.response.assign(cfg.pixel_grid.size(), 1.0);
    } else if (type == "step") {
      reject_unknown(r, {"type", "edge_nm", "low"}, "truth.response");
      const double edge = require_number(r, "edge_nm", "truth.response") * nm;
      const double low = r.value("low", 0.55);
      cfg.truth.response_grid = cfg.pixel_grid;
      cfg.truth.response.resize(cfg.pixel_grid.size());
      for (std::size_t i = 0; i < cfg.pixel_grid.size(); ++i) {
        cfg.truth.response[i] = cfg.pixel_grid[i] < edge ? 1.0 : low;
      }
      const double at_deg = lambda_deg < edge ? 1.0 : low;
      for (double& v : cfg.truth.response) v /= at_deg;
    } else if (type == "smooth") {
      reject_unknown(r, {"type", "slope", "amplitude", "period_nm"}, "truth.response");
      const double slope = r.value("slope", 0.1);
      const double amplitude = r.value("amplitude", 0.2);
      const double period = r.value("period_nm", 220.0) * nm;
      cfg.truth.response_grid = cfg.pixel_grid;
      cfg.truth.response.resize(cfg.pixel_grid.size());
      auto base = [&](double wl) {
        return 1.0 + slope * (wl - lambda_deg) / (100.0 * nm) +
               amplitude * std::cos(kTwoPi * (wl - lambda_deg) / period);
      };
      const double norm = base(lambda_deg);
      for (std::size_t i = 0; i < cfg.pixel_grid.size(); ++i) {
        cfg.truth.response[i] = base(cfg.pixel_grid[i]) / norm;
      }
    } else if (type == "table") {
      reject_unknown(r, {"type", "file"}, "truth.response");
      const std::filesystem::path ref =
          rebase(config_dir, r.at("file").get<std::string>());
      if (!std::filesystem::exists(ref)) {
        throw ConfigError("truth table does not exist: " + ref.string());
      }
      const DetectorTruth table = read_truth(ref);
      cfg.truth.response_grid = table.response_grid;
      cfg.truth.response = table.response;
    } else {
      throw ConfigError("truth.response.type must be flat, step, smooth, or table");
    }
    cfg.truth.validate(cfg.pump.wavelength_p, &cfg.geometry);
  }

  // ---- calibration knobs
  if (j.contains("calibration")) {
    const json& c = j.at("calibration");
    reject_unknown(c,
                   {"filter_cutoff", "noise_floor_counts", "scallop_threshold",
                    "degeneracy_threshold"},
                   "calibration");
    cfg.filter_cutoff = c.value("filter_cutoff", 1.0);
    if (!(cfg.filter_cutoff > 0.0) || cfg.filter_cutoff > 1.0) {
      throw ConfigError("calibration.filter_cutoff must lie in (0, 1]");
    }
    cfg.response_options.noise_floor = c.value("noise_floor_counts", 0.0);
    cfg.response_options.scallop_threshold = c.value("scallop_threshold", 0.02);
    cfg.fit_options.degeneracy_threshold = c.value("degeneracy_threshold", 0.05);
  }

  // ---- power scan
  if (j.contains("power_scan")) {
    const json& p = j.at("power_scan");
    reject_unknown(p, {"probe_wavelength_nm", "energies_uj"}, "power_scan");
    cfg.probe_wavelength = require_number(p, "probe_wavelength_nm", "power_scan") * nm;
    if (!p.contains("energies_uj")) throw ConfigError("power_scan.energies_uj is required");
    const json& e = p.at("energies_uj");
    if (e.is_array()) {
      for (double v : e) cfg.scan_energies.push_back(v * 1e-6);
    } else {
      reject_unknown(e, {"min", "max", "step"}, "power_scan.energies_uj");
      const double lo = require_number(e, "min", "power_scan.energies_uj");
      const double hi = require_number(e, "max", "power_scan.energies_uj");
      const double step = require_number(e, "step", "power_scan.energies_uj");
      if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("bad power-scan energy grid");
      for (double v = lo; v <= hi + 1e-9; v += step) cfg.scan_energies.push_back(v * 1e-6);
    }
    if (cfg.scan_energies.size() < 5) {
      throw ConfigError("power scan needs at least 5 energies");
    }
  }

  // ---- inspect grids
  if (j.contains("inspect")) {
    const json& i = j.at("inspect");
    reject_unknown(i,
                   {"dispersion_min_nm", "dispersion_max_nm", "dispersion_step_nm",
                    "map_theta_max_rad", "map_theta_points", "map_lambda_points"},
                   "inspect");
    cfg.inspect_min = i.value("dispersion_min_nm", 560.0) * nm;
    cfg.inspect_max = i.value("dispersion_max_nm", 860.0) * nm;
    cfg.inspect_step = i.value("dispersion_step_nm", 1.0) * nm;
    cfg.map_theta_max = i.value("map_theta_max_rad", 0.05);
    cfg.map_theta_points = i.value("map_theta_points", std::size_t{81});
    cfg.map_lambda_points = i.value("map_lambda_points", std::size_t{301});
  }

  // ---- paths
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    reject_unknown(p,
                   {"dataset_dir", "lowgain_dataset_dir", "response_file", "result_file",
                    "truth_file", "lamp_file", "budget_file", "report_file"},
                   "paths");
    auto get = [&](const char* key) -> std::filesystem::path {
      if (!p.contains(key)) return {};
      return rebase(out_dir, p.at(key).get<std::string>());
    };
    cfg.paths.dataset_dir = get("dataset_dir");
    cfg.paths.lowgain_dataset_dir = get("lowgain_dataset_dir");
    cfg.paths.response_file = get("response_file");
    cfg.paths.result_file = get("result_file");
    cfg.paths.truth_file = get("truth_file");
    cfg.paths.lamp_file = get("lamp_file");
    cfg.paths.budget_file = get("budget_file");
    cfg.paths.report_file = get("report_file");
  }

  std::ostringstream canonical;
  canonical << j.dump() << "#seed=" << cfg.seed;
  cfg.config_hash = hash_hex(fnv1a64(canonical.str()));
  return cfg;
}

} // namespace pdcalib
