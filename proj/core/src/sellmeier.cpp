#include "pdcalib/sellmeier.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

namespace {

double evaluate_n_squared(double lambda_um2, SellmeierForm form,
                          const std::vector<double>& c) {
  switch (form) {
    case SellmeierForm::OffsetPole:
      return c[0] + c[1] / (lambda_um2 - c[2]) - c[3] * lambda_um2;
    case SellmeierForm::PoleSum: {
      double n2 = c[0];
      for (std::size_t i = 1; i + 1 < c.size(); i += 2) {
        n2 += c[i] * lambda_um2 / (lambda_um2 - c[i + 1]);
      }
      return n2;
    }
  }
  throw ConfigError("unknown Sellmeier form");
}

void check_coefficients(SellmeierForm form, const std::vector<double>& c,
                        const char* which) {
  if (form == SellmeierForm::OffsetPole && c.size() != 4) {
    throw ConfigError(std::string("offset_pole form needs 4 ") + which +
                      " coefficients, got " + std::to_string(c.size()));
  }
  if (form == SellmeierForm::PoleSum && (c.size() < 3 || c.size() % 2 == 0)) {
    throw ConfigError(std::string("pole_sum form needs an odd number >= 3 of ") +
                      which + " coefficients, got " + std::to_string(c.size()));
  }
}

double index_from(double wavelength, const SellmeierSet& s,
                  const std::vector<double>& coefficients) {
  if (!s.valid_range.contains(wavelength)) {
    std::ostringstream msg;
    msg << "wavelength " << wavelength * 1e9 << " nm outside Sellmeier validity ["
        << s.valid_range.min * 1e9 << ", " << s.valid_range.max * 1e9 << "] nm";
    throw RangeError(msg.str());
  }
  const double lum = wavelength / um;
  const double n2 = evaluate_n_squared(lum * lum, s.form, coefficients);
  if (!(n2 > 0.0) || !std::isfinite(n2)) {
    throw NumericalError("Sellmeier evaluation produced a non-physical index");
  }
  return std::sqrt(n2);
}

std::string form_name(SellmeierForm form) {
  return form == SellmeierForm::OffsetPole ? "offset_pole" : "pole_sum";
}

SellmeierForm form_from_name(const std::string& name) {
  if (name == "offset_pole") return SellmeierForm::OffsetPole;
  if (name == "pole_sum") return SellmeierForm::PoleSum;
  throw ConfigError("unknown Sellmeier form '" + name + "'");
}

} // namespace

void SellmeierSet::validate() const {
  check_coefficients(form, ordinary_coefficients, "ordinary");
  check_coefficients(form, extraordinary_coefficients, "extraordinary");
  if (!(valid_range.min > 0.0) || !(valid_range.max > valid_range.min)) {
    throw ConfigError("Sellmeier valid_range must satisfy 0 < min < max");
  }
  // n >= 1 over the range, probed on a uniform sample
  const int samples = 257;
  for (int i = 0; i < samples; ++i) {
    const double wl = valid_range.min +
                      (valid_range.max - valid_range.min) * i / (samples - 1);
    if (index_from(wl, *this, ordinary_coefficients) < 1.0 ||
        index_from(wl, *this, extraordinary_coefficients) < 1.0) {
      std::ostringstream msg;
      msg << "Sellmeier set yields n < 1 at " << wl * 1e9 << " nm";
      throw ConfigError(msg.str());
    }
  }
}

double index_ordinary(double wavelength, const SellmeierSet& sellmeier) {
  return index_from(wavelength, sellmeier, sellmeier.ordinary_coefficients);
}

double index_extraordinary_principal(double wavelength, const SellmeierSet& sellmeier) {
  return index_from(wavelength, sellmeier, sellmeier.extraordinary_coefficients);
}

double index_extraordinary(double wavelength, double optic_axis_angle,
                           const SellmeierSet& sellmeier) {
  if (optic_axis_angle < 0.0 || optic_axis_angle > kPi / 2.0 + 1e-12) {
    throw DomainError("optic axis angle must lie in [0, pi/2]");
  }
  const double no = index_ordinary(wavelength, sellmeier);
  if (optic_axis_angle == 0.0) return no;
  const double ne = index_extraordinary_principal(wavelength, sellmeier);
  const double s = std::sin(optic_axis_angle);
  const double c = std::cos(optic_axis_angle);
  const double inv_n2 = c * c / (no * no) + s * s / (ne * ne);
  return 1.0 / std::sqrt(inv_n2);
}

SellmeierSet bbo_sellmeier() {
  SellmeierSet s;
  s.form = SellmeierForm::OffsetPole;
  s.ordinary_coefficients = {2.7405, 0.0184, 0.0179, 0.0155};
  s.extraordinary_coefficients = {2.3730, 0.0128, 0.0156, 0.0044};
  s.valid_range = {220e-9, 3300e-9};
  s.source = "D. Eimerl, L. Davis, S. Velsko, E. K. Graham, A. Zalkin, "
             "J. Appl. Phys. 62, 1968 (1987); fit range 0.22-1.06 um, "
             "extrapolated over the transparency window";
  return s;
}

SellmeierSet load_sellmeier(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open Sellmeier file " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("malformed Sellmeier file " + file.string() + ": " + e.what());
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "form" && key != "ordinary" && key != "extraordinary" &&
        key != "valid_range_nm" && key != "source") {
      throw ConfigError("unknown key '" + key + "' in Sellmeier file " + file.string());
    }
  }
  SellmeierSet s;
  try {
    s.form = form_from_name(j.at("form").get<std::string>());
    s.ordinary_coefficients = j.at("ordinary").get<std::vector<double>>();
    s.extraordinary_coefficients = j.at("extraordinary").get<std::vector<double>>();
    const auto range = j.at("valid_range_nm").get<std::vector<double>>();
    if (range.size() != 2) throw ConfigError("valid_range_nm must hold [min, max]");
    s.valid_range = {range[0] * nm, range[1] * nm};
    s.source = j.value("source", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid Sellmeier file " + file.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_sellmeier(const SellmeierSet& s, const std::filesystem::path& file) {
  nlohmann::json j;
  j["form"] = form_name(s.form);
  j["ordinary"] = s.ordinary_coefficients;
  j["extraordinary"] = s.extraordinary_coefficients;
  j["valid_range_nm"] = {s.valid_range.min / nm, s.valid_range.max / nm};
  j["source"] = s.source;
  std::ofstream out(file);
  if (!out) throw IoError("cannot write Sellmeier file " + file.string());
  out << j.dump(2) << "\n";
}

SellmeierSet resolve_sellmeier(const std::string& reference) {
  if (reference == "builtin:bbo") return bbo_sellmeier();
  if (reference.rfind("builtin:", 0) == 0) {
    throw ConfigError("unknown builtin Sellmeier set '" + reference + "'");
  }
  return load_sellmeier(reference);
}

} // namespace pdcalib
