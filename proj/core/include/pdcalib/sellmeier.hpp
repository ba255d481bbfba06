#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pdcalib {

/// Closed wavelength interval [m].
struct WavelengthRange {
  double min = 0.0;
  double max = 0.0;

  bool contains(double wavelength) const {
    return wavelength >= min && wavelength <= max;
  }
};

/// Supported dispersion formula variants. Wavelengths enter in micrometres.
enum class SellmeierForm {
  /// n^2 = A + B / (lambda^2 - C) - D lambda^2, coefficients [A, B, C, D].
  OffsetPole,
  /// n^2 = A + sum_i B_i lambda^2 / (lambda^2 - C_i),
  /// coefficients [A, B1, C1, B2, C2, ...].
  PoleSum,
};

/// Dispersion data for a uniaxial crystal: one coefficient set for the
/// ordinary index, one for the principal extraordinary index.
struct SellmeierSet {
  SellmeierForm form = SellmeierForm::OffsetPole;
  std::vector<double> ordinary_coefficients;
  std::vector<double> extraordinary_coefficients;
  WavelengthRange valid_range;
  std::string source;

  /// Throws ConfigError on malformed coefficients or a range over which
  /// either index drops below 1.
  void validate() const;
};

/// Ordinary refractive index n_o(lambda). Throws RangeError outside
/// valid_range (the message names the interval).
double index_ordinary(double wavelength, const SellmeierSet& sellmeier);

/// Principal extraordinary index n_e(lambda).
double index_extraordinary_principal(double wavelength, const SellmeierSet& sellmeier);

/// Extraordinary index at angle theta between wave vector and optic axis:
/// n(theta)^-2 = cos^2(theta)/n_o^2 + sin^2(theta)/n_e^2.
double index_extraordinary(double wavelength, double optic_axis_angle,
                           const SellmeierSet& sellmeier);

/// Bundled beta-BaB2O4 coefficient set (see data/bbo_eimerl_1987.json for
/// provenance). The shipped range spans the transparency window; beyond the
/// source's quoted fit range the same polynomial is extrapolated.
SellmeierSet bbo_sellmeier();

/// Key-value coefficient file, documented in the README. Throws IoError /
/// ConfigError.
SellmeierSet load_sellmeier(const std::filesystem::path& file);
void save_sellmeier(const SellmeierSet& sellmeier, const std::filesystem::path& file);

/// Resolves "builtin:bbo" or a filesystem path.
SellmeierSet resolve_sellmeier(const std::string& reference);

} // namespace pdcalib
