#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdcalib/synth.hpp"

namespace pdcalib {

/// Relative spectral response R(lambda), normalized to 1 at 2*lambda_p.
struct ResponseCurve {
  std::vector<double> wavelength_grid;     ///< [m]
  std::vector<double> response;
  double normalization_wavelength = 0.0;   ///< 2*lambda_p [m]
  std::vector<std::uint8_t> support_mask;  ///< 1 where lambda was phase matched
  std::vector<std::string> warnings;

  /// Linear interpolation; throws RangeError off the grid.
  double value_at(double wavelength) const;
  bool on_support(double wavelength) const;
  void validate() const;
};

struct FitDiagnostics {
  std::vector<double> objective_trace;  ///< accepted iterations, decreasing
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Output of the absolute calibration fit.
struct CalibrationResult {
  ResponseCurve response;
  double alpha = 0.0;
  double alpha_sigma = 0.0;
  double pump_normalized_gain = 0.0;        ///< per unit pump reading
  double pump_normalized_gain_sigma = 0.0;
  std::array<double, 4> covariance{};       ///< row-major over (alpha, gain)
  std::vector<double> efficiency;           ///< alpha * R on the response grid
  std::vector<double> fit_wavelength;       ///< envelope pixels used [m]
  std::vector<double> fit_envelope;         ///< Y(lambda)
  std::vector<double> fit_model;
  std::vector<double> fit_residuals;        ///< noise-normalized
  double residual_rms = 0.0;
  double alpha_elasticity_tau = 0.0;        ///< d ln(alpha) / d ln(tau_p)
  double alpha_elasticity_area = 0.0;       ///< d ln(alpha) / d ln(A_s)
  FitDiagnostics diagnostics;
  std::vector<std::string> warnings;
};

struct EfficiencyComponent {
  std::string name;
  double efficiency = 1.0;
  double uncertainty = 0.0;
  int multiplicity = 1;
};

/// Product of component efficiencies. The headline uncertainty follows the
/// fully-correlated (linear) propagation
///   sigma_rel = sum_i m_i sigma_i / eta_i,
/// the independent quadrature value is reported alongside.
struct EfficiencyBudget {
  std::vector<EfficiencyComponent> components;
  double total = 1.0;
  double total_uncertainty = 0.0;
  double total_uncertainty_independent = 0.0;
};

/// Hard spectral low-pass: frequency bins above cutoff_fraction of the
/// Nyquist band are zeroed; the zero-frequency bin is untouched, so summed
/// counts are preserved. Filtered counts may undershoot zero near sharp
/// features. Throws SizeError below 8 samples.
SpectrumRecord fourier_lowpass(const SpectrumRecord& record, double cutoff_fraction);

struct ResponseOptions {
  double noise_floor = 0.0;           ///< counts; support requires max_j M_j > floor
  double scallop_threshold = 0.02;    ///< relative dip that triggers the warning
};

/// Relative response from the envelope of tilt-scanned spectra:
///   R(lambda) = max_j [ M_j(lambda) / (D(lambda) w (w_p - w)) ],
/// normalized to 1 at 2*lambda_p. Throws DomainError when the grid does not
/// cover 2*lambda_p; a sparse scan attaches a scalloping warning.
ResponseCurve relative_response(const std::vector<SpectrumRecord>& records,
                                double pump_wavelength,
                                const ResponseOptions& options = {});

/// Displacement of a spectral peak from the phase-matched wavelength for a
/// Gaussian phase-matching profile of width sigma_lambda:
///   Lambda = sigma^2 (dR/dlambda) / R evaluated at lambda_pm + Lambda,
/// solved by fixed-point iteration (tolerance 1e-4 nm, cap 50).
double peak_shift_estimate(const ResponseCurve& response, double sigma_lambda,
                           double lambda_pm);

struct AbsoluteFitOptions {
  double degeneracy_threshold = 0.05;  ///< min sinh^2 distortion at the peak
  double weight_floor_fraction = 1e-6; ///< epsilon of 1/max(Y, eps), x max(Y)
  int max_iterations = 200;
  double objective_tolerance = 1e-10;  ///< relative objective change
  bool sensitivity_report = true;
};

/// Two-parameter fit of the high-gain envelope
///   Y(lambda) = max_j [ M_j / (R(lambda) lambda^-4 Gamma) ]
///             ~ alpha sinh^2(g E_j(lambda) q(lambda)),
/// over (alpha, g = gain per unit pump reading), weighted by 1/max(Y, eps).
/// Covariance comes from the Jacobian at the optimum. A shallow envelope
/// (no resolvable sinh^2 distortion) attaches the degeneracy warning.
CalibrationResult absolute_fit(const std::vector<SpectrumRecord>& records,
                               const ResponseCurve& response,
                               const DetectionGeometry& geometry,
                               double pump_wavelength,
                               const AbsoluteFitOptions& options = {});

struct EnvelopePrediction {
  std::vector<double> wavelength, observed, predicted;
  double residual_rms = 0.0;  ///< same noise units as the fit residuals
};

/// Envelope of a held-out dataset predicted from fitted (alpha, g) and the
/// dataset's own pump readings.
EnvelopePrediction predict_envelope(const CalibrationResult& result,
                                    const std::vector<SpectrumRecord>& records,
                                    const DetectionGeometry& geometry,
                                    double pump_wavelength);

struct EfficiencyTable {
  std::vector<double> wavelength, efficiency, uncertainty;
  std::vector<std::uint8_t> support_mask;
};

/// eta(lambda) = alpha * R(lambda); only the alpha uncertainty propagates.
EfficiencyTable quantum_efficiency(const CalibrationResult& result);

/// Largest pulse energy still predicted, within `tolerance`, by the straight
/// line through the origin anchored on the `reference_points` smallest
/// energies. Throws SizeError below 5 points.
double linearity_bound(const std::vector<std::pair<double, double>>& scan,
                       double tolerance = 0.10, int reference_points = 3);

struct LampReference {
  std::vector<double> wavelength, response, uncertainty;
};

struct DeviationReport {
  double scale = 1.0;                 ///< least-squares factor, lamp ~ scale * pdc
  std::vector<double> wavelength;
  std::vector<double> ratio;          ///< scale * pdc / lamp
  double rms_relative = 0.0;
  double in_band_fraction = 0.0;
};

/// Scales the lamp curve onto the PDC response with one least-squares factor
/// and reports pointwise agreement. Throws DomainError without overlap.
DeviationReport compare_reference(const ResponseCurve& pdc_response,
                                  const LampReference& lamp);

EfficiencyBudget budget_efficiency(const std::vector<EfficiencyComponent>& components);

} // namespace pdcalib
