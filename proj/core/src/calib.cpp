#include "pdcalib/calib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#include <fftw3.h>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

namespace {

std::mutex g_fftw_planner_mutex;  // FFTW planning is not thread-safe

std::string format_nm(double wavelength) {
  std::ostringstream os;
  os << wavelength / nm << " nm";
  return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// ResponseCurve

double ResponseCurve::value_at(double wavelength) const {
  if (wavelength < wavelength_grid.front() || wavelength > wavelength_grid.back()) {
    throw RangeError("wavelength " + format_nm(wavelength) + " outside the response grid");
  }
  const auto it =
      std::upper_bound(wavelength_grid.begin(), wavelength_grid.end(), wavelength);
  std::size_t hi = std::size_t(it - wavelength_grid.begin());
  if (hi == 0) hi = 1;
  if (hi >= wavelength_grid.size()) hi = wavelength_grid.size() - 1;
  const std::size_t lo = hi - 1;
  const double t =
      (wavelength - wavelength_grid[lo]) / (wavelength_grid[hi] - wavelength_grid[lo]);
  return response[lo] + t * (response[hi] - response[lo]);
}

bool ResponseCurve::on_support(double wavelength) const {
  if (wavelength < wavelength_grid.front() || wavelength > wavelength_grid.back()) {
    return false;
  }
  const auto it =
      std::upper_bound(wavelength_grid.begin(), wavelength_grid.end(), wavelength);
  std::size_t hi = std::size_t(it - wavelength_grid.begin());
  if (hi == 0) hi = 1;
  if (hi >= wavelength_grid.size()) hi = wavelength_grid.size() - 1;
  return support_mask[hi - 1] && support_mask[hi];
}

void ResponseCurve::validate() const {
  if (wavelength_grid.size() != response.size() ||
      wavelength_grid.size() != support_mask.size() || wavelength_grid.size() < 2) {
    throw SizeError("response curve arrays are inconsistent");
  }
  if (std::abs(value_at(normalization_wavelength) - 1.0) > 1e-9) {
    throw NumericalError("response normalization is off at 2*lambda_p");
  }
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (support_mask[i] && response[i] < 0.0) {
      throw NumericalError("negative response on support at " +
                           format_nm(wavelength_grid[i]));
    }
  }
}

// ---------------------------------------------------------------------------
// Fourier low-pass

SpectrumRecord fourier_lowpass(const SpectrumRecord& record, double cutoff_fraction) {
  const std::size_t n = record.counts.size();
  if (n < 8) throw SizeError("spectrum too short to filter (need >= 8 samples)");
  if (!(cutoff_fraction > 0.0) || cutoff_fraction > 1.0) {
    throw RangeError("cutoff_fraction must lie in (0, 1]");
  }

  // Filter the even (mirrored) extension: the transform then sees no circular
  // jump between the two spectrum ends, which would otherwise ring across the
  // band edges. The filtered extension stays symmetric, so the half-array sum
  // is preserved through the untouched zero-frequency bin.
  const std::size_t ext = 2 * n;
  double* in = fftw_alloc_real(ext);
  fftw_complex* freq = fftw_alloc_complex(ext / 2 + 1);
  fftw_plan forward, backward;
  {
    std::lock_guard<std::mutex> lock(g_fftw_planner_mutex);
    forward = fftw_plan_dft_r2c_1d(int(ext), in, freq, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(int(ext), freq, in, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    in[i] = record.counts[i];
    in[ext - 1 - i] = record.counts[i];
  }
  fftw_execute(forward);

  // frequencies in units of the original sampling: Nyquist sits at bin n
  const double keep_below = cutoff_fraction * double(n) + 1e-9;
  for (std::size_t k = 0; k <= ext / 2; ++k) {
    if (double(k) > keep_below) {
      freq[k][0] = 0.0;
      freq[k][1] = 0.0;
    }
  }
  fftw_execute(backward);

  SpectrumRecord out = record;
  for (std::size_t i = 0; i < n; ++i) out.counts[i] = in[i] / double(ext);

  {
    std::lock_guard<std::mutex> lock(g_fftw_planner_mutex);
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  fftw_free(in);
  fftw_free(freq);
  return out;
}

// ---------------------------------------------------------------------------
// Envelope over a tilt scan

namespace {

struct Envelope {
  std::vector<double> counts_max;     // max_j M_j per pixel
  std::vector<std::size_t> maximizer; // argmax_j per pixel
};

void check_shared_grid(const std::vector<SpectrumRecord>& records) {
  if (records.empty()) throw SizeError("no spectra given");
  const auto& grid = records.front().pixel_grid;
  if (grid.size() < 2) throw SizeError("pixel grid needs >= 2 points");
  for (const auto& rec : records) {
    if (rec.pixel_grid.size() != grid.size() || rec.counts.size() != grid.size()) {
      throw SizeError("records do not share one pixel grid");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(rec.pixel_grid[i] - grid[i]) > 1e-12 * grid[i]) {
        throw SizeError("records do not share one pixel grid");
      }
    }
  }
}

Envelope build_envelope(const std::vector<SpectrumRecord>& records) {
  const std::size_t n = records.front().pixel_grid.size();
  Envelope env;
  env.counts_max.assign(n, -std::numeric_limits<double>::infinity());
  env.maximizer.assign(n, 0);
  for (std::size_t j = 0; j < records.size(); ++j) {
    const auto& counts = records[j].counts;
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[i] > env.counts_max[i]) {
        env.counts_max[i] = counts[i];
        env.maximizer[i] = j;
      }
    }
  }
  return env;
}

double interpolate(const std::vector<double>& grid, const std::vector<double>& value,
                   double x) {
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t hi = std::size_t(it - grid.begin());
  if (hi == 0) hi = 1;
  if (hi >= grid.size()) hi = grid.size() - 1;
  const std::size_t lo = hi - 1;
  const double t = (x - grid[lo]) / (grid[hi] - grid[lo]);
  return value[lo] + t * (value[hi] - value[lo]);
}

// Scallop depth of an under-sampled tilt scan: at each maximizer switch the
// envelope sits in the cusped valley where two neighboring spectra cross.
// Compare that valley level with the line through the peaks of the two
// adjacent envelope segments; a deep valley means the phase-matched tops do
// not overlap.
double worst_scallop(const std::vector<double>& env,
                     const std::vector<std::size_t>& maximizer,
                     const std::vector<std::uint8_t>& support,
                     std::size_t* where = nullptr) {
  std::vector<std::size_t> switches;
  for (std::size_t i = 1; i < maximizer.size(); ++i) {
    if (maximizer[i] != maximizer[i - 1] && support[i] && support[i - 1]) {
      switches.push_back(i);
    }
  }
  double worst = 0.0;
  for (std::size_t s = 0; s + 1 < switches.size(); ++s) {
    const std::size_t p = switches[s], q = switches[s + 1];
    if (q - p < 3) continue;
    bool segment_ok = true;
    std::size_t peak_left = p, peak_right = q;
    for (std::size_t k = p; k <= q; ++k) {
      if (!support[k]) {
        segment_ok = false;
        break;
      }
    }
    if (!segment_ok || s + 2 > switches.size()) continue;
    // peak of the segment left of q and right of q
    for (std::size_t k = p; k < q; ++k) {
      if (env[k] > env[peak_left]) peak_left = k;
    }
    const std::size_t r_end = s + 2 < switches.size()
                                  ? switches[s + 2]
                                  : std::min(maximizer.size() - 1, q + (q - p));
    bool right_ok = true;
    for (std::size_t k = q; k <= r_end; ++k) {
      if (k >= support.size() || !support[k]) {
        right_ok = false;
        break;
      }
    }
    if (!right_ok || r_end <= q) continue;
    for (std::size_t k = q; k <= r_end; ++k) {
      if (env[k] > env[peak_right]) peak_right = k;
    }
    if (peak_right <= peak_left) continue;
    // against the lower neighboring peak: immune to genuine response steps
    const double ridge = std::min(env[peak_left], env[peak_right]);
    if (ridge <= 0.0) continue;
    const double dip = 1.0 - env[q] / ridge;
    if (dip > worst) {
      worst = dip;
      if (where) *where = q;
    }
  }
  return worst;
}

} // namespace

ResponseCurve relative_response(const std::vector<SpectrumRecord>& records,
                                double pump_wavelength, const ResponseOptions& options) {
  check_shared_grid(records);
  const auto& grid = records.front().pixel_grid;
  const double w_p = angular_frequency(pump_wavelength);
  if (!(grid.front() > pump_wavelength)) {
    throw DomainError("pixel grid must lie red of the pump wavelength");
  }

  const Envelope env = build_envelope(records);

  const std::size_t n = grid.size();
  std::vector<double> raw(n, 0.0);
  std::vector<std::uint8_t> support(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = angular_frequency(grid[i]);
    raw[i] = env.counts_max[i] / (mode_density(grid[i]) * w * (w_p - w));
    support[i] = env.counts_max[i] > options.noise_floor ? 1 : 0;
  }

  const double lambda_deg = 2.0 * pump_wavelength;
  if (lambda_deg < grid.front() || lambda_deg > grid.back()) {
    throw DomainError("scan does not cover the degenerate wavelength " +
                      format_nm(lambda_deg) + "; normalization impossible");
  }
  {
    const auto it = std::upper_bound(grid.begin(), grid.end(), lambda_deg);
    std::size_t hi = std::size_t(it - grid.begin());
    if (hi == 0) hi = 1;
    if (hi >= n) hi = n - 1;
    if (!support[hi - 1] || !support[hi]) {
      throw DomainError("no usable counts at the degenerate wavelength " +
                        format_nm(lambda_deg) + "; normalization impossible");
    }
  }
  const double norm = interpolate(grid, raw, lambda_deg);
  if (!(norm > 0.0)) {
    throw DomainError("non-positive envelope at the degenerate wavelength");
  }

  ResponseCurve curve;
  curve.wavelength_grid = grid;
  curve.response.resize(n);
  for (std::size_t i = 0; i < n; ++i) curve.response[i] = raw[i] / norm;
  curve.normalization_wavelength = lambda_deg;
  curve.support_mask = std::move(support);

  std::size_t dip_at = 0;
  const double dip = worst_scallop(curve.response, env.maximizer, curve.support_mask,
                                   &dip_at);
  if (dip > options.scallop_threshold) {
    std::ostringstream msg;
    msg << "sparse scan: envelope scalloping of " << dip * 100.0 << "% near "
        << format_nm(grid[dip_at]) << " exceeds the " << options.scallop_threshold * 100.0
        << "% threshold";
    curve.warnings.push_back(msg.str());
  }
  curve.validate();
  return curve;
}

// ---------------------------------------------------------------------------
// Peak shift

double peak_shift_estimate(const ResponseCurve& response, double sigma_lambda,
                           double lambda_pm) {
  const auto& grid = response.wavelength_grid;
  if (lambda_pm < grid.front() || lambda_pm > grid.back()) {
    throw RangeError("lambda_pm " + format_nm(lambda_pm) + " outside the response grid");
  }
  if (!(response.value_at(lambda_pm) > 0.0)) {
    throw DomainError("response must be positive at lambda_pm");
  }

  // (1/R) dR/dlambda tabulated with centered differences
  const std::size_t n = grid.size();
  std::vector<double> log_slope(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    const double dr = response.response[hi] - response.response[lo];
    const double dl = grid[hi] - grid[lo];
    const double r = response.response[i];
    log_slope[i] = r > 0.0 ? dr / dl / r : 0.0;
  }

  const double tolerance = 1e-4 * nm;
  const double s2 = sigma_lambda * sigma_lambda;
  double shift = s2 * interpolate(grid, log_slope, lambda_pm);
  std::vector<double> trace{shift};
  for (int i = 0; i < 50; ++i) {
    const double x = lambda_pm + shift;
    if (x < grid.front() || x > grid.back()) {
      throw NumericalError("peak-shift iteration left the response grid at " +
                           format_nm(x));
    }
    const double next = s2 * interpolate(grid, log_slope, x);
    trace.push_back(next);
    const double delta = std::abs(next - shift);
    shift = next;
    if (delta < tolerance) return shift;
  }
  std::ostringstream msg;
  msg << "peak-shift fixed point did not converge; last iterates [nm]:";
  for (std::size_t i = trace.size() > 5 ? trace.size() - 5 : 0; i < trace.size(); ++i) {
    msg << " " << trace[i] / nm;
  }
  throw NumericalError(msg.str());
}

// ---------------------------------------------------------------------------
// Absolute fit

namespace {

struct FitData {
  std::vector<double> wavelength;  // pixels kept
  std::vector<double> y;           // envelope values
  std::vector<double> a;           // E_j(lambda) * q(lambda)
  std::vector<double> w;           // weights
};

double fit_objective(const FitData& d, double alpha, double g) {
  double chi2 = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double s = std::sinh(g * d.a[i]);
    const double r = d.y[i] - alpha * s * s;
    chi2 += d.w[i] * r * r;
  }
  return chi2;
}

// Gradient and Gauss-Newton normal matrix of the weighted least squares.
void fit_derivatives(const FitData& d, double alpha, double g, double grad[2],
                     double hess[3]) {
  grad[0] = grad[1] = 0.0;
  hess[0] = hess[1] = hess[2] = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double x = g * d.a[i];
    const double s = std::sinh(x);
    const double model = alpha * s * s;
    const double r = d.y[i] - model;
    const double da = s * s;                         // d model / d alpha
    const double dg = alpha * d.a[i] * std::sinh(2.0 * x);  // d model / d g
    grad[0] += -2.0 * d.w[i] * r * da;
    grad[1] += -2.0 * d.w[i] * r * dg;
    hess[0] += d.w[i] * da * da;
    hess[1] += d.w[i] * da * dg;
    hess[2] += d.w[i] * dg * dg;
  }
}

struct FitOptimum {
  double alpha = 0.0, g = 0.0, chi2 = 0.0;
  FitDiagnostics diagnostics;
};

// The model is linear in alpha, so alpha is profiled out in closed form and
// the search runs over the gain alone; this sidesteps the near-degenerate
// (alpha, g) valley of the joint problem.
double profiled_alpha(const FitData& d, double g) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double s = std::sinh(g * d.a[i]);
    const double s2 = s * s;
    num += d.w[i] * d.y[i] * s2;
    den += d.w[i] * s2 * s2;
  }
  return den > 0.0 ? num / den : 0.0;
}

double profiled_objective(const FitData& d, double g, double* alpha_out = nullptr) {
  const double alpha = profiled_alpha(d, g);
  if (alpha_out) *alpha_out = alpha;
  return fit_objective(d, alpha, g);
}

FitOptimum minimize_envelope_fit(const FitData& d, double g0, double a_max,
                                 const AbsoluteFitOptions& options) {
  // keep sinh^4 within double range
  const double g_cap = 85.0 / a_max;
  const double g_floor = 1e-9 / a_max;
  double lo = std::clamp(g0 / 30.0, g_floor, g_cap);
  double hi = std::clamp(g0 * 30.0, lo * (1.0 + 1e-12), g_cap);

  FitOptimum out;

  // coarse geometric bracket
  const int coarse = 121;
  double best_g = lo, best_phi = std::numeric_limits<double>::infinity();
  int best_index = 0;
  std::vector<double> gs(coarse), phis(coarse);
  for (int i = 0; i < coarse; ++i) {
    const double g = lo * std::pow(hi / lo, double(i) / double(coarse - 1));
    const double phi = profiled_objective(d, g);
    gs[i] = g;
    phis[i] = phi;
    if (phi < best_phi) {
      best_phi = phi;
      best_g = g;
      best_index = i;
    }
  }
  if (!std::isfinite(best_phi)) {
    throw NumericalError("absolute fit objective is not finite over the gain bracket");
  }
  out.diagnostics.objective_trace.push_back(best_phi);

  double a = gs[std::max(best_index - 1, 0)];
  double b = gs[std::min(best_index + 1, coarse - 1)];
  if (a >= b) {
    a = best_g * 0.5;
    b = std::min(best_g * 2.0, g_cap);
  }

  // golden-section refinement; the best-so-far objective is monotone
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = profiled_objective(d, x1), f2 = profiled_objective(d, x2);
  int iterations = 0;
  for (; iterations < options.max_iterations; ++iterations) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = profiled_objective(d, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = profiled_objective(d, x2);
    }
    const double f_best = std::min(f1, f2);
    if (f_best < out.diagnostics.objective_trace.back()) {
      out.diagnostics.objective_trace.push_back(f_best);
    }
    if ((b - a) < 1e-12 * std::max(b, 1e-30)) break;
  }
  out.g = 0.5 * (a + b);
  out.chi2 = profiled_objective(d, out.g, &out.alpha);
  if (out.chi2 < out.diagnostics.objective_trace.back()) {
    out.diagnostics.objective_trace.push_back(out.chi2);
  }
  out.diagnostics.iterations = iterations;
  out.diagnostics.converged = std::isfinite(out.chi2) && out.alpha > 0.0;

  double grad[2], hess[3];
  fit_derivatives(d, out.alpha, out.g, grad, hess);
  out.diagnostics.gradient_norm = std::hypot(grad[0], grad[1]);
  return out;
}

FitData assemble_fit_data(const std::vector<SpectrumRecord>& records,
                          const ResponseCurve& response,
                          const DetectionGeometry& geometry, double pump_wavelength,
                          double weight_floor_fraction) {
  check_shared_grid(records);
  const auto& grid = records.front().pixel_grid;
  const Envelope env = build_envelope(records);
  const double w_p = angular_frequency(pump_wavelength);

  FitData d;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double wl = grid[i];
    if (angular_frequency(wl) >= w_p) continue;
    if (!response.on_support(wl)) continue;
    const double r = response.value_at(wl);
    if (!(r > 1e-9)) continue;
    const double inv_l4 = 1.0 / (wl * wl * wl * wl);
    const double y = env.counts_max[i] / (r * inv_l4 * geometry.gamma);
    if (!(y > 0.0)) continue;
    d.wavelength.push_back(wl);
    d.y.push_back(y);
    d.a.push_back(records[env.maximizer[i]].pump_energy_reading *
                  q_normalized(wl, pump_wavelength));
  }
  if (d.y.size() < 8) {
    throw SizeError("too few usable envelope pixels for the absolute fit");
  }
  const double y_max = *std::max_element(d.y.begin(), d.y.end());
  const double floor = weight_floor_fraction * y_max;
  d.w.resize(d.y.size());
  for (std::size_t i = 0; i < d.y.size(); ++i) d.w[i] = 1.0 / std::max(d.y[i], floor);
  return d;
}

// g0 such that the model reproduces the observed peak-to-half-width ratio.
double initial_gain(const FitData& d) {
  std::size_t imax = 0;
  for (std::size_t i = 1; i < d.y.size(); ++i) {
    if (d.y[i] > d.y[imax]) imax = i;
  }
  const double y_max = d.y[imax];
  const double a_max = d.a[imax];

  // the pixel closest to half maximum with a distinct exponent lever
  std::size_t ihalf = imax;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    if (std::abs(d.a[i] - a_max) < 1e-6 * a_max) continue;
    const double miss = std::abs(d.y[i] - 0.5 * y_max);
    if (miss < best) {
      best = miss;
      ihalf = i;
    }
  }
  if (ihalf == imax) return 0.1;

  const double ratio = d.y[ihalf] / y_max;
  const double x_ratio = d.a[ihalf] / a_max;
  // parabola limit: ratio -> x_ratio^2; sinh^2 sharpens the peak beyond that
  if (ratio >= x_ratio * x_ratio || ratio <= 0.0) return 0.1;

  auto model_ratio = [&](double g) {
    const double s_half = std::sinh(g * d.a[ihalf]);
    const double s_max = std::sinh(g * a_max);
    return (s_half * s_half) / (s_max * s_max);
  };
  double lo = 1e-3, hi = 40.0;
  if (model_ratio(hi) > ratio) return hi;  // steeper than the bisection cap
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (model_ratio(mid) > ratio) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-10) break;
  }
  return 0.5 * (lo + hi);
}

} // namespace

CalibrationResult absolute_fit(const std::vector<SpectrumRecord>& records,
                               const ResponseCurve& response,
                               const DetectionGeometry& geometry,
                               double pump_wavelength, const AbsoluteFitOptions& options) {
  response.validate();
  FitData d = assemble_fit_data(records, response, geometry, pump_wavelength,
                                options.weight_floor_fraction);

  double a_max = 0.0, y_max = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    a_max = std::max(a_max, d.a[i]);
    y_max = std::max(y_max, d.y[i]);
  }

  const double g0 = initial_gain(d);
  FitOptimum lm = minimize_envelope_fit(d, g0, a_max, options);
  if (!lm.diagnostics.converged) {
    std::ostringstream msg;
    msg << "absolute fit did not converge after " << lm.diagnostics.iterations
        << " iterations; objective trace:";
    const auto& trace = lm.diagnostics.objective_trace;
    for (std::size_t i = trace.size() > 6 ? trace.size() - 6 : 0; i < trace.size(); ++i) {
      msg << " " << trace[i];
    }
    throw NumericalError(msg.str());
  }

  CalibrationResult result;
  result.response = response;
  result.alpha = lm.alpha;
  result.pump_normalized_gain = lm.g;
  result.diagnostics = lm.diagnostics;

  // covariance from the Gauss-Newton normal matrix at the optimum
  {
    double grad[2], hess[3];
    fit_derivatives(d, lm.alpha, lm.g, grad, hess);
    const double dof = double(d.y.size()) - 2.0;
    const double sigma2 = dof > 0.0 ? lm.chi2 / dof : 0.0;
    const double det = hess[0] * hess[2] - hess[1] * hess[1];
    if (det > 0.0) {
      result.covariance = {sigma2 * hess[2] / det, -sigma2 * hess[1] / det,
                           -sigma2 * hess[1] / det, sigma2 * hess[0] / det};
      result.alpha_sigma = std::sqrt(result.covariance[0]);
      result.pump_normalized_gain_sigma = std::sqrt(result.covariance[3]);
    } else {
      result.warnings.push_back("fit covariance singular; uncertainties unavailable");
    }
  }

  // a shallow envelope cannot separate alpha from the gain
  {
    const double x_peak = lm.g * a_max;
    const double distortion = gain_kernel(x_peak * x_peak) - 1.0;
    if (distortion < options.degeneracy_threshold) {
      result.warnings.push_back("gain unresolved; alpha degenerate with G^2");
    }
  }

  result.fit_wavelength = d.wavelength;
  result.fit_envelope = d.y;
  result.fit_model.resize(d.y.size());
  result.fit_residuals.resize(d.y.size());
  double chi2 = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double s = std::sinh(lm.g * d.a[i]);
    result.fit_model[i] = lm.alpha * s * s;
    result.fit_residuals[i] = (d.y[i] - result.fit_model[i]) * std::sqrt(d.w[i]);
    chi2 += result.fit_residuals[i] * result.fit_residuals[i];
  }
  result.residual_rms = std::sqrt(chi2 / double(d.y.size()));

  result.efficiency.resize(response.response.size());
  for (std::size_t i = 0; i < response.response.size(); ++i) {
    result.efficiency[i] = lm.alpha * response.response[i];
  }

  if (options.sensitivity_report) {
    // alpha rides on 1/Gamma; Gamma is linear in tau_p and in A_s, so both
    // elasticities follow from refitting against a rescaled envelope.
    const double delta = 0.01;
    auto refit_scaled = [&](double scale) {
      FitData ds = d;
      for (auto& y : ds.y) y /= scale;
      const double ymax_s = y_max / scale;
      for (std::size_t i = 0; i < ds.y.size(); ++i) {
        ds.w[i] = 1.0 / std::max(ds.y[i], options.weight_floor_fraction * ymax_s);
      }
      return minimize_envelope_fit(ds, lm.g, a_max, options).alpha;
    };
    const double up = refit_scaled(1.0 + delta);
    const double down = refit_scaled(1.0 - delta);
    const double elasticity =
        (std::log(up) - std::log(down)) / (std::log(1.0 + delta) - std::log(1.0 - delta));
    result.alpha_elasticity_tau = elasticity;
    result.alpha_elasticity_area = elasticity;
  }

  return result;
}

EnvelopePrediction predict_envelope(const CalibrationResult& result,
                                    const std::vector<SpectrumRecord>& records,
                                    const DetectionGeometry& geometry,
                                    double pump_wavelength) {
  FitData d = assemble_fit_data(records, result.response, geometry, pump_wavelength,
                                1e-6);
  EnvelopePrediction pred;
  pred.wavelength = d.wavelength;
  pred.observed = d.y;
  pred.predicted.resize(d.y.size());
  double chi2 = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double s = std::sinh(result.pump_normalized_gain * d.a[i]);
    pred.predicted[i] = result.alpha * s * s;
    const double r = (d.y[i] - pred.predicted[i]) * std::sqrt(d.w[i]);
    chi2 += r * r;
  }
  pred.residual_rms = std::sqrt(chi2 / double(d.y.size()));
  return pred;
}

EfficiencyTable quantum_efficiency(const CalibrationResult& result) {
  EfficiencyTable table;
  table.wavelength = result.response.wavelength_grid;
  table.support_mask = result.response.support_mask;
  table.efficiency.resize(table.wavelength.size());
  table.uncertainty.resize(table.wavelength.size());
  for (std::size_t i = 0; i < table.wavelength.size(); ++i) {
    table.efficiency[i] = result.alpha * result.response.response[i];
    table.uncertainty[i] = result.alpha_sigma * result.response.response[i];
  }
  return table;
}

// ---------------------------------------------------------------------------
// Linearity bound

double linearity_bound(const std::vector<std::pair<double, double>>& scan,
                       double tolerance, int reference_points) {
  if (scan.size() < 5) throw SizeError("power scan needs >= 5 points");
  if (reference_points < 2 || std::size_t(reference_points) >= scan.size()) {
    throw ConfigError("reference_points must lie in [2, n)");
  }
  for (std::size_t i = 1; i < scan.size(); ++i) {
    if (!(scan[i].first > scan[i - 1].first)) {
      throw ConfigError("power scan energies must be strictly increasing");
    }
  }

  // line through the origin anchored on the smallest energies
  double se2 = 0.0, sce = 0.0;
  for (int i = 0; i < reference_points; ++i) {
    se2 += scan[i].first * scan[i].first;
    sce += scan[i].second * scan[i].first;
  }
  const double slope = sce / se2;
  if (!(slope > 0.0)) throw DomainError("reference slope must be positive");

  for (std::size_t k = 0; k < scan.size(); ++k) {
    const double predicted = slope * scan[k].first;
    if (std::abs(scan[k].second - predicted) > tolerance * predicted) {
      return scan[k == 0 ? 0 : k - 1].first;
    }
  }
  return scan.back().first;
}

// ---------------------------------------------------------------------------
// Lamp comparison

DeviationReport compare_reference(const ResponseCurve& pdc_response,
                                  const LampReference& lamp) {
  if (lamp.wavelength.size() != lamp.response.size() ||
      lamp.wavelength.size() != lamp.uncertainty.size() || lamp.wavelength.size() < 2) {
    throw SizeError("lamp reference arrays are inconsistent");
  }
  for (std::size_t i = 1; i < lamp.wavelength.size(); ++i) {
    if (!(lamp.wavelength[i] > lamp.wavelength[i - 1])) {
      throw ConfigError("lamp wavelengths must be strictly increasing");
    }
  }

  std::vector<double> wl, r_pdc, r_lamp, band;
  for (std::size_t i = 0; i < pdc_response.wavelength_grid.size(); ++i) {
    const double x = pdc_response.wavelength_grid[i];
    if (!pdc_response.support_mask[i]) continue;
    if (x < lamp.wavelength.front() || x > lamp.wavelength.back()) continue;
    wl.push_back(x);
    r_pdc.push_back(pdc_response.response[i]);
    r_lamp.push_back(interpolate(lamp.wavelength, lamp.response, x));
    band.push_back(interpolate(lamp.wavelength, lamp.uncertainty, x));
  }
  if (wl.empty()) throw DomainError("lamp and PDC responses do not overlap");

  // least-squares factor: lamp ~ scale * pdc
  double spp = 0.0, spl = 0.0;
  for (std::size_t i = 0; i < wl.size(); ++i) {
    spp += r_pdc[i] * r_pdc[i];
    spl += r_pdc[i] * r_lamp[i];
  }
  if (!(spp > 0.0)) throw DomainError("degenerate PDC response in the overlap");
  const double scale = spl / spp;

  DeviationReport report;
  report.scale = scale;
  report.wavelength = wl;
  report.ratio.resize(wl.size());
  double sum_sq = 0.0;
  std::size_t in_band = 0;
  for (std::size_t i = 0; i < wl.size(); ++i) {
    report.ratio[i] = scale * r_pdc[i] / r_lamp[i];
    const double rel = (scale * r_pdc[i] - r_lamp[i]) / r_lamp[i];
    sum_sq += rel * rel;
    if (std::abs(scale * r_pdc[i] - r_lamp[i]) <= band[i]) ++in_band;
  }
  report.rms_relative = std::sqrt(sum_sq / double(wl.size()));
  report.in_band_fraction = double(in_band) / double(wl.size());
  return report;
}

// ---------------------------------------------------------------------------
// Efficiency budget

EfficiencyBudget budget_efficiency(const std::vector<EfficiencyComponent>& components) {
  if (components.empty()) throw SizeError("budget needs at least one component");
  EfficiencyBudget budget;
  budget.components = components;
  double total = 1.0;
  double rel_linear = 0.0;
  double rel_quad = 0.0;
  for (const auto& c : components) {
    if (!(c.efficiency > 0.0) || c.efficiency > 1.0) {
      throw ConfigError("component efficiency for '" + c.name + "' must lie in (0, 1]");
    }
    if (c.uncertainty < 0.0) {
      throw ConfigError("component uncertainty for '" + c.name + "' must be >= 0");
    }
    if (c.multiplicity < 1) {
      throw ConfigError("component multiplicity for '" + c.name + "' must be >= 1");
    }
    total *= std::pow(c.efficiency, double(c.multiplicity));
    const double rel = double(c.multiplicity) * c.uncertainty / c.efficiency;
    rel_linear += rel;
    rel_quad += rel * rel;
  }
  budget.total = total;
  budget.total_uncertainty = total * rel_linear;
  budget.total_uncertainty_independent = total * std::sqrt(rel_quad);
  return budget;
}

} // namespace pdcalib
