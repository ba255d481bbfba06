#include "pdcalib/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "pdcalib/constants.hpp"
#include "pdcalib/errors.hpp"

namespace pdcalib {

namespace {

constexpr double kSnellTolerance = 1e-10;  // rad
constexpr int kSnellMaxIterations = 100;
constexpr double kScanStep = 0.1 * nm;

// |dk| acceptance for a phase-matched root: |dk| L / 2 < 1e-6
double root_residual_bound(const CrystalSpec& crystal) {
  return 2e-6 / crystal.thickness;
}

} // namespace

void CrystalSpec::validate() const {
  if (!(thickness > 0.0)) throw ConfigError("crystal thickness must be > 0");
  if (!(chi2_reference > 0.0)) throw ConfigError("chi2_reference must be > 0");
  if (!(cut_angle > 0.0) || !(cut_angle < kPi / 2.0)) {
    throw ConfigError("cut angle must lie in (0, pi/2)");
  }
  sellmeier.validate();
}

double idler_wavelength(double pump_wavelength, double signal_wavelength) {
  if (!(signal_wavelength > pump_wavelength)) {
    throw DomainError("signal frequency at or above the pump frequency");
  }
  return 1.0 / (1.0 / pump_wavelength - 1.0 / signal_wavelength);
}

double internal_pump_angle(double tilt, const CrystalSpec& crystal,
                           double pump_wavelength) {
  if (!crystal.tilt_is_external) return tilt;
  if (!(std::abs(tilt) < kPi / 2.0)) {
    throw DomainError("external tilt must satisfy |tilt| < pi/2");
  }
  if (tilt == 0.0) return crystal.cut_angle;

  // theta = cut + tilt - asin(sin(tilt) / n_p(theta))
  const double st = std::sin(tilt);
  double theta = crystal.cut_angle;
  for (int i = 0; i < kSnellMaxIterations; ++i) {
    const double n = index_extraordinary(pump_wavelength, theta, crystal.sellmeier);
    const double next = crystal.cut_angle + tilt - std::asin(st / n);
    const double delta = std::abs(next - theta);
    theta = next;
    if (delta < kSnellTolerance) return theta;
  }
  std::ostringstream msg;
  msg << "internal pump angle iteration did not converge, last residual "
      << std::abs(std::sin(tilt) -
                  index_extraordinary(pump_wavelength, theta, crystal.sellmeier) *
                      std::sin(tilt - (theta - crystal.cut_angle)))
      << " (tilt " << tilt << " rad)";
  throw NumericalError(msg.str());
}

double pump_refraction_angle(double tilt, const CrystalSpec& crystal,
                             double pump_wavelength) {
  if (!crystal.tilt_is_external) {
    // Reconstruct the facet geometry implied by the internal angle.
    const double t = external_tilt_for_internal_angle(tilt, crystal, pump_wavelength);
    return t - (tilt - crystal.cut_angle);
  }
  const double theta = internal_pump_angle(tilt, crystal, pump_wavelength);
  return tilt - (theta - crystal.cut_angle);
}

double external_tilt_for_internal_angle(double internal_angle,
                                        const CrystalSpec& crystal,
                                        double pump_wavelength) {
  const double delta = internal_angle - crystal.cut_angle;
  if (delta == 0.0) return 0.0;
  const double n = index_extraordinary(pump_wavelength, internal_angle,
                                       crystal.sellmeier);
  // solve sin(t) = n sin(t - delta) for t; f is monotone between the bounds
  auto f = [&](double t) { return std::sin(t) - n * std::sin(t - delta); };
  // f(delta) = sin(delta), f(0) = n sin(delta): opposite signs around the
  // solution bracket [delta * n/(n-1) - margin] for small angles.
  double lo = std::min(0.0, delta * n / (n - 1.0) * 1.5);
  double hi = std::max(0.0, delta * n / (n - 1.0) * 1.5);
  if (f(lo) * f(hi) > 0.0) {
    lo = -kPi / 2.0 + 1e-6;
    hi = kPi / 2.0 - 1e-6;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(lo) * f(mid) <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo < 1e-14) break;
  }
  return 0.5 * (lo + hi);
}

double longitudinal_mismatch(const PlaneWaveMode& mode, double tilt,
                             const CrystalSpec& crystal, double pump_wavelength) {
  const double lambda_i = idler_wavelength(pump_wavelength, mode.wavelength);
  const double theta_int = internal_pump_angle(tilt, crystal, pump_wavelength);
  const double n_p = index_extraordinary(pump_wavelength, theta_int, crystal.sellmeier);
  const double n_s = index_ordinary(mode.wavelength, crystal.sellmeier);
  const double n_i = index_ordinary(lambda_i, crystal.sellmeier);

  const double k_p = kTwoPi * n_p / pump_wavelength;
  const double k_s = kTwoPi * n_s / mode.wavelength;
  const double k_i = kTwoPi * n_i / lambda_i;

  const double sin_theta = std::sin(mode.polar_angle);
  const double ratio = k_i / k_s;
  const double arg = ratio * ratio - sin_theta * sin_theta;
  if (arg < 0.0) {
    throw DomainError("evanescent idler: emission angle exceeds the idler cone");
  }
  return k_p - k_s * (std::cos(mode.polar_angle) + std::sqrt(arg));
}

namespace {

// Bisection of dk between wavelengths of opposite sign, driven to the
// residual acceptance bound.
PhaseMatchPoint bisect_root(const std::function<double(double)>& mismatch,
                            double lo, double hi, double f_lo, double tilt,
                            double residual_bound) {
  double f_mid = 0.0;
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    mid = 0.5 * (lo + hi);
    f_mid = mismatch(mid);
    if (std::abs(f_mid) < 0.01 * residual_bound || hi - lo < 1e-18) break;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return PhaseMatchPoint{mid, tilt, f_mid};
}

// Location and value of the maximum of dk inside [lo, hi] (golden section).
std::pair<double, double> maximize_mismatch(const std::function<double(double)>& f,
                                            double lo, double hi) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < 120 && (b - a) > 1e-18; ++i) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

} // namespace

std::vector<PhaseMatchPoint> phase_matched_wavelengths(
    double tilt, const CrystalSpec& crystal, double pump_wavelength,
    WavelengthRange search_range, double polar_angle) {
  if (!crystal.sellmeier.valid_range.contains(search_range.min) ||
      !crystal.sellmeier.valid_range.contains(search_range.max)) {
    std::ostringstream msg;
    msg << "search range [" << search_range.min / nm << ", " << search_range.max / nm
        << "] nm outside Sellmeier validity [" << crystal.sellmeier.valid_range.min / nm
        << ", " << crystal.sellmeier.valid_range.max / nm << "] nm";
    throw RangeError(msg.str());
  }
  const double lo_bound = std::max(search_range.min, pump_wavelength * (1.0 + 1e-9));
  if (lo_bound >= search_range.max) return {};

  auto mismatch = [&](double wl) -> double {
    return longitudinal_mismatch(PlaneWaveMode{wl, polar_angle}, tilt, crystal,
                                 pump_wavelength);
  };
  // Evanescent geometry simply ends the root search domain.
  auto mismatch_or_nan = [&](double wl) -> double {
    try {
      return mismatch(wl);
    } catch (const DomainError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  const double residual_bound = root_residual_bound(crystal);
  const std::size_t cells =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::ceil((search_range.max - lo_bound) / kScanStep)));
  std::vector<double> grid(cells + 1), value(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) {
    grid[i] = lo_bound + (search_range.max - lo_bound) * double(i) / double(cells);
    value[i] = mismatch_or_nan(grid[i]);
  }

  std::vector<PhaseMatchPoint> roots;
  auto push_root = [&](const PhaseMatchPoint& p) {
    for (const auto& r : roots) {
      if (std::abs(r.wavelength_pm - p.wavelength_pm) < 1e-4 * nm) return;
    }
    if (std::abs(p.mismatch_residual) < residual_bound) roots.push_back(p);
  };

  for (std::size_t i = 0; i < cells; ++i) {
    const double f0 = value[i], f1 = value[i + 1];
    if (std::isnan(f0) || std::isnan(f1)) continue;
    if (f0 == 0.0) {
      push_root(PhaseMatchPoint{grid[i], tilt, f0});
      continue;
    }
    if ((f0 < 0.0) != (f1 < 0.0)) {
      push_root(bisect_root(mismatch, grid[i], grid[i + 1], f0, tilt, residual_bound));
    }
  }

  // Tangency handling: near-degenerate tilts can hide a root pair (or a
  // double root) inside one scan cell without a sign change at the nodes.
  for (std::size_t i = 1; i < cells; ++i) {
    if (std::isnan(value[i - 1]) || std::isnan(value[i]) || std::isnan(value[i + 1]))
      continue;
    const bool local_max =
        value[i] >= value[i - 1] && value[i] >= value[i + 1] && value[i] < 0.0;
    if (!local_max) continue;
    const auto [x_max, f_max] = maximize_mismatch(mismatch, grid[i - 1], grid[i + 1]);
    if (f_max > residual_bound) {
      push_root(bisect_root(mismatch, grid[i - 1], x_max, value[i - 1], tilt,
                            residual_bound));
      push_root(bisect_root(mismatch, x_max, grid[i + 1], f_max, tilt, residual_bound));
    } else if (std::abs(f_max) <= residual_bound) {
      push_root(PhaseMatchPoint{x_max, tilt, f_max});
    }
  }

  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    return a.wavelength_pm < b.wavelength_pm;
  });

  // Adjacent roots whose in-between mismatch never leaves the acceptance band
  // are one numerically double (tangent) root; report the apex only.
  for (std::size_t i = 0; i + 1 < roots.size();) {
    const double wl_a = roots[i].wavelength_pm;
    const double wl_b = roots[i + 1].wavelength_pm;
    if (wl_b - wl_a < 2.0 * kScanStep) {
      const auto [x_max, f_max] = maximize_mismatch(mismatch, wl_a, wl_b);
      if (std::abs(f_max) <= residual_bound) {
        roots[i] = PhaseMatchPoint{x_max, tilt, f_max};
        roots.erase(roots.begin() + long(i) + 1);
        continue;
      }
    }
    ++i;
  }
  return roots;
}

double internal_angle_matching(double wavelength, const CrystalSpec& crystal,
                               double pump_wavelength) {
  const double lambda_i = idler_wavelength(pump_wavelength, wavelength);
  const double n_s = index_ordinary(wavelength, crystal.sellmeier);
  const double n_i = index_ordinary(lambda_i, crystal.sellmeier);
  const double n_required =
      pump_wavelength * (n_s / wavelength + n_i / lambda_i);

  const double n_o = index_ordinary(pump_wavelength, crystal.sellmeier);
  const double n_e = index_extraordinary_principal(pump_wavelength, crystal.sellmeier);
  const double inv_req = 1.0 / (n_required * n_required);
  const double inv_o = 1.0 / (n_o * n_o);
  const double inv_e = 1.0 / (n_e * n_e);
  const double sin2 = (inv_req - inv_o) / (inv_e - inv_o);
  if (sin2 < 0.0 || sin2 > 1.0) {
    std::ostringstream msg;
    msg << "no phase-matching angle for " << wavelength / nm << " nm (needs n_p = "
        << n_required << ", reachable [" << std::min(n_o, n_e) << ", "
        << std::max(n_o, n_e) << "])";
    throw DomainError(msg.str());
  }
  return std::asin(std::sqrt(sin2));
}

double tilt_matching_wavelength(double wavelength, const CrystalSpec& crystal,
                                double pump_wavelength) {
  const double theta = internal_angle_matching(wavelength, crystal, pump_wavelength);
  if (!crystal.tilt_is_external) return theta;
  return external_tilt_for_internal_angle(theta, crystal, pump_wavelength);
}

double degenerate_cut_angle(const SellmeierSet& sellmeier, double pump_wavelength) {
  CrystalSpec probe;
  probe.thickness = 1e-3;
  probe.cut_angle = kPi / 4.0;
  probe.chi2_reference = 1e-12;
  probe.sellmeier = sellmeier;
  probe.tilt_is_external = false;
  return internal_angle_matching(2.0 * pump_wavelength, probe, pump_wavelength);
}

double fresnel_transmission(double n_in, double n_out, double incidence_angle,
                            Polarization polarization) {
  if (n_in < 1.0 || n_out < 1.0) {
    throw DomainError("refractive indices must be >= 1");
  }
  const double ci = std::cos(incidence_angle);
  const double si = std::sin(std::abs(incidence_angle));
  const double st = n_in / n_out * si;
  if (st >= 1.0) {
    throw DomainError("total internal reflection at the interface");
  }
  const double ct = std::sqrt(1.0 - st * st);
  double r = 0.0;
  if (polarization == Polarization::S) {
    r = (n_in * ci - n_out * ct) / (n_in * ci + n_out * ct);
  } else {
    r = (n_out * ci - n_in * ct) / (n_out * ci + n_in * ct);
  }
  return 1.0 - r * r;
}

namespace {

struct GainFactors {
  double index_factor;
  double miller_factor;
  double length_factor;
  double fresnel_factor;
};

GainFactors raw_gain_factors(double wavelength, const CrystalSpec& crystal,
                             double pump_wavelength) {
  const double theta_int = internal_angle_matching(wavelength, crystal, pump_wavelength);
  const double lambda_i = idler_wavelength(pump_wavelength, wavelength);
  const double n_s = index_ordinary(wavelength, crystal.sellmeier);
  const double n_i = index_ordinary(lambda_i, crystal.sellmeier);
  const double n_p = index_extraordinary(pump_wavelength, theta_int, crystal.sellmeier);

  GainFactors f{};
  // 1/(n_s n_i) from G^2 with the pump-amplitude n_p^-2 intensity factor
  f.index_factor = 1.0 / (n_s * n_i * n_p * n_p);

  // chi2 ~ chi1(w_p) chi1(w_s) chi1(w_i), chi1 = n^2 - 1; gain squared
  const double chi = (n_p * n_p - 1.0) * (n_s * n_s - 1.0) * (n_i * n_i - 1.0);
  f.miller_factor = chi * chi;

  // effective length L/cos(r) of the refracted pump path, squared in G^2
  const double delta = theta_int - crystal.cut_angle;
  double tilt_ext = 0.0;
  if (delta != 0.0) {
    CrystalSpec ext = crystal;
    ext.tilt_is_external = true;
    tilt_ext = external_tilt_for_internal_angle(theta_int, ext, pump_wavelength);
  }
  const double refraction = tilt_ext - delta;
  const double cr = std::cos(refraction);
  f.length_factor = 1.0 / (cr * cr);

  // pump enters p-polarized, the down-converted light exits s-polarized
  const double t_pump = fresnel_transmission(1.0, n_p, tilt_ext, Polarization::P);
  const double t_signal = fresnel_transmission(n_s, 1.0, refraction, Polarization::S);
  f.fresnel_factor = t_pump * t_signal;
  return f;
}

} // namespace

GainDispersionProfile gain_dispersion_profile(std::span<const double> wavelength_grid,
                                              const CrystalSpec& crystal,
                                              double pump_wavelength) {
  const GainFactors ref = raw_gain_factors(2.0 * pump_wavelength, crystal, pump_wavelength);
  GainDispersionProfile p;
  p.wavelength.reserve(wavelength_grid.size());
  for (double wl : wavelength_grid) {
    const GainFactors f = raw_gain_factors(wl, crystal, pump_wavelength);
    const double fi = f.index_factor / ref.index_factor;
    const double fm = f.miller_factor / ref.miller_factor;
    const double fl = f.length_factor / ref.length_factor;
    const double ff = f.fresnel_factor / ref.fresnel_factor;
    p.wavelength.push_back(wl);
    p.index_factor.push_back(fi);
    p.miller_factor.push_back(fm);
    p.length_factor.push_back(fl);
    p.fresnel_factor.push_back(ff);
    p.total.push_back(fi * fm * fl * ff);
  }
  return p;
}

double gain_correction_factor(double wavelength, const CrystalSpec& crystal,
                              double pump_wavelength) {
  const GainFactors ref = raw_gain_factors(2.0 * pump_wavelength, crystal, pump_wavelength);
  const GainFactors f = raw_gain_factors(wavelength, crystal, pump_wavelength);
  return (f.index_factor / ref.index_factor) * (f.miller_factor / ref.miller_factor) *
         (f.length_factor / ref.length_factor) * (f.fresnel_factor / ref.fresnel_factor);
}

} // namespace pdcalib
