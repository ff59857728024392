#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "llp/common.hpp"

namespace llp {

inline constexpr double kPi = 3.14159265358979323846;

/// Interval boundaries (ms, inclusive) for the per-channel mean-amplitude
/// features of one epoch.
inline std::vector<std::pair<double, double>> default_feature_intervals() {
  return {{50.0, 120.0},  {121.0, 200.0}, {201.0, 280.0},
          {281.0, 380.0}, {381.0, 530.0}, {531.0, 700.0}};
}

/// Frontal channels excluded from the feature representation; they mostly
/// carry ocular artifacts.
inline std::vector<std::string> default_dropped_channels() {
  return {"Fp1", "Fp2"};
}

/// 31-channel montage used when synthesising recordings.
inline std::vector<std::string> standard_montage() {
  return {"Fp1", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5",
          "FC1", "FC2", "FC6", "T7",  "C3",  "Cz",  "C4",  "T8",
          "CP5", "CP1", "CP2", "CP6", "P7",  "P3",  "Pz",  "P4",
          "P8",  "PO7", "PO3", "PO4", "PO8", "O1",  "O2"};
}

/// How the band limits of a Chebyshev II design are interpreted.
/// `corner`: the stated frequencies are -3 dB points; the stopband edges
/// (where the design attenuation is reached) lie outside the band.
/// `stopband`: the stated frequencies are the stopband edges themselves;
/// the -3 dB passband is then strictly narrower than the stated band.
enum class BandEdgeMode { corner, stopband };

struct FilterSpec {
  int order = 3;
  double low_hz = 0.5;
  double high_hz = 8.0;
  double stopband_attenuation_db = 40.0;
  BandEdgeMode edge_mode = BandEdgeMode::corner;
};

/// One second-order section of a digital filter, normalised to a0 = 1:
/// y[t] = b0 x[t] + b1 x[t-1] + b2 x[t-2] - a1 y[t-1] - a2 y[t-2].
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct SosFilter {
  std::vector<Biquad> sections;
};

namespace detail {

using Complex = std::complex<double>;

struct Zpk {
  std::vector<Complex> z;
  std::vector<Complex> p;
  double k = 1.0;
};

/// Analog Chebyshev II lowpass prototype with stopband edge at 1 rad/s.
inline Zpk cheb2_prototype(int order, double rs_db) {
  const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * rs_db) - 1.0);
  const double mu = std::asinh(1.0 / de) / order;
  Zpk out;
  for (int m = -order + 1; m <= order - 1; m += 2) {
    const double theta = kPi * m / (2.0 * order);
    if (m != 0) {
      out.z.emplace_back(0.0, 1.0 / std::sin(theta));
    }
    const Complex pre(-std::sinh(mu) * std::cos(theta),
                      -std::cosh(mu) * std::sin(theta));
    out.p.push_back(1.0 / pre);
  }
  Complex num(1.0, 0.0), den(1.0, 0.0);
  for (const auto& z : out.z) num *= -z;
  for (const auto& p : out.p) den *= -p;
  out.k = (den / num).real();
  return out;
}

/// Lowpass-to-bandpass transform s -> (s^2 + w0^2) / (bw * s).
inline Zpk lp_to_bp(const Zpk& lp, double w0, double bw) {
  Zpk out;
  const std::size_t degree = lp.p.size() - lp.z.size();
  auto map_roots = [&](const std::vector<Complex>& src,
                       std::vector<Complex>& dst) {
    for (const auto& r : src) {
      const Complex scaled = r * (bw / 2.0);
      const Complex disc = std::sqrt(scaled * scaled - Complex(w0 * w0, 0.0));
      dst.push_back(scaled + disc);
      dst.push_back(scaled - disc);
    }
  };
  map_roots(lp.z, out.z);
  map_roots(lp.p, out.p);
  for (std::size_t i = 0; i < degree; ++i) out.z.emplace_back(0.0, 0.0);
  out.k = lp.k * std::pow(bw, static_cast<double>(degree));
  return out;
}

/// Bilinear transform z = (2 fs + s) / (2 fs - s); missing zeros go to -1.
inline Zpk bilinear(const Zpk& analog, double rate) {
  const double fs2 = 2.0 * rate;
  Zpk out;
  Complex num(1.0, 0.0), den(1.0, 0.0);
  for (const auto& z : analog.z) {
    out.z.push_back((fs2 + z) / (fs2 - z));
    num *= fs2 - z;
  }
  for (const auto& p : analog.p) {
    out.p.push_back((fs2 + p) / (fs2 - p));
    den *= fs2 - p;
  }
  const std::size_t degree = analog.p.size() - analog.z.size();
  for (std::size_t i = 0; i < degree; ++i) out.z.emplace_back(-1.0, 0.0);
  out.k = analog.k * (num / den).real();
  return out;
}

/// Roots grouped into real quadratic factors: conjugate pairs, pairs of
/// reals, possibly a single leftover real root, or nothing (unity factor).
struct RootUnit {
  std::vector<Complex> roots;
};

inline std::vector<RootUnit> pair_roots(const std::vector<Complex>& roots) {
  std::vector<Complex> upper;
  std::vector<double> reals;
  for (const auto& r : roots) {
    if (std::abs(r.imag()) <= 1e-8 * std::max(1.0, std::abs(r))) {
      reals.push_back(r.real());
    } else if (r.imag() > 0.0) {
      upper.push_back(r);
    }
  }
  if (2 * upper.size() + reals.size() != roots.size()) {
    throw Error("pair_roots: complex roots do not form conjugate pairs");
  }
  std::sort(upper.begin(), upper.end(), [](const Complex& a, const Complex& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    return ma != mb ? ma < mb : a.real() < b.real();
  });
  std::sort(reals.begin(), reals.end());
  std::vector<RootUnit> units;
  for (const auto& u : upper) units.push_back({{u, std::conj(u)}});
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    units.push_back({{Complex(reals[i], 0.0), Complex(reals[i + 1], 0.0)}});
  }
  if (reals.size() % 2 == 1) units.push_back({{Complex(reals.back(), 0.0)}});
  return units;
}

inline std::array<double, 3> unit_poly(const RootUnit& u) {
  if (u.roots.empty()) return {1.0, 0.0, 0.0};
  if (u.roots.size() == 1) return {1.0, -u.roots[0].real(), 0.0};
  const Complex sum = u.roots[0] + u.roots[1];
  const Complex prod = u.roots[0] * u.roots[1];
  return {1.0, -sum.real(), prod.real()};
}

/// Cascade realisation: each pole unit is matched with the nearest zero
/// unit; sections with poles closest to the unit circle come last and the
/// overall gain is folded into the first section.
inline SosFilter zpk_to_sos(const Zpk& zpk) {
  if (zpk.z.size() > zpk.p.size()) {
    throw Error("zpk_to_sos: more zeros than poles");
  }
  auto zu = pair_roots(zpk.z);
  auto pu = pair_roots(zpk.p);
  while (zu.size() < pu.size()) zu.push_back({});
  if (zu.size() > pu.size()) {
    throw Error("zpk_to_sos: zero sections exceed pole sections");
  }

  auto circle_distance = [](const RootUnit& u) {
    double d = std::numeric_limits<double>::max();
    for (const auto& r : u.roots) d = std::min(d, std::abs(1.0 - std::abs(r)));
    return d;
  };
  std::stable_sort(pu.begin(), pu.end(),
                   [&](const RootUnit& a, const RootUnit& b) {
                     return circle_distance(a) > circle_distance(b);
                   });

  SosFilter out;
  std::vector<bool> used(zu.size(), false);
  for (const auto& pole_unit : pu) {
    const Complex rep = pole_unit.roots.front();
    std::size_t best = zu.size();
    double best_dist = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < zu.size(); ++i) {
      if (used[i]) continue;
      const double d = zu[i].roots.empty()
                           ? std::numeric_limits<double>::max() / 2.0
                           : std::abs(zu[i].roots.front() - rep);
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    used[best] = true;
    const auto bp = unit_poly(zu[best]);
    const auto ap = unit_poly(pole_unit);
    Biquad s;
    s.b0 = bp[0];
    s.b1 = bp[1];
    s.b2 = bp[2];
    s.a1 = ap[1];
    s.a2 = ap[2];
    out.sections.push_back(s);
  }
  if (!out.sections.empty()) {
    out.sections.front().b0 *= zpk.k;
    out.sections.front().b1 *= zpk.k;
    out.sections.front().b2 *= zpk.k;
  }
  return out;
}

}  // namespace detail

/// Complex gain of the cascade at `freq_hz` for sampling rate `rate`.
inline std::complex<double> frequency_response(const SosFilter& f,
                                               double freq_hz, double rate) {
  const double w = 2.0 * kPi * freq_hz / rate;
  const std::complex<double> e1 = std::polar(1.0, -w);
  const std::complex<double> e2 = e1 * e1;
  std::complex<double> h(1.0, 0.0);
  for (const auto& s : f.sections) {
    h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2);
  }
  return h;
}

inline double magnitude_db(const SosFilter& f, double freq_hz, double rate) {
  return 20.0 * std::log10(std::abs(frequency_response(f, freq_hz, rate)));
}

/// All poles strictly inside the unit circle, section by section.
inline bool is_stable(const SosFilter& f) {
  for (const auto& s : f.sections) {
    if (!(std::abs(s.a2) < 1.0 && std::abs(s.a1) < 1.0 + s.a2)) return false;
  }
  return true;
}

/// Chebyshev II bandpass design via the analog prototype, the
/// lowpass-to-bandpass transform and the bilinear transform.
/// In corner mode the bandwidth is widened by cosh(acosh(1/eps)/order) so
/// that the -3 dB points land exactly on the requested band limits.
inline SosFilter design_bandpass(const FilterSpec& spec, double rate) {
  if (!(rate > 0.0)) throw ValueError("design_bandpass: rate must be > 0");
  if (spec.order < 1) throw ValueError("design_bandpass: order must be >= 1");
  if (!(spec.stopband_attenuation_db > 0.0)) {
    throw ValueError("design_bandpass: attenuation must be > 0 dB");
  }
  if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz &&
        spec.high_hz < rate / 2.0)) {
    std::ostringstream os;
    os << "design_bandpass: band [" << spec.low_hz << ", " << spec.high_hz
       << "] Hz must satisfy 0 < low < high < rate/2 = " << rate / 2.0;
    throw ValueError(os.str());
  }

  const double w1 = 2.0 * rate * std::tan(kPi * spec.low_hz / rate);
  const double w2 = 2.0 * rate * std::tan(kPi * spec.high_hz / rate);
  const double w0 = std::sqrt(w1 * w2);
  double bw = w2 - w1;
  if (spec.edge_mode == BandEdgeMode::corner) {
    const double inv_eps =
        std::sqrt(std::pow(10.0, 0.1 * spec.stopband_attenuation_db) - 1.0);
    bw *= std::cosh(std::acosh(inv_eps) / spec.order);
  }

  const auto proto = detail::cheb2_prototype(spec.order,
                                             spec.stopband_attenuation_db);
  const auto analog = detail::lp_to_bp(proto, w0, bw);
  const auto digital = detail::bilinear(analog, rate);
  SosFilter out = detail::zpk_to_sos(digital);
  if (!is_stable(out)) {
    throw Error("design_bandpass: produced an unstable cascade");
  }
  return out;
}

/// Multichannel time series, one row per channel.
struct Recording {
  double rate = 1000.0;
  std::vector<std::string> channels;
  Eigen::MatrixXd samples;  // channels x time

  Eigen::Index channel_count() const { return samples.rows(); }
  Eigen::Index sample_count() const { return samples.cols(); }

  int channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

/// Causal forward filtering with zero initial conditions, channel by
/// channel (transposed direct form II per section).
inline Recording apply_filter(const SosFilter& f, const Recording& rec) {
  if (f.sections.empty()) throw ValueError("apply_filter: empty filter");
  Recording out = rec;
  for (Eigen::Index ch = 0; ch < out.channel_count(); ++ch) {
    for (const auto& s : f.sections) {
      double s1 = 0.0, s2 = 0.0;
      for (Eigen::Index t = 0; t < out.sample_count(); ++t) {
        const double x = out.samples(ch, t);
        const double y = s.b0 * x + s1;
        s1 = s.b1 * x - s.a1 * y + s2;
        s2 = s.b2 * x - s.a2 * y;
        out.samples(ch, t) = y;
      }
    }
  }
  return out;
}

/// Keeps every `factor`-th sample starting at sample 0.
inline Recording downsample(const Recording& rec, int factor) {
  if (factor < 1) throw ValueError("downsample: factor must be >= 1");
  if (rec.sample_count() == 0) throw ValueError("downsample: empty recording");
  Recording out;
  out.rate = rec.rate / factor;
  out.channels = rec.channels;
  const Eigen::Index n = (rec.sample_count() + factor - 1) / factor;
  out.samples.resize(rec.channel_count(), n);
  for (Eigen::Index t = 0; t < n; ++t) {
    out.samples.col(t) = rec.samples.col(t * factor);
  }
  return out;
}

/// Marker position after downsampling by `factor` (sample 0 aligned).
inline std::size_t downsample_index(std::size_t sample_index, int factor) {
  if (factor < 1) throw ValueError("downsample_index: factor must be >= 1");
  return sample_index / static_cast<std::size_t>(factor);
}

/// Fixed-length window cut from a recording, time-locked to a marker.
struct Epoch {
  double rate = 100.0;
  double start_ms = -200.0;  // time of the first sample relative to marker
  std::vector<std::string> channels;
  Eigen::MatrixXd data;  // channels x samples

  Eigen::Index sample_count() const { return data.cols(); }
  double time_ms(Eigen::Index s) const {
    return start_ms + 1000.0 * static_cast<double>(s) / rate;
  }
  int channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

/// Cuts [win_lo_ms, win_hi_ms] (inclusive) around each marker sample.
inline std::vector<Epoch> extract_epochs(const Recording& rec,
                                         const std::vector<std::size_t>& markers,
                                         double win_lo_ms = -200.0,
                                         double win_hi_ms = 700.0) {
  if (!(win_lo_ms < win_hi_ms)) {
    throw ValueError("extract_epochs: window must satisfy lo < hi");
  }
  const auto lo = static_cast<Eigen::Index>(
      std::lround(win_lo_ms * rec.rate / 1000.0));
  const auto hi = static_cast<Eigen::Index>(
      std::lround(win_hi_ms * rec.rate / 1000.0));
  const Eigen::Index len = hi - lo + 1;
  std::vector<Epoch> out;
  out.reserve(markers.size());
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const auto m = static_cast<Eigen::Index>(markers[i]);
    const Eigen::Index start = m + lo;
    if (start < 0 || m + hi >= rec.sample_count()) {
      std::ostringstream os;
      os << "extract_epochs: marker " << i << " at sample " << markers[i]
         << " leaves the recording (needs samples " << start << ".." << m + hi
         << " of " << rec.sample_count() << ")";
      throw ValueError(os.str());
    }
    Epoch e;
    e.rate = rec.rate;
    e.start_ms = 1000.0 * static_cast<double>(lo) / rec.rate;
    e.channels = rec.channels;
    e.data = rec.samples.middleCols(start, len);
    out.push_back(std::move(e));
  }
  return out;
}

/// Subtracts the per-channel mean of [base_lo_ms, base_hi_ms] (inclusive).
inline Epoch baseline_correct(const Epoch& epoch, double base_lo_ms = -200.0,
                              double base_hi_ms = 0.0) {
  if (!(base_lo_ms < base_hi_ms)) {
    throw ValueError("baseline_correct: window must satisfy lo < hi");
  }
  Epoch out = epoch;
  Eigen::Index n = 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(epoch.data.rows());
  for (Eigen::Index s = 0; s < epoch.sample_count(); ++s) {
    const double t = epoch.time_ms(s);
    if (t >= base_lo_ms - 1e-9 && t <= base_hi_ms + 1e-9) {
      mean += epoch.data.col(s);
      ++n;
    }
  }
  if (n == 0) {
    throw ValueError("baseline_correct: no samples inside the window");
  }
  mean /= static_cast<double>(n);
  out.data.colwise() -= mean;
  return out;
}

/// Per-channel mean amplitudes over a list of intervals, flattened
/// interval-major. Channels listed in `drop` are excluded when present.
inline FeatureVector interval_features(
    const Epoch& epoch,
    const std::vector<std::pair<double, double>>& intervals =
        default_feature_intervals(),
    const std::vector<std::string>& drop = default_dropped_channels()) {
  if (intervals.empty()) {
    throw ValueError("interval_features: no intervals");
  }
  std::vector<Eigen::Index> kept;
  for (std::size_t c = 0; c < epoch.channels.size(); ++c) {
    const bool dropped =
        std::find(drop.begin(), drop.end(), epoch.channels[c]) != drop.end();
    if (!dropped) kept.push_back(static_cast<Eigen::Index>(c));
  }
  if (kept.empty()) {
    throw ValueError("interval_features: all channels dropped");
  }
  FeatureVector out(static_cast<Eigen::Index>(intervals.size() * kept.size()));
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto [lo, hi] = intervals[i];
    if (!(lo < hi)) {
      throw ValueError("interval_features: interval bounds must satisfy lo < hi");
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(epoch.data.rows());
    Eigen::Index n = 0;
    for (Eigen::Index s = 0; s < epoch.sample_count(); ++s) {
      const double t = epoch.time_ms(s);
      if (t >= lo - 1e-9 && t <= hi + 1e-9) {
        acc += epoch.data.col(s);
        ++n;
      }
    }
    if (n == 0) {
      std::ostringstream os;
      os << "interval_features: interval [" << lo << ", " << hi
         << "] ms contains no samples";
      throw ValueError(os.str());
    }
    acc /= static_cast<double>(n);
    for (std::size_t c = 0; c < kept.size(); ++c) {
      out(static_cast<Eigen::Index>(i * kept.size() + c)) = acc(kept[c]);
    }
  }
  return out;
}

}  // namespace llp
