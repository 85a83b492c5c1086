#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "vigil/ecg.hpp"
#include "vigil/error.hpp"

namespace vigil {

// The seven features used by the drowsiness model, in fixed column order.
struct HrvFeatureVector {
  double mean_rr_ms = 0.0;
  double sdnn_ms = 0.0;    // population standard deviation
  double rmssd_ms = 0.0;   // RMS of successive differences
  double pnn50_pct = 0.0;  // % successive differences > 50 ms
  double lf_power = 0.0;   // 0.04-0.15 Hz band power, ms^2
  double hf_power = 0.0;   // 0.15-0.40 Hz band power, ms^2
  double lfhf_ratio = 0.0;
  bool lfhf_defined = true;  // false when hf_power is zero

  static constexpr int kCount = 7;
  static constexpr std::array<const char*, kCount> names() {
    return {"mean_rr", "sdnn", "rmssd", "pnn50", "lf", "hf", "lfhf"};
  }
  std::array<double, kCount> as_array() const {
    return {mean_rr_ms, sdnn_ms, rmssd_ms, pnn50_pct, lf_power, hf_power, lfhf_ratio};
  }
};

inline constexpr double kLfLowHz = 0.04;
inline constexpr double kLfHighHz = 0.15;
inline constexpr double kHfHighHz = 0.40;
inline constexpr double kTachogramRateHz = 4.0;
inline constexpr int kMinCapsuleIntervals = 30;
inline constexpr double kMinCapsuleSeconds = 40.0;

namespace detail {

// Iterative radix-2 FFT; n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / double(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct Psd {
  std::vector<double> power;  // one-sided, units^2 per Hz
  double df = 0.0;
};

// Welch periodogram: Hann window, 50% overlap, per-segment mean removal.
inline Psd welch_psd(std::span<const double> x, double fs, std::size_t max_segment = 256) {
  std::size_t seg = 1;
  while (seg * 2 <= std::min(x.size(), max_segment)) seg *= 2;
  const std::size_t hop = seg / 2;
  std::vector<double> window(seg);
  double wss = 0.0;
  for (std::size_t i = 0; i < seg; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(seg));
    wss += window[i] * window[i];
  }
  Psd psd;
  psd.df = fs / double(seg);
  psd.power.assign(seg / 2 + 1, 0.0);
  std::size_t count = 0;
  for (std::size_t start = 0; start + seg <= x.size(); start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < seg; ++i) mean += x[start + i];
    mean /= double(seg);
    std::vector<std::complex<double>> buf(seg);
    for (std::size_t i = 0; i < seg; ++i) buf[i] = (x[start + i] - mean) * window[i];
    fft_inplace(buf);
    for (std::size_t k = 0; k <= seg / 2; ++k) {
      double mag2 = std::norm(buf[k]);
      double scale = (k == 0 || k == seg / 2) ? 1.0 : 2.0;  // one-sided
      psd.power[k] += scale * mag2 / (fs * wss);
    }
    ++count;
  }
  if (count == 0) {
    psd.power.clear();
    return psd;
  }
  for (double& p : psd.power) p /= double(count);
  return psd;
}

inline double band_power(const Psd& psd, double lo, double hi) {
  double total = 0.0;
  for (std::size_t k = 0; k < psd.power.size(); ++k) {
    double f = double(k) * psd.df;
    if (f >= lo && f < hi) total += psd.power[k] * psd.df;
  }
  return total;
}

// Natural cubic spline through (t, y), evaluated with clamping to [t0, tn].
class CubicSpline {
 public:
  CubicSpline(std::span<const double> t, std::span<const double> y)
      : t_(t.begin(), t.end()), y_(y.begin(), y.end()) {
    const std::size_t n = t_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
    b[0] = 1.0;
    b[n - 1] = 1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      double h0 = t_[i] - t_[i - 1];
      double h1 = t_[i + 1] - t_[i];
      a[i] = h0;
      b[i] = 2.0 * (h0 + h1);
      c[i] = h1;
      d[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t i = 1; i < n; ++i) {  // Thomas algorithm
      double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    m_[n - 1] = d[n - 1] / b[n - 1];
    for (int i = static_cast<int>(n) - 2; i >= 0; --i) {
      m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
    }
  }

  double operator()(double q) const {
    const std::size_t n = t_.size();
    if (q <= t_.front()) return y_.front();
    if (q >= t_.back()) return y_.back();
    std::size_t hi = std::upper_bound(t_.begin(), t_.end(), q) - t_.begin();
    std::size_t lo = hi - 1;
    double h = t_[hi] - t_[lo];
    double u = (t_[hi] - q) / h;
    double v = (q - t_[lo]) / h;
    return u * y_[lo] + v * y_[hi] +
           ((u * u * u - u) * m_[lo] + (v * v * v - v) * m_[hi]) * h * h / 6.0;
  }

 private:
  std::vector<double> t_, y_, m_;
};

}  // namespace detail

// HRV features over one capsule's RR intervals. Frequency-domain features come
// from a 4 Hz cubic-spline resampling of the tachogram and a Welch spectrum.
inline HrvFeatureVector hrv_features(const RrSeries& rr) {
  const auto& iv = rr.intervals_ms;
  const std::size_t n = iv.size();
  if (n < static_cast<std::size_t>(kMinCapsuleIntervals)) {
    throw Error("hrv_features: capsule under-sampled");
  }
  double duration_ms = 0.0;
  for (double v : iv) duration_ms += v;
  if (duration_ms < kMinCapsuleSeconds * 1000.0) {
    throw Error("hrv_features: capsule under-sampled");
  }

  HrvFeatureVector f;
  double mean = 0.0;
  for (double v : iv) mean += v;
  mean /= double(n);
  f.mean_rr_ms = mean;
  double var = 0.0;
  for (double v : iv) var += (v - mean) * (v - mean);
  f.sdnn_ms = std::sqrt(var / double(n));
  double ssd = 0.0;
  int over50 = 0;
  for (std::size_t i = 1; i < n; ++i) {
    double d = iv[i] - iv[i - 1];
    ssd += d * d;
    if (std::abs(d) > 50.0) ++over50;
  }
  f.rmssd_ms = n > 1 ? std::sqrt(ssd / double(n - 1)) : 0.0;
  f.pnn50_pct = n > 1 ? 100.0 * double(over50) / double(n - 1) : 0.0;

  // beat times (s) against interval values (ms)
  std::vector<double> t(n), y(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += iv[i] / 1000.0;
    t[i] = acc;
    y[i] = iv[i];
  }
  detail::CubicSpline spline(t, y);
  std::vector<double> resampled;
  for (double q = t.front(); q <= t.back() + 1e-12; q += 1.0 / kTachogramRateHz) {
    resampled.push_back(spline(q));
  }
  auto psd = detail::welch_psd(resampled, kTachogramRateHz);
  f.lf_power = detail::band_power(psd, kLfLowHz, kLfHighHz);
  f.hf_power = detail::band_power(psd, kLfHighHz, kHfHighHz);
  if (f.hf_power > 0.0) {
    f.lfhf_ratio = f.lf_power / f.hf_power;
    f.lfhf_defined = true;
  } else {
    f.lfhf_ratio = 0.0;
    f.lfhf_defined = false;
  }
  return f;
}

// Total spectral power of the capsule tachogram; the LF and HF bands can never
// exceed it.
inline double hrv_total_power(const RrSeries& rr) {
  const auto& iv = rr.intervals_ms;
  std::vector<double> t(iv.size()), y(iv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < iv.size(); ++i) {
    acc += iv[i] / 1000.0;
    t[i] = acc;
    y[i] = iv[i];
  }
  detail::CubicSpline spline(t, y);
  std::vector<double> resampled;
  for (double q = t.front(); q <= t.back() + 1e-12; q += 1.0 / kTachogramRateHz) {
    resampled.push_back(spline(q));
  }
  auto psd = detail::welch_psd(resampled, kTachogramRateHz);
  return detail::band_power(psd, 0.0, kTachogramRateHz);  // everything below Nyquist
}

}  // namespace vigil
