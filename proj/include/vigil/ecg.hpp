#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vigil/error.hpp"
#include "vigil/io.hpp"

namespace vigil {

struct EventMarker {
  long sample_index = 0;
};

struct EcgRecording {
  std::vector<double> samples;  // millivolts
  int sample_rate_hz = 128;
  int resolution_bits = 16;
  std::vector<EventMarker> events;  // strictly increasing

  double duration_s() const { return double(samples.size()) / sample_rate_hz; }

  void validate() const {
    if (sample_rate_hz <= 0) throw Error("recording: sample_rate_hz must be positive");
    long prev = -1;
    for (const auto& e : events) {
      if (e.sample_index <= prev) throw Error("recording: events must be strictly increasing");
      if (e.sample_index < 0 || e.sample_index >= static_cast<long>(samples.size())) {
        throw Error("recording: event index " + std::to_string(e.sample_index) +
                    " outside recording bounds");
      }
      prev = e.sample_index;
    }
  }
};

struct RrSeries {
  std::vector<long> peak_indices;     // sorted sample indices
  std::vector<double> intervals_ms;   // size = peaks - 1
  std::vector<bool> out_of_range;     // interval outside [250, 2500] ms, kept but flagged
  std::optional<std::string> origin_window;
};

inline constexpr double kRrFlagLowMs = 250.0;
inline constexpr double kRrFlagHighMs = 2500.0;

// ---------------------------------------------------------------------------
// Loading

struct EcgMetadata {
  int sample_rate_hz = 0;
  int resolution_bits = 16;
};

// Sidecar metadata: sample_rate_hz=<int> and resolution_bits=<int>, one per line.
inline EcgMetadata load_metadata(const std::filesystem::path& path) {
  auto kv = read_kv(path);
  EcgMetadata meta;
  auto it = kv.find("sample_rate_hz");
  if (it == kv.end()) throw IoError(path.string() + ": missing sample_rate_hz");
  meta.sample_rate_hz = static_cast<int>(parse_long(it->second, path.string()));
  if (auto rb = kv.find("resolution_bits"); rb != kv.end()) {
    meta.resolution_bits = static_cast<int>(parse_long(rb->second, path.string()));
  }
  if (meta.sample_rate_hz <= 0) throw IoError(path.string() + ": sample_rate_hz must be positive");
  return meta;
}

// Signal file: one sample per line. Events file: one sample index per line,
// deduplicated and sorted on load.
inline EcgRecording load_recording(const std::filesystem::path& signal_path,
                                   const std::filesystem::path& events_path, int sample_rate_hz,
                                   int resolution_bits = 16) {
  EcgRecording rec;
  rec.sample_rate_hz = sample_rate_hz;
  rec.resolution_bits = resolution_bits;
  auto lines = read_lines(signal_path);
  rec.samples.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string t = trim(lines[i]);
    if (t.empty()) continue;
    rec.samples.push_back(
        parse_double(t, signal_path.string() + ":" + std::to_string(i + 1)));
  }
  std::vector<long> events;
  auto event_lines = read_lines(events_path);
  for (std::size_t i = 0; i < event_lines.size(); ++i) {
    std::string t = trim(event_lines[i]);
    if (t.empty()) continue;
    events.push_back(parse_long(t, events_path.string() + ":" + std::to_string(i + 1)));
  }
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  for (long e : events) {
    if (e < 0 || e >= static_cast<long>(rec.samples.size())) {
      throw Error("event index " + std::to_string(e) + " outside recording bounds");
    }
    rec.events.push_back({e});
  }
  rec.validate();
  return rec;
}

// ---------------------------------------------------------------------------
// Zero-phase band-pass 0.5-40 Hz: Butterworth high-pass (order 2) cascaded
// with Butterworth low-pass (order 4, two sections), applied forward and
// backward with steady-state initial conditions and odd-reflection padding.

namespace detail {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

inline Biquad lowpass_biquad(double fc, double fs, double q) {
  double w0 = 2.0 * std::numbers::pi * fc / fs;
  double cosw = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  double a0 = 1.0 + alpha;
  return {(1.0 - cosw) / 2.0 / a0, (1.0 - cosw) / a0, (1.0 - cosw) / 2.0 / a0,
          -2.0 * cosw / a0, (1.0 - alpha) / a0};
}

inline Biquad highpass_biquad(double fc, double fs, double q) {
  double w0 = 2.0 * std::numbers::pi * fc / fs;
  double cosw = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  double a0 = 1.0 + alpha;
  return {(1.0 + cosw) / 2.0 / a0, -(1.0 + cosw) / a0, (1.0 + cosw) / 2.0 / a0,
          -2.0 * cosw / a0, (1.0 - alpha) / a0};
}

inline std::vector<Biquad> bandpass_sections(double lo, double hi, double fs) {
  // Butterworth Q values: order 2 -> 0.7071; order 4 -> 0.5412, 1.3066
  return {highpass_biquad(lo, fs, std::numbers::sqrt2 / 2.0),
          lowpass_biquad(hi, fs, 0.54119610014620),
          lowpass_biquad(hi, fs, 1.30656296487638)};
}

// Direct-form II transposed, with initial state set to the steady-state
// response for a step of the first sample (lfilter_zi behaviour). This makes
// constant inputs map to exactly zero through the high-pass section.
inline void biquad_filter(const Biquad& s, std::vector<double>& x) {
  if (x.empty()) return;
  double h = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  double z1 = (h - s.b0) * x[0];
  double z2 = (s.b2 - s.a2 * h) * x[0];
  for (double& v : x) {
    double y = s.b0 * v + z1;
    z1 = s.b1 * v - s.a1 * y + z2;
    z2 = s.b2 * v - s.a2 * y;
    v = y;
  }
}

inline std::vector<double> filtfilt(const std::vector<Biquad>& sections,
                                    const std::vector<double>& x, int padlen) {
  const long n = static_cast<long>(x.size());
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (int i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
  for (const auto& s : sections) biquad_filter(s, ext);
  std::reverse(ext.begin(), ext.end());
  for (const auto& s : sections) biquad_filter(s, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + padlen, ext.begin() + padlen + n};
}

}  // namespace detail

inline int filter_warmup_samples(int sample_rate_hz) { return sample_rate_hz; }

inline EcgRecording bandpass_filter(const EcgRecording& rec, double low_hz = 0.5,
                                    double high_hz = 40.0) {
  const int fs = rec.sample_rate_hz;
  if (static_cast<int>(rec.samples.size()) < filter_warmup_samples(fs)) {
    throw Error("bandpass_filter: recording shorter than filter warm-up");
  }
  int padlen = std::min<long>(3L * fs, static_cast<long>(rec.samples.size()) - 1);
  EcgRecording out = rec;
  out.samples = detail::filtfilt(detail::bandpass_sections(low_hz, high_hz, fs), rec.samples,
                                 padlen);
  return out;
}

// ---------------------------------------------------------------------------
// R-peak detection: derivative -> square -> moving-window integral, threshold
// from a global percentile of the integrated signal, 200 ms refractory, peak
// position refined to the local signal maximum.

inline constexpr double kRefractoryMs = 200.0;

inline RrSeries detect_r_peaks(const EcgRecording& rec) {
  const int fs = rec.sample_rate_hz;
  const long n = static_cast<long>(rec.samples.size());
  if (rec.duration_s() < 10.0) throw Error("detect_r_peaks: recording shorter than 10 s");
  const auto& x = rec.samples;

  // Pan-Tompkins style derivative, squared
  std::vector<double> sq(n, 0.0);
  for (long i = 4; i < n; ++i) {
    double d = (2.0 * x[i] + x[i - 1] - x[i - 3] - 2.0 * x[i - 4]) / 8.0;
    sq[i] = d * d;
  }

  // moving-window integral over 150 ms
  const long w = std::max<long>(2, std::lround(0.150 * fs));
  std::vector<double> mwi(n, 0.0);
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    acc += sq[i];
    if (i >= w) acc -= sq[i - w];
    mwi[i] = acc / double(std::min(i + 1, w));
  }

  // threshold: fraction of a high percentile of the integrated signal; this
  // keeps detections invariant to amplitude scaling and input shifts
  std::vector<double> sorted = mwi;
  std::sort(sorted.begin(), sorted.end());
  double p98 = sorted[static_cast<std::size_t>(0.98 * double(n - 1))];
  double threshold = 0.25 * p98;

  const long refractory = std::lround(kRefractoryMs / 1000.0 * fs);
  std::vector<long> candidates;
  for (long i = 1; i + 1 < n; ++i) {
    if (mwi[i] > threshold && mwi[i] > 0.0 && mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1]) {
      candidates.push_back(i);
    }
  }

  // refractory merge on the detection function, strongest candidate wins
  std::vector<long> kept;
  for (long c : candidates) {
    while (!kept.empty() && c - kept.back() < refractory) {
      if (mwi[c] > mwi[kept.back()]) {
        kept.pop_back();
      } else {
        break;
      }
    }
    if (kept.empty() || c - kept.back() >= refractory) kept.push_back(c);
  }

  // refine to the R position: maximum of the signal inside the integration span
  std::vector<long> peaks;
  for (long c : kept) {
    long lo = std::max<long>(0, c - w);
    long hi = std::min<long>(n - 1, c + w / 2);
    long best = lo;
    for (long i = lo + 1; i <= hi; ++i) {
      if (x[i] > x[best]) best = i;
    }
    peaks.push_back(best);
  }
  std::sort(peaks.begin(), peaks.end());
  peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());

  // enforce the refractory period on the refined positions as well
  std::vector<long> final_peaks;
  for (long p : peaks) {
    while (!final_peaks.empty() && p - final_peaks.back() < refractory) {
      if (x[p] > x[final_peaks.back()]) {
        final_peaks.pop_back();
      } else {
        break;
      }
    }
    if (final_peaks.empty() || p - final_peaks.back() >= refractory) final_peaks.push_back(p);
  }

  if (final_peaks.size() < 2) throw Error("detect_r_peaks: insufficient peaks");

  RrSeries rr;
  rr.peak_indices = std::move(final_peaks);
  rr.intervals_ms.reserve(rr.peak_indices.size() - 1);
  for (std::size_t i = 1; i < rr.peak_indices.size(); ++i) {
    double ms = 1000.0 * double(rr.peak_indices[i] - rr.peak_indices[i - 1]) / fs;
    rr.intervals_ms.push_back(ms);
    rr.out_of_range.push_back(ms < kRrFlagLowMs || ms > kRrFlagHighMs);
  }
  return rr;
}

}  // namespace vigil
