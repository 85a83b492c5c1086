#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "vigil/capsule.hpp"
#include "vigil/ecg.hpp"
#include "vigil/rng.hpp"

namespace vigil {

// Synthetic ECG: a train of Gaussian QRS bumps at scheduled RR intervals plus
// white noise at a chosen SNR. The scheduled peak positions are kept as ground
// truth for the detector tests.
struct SyntheticEcg {
  EcgRecording recording;
  std::vector<long> true_peaks;
};

inline SyntheticEcg make_synthetic_ecg(const std::vector<double>& rr_ms, int fs, double snr_db,
                                       std::uint64_t seed, double qrs_sigma_ms = 12.0,
                                       double lead_in_s = 1.0, double tail_s = 1.0) {
  SyntheticEcg out;
  out.recording.sample_rate_hz = fs;

  std::vector<double> beat_times;
  double t = lead_in_s;
  beat_times.push_back(t);
  for (double rr : rr_ms) {
    t += rr / 1000.0;
    beat_times.push_back(t);
  }
  long n = std::lround((t + tail_s) * fs);
  out.recording.samples.assign(n, 0.0);

  const double sigma_s = qrs_sigma_ms / 1000.0;
  for (double bt : beat_times) {
    out.true_peaks.push_back(std::lround(bt * fs));
    long lo = std::max<long>(0, std::lround((bt - 5.0 * sigma_s) * fs));
    long hi = std::min<long>(n - 1, std::lround((bt + 5.0 * sigma_s) * fs));
    for (long i = lo; i <= hi; ++i) {
      double dt = double(i) / fs - bt;
      out.recording.samples[i] += std::exp(-dt * dt / (2.0 * sigma_s * sigma_s));
    }
  }

  if (std::isfinite(snr_db)) {
    double signal_power = 0.0;
    for (double v : out.recording.samples) signal_power += v * v;
    signal_power /= double(n);
    double noise_sigma = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));
    Rng rng(seed);
    for (double& v : out.recording.samples) v += rng.normal(0.0, noise_sigma);
  }
  return out;
}

// RR schedules with distinct rhythm dynamics. Alert: faster heart rate with
// respiratory-band (HF) modulation. Drowsy: slower rate with a strong
// low-frequency oscillation, mimicking the physiology the classifier must
// separate.
inline std::vector<double> rr_pattern_alert(double duration_s, Rng& rng) {
  std::vector<double> rr;
  double t = 0.0;
  while (t < duration_s) {
    double v = 780.0 + 30.0 * std::sin(2.0 * std::numbers::pi * 0.25 * t) + rng.normal(0.0, 8.0);
    v = std::clamp(v, 500.0, 1200.0);
    rr.push_back(v);
    t += v / 1000.0;
  }
  return rr;
}

inline std::vector<double> rr_pattern_drowsy(double duration_s, Rng& rng) {
  std::vector<double> rr;
  double t = 0.0;
  while (t < duration_s) {
    double v = 1020.0 + 90.0 * std::sin(2.0 * std::numbers::pi * 0.06 * t) + rng.normal(0.0, 8.0);
    v = std::clamp(v, 500.0, 1500.0);
    rr.push_back(v);
    t += v / 1000.0;
  }
  return rr;
}

// A full recording with button-press annotations: alert stretches interleaved
// with drowsy stretches, each drowsy stretch ending at an event marker. Sized
// so that every event hosts a 120 s DEW and every DEW can be paired with an
// event-free NSRW.
inline SyntheticEcg make_labeled_recording(int n_events, int fs, std::uint64_t seed,
                                           double snr_db = 20.0, double alert_s = 400.0,
                                           double drowsy_s = 130.0) {
  Rng rng(derive_seed(seed, "rr-schedule"));
  std::vector<double> rr;
  std::vector<double> event_times;
  double t = 0.0;
  for (int k = 0; k < n_events; ++k) {
    for (double v : rr_pattern_alert(alert_s, rng)) {
      rr.push_back(v);
      t += v / 1000.0;
    }
    for (double v : rr_pattern_drowsy(drowsy_s, rng)) {
      rr.push_back(v);
      t += v / 1000.0;
    }
    event_times.push_back(t);
  }
  // trailing alert stretch so the last event is interior
  for (double v : rr_pattern_alert(alert_s, rng)) rr.push_back(v);

  SyntheticEcg ecg = make_synthetic_ecg(rr, fs, snr_db, derive_seed(seed, "noise"));
  const double lead_in_s = 1.0;
  for (double et : event_times) {
    long idx = std::lround((et + lead_in_s) * fs);
    idx = std::min<long>(idx, static_cast<long>(ecg.recording.samples.size()) - 1);
    ecg.recording.events.push_back({idx});
  }
  ecg.recording.validate();
  return ecg;
}

// Linearly separable capsule fixture for the classifier harness: the two
// classes sit on opposite sides of a margin in every feature.
inline std::vector<CapsuleSequence> make_separable_capsules(const CapsuleConfig& cfg,
                                                            int per_class, std::uint64_t seed,
                                                            double margin = 3.0) {
  Rng rng(seed);
  std::vector<CapsuleSequence> dataset;
  dataset.reserve(2 * per_class);
  for (int i = 0; i < 2 * per_class; ++i) {
    CapsuleSequence seq;
    seq.config = cfg;
    seq.label = i % 2;
    seq.source_window = {seq.label == 1 ? WindowKind::dew : WindowKind::nsrw, 0,
                         kDefaultWindowSamples};
    seq.rows = Matrix(cfg.capsule_count, HrvFeatureVector::kCount);
    double center = seq.label == 1 ? margin : -margin;
    for (int r = 0; r < seq.rows.rows; ++r) {
      for (int c = 0; c < seq.rows.cols; ++c) {
        seq.rows(r, c) = center + rng.normal(0.0, 1.0);
      }
    }
    dataset.push_back(std::move(seq));
  }
  return dataset;
}

}  // namespace vigil
