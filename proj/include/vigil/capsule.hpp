#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vigil/ecg.hpp"
#include "vigil/error.hpp"
#include "vigil/hrv.hpp"
#include "vigil/io.hpp"
#include "vigil/matrix.hpp"

namespace vigil {

inline constexpr long kDefaultWindowSamples = 15360;  // 120 s at 128 Hz
inline constexpr double kDefaultMinGapSeconds = 120.0;

enum class WindowKind { dew, nsrw };

struct Window {
  WindowKind kind = WindowKind::dew;
  long start_sample = 0;
  long length_samples = kDefaultWindowSamples;

  long end_sample() const { return start_sample + length_samples; }
};

// A CNM segmentation: capsule size C (samples), count N, overlap fraction M.
// Valid configurations satisfy M = (C*N - L) / ((N-1)*C) with M in (0,1) and
// an exact two-decimal representation.
struct CapsuleConfig {
  long capsule_samples = 0;  // C
  int capsule_count = 0;     // N
  double overlap = 0.0;      // M

  std::string label() const {
    return "C" + std::to_string(capsule_samples) + "_N" + std::to_string(capsule_count) + "_M" +
           std::to_string(static_cast<long>(std::llround(100.0 * overlap)));
  }
};

// Window overlap used only at inference to stride predictions over a full
// recording.
struct SlidingInference {
  double window_overlap = 0.75;  // M'
};

inline constexpr int kMinCapsuleCount = 2;
inline constexpr int kMaxCapsuleCount = 200;
inline constexpr int kMinCapsuleSecondsRange = 40;
inline constexpr int kMaxCapsuleSecondsRange = 120;

// Overlap fraction per the CNM rule. Returns nullopt when the configuration is
// simply invalid (M outside (0,1) or not representable with two decimals).
inline std::optional<double> compute_overlap(long capsule_samples, int capsule_count,
                                             long window_samples) {
  if (capsule_count < 2) throw Error("compute_overlap: capsule count must be at least 2");
  if (capsule_samples <= 0) throw Error("compute_overlap: capsule size must be positive");
  double m = double(capsule_samples * capsule_count - window_samples) /
             (double(capsule_count - 1) * double(capsule_samples));
  if (!(m > 0.0 && m < 1.0)) return std::nullopt;
  if (std::abs(100.0 * m - std::llround(100.0 * m)) >= 1e-9) return std::nullopt;
  return m;
}

inline long capsule_stride(const CapsuleConfig& cfg) {
  return std::llround(double(cfg.capsule_samples) * (1.0 - cfg.overlap));
}

// Capsule i spans [i*stride, i*stride + C). The rounded stride must tile the
// window to within one sample.
inline std::vector<std::pair<long, long>> slice_capsules(const Window& window,
                                                         const CapsuleConfig& cfg) {
  const long L = window.length_samples;
  const long stride = capsule_stride(cfg);
  const long last_end = stride * (cfg.capsule_count - 1) + cfg.capsule_samples;
  if (std::abs(last_end - L) > 1 || stride <= 0) {
    throw Error("slice_capsules: non-tiling configuration " + cfg.label());
  }
  std::vector<std::pair<long, long>> ranges;
  ranges.reserve(cfg.capsule_count);
  for (int i = 0; i < cfg.capsule_count; ++i) {
    long start = window.start_sample + i * stride;
    ranges.emplace_back(start, start + cfg.capsule_samples);
  }
  return ranges;
}

inline bool config_tiles(const CapsuleConfig& cfg, long window_samples) {
  long stride = capsule_stride(cfg);
  if (stride <= 0) return false;
  long last_end = stride * (cfg.capsule_count - 1) + cfg.capsule_samples;
  return std::abs(last_end - window_samples) <= 1;
}

// All valid configurations for a window of L samples. Capsule sizes are whole
// seconds (C = seconds * sample rate); only configurations that both satisfy
// the overlap rule and tile the window after stride rounding are emitted,
// sorted by label.
inline std::vector<CapsuleConfig> enumerate_configs(long window_samples, int sample_rate_hz,
                                                    int n_min = kMinCapsuleCount,
                                                    int n_max = kMaxCapsuleCount,
                                                    int c_min_s = kMinCapsuleSecondsRange,
                                                    int c_max_s = kMaxCapsuleSecondsRange) {
  std::vector<CapsuleConfig> configs;
  for (int sec = c_min_s; sec <= c_max_s; ++sec) {
    long c = long(sec) * sample_rate_hz;
    for (int n = std::max(2, n_min); n <= n_max; ++n) {
      auto m = compute_overlap(c, n, window_samples);
      if (!m) continue;
      CapsuleConfig cfg{c, n, *m};
      if (!config_tiles(cfg, window_samples)) continue;
      configs.push_back(cfg);
    }
  }
  std::sort(configs.begin(), configs.end(),
            [](const CapsuleConfig& a, const CapsuleConfig& b) { return a.label() < b.label(); });
  return configs;
}

// Parse a canonical "C{C}_N{N}_M{MM}" label and validate it against the
// overlap rule for the given window length.
inline CapsuleConfig parse_config_label(const std::string& label, long window_samples) {
  long c = 0;
  int n = 0, m_pct = 0;
  if (std::sscanf(label.c_str(), "C%ld_N%d_M%d", &c, &n, &m_pct) != 3) {
    throw Error("bad capsule config label '" + label + "'");
  }
  auto m = compute_overlap(c, n, window_samples);
  if (!m || std::llround(100.0 * *m) != m_pct) {
    throw Error("capsule config label '" + label + "' is not valid for L=" +
                std::to_string(window_samples));
  }
  CapsuleConfig cfg{c, n, *m};
  if (!config_tiles(cfg, window_samples)) {
    throw Error("capsule config label '" + label + "' does not tile the window");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// DEW / NSRW extraction

enum class DewAnchor { window_end, centered };

// One DEW per qualifying event (at least min_gap_s after the previous event,
// window inside the recording), plus one event-free NSRW per DEW at least
// min_gap_s away from every event. The result is class balanced and pairwise
// ordered: result[2k] is a DEW and result[2k+1] its NSRW.
inline std::vector<Window> extract_windows(const EcgRecording& rec, long window_samples,
                                           double min_gap_s = kDefaultMinGapSeconds,
                                           DewAnchor anchor = DewAnchor::window_end) {
  rec.validate();
  const long n = static_cast<long>(rec.samples.size());
  const long fs = rec.sample_rate_hz;
  if (window_samples > n) throw Error("extract_windows: window longer than recording");
  const long gap = std::llround(min_gap_s * fs);

  std::vector<Window> dews;
  long prev_event = std::numeric_limits<long>::min() / 2;
  for (const auto& ev : rec.events) {
    bool gap_ok = ev.sample_index - prev_event >= gap;
    prev_event = ev.sample_index;
    if (!gap_ok) continue;
    long start = anchor == DewAnchor::window_end ? ev.sample_index - window_samples
                                                 : ev.sample_index - window_samples / 2;
    if (start < 0 || start + window_samples > n) continue;  // window does not fit
    dews.push_back({WindowKind::dew, start, window_samples});
  }
  if (dews.empty()) return {};

  auto overlaps = [&](long start, const std::vector<Window>& ws) {
    for (const auto& w : ws) {
      if (start < w.end_sample() && w.start_sample < start + window_samples) return true;
    }
    return false;
  };
  auto event_free_and_clear = [&](long start) {
    for (const auto& ev : rec.events) {
      if (ev.sample_index >= start && ev.sample_index < start + window_samples) return false;
      long dist = ev.sample_index < start ? start - ev.sample_index
                                          : ev.sample_index - (start + window_samples);
      if (dist < gap) return false;
    }
    return true;
  };

  std::vector<Window> nsrws;
  const long step = fs;  // scan at 1 s resolution
  long cursor = 0;
  for (std::size_t i = 0; i < dews.size(); ++i) {
    bool found = false;
    for (long start = cursor; start + window_samples <= n; start += step) {
      if (!event_free_and_clear(start)) continue;
      if (overlaps(start, dews) || overlaps(start, nsrws)) continue;
      nsrws.push_back({WindowKind::nsrw, start, window_samples});
      cursor = start + step;
      found = true;
      break;
    }
    if (!found) throw Error("extract_windows: cannot balance classes");
  }

  std::vector<Window> out;
  out.reserve(2 * dews.size());
  for (std::size_t i = 0; i < dews.size(); ++i) {
    out.push_back(dews[i]);
    out.push_back(nsrws[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset construction

struct CapsuleSequence {
  CapsuleConfig config;
  Matrix rows;  // N x 7 feature matrix
  int label = 0;  // drowsy = 1, non-drowsy = 0
  Window source_window;
};

namespace detail {

// RR intervals restricted to one capsule range; intervals are those between
// consecutive peaks inside [start, end).
inline RrSeries rr_slice(const RrSeries& rr, long start, long end, int fs) {
  RrSeries out;
  for (long p : rr.peak_indices) {
    if (p >= start && p < end) out.peak_indices.push_back(p);
  }
  for (std::size_t i = 1; i < out.peak_indices.size(); ++i) {
    double ms = 1000.0 * double(out.peak_indices[i] - out.peak_indices[i - 1]) / fs;
    out.intervals_ms.push_back(ms);
    out.out_of_range.push_back(ms < kRrFlagLowMs || ms > kRrFlagHighMs);
  }
  return out;
}

// A capsule is usable when it has enough in-range RR intervals.
inline std::optional<HrvFeatureVector> capsule_features(const RrSeries& rr, long start, long end,
                                                        int fs) {
  RrSeries slice = rr_slice(rr, start, end, fs);
  if (slice.intervals_ms.size() < static_cast<std::size_t>(kMinCapsuleIntervals)) {
    return std::nullopt;
  }
  for (bool flagged : slice.out_of_range) {
    if (flagged) return std::nullopt;
  }
  try {
    return hrv_features(slice);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

// One CapsuleSequence per window. Windows come in DEW/NSRW pairs; when either
// member of a pair yields an invalid capsule, the whole pair is dropped so the
// dataset stays balanced.
inline std::vector<CapsuleSequence> build_dataset(const RrSeries& rr,
                                                  const std::vector<Window>& windows,
                                                  const CapsuleConfig& cfg, int sample_rate_hz) {
  if (windows.size() % 2 != 0) throw Error("build_dataset: windows must come in DEW/NSRW pairs");
  std::vector<CapsuleSequence> out;
  for (std::size_t pair = 0; pair + 1 < windows.size(); pair += 2) {
    std::array<const Window*, 2> pw{&windows[pair], &windows[pair + 1]};
    std::array<CapsuleSequence, 2> seqs;
    bool valid = true;
    for (int k = 0; k < 2 && valid; ++k) {
      const Window& w = *pw[k];
      auto ranges = slice_capsules(w, cfg);
      CapsuleSequence seq;
      seq.config = cfg;
      seq.label = w.kind == WindowKind::dew ? 1 : 0;
      seq.source_window = w;
      seq.rows = Matrix(cfg.capsule_count, HrvFeatureVector::kCount);
      for (std::size_t i = 0; i < ranges.size(); ++i) {
        auto features = detail::capsule_features(rr, ranges[i].first, ranges[i].second,
                                                 sample_rate_hz);
        if (!features) {
          valid = false;
          break;
        }
        auto row = features->as_array();
        for (int c = 0; c < HrvFeatureVector::kCount; ++c) {
          seq.rows(static_cast<int>(i), c) = row[c];
        }
      }
      seqs[k] = std::move(seq);
    }
    if (!valid) continue;  // drop the pair to preserve balance
    out.push_back(std::move(seqs[0]));
    out.push_back(std::move(seqs[1]));
  }
  if (out.empty()) throw Error("build_dataset: all sequences invalid");
  return out;
}

// ---------------------------------------------------------------------------
// Dataset cache: one file per configuration.

inline void save_dataset(const std::filesystem::path& path,
                         const std::vector<CapsuleSequence>& dataset) {
  if (dataset.empty()) throw Error("save_dataset: empty dataset");
  const auto& cfg = dataset.front().config;
  std::string out = "format_version=1\n";
  out += "label=" + cfg.label() + "\n";
  out += "C=" + std::to_string(cfg.capsule_samples) + "\n";
  out += "N=" + std::to_string(cfg.capsule_count) + "\n";
  out += "M=" + format_double(cfg.overlap, 17) + "\n";
  out += "features=" + std::to_string(HrvFeatureVector::kCount) + "\n";
  out += "sequences=" + std::to_string(dataset.size()) + "\n";
  for (const auto& seq : dataset) {
    out += "seq label=" + std::to_string(seq.label) + "\n";
    for (int r = 0; r < seq.rows.rows; ++r) {
      for (int c = 0; c < seq.rows.cols; ++c) {
        if (c > 0) out += ',';
        out += format_double(seq.rows(r, c), 17);
      }
      out += '\n';
    }
  }
  write_file_atomic(path, out);
}

inline std::vector<CapsuleSequence> load_dataset(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  std::size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= lines.size()) throw IoError(path.string() + ": truncated dataset file");
    return lines[i++];
  };
  auto expect_kv = [&](const std::string& key) {
    const std::string& line = next();
    if (line.rfind(key + "=", 0) != 0) throw IoError(path.string() + ": expected " + key);
    return line.substr(key.size() + 1);
  };
  if (next() != "format_version=1") throw IoError(path.string() + ": unsupported format");
  CapsuleConfig cfg;
  expect_kv("label");
  cfg.capsule_samples = parse_long(expect_kv("C"), path.string());
  cfg.capsule_count = static_cast<int>(parse_long(expect_kv("N"), path.string()));
  cfg.overlap = parse_double(expect_kv("M"), path.string());
  int features = static_cast<int>(parse_long(expect_kv("features"), path.string()));
  long count = parse_long(expect_kv("sequences"), path.string());
  std::vector<CapsuleSequence> dataset;
  dataset.reserve(count);
  for (long s = 0; s < count; ++s) {
    const std::string& header = next();
    if (header.rfind("seq label=", 0) != 0) throw IoError(path.string() + ": expected seq header");
    CapsuleSequence seq;
    seq.config = cfg;
    seq.label = static_cast<int>(parse_long(header.substr(10), path.string()));
    seq.rows = Matrix(cfg.capsule_count, features);
    for (int r = 0; r < cfg.capsule_count; ++r) {
      std::istringstream row(next());
      std::string cell;
      for (int c = 0; c < features; ++c) {
        if (!std::getline(row, cell, ',')) throw IoError(path.string() + ": short row");
        seq.rows(r, c) = parse_double(trim(cell), path.string());
      }
    }
    dataset.push_back(std::move(seq));
  }
  return dataset;
}

}  // namespace vigil
