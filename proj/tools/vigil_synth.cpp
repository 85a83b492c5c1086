// Writes a synthetic annotated ECG recording in the plain-text format the
// pipeline ingests. Handy for exercising the CLI without the real dataset.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>

#include "vigil/io.hpp"
#include "vigil/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic annotated ECG generator"};
  std::string out_dir = "fixture";
  int n_events = 4;
  int fs = 128;
  std::uint64_t seed = 1;
  double snr_db = 20.0;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--events", n_events, "number of drowsiness events");
  app.add_option("--sample-rate", fs, "sampling rate (Hz)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--snr", snr_db, "signal-to-noise ratio (dB)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto ecg = vigil::make_labeled_recording(n_events, fs, seed, snr_db);
    std::string signal;
    signal.reserve(ecg.recording.samples.size() * 10);
    for (double v : ecg.recording.samples) {
      signal += vigil::format_double(v, 9);
      signal += '\n';
    }
    std::string events;
    for (const auto& e : ecg.recording.events) {
      events += std::to_string(e.sample_index);
      events += '\n';
    }
    std::string meta = "sample_rate_hz=" + std::to_string(fs) + "\nresolution_bits=16\n";
    std::filesystem::path dir(out_dir);
    vigil::write_file_atomic(dir / "ecg.txt", signal);
    vigil::write_file_atomic(dir / "events.txt", events);
    vigil::write_file_atomic(dir / "meta.txt", meta);
    std::printf("wrote %zu samples, %zu events to %s\n", ecg.recording.samples.size(),
                ecg.recording.events.size(), out_dir.c_str());
  } catch (const vigil::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
