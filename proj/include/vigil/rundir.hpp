#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vigil/config.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"

namespace vigil {

// Append-only run directory. The manifest (command, config snapshot, seed,
// content hashes of the inputs) is written before any result; artifact lines
// are appended as files are produced.
class RunDirectory {
 public:
  static RunDirectory create(const std::filesystem::path& dir, const std::string& command,
                             const RunConfig& config, std::uint64_t seed,
                             const std::vector<std::filesystem::path>& inputs) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::path manifest = dir / "manifest.txt";
    if (fs::exists(manifest)) {
      throw IoError("run directory " + dir.string() + " already holds a manifest");
    }
    std::string out = "command=" + command + "\n";
    out += "seed=" + std::to_string(seed) + "\n";
    for (const auto& input : inputs) {
      out += "input." + input.filename().string() + "=" + git_blob_sha1(read_file(input)) + "\n";
    }
    for (const auto& [k, v] : config.values()) out += "config." + k + "=" + v + "\n";
    write_file_atomic(manifest, out);
    return RunDirectory(dir);
  }

  static RunDirectory open(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.txt")) {
      throw IoError(dir.string() + " is not a run directory (no manifest)");
    }
    return RunDirectory(dir);
  }

  const std::filesystem::path& path() const { return dir_; }

  std::filesystem::path file(const std::string& rel) const { return dir_ / rel; }

  void write_text(const std::string& rel, const std::string& content) {
    write_file_atomic(dir_ / rel, content);
    record_artifact(rel);
  }

  void record_artifact(const std::string& rel) {
    std::ofstream out(dir_ / "manifest.txt", std::ios::app);
    if (!out) throw IoError("cannot append to manifest in " + dir_.string());
    out << "artifact=" << rel << "\n";
  }

 private:
  explicit RunDirectory(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path dir_;
};

}  // namespace vigil
