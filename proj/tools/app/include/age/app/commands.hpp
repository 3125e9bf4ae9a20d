#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "age/app/config.hpp"

namespace age::app {

// Artifact names inside the --out directory.
namespace files {
inline constexpr const char* kWorld = "world.agew";
inline constexpr const char* kSeen = "seen.agel";
inline constexpr const char* kTest = "test.agel";
inline constexpr const char* kUnseen = "unseen.agel";
inline constexpr const char* kDictionary = "dictionary.aged";
inline constexpr const char* kCheckpoint = "encoder.agee";
inline constexpr const char* kTrainReport = "train_report.jsonl";
inline constexpr const char* kRefined = "refined.aged";
inline constexpr const char* kEdits = "edits.agel";
inline constexpr const char* kEditProvenance = "edits.jsonl";
inline constexpr const char* kBaselineEdits = "baseline_edits.agel";
inline constexpr const char* kBaselineProvenance = "baseline_edits.jsonl";
inline constexpr const char* kSweepCsv = "alpha_sweep.csv";
inline constexpr const char* kSweepSvg = "alpha_sweep.svg";
inline constexpr const char* kSpectraCsv = "spectra.csv";
}  // namespace files

// "<command>.metrics.jsonl"
std::filesystem::path metrics_path(const std::filesystem::path& out, const std::string& command);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> t;
  std::optional<std::size_t> count;
  bool baseline = false;
  std::optional<std::filesystem::path> out;
};

// Defaults, then the config file, then flags; validated.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_path,
                         const CliOverrides& overrides);

void cmd_synth(const RunConfig& config, std::ostream& log);
// With `resume`, continues the checkpoint in the output directory for
// config.train.epochs more epochs and appends to the report.
void cmd_train(const RunConfig& config, bool resume, std::ostream& log);
void cmd_edit(const RunConfig& config, std::ostream& log);
void cmd_analyze(const RunConfig& config, std::ostream& log);

// Whole command line; returns the process exit code. Failures print one
// diagnostic line and one JSON error record to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace age::app
