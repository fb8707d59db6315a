#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace svelift {

/// Outcome of one config-driven run. Exceptions signal failure
/// (ConfigError for schema violations, NumericalError and subclasses for
/// numerical faults); a returned outcome means success.
struct RunOutcome {
  std::string mode;
  /// Files written into the output directory (relative names),
  /// manifest.json last.
  std::vector<std::string> outputs;
  /// Human-readable result lines for terminal display.
  std::string report;
  /// Optimal cost when the mode solved the control problem.
  std::optional<double> theta0;
};

/// Command-line overrides applied on top of the config document.
struct RunOverrides {
  /// Executes this mode regardless of the document's "mode" field (the
  /// CLI passes its subcommand here). Without it the document's field
  /// decides, and is then required.
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_paths;
};

/// Parses the JSON config document and executes its mode
/// (kernel-check | equivalence | solve | evaluate | closed-loop),
/// writing the mode's CSV/JSON outputs plus a manifest.json holding the
/// fully resolved configuration (every default made explicit) and an
/// FNV-1a64 content hash of every output file. Identical resolved
/// configurations produce byte-identical outputs.
RunOutcome run_experiment(const std::string& config_text,
                          const std::string& out_dir,
                          const RunOverrides& overrides = {});

/// Convenience wrapper reading the config document from a file.
RunOutcome run_experiment_file(const std::string& config_path,
                               const std::string& out_dir,
                               const RunOverrides& overrides = {});

/// FNV-1a 64-bit hash of a byte string, formatted as 0x%016x.
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace svelift
