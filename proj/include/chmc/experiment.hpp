#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chmc/diagnostics.hpp"
#include "chmc/phase.hpp"
#include "chmc/potential.hpp"
#include "chmc/samplers.hpp"

namespace chmc {

inline constexpr int kMetaSchemaVersion = 1;
std::string library_version();

enum class TargetKind { quartic, gaussian };
enum class CovarianceSetting { automatic, full, diagonal };

struct TargetSpec {
  TargetKind kind = TargetKind::quartic;
  std::size_t dimension = 1;
  Vector mean;        // gaussian only
  Matrix covariance;  // gaussian only
  std::string mean_source;        // "inline", "zeros" or a file path
  std::string covariance_source;  // "inline", "identity" or a file path
};

struct MassSpec {
  MassMatrix::Kind kind = MassMatrix::Kind::identity;
  Vector diagonal;
  Matrix dense;
};

struct MethodSpec {
  std::string name;
  SamplerConfig sampler;
};

struct ExperimentSpec {
  TargetSpec target;
  MassSpec mass;
  std::vector<MethodSpec> methods;
  std::size_t chains = 1;
  std::filesystem::path output_dir;
  CovarianceSetting covariance = CovarianceSetting::automatic;
  std::uint64_t seed = 1;
  std::size_t record_stride = 10;

  CovarianceMode resolved_covariance_mode() const;
};

struct ValidationResult {
  std::optional<ExperimentSpec> spec;
  std::vector<std::string> errors;  // "field.path: message"
  bool ok() const { return errors.empty() && spec.has_value(); }
};

/// Parses a JSON run specification, filling documented defaults and reporting
/// every violation. Relative file paths inside the config resolve against
/// `base_dir`.
ValidationResult validate_spec(const std::string& raw_text,
                               const std::filesystem::path& base_dir = {});

/// Resolved spec back to JSON (written into meta.json).
std::string spec_to_json(const ExperimentSpec& spec, int indent = 2);

std::unique_ptr<Potential> make_target(const TargetSpec& spec);
MassMatrix make_mass(const MassSpec& spec, std::size_t dimension);
TargetCovariance target_covariance(const TargetSpec& spec);

struct RunOptions {
  /// 0 means one worker per hardware thread.
  std::size_t workers = 0;
  std::ostream* log = nullptr;
};

struct ChainRecord {
  std::string method;
  std::size_t chain = 0;
  SamplerConfig sampler;
  ChainSummary summary;
};

struct ExperimentResult {
  std::vector<ChainRecord> chains;  // ordered by (method, chain)
};

/// Runs every (method, chain) pair and writes summary.csv, one
/// trace_<method>_<chain>.csv per pair and meta.json into spec.output_dir.
/// Throws std::runtime_error on I/O failure.
ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// Pretty-prints the per-method rows of <dir>/summary.csv as a metric x
/// dimension table. Throws std::runtime_error if the file is missing or
/// malformed.
void print_table(const std::filesystem::path& output_dir, std::ostream& out);
/// Same, merging the summaries of several runs (e.g. one per dimension).
void print_table(const std::vector<std::filesystem::path>& output_dirs, std::ostream& out);

/// Trace file name for a method/chain pair (method names are sanitised).
std::string trace_file_name(const std::string& method, std::size_t chain);

/// "%.17g" formatting used by every CSV writer; NaN becomes an empty field.
std::string format_double(double v);

/// Minimal CSV reader for the files this module writes.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace chmc
