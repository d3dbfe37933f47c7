#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rlad {

inline constexpr std::string_view kToolVersion = "rlad 0.1.0";

struct FileDigest {
  std::string path;
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

/// Source of manifest timestamps. Simulator-backed runs use a fixed clock so
/// that identical inputs yield byte-identical manifests.
class ManifestClock {
 public:
  static ManifestClock wall();
  /// Honors SOURCE_DATE_EPOCH, defaulting to the Unix epoch.
  static ManifestClock fixed_from_env();
  static ManifestClock fixed(std::int64_t epoch_seconds);

  std::string now_iso8601() const;

 private:
  std::optional<std::int64_t> fixed_;
};

struct RunManifest {
  std::string stage;
  std::string config_hash;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::uint64_t master_seed = 0;
  std::string started_at;
  std::string finished_at;
  std::string tool_version{kToolVersion};
  std::string status = "complete";
  /// sha256 of the predecessor manifest file, for chained epochs.
  std::optional<std::string> previous;
  /// Stage-specific parameters and statistics.
  nlohmann::json details = nlohmann::json::object();

  bool operator==(const RunManifest&) const = default;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Hash of the canonical serialization of a config tree.
std::string config_hash(const nlohmann::json& config);

/// Digest of a file, recorded relative to `base` when the file lies under it.
FileDigest digest_file(const std::filesystem::path& file, const std::filesystem::path& base);

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);


/// What every stage needs to stamp its outputs.
struct StageContext {
  std::uint64_t master_seed = 0;
  std::string config_hash;
  ManifestClock clock = ManifestClock::fixed(0);
  /// Paths under this directory are recorded relative to it.
  std::filesystem::path base_dir;
};

/// Starts a manifest for `stage` with config hash, seed and start time filled in.
RunManifest begin_manifest(const StageContext& ctx, std::string stage);
/// Stamps the finish time and writes the manifest.
void finish_manifest(const StageContext& ctx, RunManifest& m,
                     const std::filesystem::path& manifest_path);

}  // namespace rlad
