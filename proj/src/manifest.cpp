#include "rlad/manifest.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "rlad/core.hpp"
#include "rlad/hashing.hpp"
#include "rlad/jsonl.hpp"

namespace rlad {

ManifestClock ManifestClock::wall() { return ManifestClock{}; }

ManifestClock ManifestClock::fixed(std::int64_t epoch_seconds) {
  ManifestClock c;
  c.fixed_ = epoch_seconds;
  return c;
}

ManifestClock ManifestClock::fixed_from_env() {
  std::int64_t epoch = 0;
  if (const char* s = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      epoch = std::stoll(s);
    } catch (const std::exception&) {
      epoch = 0;
    }
  }
  return fixed(epoch);
}

std::string ManifestClock::now_iso8601() const {
  std::time_t t{};
  if (fixed_) {
    t = static_cast<std::time_t>(*fixed_);
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

nlohmann::json digests_to_json(const std::vector<FileDigest>& ds) {
  auto arr = nlohmann::json::array();
  for (const auto& d : ds) arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from_json(const nlohmann::json& arr) {
  std::vector<FileDigest> out;
  for (const auto& d : arr) {
    out.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"stage", m.stage},
                     {"config_hash", m.config_hash},
                     {"inputs", digests_to_json(m.inputs)},
                     {"outputs", digests_to_json(m.outputs)},
                     {"master_seed", m.master_seed},
                     {"started_at", m.started_at},
                     {"finished_at", m.finished_at},
                     {"tool_version", m.tool_version},
                     {"status", m.status},
                     {"details", m.details}};
  if (m.previous) j["previous"] = *m.previous;
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  try {
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.inputs = digests_from_json(j.at("inputs"));
    m.outputs = digests_from_json(j.at("outputs"));
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.status = j.value("status", std::string("complete"));
    m.details = j.value("details", nlohmann::json::object());
    m.previous = j.contains("previous") ? std::optional(j["previous"].get<std::string>())
                                        : std::nullopt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad manifest: ") + e.what());
  }
}

std::string config_hash(const nlohmann::json& config) { return sha256_hex(config.dump()); }

FileDigest digest_file(const std::filesystem::path& file, const std::filesystem::path& base) {
  namespace fs = std::filesystem;
  std::string recorded = file.lexically_normal().generic_string();
  if (!base.empty()) {
    const auto rel = fs::weakly_canonical(file).lexically_relative(fs::weakly_canonical(base));
    if (!rel.empty() && *rel.begin() != "..") recorded = rel.generic_string();
  }
  return {recorded, sha256_file(file)};
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_text_atomic(path, nlohmann::json(m).dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  try {
    return nlohmann::json::parse(in).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest " + path.string() + ": " + e.what());
  }
}


RunManifest begin_manifest(const StageContext& ctx, std::string stage) {
  RunManifest m;
  m.stage = std::move(stage);
  m.config_hash = ctx.config_hash;
  m.master_seed = ctx.master_seed;
  m.started_at = ctx.clock.now_iso8601();
  return m;
}

void finish_manifest(const StageContext& ctx, RunManifest& m,
                     const std::filesystem::path& manifest_path) {
  m.finished_at = ctx.clock.now_iso8601();
  write_manifest(manifest_path, m);
}

}  // namespace rlad
