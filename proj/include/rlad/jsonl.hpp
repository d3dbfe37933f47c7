#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/core.hpp"

namespace rlad {

/// Canonical single-line form: sorted keys, no whitespace, UTF-8 passed through.
inline std::string canonical_dump(const nlohmann::json& j) { return j.dump(); }

/// Parses one JSON object per non-empty line. Errors carry the line number.
std::vector<nlohmann::json> read_jsonl_values(const std::filesystem::path& path);

template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return out;
}

/// Writes via a temporary file and rename so readers never see partial output.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

template <class T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> records) {
  std::string content;
  for (const auto& r : records) {
    content += canonical_dump(nlohmann::json(r));
    content.push_back('\n');
  }
  write_text_atomic(path, content);
}

template <class T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
  write_jsonl(path, std::span<const T>(records));
}

/// Loads and validates problems: ids are recomputed from the prompt and must
/// match any stored id; duplicate ids are rejected.
std::vector<Problem> load_problems(const std::filesystem::path& path);

std::vector<Abstraction> load_abstractions(const std::filesystem::path& path);

}  // namespace rlad
