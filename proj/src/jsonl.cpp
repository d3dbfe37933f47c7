#include "rlad/jsonl.hpp"

#include <set>

namespace rlad {

std::vector<nlohmann::json> read_jsonl_values(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Problem> load_problems(const std::filesystem::path& path) {
  std::vector<Problem> problems;
  std::set<std::string> seen;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto p = nlohmann::json::parse(line).get<Problem>();
      p.validate();
      if (!seen.insert(p.id).second) throw DataError("duplicate problem id " + p.id);
      problems.push_back(std::move(p));
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return problems;
}

std::vector<Abstraction> load_abstractions(const std::filesystem::path& path) {
  auto out = read_jsonl<Abstraction>(path);
  for (std::size_t i = 0; i < out.size(); ++i) {
    try {
      out[i].validate();
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " (record " + std::to_string(i + 1) + ")");
    }
  }
  return out;
}

}  // namespace rlad
