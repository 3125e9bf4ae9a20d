#pragma once

// Helpers for driving the CLI in-process and comparing artifact directories.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "age/app/commands.hpp"
#include "json.hpp"

namespace harness {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "age");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = age::app::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("age_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Metrics files with the timestamp fields removed from every record.
inline std::string strip_timestamps(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto doc = nlohmann::json::parse(line);
    doc.erase("started_at");
    doc.erase("finished_at");
    out += doc.dump() + "\n";
  }
  return out;
}

inline bool is_metrics_file(const fs::path& p) {
  return p.filename().string().find(".metrics.jsonl") != std::string::npos;
}

// File name -> comparable content for every regular file in `dir`.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto bytes = read_bytes(entry.path());
    files[entry.path().filename().string()] = is_metrics_file(entry.path()) ? strip_timestamps(bytes) : bytes;
  }
  return files;
}

inline nlohmann::json last_metrics(const fs::path& dir, const std::string& command) {
  std::istringstream in(read_bytes(age::app::metrics_path(dir, command)));
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return nlohmann::json::parse(last);
}

}  // namespace harness
