#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace age::app {

struct MetricsRecord {
  std::string run_id;
  std::string command;
  std::string config_hash;
  std::vector<std::pair<std::string, double>> metrics;  // in insertion order
  std::string started_at;
  std::string finished_at;

  void add(std::string name, double value) { metrics.emplace_back(std::move(name), value); }
  // Non-finite metrics become null.
  nlohmann::json to_json() const;
};

std::string utc_timestamp();
std::string make_run_id(const std::string& command, const std::string& config_hash);

void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines,
                 bool append = false);

struct Series {
  std::string name;
  std::vector<double> values;
};

void write_csv(const std::filesystem::path& path, const std::string& x_name,
               const std::vector<double>& x, const std::vector<Series>& series);

// One small line chart per series, stacked vertically.
void write_svg(const std::filesystem::path& path, const std::string& x_name,
               const std::vector<double>& x, const std::vector<Series>& series);

}  // namespace age::app
