#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "age/inference.hpp"
#include "age/trainer.hpp"
#include "age/world.hpp"

namespace age::app {

struct DataParams {
  std::size_t train_per_category = 50;
  std::size_t test_per_category = 10;
  std::size_t unseen_per_category = 50;
};

struct InferenceParams {
  std::size_t t = 20;
  double alpha = 1.0;
  std::size_t count = 128;
  std::uint64_t seed = 0;
  CovarianceKind covariance = CovarianceKind::kDiagonal;
  bool use_encoder_codes = false;
  bool baseline = false;
};

struct AnalyzeParams {
  std::vector<double> alphas{0.3, 0.5, 0.7, 1.0, 1.5, 2.0};
  std::size_t edits_per_code = 32;
  bool svg = false;
};

// Section seeds left out of the file follow the global seed.
struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticWorldSpec world;
  DataParams data;
  TrainConfig train;
  InferenceParams inference;
  AnalyzeParams analyze;
  std::filesystem::path out = ".";

  bool world_seed_set = false;
  bool train_seed_set = false;
  bool inference_seed_set = false;

  // Re-derives section seeds from `seed` where the file gave none.
  void apply_global_seed();
  void validate() const;
  InferenceOptions inference_options() const;
};

// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration; keys sorted, so dump() is canonical.
nlohmann::json to_json(const RunConfig& config);

// FNV-1a over the canonical dump, as 16 hex digits.
std::string config_hash(const RunConfig& config);
std::string config_hash(const nlohmann::json& doc);

// AGE_THREADS: unset means 1; anything but a positive integer is a ConfigError.
std::size_t threads_from_env();

}  // namespace age::app
