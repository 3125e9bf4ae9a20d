#pragma once

// Binary artifact formats. Everything is little-endian.
//
//   AGEL dataset     "AGEL" u32 version=1, u32 L, u32 d, u32 M; per category:
//                    u32 name length, UTF-8 name, u32 N_m, N_m*L*d f32
//                    (each code row-major, layer 0 first).
//   AGED dictionary  "AGED" u32 version=1, u32 L, u32 d, u32 l, L*d*l f32
//                    (layer-major, column-major inside a layer); optional
//                    trailer u32 t, L*t u32 selected column indices.
//   AGEW world       "AGEW" u32 version=1, u32 dtype=8, u32 L, d, p, M, K,
//                    k; f64 separation, sparsity, noise, category scale;
//                    u64 seed; f64 payload: class bases, irrelevant basis,
//                    generator.
//   AGEE checkpoint  "AGEE" u32 version=1, u32 dtype=8, u32 L, d, l, hidden,
//                    groups, groups x (u32 begin, u32 end); f64 leak slope;
//                    u64 step, u64 epochs done; f64 payload: dictionary,
//                    encoder tensors, Adam moments.
//
// World and checkpoint payloads are f64 so that a reloaded world keeps its
// orthonormal basis exact and a resumed run replays bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "age/dictionary.hpp"
#include "age/inference.hpp"
#include "age/latent.hpp"
#include "age/trainer.hpp"
#include "age/world.hpp"

namespace age::app {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF64 = 8;

void write_dataset(const std::filesystem::path& path, const LatentDataset& dataset);
LatentDataset read_dataset(const std::filesystem::path& path, Split split);

struct DictionaryFile {
  DirectionDictionary dictionary;
  std::optional<std::vector<std::vector<std::size_t>>> selected;
};

void write_dictionary(const std::filesystem::path& path, const DirectionDictionary& dictionary,
                      const std::vector<std::vector<std::size_t>>* selected = nullptr);
DictionaryFile read_dictionary(const std::filesystem::path& path);

// Refined dictionary stored as its source dictionary plus the index trailer.
void write_refined(const std::filesystem::path& path, const DirectionDictionary& dictionary,
                   const RefinedDictionary& refined);
RefinedDictionary read_refined(const std::filesystem::path& path, const LayerGrouping& grouping);

void write_world(const std::filesystem::path& path, const SyntheticWorld& world);
SyntheticWorld read_world(const std::filesystem::path& path);

void write_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState read_checkpoint(const std::filesystem::path& path);

}  // namespace age::app
