#pragma once

#include <cstdint>
#include <vector>

#include "age/inference.hpp"
#include "age/latent.hpp"

namespace age::app {

// First sample of every category, in category order.
std::vector<LatentCode> support_codes(const LatentDataset& dataset);

// Seen class means followed by the unseen support codes, each standing in
// for its category's embedding.
ClassEmbeddingBank proxy_bank(const LatentDataset& seen, const LatentDataset& unseen);

// Edit j of every query uses n_tilde drawn with derive_seed(seed, j).
SparseCode edit_sample(const EditModel& model, std::uint64_t seed, std::size_t j);

struct PreservationResult {
  std::size_t kept = 0;
  std::size_t total = 0;
  std::vector<double> per_query;

  double rate() const { return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total); }
  double min_rate() const;
};

// Fraction of edits whose nearest class in `bank` matches the query's own.
PreservationResult preservation(const std::vector<LatentCode>& queries, const EditModel& model,
                                const ClassEmbeddingBank& bank, double alpha, std::size_t edits,
                                std::uint64_t seed);

// Same measurement for Sample-Train edits; query i draws from
// derive_seed(seed, i).
PreservationResult baseline_preservation(const std::vector<LatentCode>& queries,
                                         const LatentDataset& seen,
                                         const ClassEmbeddingBank& seen_bank,
                                         const ClassEmbeddingBank& bank, std::size_t edits,
                                         std::uint64_t seed);

double mean_pairwise_distance(const std::vector<LatentCode>& codes);

// Mean over queries of the pairwise distance among that query's edits.
double edit_diversity(const std::vector<LatentCode>& queries, const EditModel& model, double alpha,
                      std::size_t edits, std::uint64_t seed);

// Every step moves the given way or stays put, and at most one step stays put.
bool monotone_with_one_tie(const std::vector<double>& values, bool increasing);

}  // namespace age::app
