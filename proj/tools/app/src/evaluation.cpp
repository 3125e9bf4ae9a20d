#include "age/app/evaluation.hpp"

#include <algorithm>

#include "age/error.hpp"
#include "age/random.hpp"

namespace age::app {

std::vector<LatentCode> support_codes(const LatentDataset& dataset) {
  std::vector<LatentCode> out;
  for (std::size_t c = 0; c < dataset.category_count(); ++c) {
    const auto& members = dataset.indices_of(c);
    if (members.empty()) throw EmptyCategory("category '" + dataset.categories()[c] + "' has no samples");
    out.push_back(dataset.codes()[members.front()]);
  }
  return out;
}

ClassEmbeddingBank proxy_bank(const LatentDataset& seen, const LatentDataset& unseen) {
  std::vector<ClassEmbedding> support;
  const auto codes = support_codes(unseen);
  for (std::size_t c = 0; c < codes.size(); ++c) support.push_back({unseen.categories()[c], codes[c]});
  return build_embedding_bank(seen).concat(ClassEmbeddingBank(support));
}

SparseCode edit_sample(const EditModel& model, std::uint64_t seed, std::size_t j) {
  return sample_code(model.distribution, derive_seed(seed, j));
}

double PreservationResult::min_rate() const {
  return per_query.empty() ? 0.0 : *std::min_element(per_query.begin(), per_query.end());
}

PreservationResult preservation(const std::vector<LatentCode>& queries, const EditModel& model,
                                const ClassEmbeddingBank& bank, double alpha, std::size_t edits,
                                std::uint64_t seed) {
  std::vector<SparseCode> draws;
  for (std::size_t j = 0; j < edits; ++j) draws.push_back(edit_sample(model, seed, j));
  PreservationResult r;
  for (const auto& w : queries) {
    const auto label = nearest_class_index(w, bank);
    std::size_t kept = 0;
    for (const auto& n : draws) {
      if (nearest_class_index(edit(w, model.refined, n, alpha), bank) == label) ++kept;
    }
    r.kept += kept;
    r.total += edits;
    r.per_query.push_back(static_cast<double>(kept) / static_cast<double>(edits));
  }
  return r;
}

PreservationResult baseline_preservation(const std::vector<LatentCode>& queries,
                                         const LatentDataset& seen,
                                         const ClassEmbeddingBank& seen_bank,
                                         const ClassEmbeddingBank& bank, std::size_t edits,
                                         std::uint64_t seed) {
  PreservationResult r;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto label = nearest_class_index(queries[i], bank);
    std::size_t kept = 0;
    for (const auto& d : baseline_sample_train_edits(queries[i], seen, seen_bank, derive_seed(seed, i), edits)) {
      if (nearest_class_index(d.edited, bank) == label) ++kept;
    }
    r.kept += kept;
    r.total += edits;
    r.per_query.push_back(static_cast<double>(kept) / static_cast<double>(edits));
  }
  return r;
}

double mean_pairwise_distance(const std::vector<LatentCode>& codes) {
  if (codes.size() < 2) throw InsufficientData("pairwise distance needs at least two codes");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      sum += (codes[i].values() - codes[j].values()).norm();
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double edit_diversity(const std::vector<LatentCode>& queries, const EditModel& model, double alpha,
                      std::size_t edits, std::uint64_t seed) {
  if (queries.empty()) throw EmptyDataset("diversity needs at least one query");
  std::vector<SparseCode> draws;
  for (std::size_t j = 0; j < edits; ++j) draws.push_back(edit_sample(model, seed, j));
  double sum = 0.0;
  for (const auto& w : queries) {
    std::vector<LatentCode> edited;
    for (const auto& n : draws) edited.push_back(edit(w, model.refined, n, alpha));
    sum += mean_pairwise_distance(edited);
  }
  return sum / static_cast<double>(queries.size());
}

bool monotone_with_one_tie(const std::vector<double>& values, bool increasing) {
  std::size_t ties = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double step = values[i] - values[i - 1];
    if (step == 0.0) {
      ++ties;
    } else if ((step > 0.0) != increasing) {
      return false;
    }
  }
  return ties <= 1;
}

}  // namespace age::app
