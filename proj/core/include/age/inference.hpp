#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "age/dictionary.hpp"
#include "age/encoder.hpp"
#include "age/latent.hpp"

namespace age {

// Moore-Penrose pseudo-inverse from the Jacobi SVD; singular values below
// 1e-10 times the largest are treated as zero.
inline constexpr double kPinvRelativeCutoff = 1e-10;
Matrix pseudo_inverse(const Matrix& matrix);

// Caches per-layer pseudo-inverses of a dictionary.
class BackProjector {
 public:
  BackProjector(const DirectionDictionary& dictionary, LayerGrouping grouping);

  // Per-layer codes A_l^+ * delta_l.
  std::vector<Vector> project_layers(const DeltaCode& delta) const;
  // Per-group codes: mean of the group's layer codes.
  SparseCode project(const DeltaCode& delta) const;

  const LayerGrouping& grouping() const { return grouping_; }
  std::size_t size() const { return size_; }

 private:
  std::vector<Matrix> pinv_;
  LayerGrouping grouping_;
  std::size_t dim_;
  std::size_t size_;
};

SparseCode back_project(const DirectionDictionary& dictionary, const DeltaCode& delta,
                        const LayerGrouping& grouping);

struct CommonalityProfile {
  std::vector<Vector> per_layer;  // l non-negative entries per layer
};

// Category-balanced mean of |back-projected code| per layer. Each sample's
// delta is taken against the bank column named after its category.
CommonalityProfile commonality_profile(const LatentDataset& dataset,
                                       const DirectionDictionary& dictionary,
                                       const ClassEmbeddingBank& bank);

struct RefinedDictionary {
  LayerGrouping grouping;
  std::vector<Matrix> layers;                   // d x t
  std::vector<std::vector<std::size_t>> index;  // t original columns per layer

  std::size_t t() const { return index.empty() ? 0 : index.front().size(); }
  std::size_t dictionary_size = 0;              // l of the source dictionary
  // Sorted union of the selected columns over the layers of each group.
  std::vector<std::size_t> group_support(std::size_t group) const;
};

// Keeps, per layer, the columns with the t largest profile entries (lower
// column index first on ties), ordered by descending profile value.
RefinedDictionary refine_dictionary(const DirectionDictionary& dictionary,
                                    const CommonalityProfile& profile, std::size_t t,
                                    const LayerGrouping& grouping);

enum class CovarianceKind { kDiagonal, kFull };

// Gaussian over each group's supported coordinates (see group_support).
struct CodeDistribution {
  CovarianceKind kind = CovarianceKind::kDiagonal;
  std::size_t code_size = 0;                     // l
  std::vector<std::vector<std::size_t>> support;  // per group
  std::vector<Vector> mean;
  std::vector<Vector> variance;                   // diagonal of the covariance
  std::vector<Matrix> covariance;                 // only for kFull
};

CodeDistribution fit_code_distribution(const std::vector<SparseCode>& codes,
                                       const RefinedDictionary& refined,
                                       CovarianceKind kind = CovarianceKind::kDiagonal);

// mu + Sigma^{1/2} g with g standard normal drawn group by group from
// Rng(seed). Entries off the support are zero.
SparseCode sample_code(const CodeDistribution& dist, std::uint64_t seed);

// w'_l = w_l + alpha * A_f,l * n_tilde_{group(l)}[index_l].
LatentCode edit(const LatentCode& code, const RefinedDictionary& refined, const SparseCode& n_tilde,
                double alpha);

// w - w_src + w_dst.
LatentCode category_transfer(const LatentCode& code, const ClassEmbedding& src,
                             const ClassEmbedding& dst);

// Adds the centered code of a uniformly drawn training sample.
struct BaselineDraw {
  LatentCode edited;
  std::size_t sample_index;
};
BaselineDraw baseline_sample_train_edit(const LatentCode& code, const LatentDataset& dataset,
                                        const ClassEmbeddingBank& bank, std::uint64_t seed);
// `count` draws from one Rng(seed) stream.
std::vector<BaselineDraw> baseline_sample_train_edits(const LatentCode& code,
                                                      const LatentDataset& dataset,
                                                      const ClassEmbeddingBank& bank,
                                                      std::uint64_t seed, std::size_t count);

struct InferenceOptions {
  std::size_t t = 20;
  CovarianceKind covariance = CovarianceKind::kDiagonal;
  // Fit the Gaussian on encoder codes instead of back-projected ones.
  bool use_encoder_codes = false;
};

// Everything needed to sample edits for unseen codes.
struct EditModel {
  CommonalityProfile profile;
  RefinedDictionary refined;
  CodeDistribution distribution;
};

EditModel build_edit_model(const LatentDataset& seen, const DirectionDictionary& dictionary,
                           const ClassEmbeddingBank& bank, const LayerGrouping& grouping,
                           const InferenceOptions& options,
                           const EncoderParams* encoder = nullptr);

}  // namespace age
