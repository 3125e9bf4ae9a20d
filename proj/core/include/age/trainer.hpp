#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "age/dictionary.hpp"
#include "age/encoder.hpp"
#include "age/latent.hpp"
#include "age/world.hpp"

namespace age {

enum class ReconstructionSpace { kImage, kLatent };
enum class SparsityForm {
  kMagnitude,  // sigma(theta0 |n| - theta1)
  kLiteral,    // sigma(theta0 n - theta1)
};

struct TrainConfig {
  double lambda1 = 5e-2;  // orthogonality weight
  double lambda2 = 5e-2;  // sparsity weight
  double theta0 = 10.0;
  double theta1 = 3.0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t dictionary_size = 100;  // l
  std::size_t hidden = 256;
  double leak_slope = 0.2;
  // Empty means one group per layer.
  std::optional<LayerGrouping> grouping;
  ReconstructionSpace reconstruction = ReconstructionSpace::kImage;
  SparsityForm sparsity_form = SparsityForm::kMagnitude;
  std::size_t threads = 1;

  void validate() const;
  LayerGrouping resolved_grouping(std::size_t layers) const;
};

// --- Loss terms -----------------------------------------------------------

struct RecLoss {
  double value = 0.0;
  std::vector<Matrix> grad_dictionary;  // per layer, d x l
  SparseCode grad_codes;
  Vector grad_reconstruction;           // d/d w_hat, flattened
};

// w_hat_l = embedding_l + A_l n_{group(l)}; loss ||G w_hat - image||^2.
RecLoss loss_rec_image(const SyntheticWorld& world, const LatentCode& embedding,
                       const DirectionDictionary& dictionary, const SparseCode& codes,
                       const LayerGrouping& grouping, const ImageVector& image);
// Same decoder, loss ||w_hat - target||^2.
RecLoss loss_rec_latent(const LatentCode& embedding, const DirectionDictionary& dictionary,
                        const SparseCode& codes, const LayerGrouping& grouping,
                        const LatentCode& target);

LatentCode decode(const LatentCode& embedding, const DirectionDictionary& dictionary,
                  const SparseCode& codes, const LayerGrouping& grouping);

struct SparseLoss {
  double value = 0.0;
  SparseCode grad;
};

double logistic(double x);
SparseLoss loss_sparse(const SparseCode& codes, double theta0, double theta1,
                       SparsityForm form = SparsityForm::kMagnitude);

struct OrthLoss {
  double value = 0.0;
  std::vector<Matrix> grad;  // 2 B B^T A per layer
};

OrthLoss loss_orth(const DirectionDictionary& dictionary, const ClassEmbeddingBank& bank);

double total_loss(double rec, double orth, double sparse, double lambda1, double lambda2);

// --- Optimizer ------------------------------------------------------------

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;

  friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

// One bias-corrected Adam update of `params` in place; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               const AdamHyper& hyper, std::uint64_t step);

// --- Training -------------------------------------------------------------

// Everything that evolves during training; enough to resume bit-exactly.
struct TrainState {
  DirectionDictionary dictionary;
  EncoderParams encoder;
  std::vector<AdamMoments> moments;  // one per tensor, see for_each_tensor
  std::uint64_t step = 0;
  std::size_t epochs_done = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

// Visits A layers, then each group's weights/biases in layer order.
void for_each_tensor(DirectionDictionary& dictionary, EncoderParams& encoder,
                     const std::function<void(std::span<double>)>& visit);

TrainState init_train_state(std::size_t layers, std::size_t dim, const TrainConfig& config);

// Per-sample inputs derived once from the dataset.
struct TrainingData {
  std::vector<LatentCode> targets;
  std::vector<LatentCode> embeddings;  // class embedding of each sample
  std::vector<DeltaCode> deltas;
  std::vector<ImageVector> images;     // G w, image mode only
  ClassEmbeddingBank bank;
};

TrainingData prepare_training_data(const LatentDataset& dataset, const SyntheticWorld& world,
                                   const TrainConfig& config);

struct ObjectiveGradient {
  std::vector<Matrix> dictionary;
  EncoderGradients encoder;
};

struct ObjectiveValue {
  double total = 0.0;
  double rec = 0.0;     // batch mean
  double sparse = 0.0;  // batch mean
  double orth = 0.0;
  // Smallest |pre-activation| or |code entry| seen; distance to a kink.
  double min_kink_distance = 0.0;
  std::optional<ObjectiveGradient> gradient;
};

// Batch objective mean_i(L_rec + lambda2 L_sparse) + lambda1 L_orth and,
// when requested, its exact gradient. The batch is evaluated as one matrix
// pass per layer group; with threads > 1 the groups run concurrently, which
// leaves every result bit-identical to the single-threaded pass.
ObjectiveValue evaluate_objective(const TrainState& state, const TrainingData& data,
                                  std::span<const std::size_t> batch, const SyntheticWorld& world,
                                  const TrainConfig& config, bool with_gradient);

struct EpochRecord {
  std::size_t epoch = 0;
  double rec = 0.0;
  double sparse = 0.0;
  double orth = 0.0;
  double total = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

// Runs `epochs` more epochs on `state`. Epoch e shuffles with a seed derived
// from (config.seed, e), so resumed runs replay the same batches.
TrainReport train_epochs(TrainState& state, const TrainingData& data, const SyntheticWorld& world,
                         const TrainConfig& config, std::size_t epochs,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

struct TrainResult {
  DirectionDictionary dictionary;
  EncoderParams encoder;
  TrainReport report;
  TrainState state;
};

TrainResult train(const LatentDataset& dataset, const SyntheticWorld& world,
                  const TrainConfig& config);

// Sum over layers of ||B_l^T A_l||_F.
double orthogonality_residual(const DirectionDictionary& dictionary, const ClassEmbeddingBank& bank);

// Mean reconstruction loss over `dataset`, with deltas taken against the
// `bank` column of each sample's category. A null encoder means zero codes,
// i.e. the loss of reconstructing every sample by its class embedding.
double mean_reconstruction_loss(const LatentDataset& dataset, const ClassEmbeddingBank& bank,
                                const DirectionDictionary& dictionary, const EncoderParams* encoder,
                                const SyntheticWorld& world, ReconstructionSpace space);

}  // namespace age
