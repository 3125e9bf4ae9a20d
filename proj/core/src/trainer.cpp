#include "age/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "age/error.hpp"
#include "age/random.hpp"

namespace age {

void TrainConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambda1/lambda2 must be >= 0");
  if (!(theta0 > 0.0)) throw ConfigError("theta0 must be positive");
  if (!std::isfinite(theta1)) throw ConfigError("theta1 must be finite");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (dictionary_size == 0 || hidden == 0) throw ConfigError("dictionary_size and hidden must be positive");
  if (!(leak_slope >= 0.0 && leak_slope < 1.0)) throw ConfigError("leak_slope must lie in [0, 1)");
  if (threads == 0) throw ConfigError("threads must be positive");
}

LayerGrouping TrainConfig::resolved_grouping(std::size_t layers) const {
  if (!grouping) return LayerGrouping::per_layer(layers);
  if (grouping->layer_count() != layers) {
    throw ConfigError("grouping covers " + std::to_string(grouping->layer_count()) +
                      " layers but the data has " + std::to_string(layers));
  }
  return *grouping;
}

// --- Loss terms -------------------------------------------------------------

namespace {

void check_decoder_shapes(const LatentCode& embedding, const DirectionDictionary& dictionary,
                          const SparseCode& codes, const LayerGrouping& grouping) {
  if (embedding.layers() != dictionary.layers() || embedding.dim() != dictionary.dim() ||
      grouping.layer_count() != dictionary.layers() ||
      codes.groups.size() != grouping.group_count()) {
    throw ShapeError("reconstruction inputs disagree on shape");
  }
  for (const auto& g : codes.groups) {
    if (static_cast<std::size_t>(g.size()) != dictionary.size()) {
      throw ShapeError("code length does not match the dictionary");
    }
  }
}

// Fills the dictionary/code gradients of RecLoss from d loss / d w_hat.
void backprop_decoder(RecLoss& out, const Vector& grad_hat, const DirectionDictionary& dictionary,
                      const SparseCode& codes, const LayerGrouping& grouping) {
  const auto d = static_cast<Eigen::Index>(dictionary.dim());
  out.grad_codes.groups.assign(codes.groups.size(),
                               Vector::Zero(static_cast<Eigen::Index>(dictionary.size())));
  out.grad_dictionary.clear();
  for (std::size_t l = 0; l < dictionary.layers(); ++l) {
    const auto g = grouping.group_of(l);
    const auto slice = grad_hat.segment(static_cast<Eigen::Index>(l) * d, d);
    out.grad_dictionary.push_back(slice * codes.groups[g].transpose());
    out.grad_codes.groups[g].noalias() += dictionary.layer(l).transpose() * slice;
  }
  out.grad_reconstruction = grad_hat;
}

}  // namespace

LatentCode decode(const LatentCode& embedding, const DirectionDictionary& dictionary,
                  const SparseCode& codes, const LayerGrouping& grouping) {
  check_decoder_shapes(embedding, dictionary, codes, grouping);
  Matrix values = embedding.values();
  for (std::size_t l = 0; l < dictionary.layers(); ++l) {
    values.row(static_cast<Eigen::Index>(l)) +=
        (dictionary.layer(l) * codes.groups[grouping.group_of(l)]).transpose();
  }
  return LatentCode(std::move(values));
}

RecLoss loss_rec_image(const SyntheticWorld& world, const LatentCode& embedding,
                       const DirectionDictionary& dictionary, const SparseCode& codes,
                       const LayerGrouping& grouping, const ImageVector& image) {
  if (static_cast<std::size_t>(image.size()) != world.image_dim()) {
    throw ShapeError("target image length does not match the world");
  }
  const LatentCode hat = decode(embedding, dictionary, codes, grouping);
  const Vector residual = synth_generate(world, hat) - image;
  RecLoss out;
  out.value = residual.squaredNorm();
  backprop_decoder(out, 2.0 * (world.generator().transpose() * residual), dictionary, codes, grouping);
  return out;
}

RecLoss loss_rec_latent(const LatentCode& embedding, const DirectionDictionary& dictionary,
                        const SparseCode& codes, const LayerGrouping& grouping,
                        const LatentCode& target) {
  if (!target.same_shape(embedding)) throw ShapeError("target code does not match embedding");
  const LatentCode hat = decode(embedding, dictionary, codes, grouping);
  const Vector residual = hat.flatten() - target.flatten();
  RecLoss out;
  out.value = residual.squaredNorm();
  backprop_decoder(out, 2.0 * residual, dictionary, codes, grouping);
  return out;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

SparseLoss loss_sparse(const SparseCode& codes, double theta0, double theta1, SparsityForm form) {
  if (!(theta0 > 0.0)) throw ConfigError("theta0 must be positive");
  SparseLoss out;
  for (const auto& g : codes.groups) {
    Vector grad(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double n = g(i);
      const double arg = form == SparsityForm::kMagnitude ? theta0 * std::abs(n) - theta1
                                                          : theta0 * n - theta1;
      const double s = logistic(arg);
      out.value += s;
      const double slope = theta0 * s * (1.0 - s);
      if (form == SparsityForm::kMagnitude) {
        grad(i) = n > 0.0 ? slope : (n < 0.0 ? -slope : 0.0);
      } else {
        grad(i) = slope;
      }
    }
    out.grad.groups.push_back(std::move(grad));
  }
  return out;
}

OrthLoss loss_orth(const DirectionDictionary& dictionary, const ClassEmbeddingBank& bank) {
  if (bank.layers() != dictionary.layers() || bank.dim() != dictionary.dim()) {
    throw ShapeError("bank and dictionary disagree on layers or dim");
  }
  OrthLoss out;
  for (std::size_t l = 0; l < dictionary.layers(); ++l) {
    const Matrix& b = bank.layer(l);
    const Matrix bta = b.transpose() * dictionary.layer(l);
    out.value += bta.squaredNorm();
    out.grad.push_back(2.0 * (b * bta));
  }
  return out;
}

double total_loss(double rec, double orth, double sparse, double lambda1, double lambda2) {
  return rec + lambda1 * orth + lambda2 * sparse;
}

// --- Optimizer --------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               const AdamHyper& hyper, std::uint64_t step) {
  if (grads.size() != params.size()) throw ShapeError("gradient and parameter sizes differ");
  if (moments.first.empty() && moments.second.empty()) {
    moments.first.assign(params.size(), 0.0);
    moments.second.assign(params.size(), 0.0);
  }
  if (moments.first.size() != params.size() || moments.second.size() != params.size()) {
    throw ShapeError("optimizer state does not match the parameters");
  }
  if (step == 0) throw RangeError("Adam steps count from 1");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moments.first[i] = hyper.beta1 * moments.first[i] + (1.0 - hyper.beta1) * g;
    moments.second[i] = hyper.beta2 * moments.second[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = moments.first[i] / correction1;
    const double v_hat = moments.second[i] / correction2;
    params[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
  }
}

// --- Training ---------------------------------------------------------------

void for_each_tensor(DirectionDictionary& dictionary, EncoderParams& encoder,
                     const std::function<void(std::span<double>)>& visit) {
  for (std::size_t l = 0; l < dictionary.layers(); ++l) {
    Matrix& m = dictionary.layer(l);
    visit({m.data(), static_cast<std::size_t>(m.size())});
  }
  for (auto& net : encoder.nets) {
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
      visit({net.weights[k].data(), static_cast<std::size_t>(net.weights[k].size())});
      visit({net.biases[k].data(), static_cast<std::size_t>(net.biases[k].size())});
    }
  }
}

TrainState init_train_state(std::size_t layers, std::size_t dim, const TrainConfig& config) {
  config.validate();
  const LayerGrouping grouping = config.resolved_grouping(layers);
  TrainState state;
  state.dictionary =
      DirectionDictionary::random(layers, dim, config.dictionary_size, derive_seed(config.seed, 1));
  state.encoder = init_params(grouping,
                              EncoderDims{dim, config.hidden, config.dictionary_size, config.leak_slope},
                              derive_seed(config.seed, 2));
  for_each_tensor(state.dictionary, state.encoder, [&](std::span<double> t) {
    state.moments.push_back({std::vector<double>(t.size(), 0.0), std::vector<double>(t.size(), 0.0)});
  });
  return state;
}

TrainingData prepare_training_data(const LatentDataset& dataset, const SyntheticWorld& world,
                                   const TrainConfig& config) {
  TrainingData data;
  data.bank = build_embedding_bank(dataset);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const LatentCode& w = dataset.codes()[i];
    LatentCode embedding = data.bank.embedding(dataset.labels()[i]);
    data.deltas.push_back(compute_delta(w, embedding));
    data.embeddings.push_back(std::move(embedding));
    data.targets.push_back(w);
    if (config.reconstruction == ReconstructionSpace::kImage) {
      data.images.push_back(synth_generate(world, w));
    }
  }
  return data;
}

namespace {

// Value and derivative of one sparsity term.
std::pair<double, double> sparse_term(double n, const TrainConfig& config) {
  const bool magnitude = config.sparsity_form == SparsityForm::kMagnitude;
  const double arg = magnitude ? config.theta0 * std::abs(n) - config.theta1
                               : config.theta0 * n - config.theta1;
  const double s = logistic(arg);
  const double slope = config.theta0 * s * (1.0 - s);
  if (!magnitude) return {s, slope};
  return {s, n > 0.0 ? slope : (n < 0.0 ? -slope : 0.0)};
}

// Runs fn(g) for every group, spreading groups over up to `threads` workers.
// Groups touch disjoint outputs, so the result does not depend on threads.
template <class Fn>
void for_each_group(std::size_t groups, std::size_t threads, Fn&& fn) {
  threads = std::min(threads, groups);
  if (threads <= 1) {
    for (std::size_t g = 0; g < groups; ++g) fn(g);
    return;
  }
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t g = t; g < groups; g += threads) fn(g);
    });
  }
  for (auto& w : workers) w.join();
}

struct GroupPass {
  Matrix codes;  // l x B
  BatchForwardCache cache;
  double min_kink = std::numeric_limits<double>::infinity();
};

}  // namespace

ObjectiveValue evaluate_objective(const TrainState& state, const TrainingData& data,
                                  std::span<const std::size_t> batch, const SyntheticWorld& world,
                                  const TrainConfig& config, bool with_gradient) {
  if (batch.empty()) throw EmptyDataset("objective needs a non-empty batch");
  const auto& encoder = state.encoder;
  const auto& grouping = encoder.grouping;
  const auto& dictionary = state.dictionary;
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto d = static_cast<Eigen::Index>(dictionary.dim());
  const std::size_t layers = dictionary.layers();
  const std::size_t groups = grouping.group_count();
  if (grouping.layer_count() != layers || encoder.nets.size() != groups) {
    throw ShapeError("encoder grouping does not match the dictionary");
  }

  std::vector<GroupPass> passes(groups);
  for_each_group(groups, config.threads, [&](std::size_t g) {
    const auto in = static_cast<Eigen::Index>(grouping.group_size(g)) * d;
    Matrix inputs(in, B);
    for (Eigen::Index j = 0; j < B; ++j) {
      inputs.col(j) = group_slice(data.deltas[batch[static_cast<std::size_t>(j)]], grouping, g);
    }
    auto [codes, cache] = mlp_forward_batch(encoder.nets[g], inputs, encoder.dims.leak_slope);
    double kink = codes.cwiseAbs().minCoeff();
    for (std::size_t k = 0; k + 1 < cache.pre_activations.size(); ++k) {
      kink = std::min(kink, cache.pre_activations[k].cwiseAbs().minCoeff());
    }
    passes[g] = {std::move(codes), std::move(cache), kink};
  });

  // Decoder: w_hat = embedding + A_l n_{group(l)}, stacked layer-major.
  Matrix hat(static_cast<Eigen::Index>(layers) * d, B);
  for (std::size_t l = 0; l < layers; ++l) {
    auto rows = hat.middleRows(static_cast<Eigen::Index>(l) * d, d);
    rows.noalias() = dictionary.layer(l) * passes[grouping.group_of(l)].codes;
    for (Eigen::Index j = 0; j < B; ++j) {
      rows.col(j) += data.embeddings[batch[static_cast<std::size_t>(j)]].layer(l);
    }
  }
  Matrix residual;
  if (config.reconstruction == ReconstructionSpace::kImage) {
    Matrix images(static_cast<Eigen::Index>(world.image_dim()), B);
    for (Eigen::Index j = 0; j < B; ++j) images.col(j) = data.images[batch[static_cast<std::size_t>(j)]];
    residual = world.generator() * hat - images;
  } else {
    residual = hat;
    for (Eigen::Index j = 0; j < B; ++j) {
      residual.col(j) -= data.targets[batch[static_cast<std::size_t>(j)]].flatten();
    }
  }

  ObjectiveValue value;
  for (Eigen::Index j = 0; j < B; ++j) value.rec += residual.col(j).squaredNorm();
  std::vector<Matrix> sparse_grad(groups);
  for (Eigen::Index j = 0; j < B; ++j) {
    for (std::size_t g = 0; g < groups; ++g) {
      const Matrix& codes = passes[g].codes;
      if (j == 0) sparse_grad[g].resize(codes.rows(), codes.cols());
      for (Eigen::Index i = 0; i < codes.rows(); ++i) {
        const auto [term, slope] = sparse_term(codes(i, j), config);
        value.sparse += term;
        sparse_grad[g](i, j) = slope;
      }
    }
  }
  const double n = static_cast<double>(B);
  value.rec /= n;
  value.sparse /= n;
  const OrthLoss orth = loss_orth(dictionary, data.bank);
  value.orth = orth.value;
  value.total = total_loss(value.rec, value.orth, value.sparse, config.lambda1, config.lambda2);
  value.min_kink_distance = std::numeric_limits<double>::infinity();
  for (const auto& p : passes) value.min_kink_distance = std::min(value.min_kink_distance, p.min_kink);
  if (!with_gradient) return value;

  const Matrix grad_hat = config.reconstruction == ReconstructionSpace::kImage
                              ? Matrix(2.0 * (world.generator().transpose() * residual))
                              : Matrix(2.0 * residual);
  ObjectiveGradient grad;
  grad.dictionary.resize(layers);
  grad.encoder.resize(groups);
  for_each_group(groups, config.threads, [&](std::size_t g) {
    const auto [begin, end] = grouping.range(g);
    Matrix grad_codes = config.lambda2 * sparse_grad[g];
    for (std::size_t l = begin; l < end; ++l) {
      const auto slice = grad_hat.middleRows(static_cast<Eigen::Index>(l) * d, d);
      grad.dictionary[l] = (slice * passes[g].codes.transpose()) / n + config.lambda1 * orth.grad[l];
      grad_codes.noalias() += dictionary.layer(l).transpose() * slice;
    }
    Mlp net_grad = mlp_backward_batch(encoder.nets[g], passes[g].cache, grad_codes,
                                      encoder.dims.leak_slope);
    for (std::size_t k = 0; k < net_grad.weights.size(); ++k) {
      net_grad.weights[k] /= n;
      net_grad.biases[k] /= n;
    }
    grad.encoder[g] = std::move(net_grad);
  });
  value.gradient = std::move(grad);
  return value;
}

namespace {

bool finite_record(const EpochRecord& r) {
  return std::isfinite(r.rec) && std::isfinite(r.sparse) && std::isfinite(r.orth) &&
         std::isfinite(r.total);
}

}  // namespace

TrainReport train_epochs(TrainState& state, const TrainingData& data, const SyntheticWorld& world,
                         const TrainConfig& config, std::size_t epochs,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed = config.seed;
  const std::size_t n = data.deltas.size();
  if (n == 0) throw EmptyDataset("training needs samples");
  const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});

  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch = state.epochs_done;
    std::vector<std::size_t> order = all;
    Rng rng(derive_seed(config.seed, 1000 + epoch));
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);

    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      ObjectiveValue value = evaluate_objective(state, data, batch, world, config, true);
      if (!std::isfinite(value.total)) {
        throw DivergenceError(epoch, "loss became non-finite in epoch " + std::to_string(epoch));
      }
      ++state.step;
      std::vector<std::span<const double>> grads;
      for (auto& m : value.gradient->dictionary) grads.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
      for (auto& net : value.gradient->encoder) {
        for (std::size_t k = 0; k < net.weights.size(); ++k) {
          grads.emplace_back(net.weights[k].data(), static_cast<std::size_t>(net.weights[k].size()));
          grads.emplace_back(net.biases[k].data(), static_cast<std::size_t>(net.biases[k].size()));
        }
      }
      std::size_t tensor = 0;
      for_each_tensor(state.dictionary, state.encoder, [&](std::span<double> params) {
        adam_step(params, grads[tensor], state.moments[tensor], hyper, state.step);
        ++tensor;
      });
    }

    const ObjectiveValue full = evaluate_objective(state, data, all, world, config, false);
    EpochRecord record{epoch, full.rec, full.sparse, full.orth, full.total};
    if (!finite_record(record)) {
      throw DivergenceError(epoch, "loss became non-finite in epoch " + std::to_string(epoch));
    }
    ++state.epochs_done;
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TrainResult train(const LatentDataset& dataset, const SyntheticWorld& world,
                  const TrainConfig& config) {
  if (dataset.split() != Split::kSeen) throw ConfigError("training requires the seen split");
  if (dataset.layers() != world.layers() || dataset.dim() != world.dim()) {
    throw ShapeError("dataset shape does not match the world");
  }
  TrainState state = init_train_state(dataset.layers(), dataset.dim(), config);
  const TrainingData data = prepare_training_data(dataset, world, config);
  TrainReport report = train_epochs(state, data, world, config, config.epochs);
  return {state.dictionary, state.encoder, std::move(report), state};
}

double orthogonality_residual(const DirectionDictionary& dictionary, const ClassEmbeddingBank& bank) {
  if (bank.layers() != dictionary.layers() || bank.dim() != dictionary.dim()) {
    throw ShapeError("bank and dictionary disagree on layers or dim");
  }
  double sum = 0.0;
  for (std::size_t l = 0; l < dictionary.layers(); ++l) {
    sum += (bank.layer(l).transpose() * dictionary.layer(l)).norm();
  }
  return sum;
}

double mean_reconstruction_loss(const LatentDataset& dataset, const ClassEmbeddingBank& bank,
                                const DirectionDictionary& dictionary, const EncoderParams* encoder,
                                const SyntheticWorld& world, ReconstructionSpace space) {
  if (dataset.empty()) throw EmptyDataset("reconstruction loss needs samples");
  const LayerGrouping grouping =
      encoder ? encoder->grouping : LayerGrouping::per_layer(dictionary.layers());
  std::vector<LatentCode> embeddings;
  for (const auto& name : dataset.categories()) {
    const auto& cats = bank.categories();
    const auto it = std::find(cats.begin(), cats.end(), name);
    if (it == cats.end()) throw NotFound("category '" + name + "' is missing from the bank");
    embeddings.push_back(bank.embedding(static_cast<std::size_t>(it - cats.begin())));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const LatentCode& w = dataset.codes()[i];
    const LatentCode& e = embeddings[dataset.labels()[i]];
    SparseCode codes;
    if (encoder) {
      codes = encode(*encoder, compute_delta(w, e));
    } else {
      codes.groups.assign(grouping.group_count(), Vector::Zero(static_cast<Eigen::Index>(dictionary.size())));
    }
    sum += space == ReconstructionSpace::kImage
               ? loss_rec_image(world, e, dictionary, codes, grouping, synth_generate(world, w)).value
               : loss_rec_latent(e, dictionary, codes, grouping, w).value;
  }
  return sum / static_cast<double>(dataset.size());
}

}  // namespace age
