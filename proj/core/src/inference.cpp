#include "age/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "age/error.hpp"
#include "age/random.hpp"
#include "age/spectral.hpp"

namespace age {

Matrix pseudo_inverse(const Matrix& matrix) {
  const SvdResult s = svd(matrix);
  Matrix pinv = Matrix::Zero(matrix.cols(), matrix.rows());
  if (s.singular_values.size() == 0) return pinv;
  const double cutoff = kPinvRelativeCutoff * s.singular_values(0);
  for (Eigen::Index k = 0; k < s.singular_values.size(); ++k) {
    const double sigma = s.singular_values(k);
    if (sigma > cutoff && sigma > 0.0) {
      pinv.noalias() += (s.v.col(k) / sigma) * s.u.col(k).transpose();
    }
  }
  return pinv;
}

BackProjector::BackProjector(const DirectionDictionary& dictionary, LayerGrouping grouping)
    : grouping_(std::move(grouping)), dim_(dictionary.dim()), size_(dictionary.size()) {
  if (dictionary.layers() != grouping_.layer_count()) {
    throw ShapeError("dictionary layer count does not match the grouping");
  }
  for (const auto& layer : dictionary.per_layer()) pinv_.push_back(pseudo_inverse(layer));
}

std::vector<Vector> BackProjector::project_layers(const DeltaCode& delta) const {
  if (delta.layers() != pinv_.size() || delta.dim() != dim_) {
    throw ShapeError("delta shape does not match the dictionary");
  }
  std::vector<Vector> codes;
  codes.reserve(pinv_.size());
  for (std::size_t l = 0; l < pinv_.size(); ++l) codes.push_back(pinv_[l] * delta.layer(l));
  return codes;
}

SparseCode BackProjector::project(const DeltaCode& delta) const {
  const auto layer_codes = project_layers(delta);
  SparseCode code;
  for (std::size_t g = 0; g < grouping_.group_count(); ++g) {
    const auto [begin, end] = grouping_.range(g);
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(size_));
    for (std::size_t l = begin; l < end; ++l) sum += layer_codes[l];
    code.groups.push_back(sum / static_cast<double>(end - begin));
  }
  return code;
}

SparseCode back_project(const DirectionDictionary& dictionary, const DeltaCode& delta,
                        const LayerGrouping& grouping) {
  return BackProjector(dictionary, grouping).project(delta);
}

namespace {

std::size_t bank_column(const ClassEmbeddingBank& bank, const std::string& name) {
  const auto& cats = bank.categories();
  const auto it = std::find(cats.begin(), cats.end(), name);
  if (it == cats.end()) throw NotFound("category '" + name + "' is missing from the bank");
  return static_cast<std::size_t>(it - cats.begin());
}

}  // namespace

CommonalityProfile commonality_profile(const LatentDataset& dataset,
                                       const DirectionDictionary& dictionary,
                                       const ClassEmbeddingBank& bank) {
  if (dataset.empty()) throw EmptyDataset("commonality profile needs samples");
  const BackProjector projector(dictionary, LayerGrouping::per_layer(dictionary.layers()));
  const auto l = static_cast<Eigen::Index>(dictionary.size());
  CommonalityProfile profile;
  profile.per_layer.assign(dictionary.layers(), Vector::Zero(l));
  std::size_t populated = 0;
  for (std::size_t c = 0; c < dataset.category_count(); ++c) {
    const auto& members = dataset.indices_of(c);
    if (members.empty()) continue;
    const LatentCode embedding = bank.embedding(bank_column(bank, dataset.categories()[c]));
    std::vector<Vector> category_sum(dictionary.layers(), Vector::Zero(l));
    for (const auto i : members) {
      const auto codes = projector.project_layers(compute_delta(dataset.codes()[i], embedding));
      for (std::size_t layer = 0; layer < codes.size(); ++layer) {
        category_sum[layer] += codes[layer].cwiseAbs();
      }
    }
    for (std::size_t layer = 0; layer < category_sum.size(); ++layer) {
      profile.per_layer[layer] += category_sum[layer] / static_cast<double>(members.size());
    }
    ++populated;
  }
  for (auto& v : profile.per_layer) v /= static_cast<double>(populated);
  return profile;
}

std::vector<std::size_t> RefinedDictionary::group_support(std::size_t group) const {
  const auto [begin, end] = grouping.range(group);
  std::set<std::size_t> cols;
  for (std::size_t l = begin; l < end; ++l) cols.insert(index[l].begin(), index[l].end());
  return {cols.begin(), cols.end()};
}

RefinedDictionary refine_dictionary(const DirectionDictionary& dictionary,
                                    const CommonalityProfile& profile, std::size_t t,
                                    const LayerGrouping& grouping) {
  const std::size_t l = dictionary.size();
  if (t < 1 || t > l) {
    throw RangeError("t = " + std::to_string(t) + " must lie in [1, " + std::to_string(l) + "]");
  }
  if (profile.per_layer.size() != dictionary.layers()) {
    throw ShapeError("profile layer count does not match the dictionary");
  }
  RefinedDictionary refined;
  refined.grouping = grouping;
  refined.dictionary_size = l;
  for (std::size_t layer = 0; layer < dictionary.layers(); ++layer) {
    const Vector& p = profile.per_layer[layer];
    if (static_cast<std::size_t>(p.size()) != l) throw ShapeError("profile length must equal l");
    std::vector<std::size_t> order(l);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p(static_cast<Eigen::Index>(a)) > p(static_cast<Eigen::Index>(b));
    });
    order.resize(t);
    Matrix cols(static_cast<Eigen::Index>(dictionary.dim()), static_cast<Eigen::Index>(t));
    for (std::size_t k = 0; k < t; ++k) {
      cols.col(static_cast<Eigen::Index>(k)) =
          dictionary.layer(layer).col(static_cast<Eigen::Index>(order[k]));
    }
    refined.layers.push_back(std::move(cols));
    refined.index.push_back(std::move(order));
  }
  return refined;
}

CodeDistribution fit_code_distribution(const std::vector<SparseCode>& codes,
                                       const RefinedDictionary& refined, CovarianceKind kind) {
  if (codes.size() < 2) throw InsufficientData("a Gaussian fit needs at least two codes");
  const std::size_t groups = refined.grouping.group_count();
  CodeDistribution dist;
  dist.kind = kind;
  dist.code_size = refined.dictionary_size;
  const double n = static_cast<double>(codes.size());
  for (std::size_t g = 0; g < groups; ++g) {
    const auto support = refined.group_support(g);
    const auto k = static_cast<Eigen::Index>(support.size());
    Matrix samples(k, static_cast<Eigen::Index>(codes.size()));
    for (std::size_t i = 0; i < codes.size(); ++i) {
      if (codes[i].groups.size() != groups ||
          static_cast<std::size_t>(codes[i].groups[g].size()) != dist.code_size) {
        throw ShapeError("code shape does not match the refined dictionary");
      }
      for (Eigen::Index j = 0; j < k; ++j) {
        samples(j, static_cast<Eigen::Index>(i)) =
            codes[i].groups[g](static_cast<Eigen::Index>(support[static_cast<std::size_t>(j)]));
      }
    }
    // Shifted by the first sample so constant coordinates come out exact.
    const Vector shift = samples.col(0);
    Vector mean = shift + (samples.colwise() - shift).rowwise().sum() / n;
    const Matrix centered = samples.colwise() - mean;
    Matrix cov = centered * centered.transpose() / (n - 1.0);
    dist.support.push_back(support);
    dist.mean.push_back(std::move(mean));
    dist.variance.push_back(cov.diagonal());
    if (kind == CovarianceKind::kFull) dist.covariance.push_back((cov + cov.transpose()) / 2.0);
  }
  return dist;
}

namespace {

// Symmetric square root of a PSD matrix via its SVD (U = V up to signs of
// zero modes); negative rounding noise is clipped.
Matrix psd_sqrt(const Matrix& cov) {
  const SvdResult s = svd(cov);
  Matrix root = Matrix::Zero(cov.rows(), cov.cols());
  for (Eigen::Index k = 0; k < s.singular_values.size(); ++k) {
    root.noalias() += std::sqrt(std::max(0.0, s.singular_values(k))) * s.u.col(k) * s.u.col(k).transpose();
  }
  return root;
}

}  // namespace

SparseCode sample_code(const CodeDistribution& dist, std::uint64_t seed) {
  Rng rng(seed);
  SparseCode code;
  for (std::size_t g = 0; g < dist.mean.size(); ++g) {
    const auto k = dist.mean[g].size();
    Vector gauss(k);
    for (Eigen::Index j = 0; j < k; ++j) gauss(j) = rng.normal();
    Vector values;
    if (dist.kind == CovarianceKind::kFull) {
      values = dist.mean[g] + psd_sqrt(dist.covariance[g]) * gauss;
    } else {
      values = dist.mean[g] + dist.variance[g].cwiseMax(0.0).cwiseSqrt().cwiseProduct(gauss);
    }
    Vector full = Vector::Zero(static_cast<Eigen::Index>(dist.code_size));
    for (Eigen::Index j = 0; j < k; ++j) {
      full(static_cast<Eigen::Index>(dist.support[g][static_cast<std::size_t>(j)])) = values(j);
    }
    code.groups.push_back(std::move(full));
  }
  return code;
}

LatentCode edit(const LatentCode& code, const RefinedDictionary& refined, const SparseCode& n_tilde,
                double alpha) {
  if (code.layers() != refined.layers.size() ||
      (!refined.layers.empty() && static_cast<std::size_t>(refined.layers.front().rows()) != code.dim())) {
    throw ShapeError("code shape does not match the refined dictionary");
  }
  if (n_tilde.groups.size() != refined.grouping.group_count()) {
    throw ShapeError("sampled code has the wrong number of groups");
  }
  Matrix values = code.values();
  for (std::size_t l = 0; l < refined.layers.size(); ++l) {
    const Vector& full = n_tilde.groups[refined.grouping.group_of(l)];
    if (static_cast<std::size_t>(full.size()) != refined.dictionary_size) {
      throw ShapeError("sampled code length must equal the dictionary size");
    }
    Vector selected(static_cast<Eigen::Index>(refined.t()));
    for (std::size_t k = 0; k < refined.t(); ++k) {
      selected(static_cast<Eigen::Index>(k)) = full(static_cast<Eigen::Index>(refined.index[l][k]));
    }
    values.row(static_cast<Eigen::Index>(l)) += (alpha * (refined.layers[l] * selected)).transpose();
  }
  return LatentCode(std::move(values));
}

LatentCode category_transfer(const LatentCode& code, const ClassEmbedding& src,
                             const ClassEmbedding& dst) {
  if (!code.same_shape(src.code) || !code.same_shape(dst.code)) {
    throw ShapeError("category transfer needs matching shapes");
  }
  return LatentCode(Matrix(code.values() - src.code.values() + dst.code.values()));
}

std::vector<BaselineDraw> baseline_sample_train_edits(const LatentCode& code,
                                                      const LatentDataset& dataset,
                                                      const ClassEmbeddingBank& bank,
                                                      std::uint64_t seed, std::size_t count) {
  if (dataset.empty()) throw EmptyDataset("sample-train baseline needs training samples");
  std::vector<LatentCode> embeddings;
  for (const auto& name : dataset.categories()) embeddings.push_back(bank.embedding(bank_column(bank, name)));
  Rng rng(seed);
  std::vector<BaselineDraw> draws;
  draws.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = rng.index(dataset.size());
    const DeltaCode delta = compute_delta(dataset.codes()[i], embeddings[dataset.labels()[i]]);
    draws.push_back({add_delta(code, delta), i});
  }
  return draws;
}

BaselineDraw baseline_sample_train_edit(const LatentCode& code, const LatentDataset& dataset,
                                        const ClassEmbeddingBank& bank, std::uint64_t seed) {
  return baseline_sample_train_edits(code, dataset, bank, seed, 1).front();
}

EditModel build_edit_model(const LatentDataset& seen, const DirectionDictionary& dictionary,
                           const ClassEmbeddingBank& bank, const LayerGrouping& grouping,
                           const InferenceOptions& options, const EncoderParams* encoder) {
  EditModel model;
  model.profile = commonality_profile(seen, dictionary, bank);
  model.refined = refine_dictionary(dictionary, model.profile, options.t, grouping);
  std::vector<LatentCode> embeddings;
  for (const auto& name : seen.categories()) embeddings.push_back(bank.embedding(bank_column(bank, name)));
  std::vector<SparseCode> codes;
  codes.reserve(seen.size());
  if (options.use_encoder_codes) {
    if (encoder == nullptr) throw ConfigError("encoder codes requested but no encoder given");
    for (std::size_t i = 0; i < seen.size(); ++i) {
      codes.push_back(encode(*encoder, compute_delta(seen.codes()[i], embeddings[seen.labels()[i]])));
    }
  } else {
    const BackProjector projector(dictionary, grouping);
    for (std::size_t i = 0; i < seen.size(); ++i) {
      codes.push_back(projector.project(compute_delta(seen.codes()[i], embeddings[seen.labels()[i]])));
    }
  }
  model.distribution = fit_code_distribution(codes, model.refined, options.covariance);
  return model;
}

}  // namespace age
