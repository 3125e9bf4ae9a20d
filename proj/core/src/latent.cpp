#include "age/latent.hpp"

#include <limits>
#include <sstream>

#include "age/error.hpp"

namespace age {
namespace {

void require_finite(const Matrix& values) {
  if (!values.allFinite()) {
    throw RangeError("latent code contains a non-finite entry");
  }
}

std::string shape_string(std::size_t layers, std::size_t dim) {
  std::ostringstream out;
  out << layers << "x" << dim;
  return out.str();
}

}  // namespace

template <class Tag>
LayerCode<Tag>::LayerCode(std::size_t layers, std::size_t dim)
    : values_(Matrix::Zero(static_cast<Eigen::Index>(layers),
                           static_cast<Eigen::Index>(dim))) {}

template <class Tag>
LayerCode<Tag>::LayerCode(Matrix values) : values_(std::move(values)) {
  require_finite(values_);
}

template <class Tag>
LayerCode<Tag> LayerCode<Tag>::from_flat(const Vector& flat, std::size_t layers,
                                         std::size_t dim) {
  if (static_cast<std::size_t>(flat.size()) != layers * dim) {
    throw ShapeError("flat code of length " + std::to_string(flat.size()) +
                     " does not match " + shape_string(layers, dim));
  }
  Matrix values(static_cast<Eigen::Index>(layers), static_cast<Eigen::Index>(dim));
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t j = 0; j < dim; ++j) {
      values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) =
          flat(static_cast<Eigen::Index>(l * dim + j));
    }
  }
  return LayerCode(std::move(values));
}

template <class Tag>
Vector LayerCode<Tag>::flatten() const {
  Vector flat(values_.size());
  const auto dim = values_.cols();
  for (Eigen::Index l = 0; l < values_.rows(); ++l) {
    flat.segment(l * dim, dim) = values_.row(l).transpose();
  }
  return flat;
}

template class LayerCode<LatentTag>;
template class LayerCode<DeltaTag>;

const char* to_string(Split split) {
  return split == Split::kSeen ? "seen" : "unseen";
}

LatentDataset::LatentDataset(std::size_t layers, std::size_t dim, Split split)
    : layers_(layers), dim_(dim), split_(split) {
  if (layers == 0 || dim == 0) {
    throw ShapeError("latent dataset needs positive layer count and dim");
  }
}

std::size_t LatentDataset::add_category(const std::string& name) {
  if (find_category(name)) {
    throw ConfigError("category '" + name + "' registered twice");
  }
  names_.push_back(name);
  members_.emplace_back();
  return names_.size() - 1;
}

void LatentDataset::add_sample(std::size_t category, LatentCode code) {
  if (category >= names_.size()) {
    throw NotFound("category index " + std::to_string(category) + " is not registered");
  }
  if (code.layers() != layers_ || code.dim() != dim_) {
    throw ShapeError("sample shape " + shape_string(code.layers(), code.dim()) +
                     " does not match dataset shape " + shape_string(layers_, dim_));
  }
  members_[category].push_back(codes_.size());
  codes_.push_back(std::move(code));
  labels_.push_back(category);
}

std::optional<std::size_t> LatentDataset::find_category(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

const std::vector<std::size_t>& LatentDataset::indices_of(std::size_t category) const {
  if (category >= members_.size()) {
    throw NotFound("category index " + std::to_string(category) + " is not registered");
  }
  return members_[category];
}

ClassEmbeddingBank::ClassEmbeddingBank(const std::vector<ClassEmbedding>& embeddings) {
  if (embeddings.empty()) return;
  const auto layers = embeddings.front().code.layers();
  const auto dim = embeddings.front().code.dim();
  const auto m = static_cast<Eigen::Index>(embeddings.size());
  per_layer_.assign(layers, Matrix(static_cast<Eigen::Index>(dim), m));
  flat_.resize(static_cast<Eigen::Index>(layers * dim), m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto& e = embeddings[static_cast<std::size_t>(c)];
    if (e.code.layers() != layers || e.code.dim() != dim) {
      throw ShapeError("class embedding '" + e.category + "' has mismatched shape");
    }
    categories_.push_back(e.category);
    for (std::size_t l = 0; l < layers; ++l) {
      per_layer_[l].col(c) = e.code.layer(l);
    }
    flat_.col(c) = e.code.flatten();
  }
}

LatentCode ClassEmbeddingBank::embedding(std::size_t column) const {
  if (column >= size()) throw NotFound("bank column out of range");
  return LatentCode::from_flat(flat_.col(static_cast<Eigen::Index>(column)), layers(), dim());
}

ClassEmbeddingBank ClassEmbeddingBank::concat(const ClassEmbeddingBank& other) const {
  if (empty()) return other;
  if (other.empty()) return *this;
  if (layers() != other.layers() || dim() != other.dim()) {
    throw ShapeError("cannot concatenate banks of different shapes");
  }
  std::vector<ClassEmbedding> all;
  for (std::size_t c = 0; c < size(); ++c) all.push_back({categories_[c], embedding(c)});
  for (std::size_t c = 0; c < other.size(); ++c) {
    all.push_back({other.categories_[c], other.embedding(c)});
  }
  return ClassEmbeddingBank(all);
}

ClassEmbedding compute_class_embedding(const LatentDataset& dataset,
                                       const std::string& category) {
  const auto index = dataset.find_category(category);
  if (!index) throw NotFound("unknown category '" + category + "'");
  return compute_class_embedding(dataset, *index);
}

ClassEmbedding compute_class_embedding(const LatentDataset& dataset,
                                       std::size_t category) {
  const auto& members = dataset.indices_of(category);
  const auto& name = dataset.categories()[category];
  if (members.empty()) throw EmptyCategory("category '" + name + "' has no samples");
  // Index-ascending accumulation keeps the mean reproducible.
  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(dataset.layers()),
                            static_cast<Eigen::Index>(dataset.dim()));
  for (const auto i : members) sum += dataset.codes()[i].values();
  sum /= static_cast<double>(members.size());
  return {name, LatentCode(std::move(sum))};
}

DeltaCode compute_delta(const LatentCode& code, const LatentCode& embedding) {
  if (!code.same_shape(embedding)) {
    throw ShapeError("code " + shape_string(code.layers(), code.dim()) +
                     " vs embedding " + shape_string(embedding.layers(), embedding.dim()));
  }
  return DeltaCode(Matrix(code.values() - embedding.values()));
}

DeltaCode compute_delta(const LatentCode& code, const ClassEmbedding& embedding) {
  return compute_delta(code, embedding.code);
}

LatentCode add_delta(const LatentCode& base, const DeltaCode& delta) {
  if (!base.same_shape(delta)) throw ShapeError("delta shape does not match base code");
  return LatentCode(Matrix(base.values() + delta.values()));
}

ClassEmbeddingBank build_embedding_bank(const LatentDataset& dataset) {
  if (dataset.category_count() == 0 || dataset.empty()) {
    throw EmptyDataset("cannot build an embedding bank from an empty dataset");
  }
  std::vector<ClassEmbedding> embeddings;
  embeddings.reserve(dataset.category_count());
  for (std::size_t c = 0; c < dataset.category_count(); ++c) {
    embeddings.push_back(compute_class_embedding(dataset, c));
  }
  return ClassEmbeddingBank(embeddings);
}

std::size_t nearest_class_index(const LatentCode& code, const ClassEmbeddingBank& bank) {
  if (bank.empty()) throw EmptyDataset("nearest_class needs a non-empty bank");
  if (code.layers() != bank.layers() || code.dim() != bank.dim()) {
    throw ShapeError("query code does not match bank shape");
  }
  const Vector flat = code.flatten();
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < bank.size(); ++c) {
    const double dist = (flat - bank.flat().col(static_cast<Eigen::Index>(c))).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

std::string nearest_class(const LatentCode& code, const ClassEmbeddingBank& bank) {
  return bank.categories()[nearest_class_index(code, bank)];
}

}  // namespace age
