#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace age {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LatentTag {};
struct DeltaTag {};

// An L x d block of latent coordinates, one row per generator layer.
// Rows are flattened layer-major (layer 0 first) wherever a flat vector is
// needed.
template <class Tag>
class LayerCode {
 public:
  LayerCode() = default;
  LayerCode(std::size_t layers, std::size_t dim);
  explicit LayerCode(Matrix values);

  static LayerCode from_flat(const Vector& flat, std::size_t layers,
                             std::size_t dim);

  std::size_t layers() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }
  const Matrix& values() const { return values_; }

  Vector layer(std::size_t l) const { return values_.row(static_cast<Eigen::Index>(l)).transpose(); }
  Vector flatten() const;

  template <class Other>
  bool same_shape(const LayerCode<Other>& other) const {
    return layers() == other.layers() && dim() == other.dim();
  }

  friend bool operator==(const LayerCode& a, const LayerCode& b) {
    return a.values_.rows() == b.values_.rows() &&
           a.values_.cols() == b.values_.cols() && a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

using LatentCode = LayerCode<LatentTag>;
using DeltaCode = LayerCode<DeltaTag>;

extern template class LayerCode<LatentTag>;
extern template class LayerCode<DeltaTag>;

enum class Split { kSeen, kUnseen };

const char* to_string(Split split);

// Codes grouped by category. Categories get dense indices in registration
// order; those indices fix tie-breaking and embedding-bank column order.
class LatentDataset {
 public:
  LatentDataset(std::size_t layers, std::size_t dim, Split split = Split::kSeen);

  std::size_t add_category(const std::string& name);
  void add_sample(std::size_t category, LatentCode code);

  std::size_t layers() const { return layers_; }
  std::size_t dim() const { return dim_; }
  Split split() const { return split_; }
  std::size_t size() const { return codes_.size(); }
  bool empty() const { return codes_.empty(); }

  const std::vector<LatentCode>& codes() const { return codes_; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<std::string>& categories() const { return names_; }
  std::size_t category_count() const { return names_.size(); }
  std::optional<std::size_t> find_category(const std::string& name) const;
  const std::vector<std::size_t>& indices_of(std::size_t category) const;

 private:
  std::size_t layers_;
  std::size_t dim_;
  Split split_;
  std::vector<LatentCode> codes_;
  std::vector<std::size_t> labels_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> members_;
};

struct ClassEmbedding {
  std::string category;
  LatentCode code;
};

// Per-layer d x M matrices whose column m is the layer slice of category m's
// class embedding.
class ClassEmbeddingBank {
 public:
  ClassEmbeddingBank() = default;
  explicit ClassEmbeddingBank(const std::vector<ClassEmbedding>& embeddings);

  std::size_t layers() const { return per_layer_.size(); }
  std::size_t dim() const { return per_layer_.empty() ? 0 : static_cast<std::size_t>(per_layer_.front().rows()); }
  std::size_t size() const { return categories_.size(); }
  bool empty() const { return categories_.empty(); }

  const Matrix& layer(std::size_t l) const { return per_layer_.at(l); }
  const std::vector<Matrix>& per_layer() const { return per_layer_; }
  const std::vector<std::string>& categories() const { return categories_; }
  // Flattened embeddings, (L*d) x M.
  const Matrix& flat() const { return flat_; }
  LatentCode embedding(std::size_t column) const;

  // Columns of `other` appended after this bank's columns.
  ClassEmbeddingBank concat(const ClassEmbeddingBank& other) const;

 private:
  std::vector<std::string> categories_;
  std::vector<Matrix> per_layer_;
  Matrix flat_;
};

ClassEmbedding compute_class_embedding(const LatentDataset& dataset,
                                       const std::string& category);
ClassEmbedding compute_class_embedding(const LatentDataset& dataset,
                                       std::size_t category);

DeltaCode compute_delta(const LatentCode& code, const ClassEmbedding& embedding);
DeltaCode compute_delta(const LatentCode& code, const LatentCode& embedding);
LatentCode add_delta(const LatentCode& base, const DeltaCode& delta);

ClassEmbeddingBank build_embedding_bank(const LatentDataset& dataset);

// Index into bank.categories() of the closest embedding under Euclidean
// distance on the flattened code; lowest index wins ties.
std::size_t nearest_class_index(const LatentCode& code,
                                const ClassEmbeddingBank& bank);
std::string nearest_class(const LatentCode& code, const ClassEmbeddingBank& bank);

}  // namespace age
