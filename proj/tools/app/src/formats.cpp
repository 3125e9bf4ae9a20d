#include "age/app/formats.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <span>

#include "age/error.hpp"

namespace age::app {
namespace {

template <class T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }

  void magic(const char (&tag)[5]) { raw(tag, 4); }
  void u32(std::uint32_t v) { scalar(v); }
  void u64(std::uint64_t v) { scalar(v); }
  void f32(float v) { scalar(v); }
  void f64(double v) { scalar(v); }
  void bytes(const std::string& s) { raw(s.data(), s.size()); }

  void matrix_f64(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }

  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_.string() + "' failed");
  }

 private:
  template <class T>
  void scalar(T v) {
    v = to_little(v);
    raw(&v, sizeof v);
  }
  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "' for reading");
  }

  void expect_magic(const char (&tag)[5]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0) {
      throw IoError("'" + path_.string() + "' is not a " + std::string(tag, 4) + " file");
    }
    const auto version = u32();
    if (version != kFormatVersion) {
      throw IoError("'" + path_.string() + "' has unsupported version " + std::to_string(version));
    }
  }

  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  float f32() { return scalar<float>(); }
  double f64() { return scalar<double>(); }

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  Matrix matrix_f64(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  void expect_end() {
    if (!at_end()) throw IoError("'" + path_.string() + "' has trailing bytes");
  }

 private:
  template <class T>
  T scalar() {
    T v;
    raw(&v, sizeof v);
    return to_little(v);
  }
  void raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw IoError("'" + path_.string() + "' is truncated");
    }
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

std::uint32_t narrow(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw IoError("value does not fit the u32 header field");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const LatentDataset& dataset) {
  Writer w(path);
  w.magic("AGEL");
  w.u32(kFormatVersion);
  w.u32(narrow(dataset.layers()));
  w.u32(narrow(dataset.dim()));
  w.u32(narrow(dataset.category_count()));
  for (std::size_t c = 0; c < dataset.category_count(); ++c) {
    const auto& name = dataset.categories()[c];
    w.u32(narrow(name.size()));
    w.bytes(name);
    const auto& members = dataset.indices_of(c);
    w.u32(narrow(members.size()));
    for (const auto i : members) {
      const Matrix& v = dataset.codes()[i].values();
      for (Eigen::Index l = 0; l < v.rows(); ++l) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) w.f32(static_cast<float>(v(l, j)));
      }
    }
  }
  w.finish();
}

LatentDataset read_dataset(const std::filesystem::path& path, Split split) {
  Reader r(path);
  r.expect_magic("AGEL");
  const auto layers = r.u32();
  const auto dim = r.u32();
  const auto categories = r.u32();
  LatentDataset dataset(layers, dim, split);
  for (std::uint32_t c = 0; c < categories; ++c) {
    const auto name = r.bytes(r.u32());
    const auto id = dataset.add_category(name);
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      Matrix v(layers, dim);
      for (Eigen::Index l = 0; l < v.rows(); ++l) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) v(l, j) = static_cast<double>(r.f32());
      }
      dataset.add_sample(id, LatentCode(std::move(v)));
    }
  }
  r.expect_end();
  return dataset;
}

void write_dictionary(const std::filesystem::path& path, const DirectionDictionary& dictionary,
                      const std::vector<std::vector<std::size_t>>* selected) {
  Writer w(path);
  w.magic("AGED");
  w.u32(kFormatVersion);
  w.u32(narrow(dictionary.layers()));
  w.u32(narrow(dictionary.dim()));
  w.u32(narrow(dictionary.size()));
  for (const auto& m : dictionary.per_layer()) {
    // Eigen storage is column-major, matching the file layout.
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(static_cast<float>(m.data()[i]));
  }
  if (selected) {
    if (selected->size() != dictionary.layers()) throw ShapeError("one index list per layer expected");
    const std::size_t t = selected->empty() ? 0 : selected->front().size();
    w.u32(narrow(t));
    for (const auto& layer : *selected) {
      if (layer.size() != t) throw ShapeError("every layer must select t columns");
      for (const auto idx : layer) w.u32(narrow(idx));
    }
  }
  w.finish();
}

DictionaryFile read_dictionary(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("AGED");
  const auto layers = r.u32();
  const auto dim = r.u32();
  const auto size = r.u32();
  std::vector<Matrix> mats;
  for (std::uint32_t l = 0; l < layers; ++l) {
    Matrix m(dim, size);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(r.f32());
    mats.push_back(std::move(m));
  }
  DictionaryFile file{DirectionDictionary(std::move(mats)), std::nullopt};
  if (!r.at_end()) {
    const auto t = r.u32();
    std::vector<std::vector<std::size_t>> selected(layers);
    for (auto& layer : selected) {
      for (std::uint32_t k = 0; k < t; ++k) {
        const auto idx = r.u32();
        if (idx >= size) throw IoError("'" + path.string() + "' selects a column out of range");
        layer.push_back(idx);
      }
    }
    file.selected = std::move(selected);
  }
  r.expect_end();
  return file;
}

void write_refined(const std::filesystem::path& path, const DirectionDictionary& dictionary,
                   const RefinedDictionary& refined) {
  write_dictionary(path, dictionary, &refined.index);
}

RefinedDictionary read_refined(const std::filesystem::path& path, const LayerGrouping& grouping) {
  DictionaryFile file = read_dictionary(path);
  if (!file.selected) throw IoError("'" + path.string() + "' has no refined-index trailer");
  RefinedDictionary refined;
  refined.grouping = grouping;
  refined.dictionary_size = file.dictionary.size();
  refined.index = *file.selected;
  for (std::size_t l = 0; l < file.dictionary.layers(); ++l) {
    Matrix cols(static_cast<Eigen::Index>(file.dictionary.dim()),
                static_cast<Eigen::Index>(refined.index[l].size()));
    for (std::size_t k = 0; k < refined.index[l].size(); ++k) {
      cols.col(static_cast<Eigen::Index>(k)) =
          file.dictionary.layer(l).col(static_cast<Eigen::Index>(refined.index[l][k]));
    }
    refined.layers.push_back(std::move(cols));
  }
  return refined;
}

void write_world(const std::filesystem::path& path, const SyntheticWorld& world) {
  const auto& s = world.spec();
  Writer w(path);
  w.magic("AGEW");
  w.u32(kFormatVersion);
  w.u32(kDtypeF64);
  for (const auto v : {s.layers, s.dim, s.image_dim, s.seen_categories, s.unseen_categories,
                       s.irrelevant_rank}) {
    w.u32(narrow(v));
  }
  w.f64(s.class_separation);
  w.f64(s.code_sparsity);
  w.f64(s.noise_sigma);
  w.f64(s.category_specific_scale);
  w.u64(s.seed);
  for (const auto& b : world.class_bases()) w.matrix_f64(b.values());
  for (const auto& u : world.irrelevant_basis()) w.matrix_f64(u);
  w.matrix_f64(world.generator());
  w.finish();
}

SyntheticWorld read_world(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("AGEW");
  if (r.u32() != kDtypeF64) throw IoError("'" + path.string() + "' has an unsupported dtype");
  SyntheticWorldSpec s;
  s.layers = r.u32();
  s.dim = r.u32();
  s.image_dim = r.u32();
  s.seen_categories = r.u32();
  s.unseen_categories = r.u32();
  s.irrelevant_rank = r.u32();
  s.class_separation = r.f64();
  s.code_sparsity = r.f64();
  s.noise_sigma = r.f64();
  s.category_specific_scale = r.f64();
  s.seed = r.u64();
  s.validate();
  const auto L = static_cast<Eigen::Index>(s.layers);
  const auto d = static_cast<Eigen::Index>(s.dim);
  std::vector<LatentCode> bases;
  for (std::size_t c = 0; c < s.total_categories(); ++c) bases.emplace_back(r.matrix_f64(L, d));
  std::vector<Matrix> basis;
  for (std::size_t l = 0; l < s.layers; ++l) {
    basis.push_back(r.matrix_f64(d, static_cast<Eigen::Index>(s.irrelevant_rank)));
  }
  Matrix generator = r.matrix_f64(static_cast<Eigen::Index>(s.image_dim), L * d);
  r.expect_end();
  return SyntheticWorld(s, std::move(bases), std::move(basis), std::move(generator));
}

void write_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto& enc = state.encoder;
  Writer w(path);
  w.magic("AGEE");
  w.u32(kFormatVersion);
  w.u32(kDtypeF64);
  w.u32(narrow(state.dictionary.layers()));
  w.u32(narrow(state.dictionary.dim()));
  w.u32(narrow(state.dictionary.size()));
  w.u32(narrow(enc.dims.hidden));
  w.u32(narrow(enc.grouping.group_count()));
  for (const auto& [begin, end] : enc.grouping.ranges()) {
    w.u32(narrow(begin));
    w.u32(narrow(end));
  }
  w.f64(enc.dims.leak_slope);
  w.u64(state.step);
  w.u64(state.epochs_done);
  for (const auto& m : state.dictionary.per_layer()) w.matrix_f64(m);
  for (const auto& net : enc.nets) {
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
      w.matrix_f64(net.weights[k]);
      w.matrix_f64(net.biases[k]);
    }
  }
  for (const auto& m : state.moments) {
    for (const double v : m.first) w.f64(v);
    for (const double v : m.second) w.f64(v);
  }
  w.finish();
}

TrainState read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("AGEE");
  if (r.u32() != kDtypeF64) throw IoError("'" + path.string() + "' has an unsupported dtype");
  const auto layers = r.u32();
  const auto dim = r.u32();
  const auto size = r.u32();
  const auto hidden = r.u32();
  const auto groups = r.u32();
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::uint32_t g = 0; g < groups; ++g) {
    const auto begin = r.u32();
    const auto end = r.u32();
    ranges.emplace_back(begin, end);
  }
  TrainState state;
  state.encoder.grouping = LayerGrouping(std::move(ranges), layers);
  state.encoder.dims = EncoderDims{dim, hidden, size, r.f64()};
  state.step = r.u64();
  state.epochs_done = r.u64();
  std::vector<Matrix> mats;
  for (std::uint32_t l = 0; l < layers; ++l) mats.push_back(r.matrix_f64(dim, size));
  state.dictionary = DirectionDictionary(std::move(mats));
  for (std::uint32_t g = 0; g < groups; ++g) {
    Mlp net = Mlp::zeros(state.encoder.grouping.group_size(g) * dim, hidden, size);
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
      net.weights[k] = r.matrix_f64(net.weights[k].rows(), net.weights[k].cols());
      net.biases[k] = r.matrix_f64(net.biases[k].size(), 1);
    }
    state.encoder.nets.push_back(std::move(net));
  }
  for_each_tensor(state.dictionary, state.encoder, [&](std::span<double> t) {
    AdamMoments m{std::vector<double>(t.size()), std::vector<double>(t.size())};
    for (auto& v : m.first) v = r.f64();
    for (auto& v : m.second) v = r.f64();
    state.moments.push_back(std::move(m));
  });
  r.expect_end();
  return state;
}

}  // namespace age::app
