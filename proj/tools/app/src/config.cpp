#include "age/app/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "age/error.hpp"

namespace age::app {
namespace {

using nlohmann::json;

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads keys out of one JSON object and complains about the leftovers.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return false;
    try {
      out = read<T>(*it, key);
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
    return true;
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return std::nullopt;
    return Section(*it, path_.empty() ? std::string(key) : path_ + "." + key);
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + where(key));
    }
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : "'" + path_ + "'";
    return "'" + (path_.empty() ? key : path_ + "." + key) + "'";
  }

 private:
  template <class T>
  T read(const json& v, const char* key) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!is_count(v)) throw ConfigError(where(key) + " must be a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
      return v.get<T>();
    } else {
      return v.get<T>();
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

const char* name_of(ReconstructionSpace s) { return s == ReconstructionSpace::kImage ? "image" : "latent"; }
const char* name_of(SparsityForm s) { return s == SparsityForm::kMagnitude ? "magnitude" : "literal"; }
const char* name_of(CovarianceKind k) { return k == CovarianceKind::kDiagonal ? "diagonal" : "full"; }

void parse_world(Section s, RunConfig& c) {
  auto& w = c.world;
  s.get("layers", w.layers);
  s.get("dim", w.dim);
  s.get("image_dim", w.image_dim);
  s.get("seen_categories", w.seen_categories);
  s.get("unseen_categories", w.unseen_categories);
  s.get("irrelevant_rank", w.irrelevant_rank);
  s.get("class_separation", w.class_separation);
  s.get("code_sparsity", w.code_sparsity);
  s.get("noise_sigma", w.noise_sigma);
  s.get("category_specific_scale", w.category_specific_scale);
  c.world_seed_set = s.get("seed", w.seed);
  s.finish();
}

void parse_data(Section s, RunConfig& c) {
  s.get("train_per_category", c.data.train_per_category);
  s.get("test_per_category", c.data.test_per_category);
  s.get("unseen_per_category", c.data.unseen_per_category);
  s.finish();
}

void parse_train(Section s, RunConfig& c) {
  auto& t = c.train;
  s.get("lambda1", t.lambda1);
  s.get("lambda2", t.lambda2);
  s.get("theta0", t.theta0);
  s.get("theta1", t.theta1);
  s.get("learning_rate", t.learning_rate);
  s.get("beta1", t.beta1);
  s.get("beta2", t.beta2);
  s.get("adam_epsilon", t.adam_epsilon);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  c.train_seed_set = s.get("seed", t.seed);
  s.get("dictionary_size", t.dictionary_size);
  s.get("hidden", t.hidden);
  s.get("leak_slope", t.leak_slope);
  std::string text;
  if (s.get("reconstruction", text)) {
    if (text == "image") t.reconstruction = ReconstructionSpace::kImage;
    else if (text == "latent") t.reconstruction = ReconstructionSpace::kLatent;
    else throw ConfigError(s.where("reconstruction") + " must be \"image\" or \"latent\"");
  }
  if (s.get("sparsity_form", text)) {
    if (text == "magnitude") t.sparsity_form = SparsityForm::kMagnitude;
    else if (text == "literal") t.sparsity_form = SparsityForm::kLiteral;
    else throw ConfigError(s.where("sparsity_form") + " must be \"magnitude\" or \"literal\"");
  }
  if (const json* g = s.raw("grouping")) {
    if (!g->is_array()) throw ConfigError(s.where("grouping") + " must be a list of [begin, end] pairs");
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto& r : *g) {
      if (!r.is_array() || r.size() != 2 || !is_count(r[0]) || !is_count(r[1])) {
        throw ConfigError(s.where("grouping") + " must be a list of [begin, end] pairs");
      }
      ranges.emplace_back(r[0].get<std::size_t>(), r[1].get<std::size_t>());
    }
    t.grouping = LayerGrouping(std::move(ranges), c.world.layers);
  }
  s.finish();
}

void parse_inference(Section s, RunConfig& c) {
  auto& p = c.inference;
  s.get("t", p.t);
  s.get("alpha", p.alpha);
  s.get("count", p.count);
  c.inference_seed_set = s.get("seed", p.seed);
  std::string text;
  if (s.get("covariance", text)) {
    if (text == "diagonal") p.covariance = CovarianceKind::kDiagonal;
    else if (text == "full") p.covariance = CovarianceKind::kFull;
    else throw ConfigError(s.where("covariance") + " must be \"diagonal\" or \"full\"");
  }
  s.get("use_encoder_codes", p.use_encoder_codes);
  s.get("baseline", p.baseline);
  s.finish();
}

void parse_analyze(Section s, RunConfig& c) {
  s.get("alphas", c.analyze.alphas);
  s.get("edits_per_code", c.analyze.edits_per_code);
  s.get("svg", c.analyze.svg);
  s.finish();
}

}  // namespace

void RunConfig::apply_global_seed() {
  if (!world_seed_set) world.seed = seed;
  if (!train_seed_set) train.seed = seed;
  if (!inference_seed_set) inference.seed = seed;
}

void RunConfig::validate() const {
  world.validate();
  train.validate();
  if (train.grouping && train.grouping->layer_count() != world.layers) {
    throw ConfigError("'train.grouping' must cover exactly world.layers layers");
  }
  if (data.train_per_category == 0) throw ConfigError("'data.train_per_category' must be positive");
  if (inference.t == 0 || inference.t > train.dictionary_size) {
    throw ConfigError("'inference.t' must lie in [1, train.dictionary_size]");
  }
  if (!std::isfinite(inference.alpha)) throw ConfigError("'inference.alpha' must be finite");
  if (inference.count == 0) throw ConfigError("'inference.count' must be positive");
  for (const double a : analyze.alphas) {
    if (!std::isfinite(a)) throw ConfigError("'analyze.alphas' must be finite");
  }
  if (analyze.edits_per_code < 2) throw ConfigError("'analyze.edits_per_code' must be at least 2");
}

InferenceOptions RunConfig::inference_options() const {
  InferenceOptions o;
  o.t = inference.t;
  o.covariance = inference.covariance;
  o.use_encoder_codes = inference.use_encoder_codes;
  return o;
}

RunConfig parse_config(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  std::string out;
  if (root.get("out", out)) c.out = out;
  // World first: grouping validation needs the layer count.
  if (auto s = root.child("world")) parse_world(*s, c);
  if (auto s = root.child("data")) parse_data(*s, c);
  if (auto s = root.child("train")) parse_train(*s, c);
  if (auto s = root.child("inference")) parse_inference(*s, c);
  if (auto s = root.child("analyze")) parse_analyze(*s, c);
  root.finish();
  c.apply_global_seed();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& c) {
  const auto& w = c.world;
  const auto& t = c.train;
  json grouping = json::array();
  const auto resolved = t.resolved_grouping(w.layers);
  for (const auto& [b, e] : resolved.ranges()) grouping.push_back({b, e});
  return json{
      {"seed", c.seed},
      {"world",
       {{"layers", w.layers},
        {"dim", w.dim},
        {"image_dim", w.image_dim},
        {"seen_categories", w.seen_categories},
        {"unseen_categories", w.unseen_categories},
        {"irrelevant_rank", w.irrelevant_rank},
        {"class_separation", w.class_separation},
        {"code_sparsity", w.code_sparsity},
        {"noise_sigma", w.noise_sigma},
        {"category_specific_scale", w.category_specific_scale},
        {"seed", w.seed}}},
      {"data",
       {{"train_per_category", c.data.train_per_category},
        {"test_per_category", c.data.test_per_category},
        {"unseen_per_category", c.data.unseen_per_category}}},
      {"train",
       {{"lambda1", t.lambda1},
        {"lambda2", t.lambda2},
        {"theta0", t.theta0},
        {"theta1", t.theta1},
        {"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_epsilon", t.adam_epsilon},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"dictionary_size", t.dictionary_size},
        {"hidden", t.hidden},
        {"leak_slope", t.leak_slope},
        {"grouping", grouping},
        {"reconstruction", name_of(t.reconstruction)},
        {"sparsity_form", name_of(t.sparsity_form)}}},
      {"inference",
       {{"t", c.inference.t},
        {"alpha", c.inference.alpha},
        {"count", c.inference.count},
        {"seed", c.inference.seed},
        {"covariance", name_of(c.inference.covariance)},
        {"use_encoder_codes", c.inference.use_encoder_codes},
        {"baseline", c.inference.baseline}}},
      {"analyze",
       {{"alphas", c.analyze.alphas},
        {"edits_per_code", c.analyze.edits_per_code},
        {"svg", c.analyze.svg}}},
  };
}

std::string config_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& config) { return config_hash(to_json(config)); }

std::size_t threads_from_env() {
  const char* raw = std::getenv("AGE_THREADS");
  if (!raw) return 1;
  const std::string text(raw);
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("AGE_THREADS must be a positive integer, got '" + text + "'");
  }
  std::size_t n = 0;
  try {
    n = std::stoul(text);
  } catch (const std::exception&) {
    throw ConfigError("AGE_THREADS is out of range");
  }
  if (n == 0) throw ConfigError("AGE_THREADS must be a positive integer, got '0'");
  return n;
}

}  // namespace age::app
