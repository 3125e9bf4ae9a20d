// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cli_harness.hpp"
#include "objective_fd.hpp"
#include "oracles.hpp"

#include "age/app/evaluation.hpp"
#include "age/inference.hpp"
#include "age/linalg.hpp"
#include "age/random.hpp"
#include "age/spectral.hpp"
#include "age/trainer.hpp"
#include "age/world.hpp"

using namespace age;
using namespace age::app;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, spec, args...);
  return buf;
}

constexpr std::uint64_t kSeed = 101;

SyntheticWorldSpec acceptance_spec() {
  SyntheticWorldSpec s;
  s.layers = 3;
  s.dim = 32;
  s.image_dim = 128;
  s.seen_categories = 8;
  s.unseen_categories = 4;
  s.irrelevant_rank = 4;
  s.class_separation = 4.0;
  s.code_sparsity = 0.5;
  s.noise_sigma = 0.02;
  s.seed = kSeed;
  return s;
}

TrainConfig acceptance_train() {
  TrainConfig c;
  c.dictionary_size = 16;
  c.seed = kSeed;
  return c;
}

// One trained acceptance run with everything the criteria look at.
struct Experiment {
  SyntheticWorld world;
  LatentDataset seen, test, unseen;
  ClassEmbeddingBank seen_bank;
  TrainResult trained;
  EditModel model;
  ClassEmbeddingBank bank;  // seen means + unseen support codes
  std::vector<LatentCode> support;
};

Experiment run_experiment(const SyntheticWorldSpec& spec) {
  auto world = generate_world(spec);
  auto seen = sample_dataset(world, 50, Split::kSeen, derive_seed(kSeed, 1));
  auto test = sample_dataset(world, 10, Split::kSeen, derive_seed(kSeed, 2));
  auto unseen = sample_dataset(world, 50, Split::kUnseen, derive_seed(kSeed, 3));
  auto seen_bank = build_embedding_bank(seen);
  auto trained = train(seen, world, acceptance_train());
  InferenceOptions options;
  options.t = 4;
  auto model = build_edit_model(seen, trained.dictionary, seen_bank, LayerGrouping::per_layer(3), options);
  auto bank = proxy_bank(seen, unseen);
  auto support = support_codes(unseen);
  return {std::move(world), std::move(seen), std::move(test),  std::move(unseen), std::move(seen_bank),
          std::move(trained), std::move(model), std::move(bank), std::move(support)};
}

Experiment& main_run() {
  static Experiment e = run_experiment(acceptance_spec());
  return e;
}

Outcome c1_gradients() {
  double worst = 0.0;
  std::size_t accepted = 0, skipped = 0, params = 0;
  for (std::uint64_t seed = 0; accepted < 20 && seed < 2000; ++seed) {
    Rng rng(derive_seed(7001, seed));
    SyntheticWorldSpec spec;
    spec.layers = 1 + rng.index(3);
    spec.dim = 4 + rng.index(4);
    spec.image_dim = spec.layers * spec.dim + 4;
    spec.seen_categories = 2 + rng.index(2);
    spec.unseen_categories = 0;
    spec.irrelevant_rank = 1 + rng.index(2);
    spec.class_separation = 1.0;
    spec.seed = seed;
    const auto world = generate_world(spec);
    const auto ds = sample_dataset(world, 3, Split::kSeen, seed);
    TrainConfig config;
    config.dictionary_size = 3 + rng.index(3);
    config.hidden = 4 + rng.index(5);
    config.lambda1 = rng.uniform(0.01, 1.0);
    config.lambda2 = rng.uniform(0.01, 1.0);
    config.reconstruction = rng.bernoulli(0.5) ? ReconstructionSpace::kImage : ReconstructionSpace::kLatent;
    config.sparsity_form = rng.bernoulli(0.8) ? SparsityForm::kMagnitude : SparsityForm::kLiteral;
    if (spec.layers == 3 && rng.bernoulli(0.5)) config.grouping = LayerGrouping({{0, 1}, {1, 3}}, 3);
    config.seed = seed;
    const auto state = init_train_state(spec.layers, spec.dim, config);
    const auto data = prepare_training_data(ds, world, config);
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < ds.size(); i += 2) batch.push_back(i);
    const auto check = oracle::objective_fd(state, data, batch, world, config, 1e-5);
    if (check.min_kink_distance <= 1e-3) {
      ++skipped;
      continue;
    }
    worst = std::max(worst, check.max_relative_error);
    params += check.parameters;
    ++accepted;
  }
  return {accepted == 20 && worst <= 1e-4,
          fmt("max relative error %.3g over %zu states (%zu parameters, %zu near-kink states skipped), tolerance 1e-4",
              worst, accepted, params, skipped)};
}

Outcome c2_orthogonality() {
  const auto& e = main_run();
  const auto init = init_train_state(3, 32, acceptance_train());
  const double before = orthogonality_residual(init.dictionary, e.seen_bank);
  const double after = orthogonality_residual(e.trained.dictionary, e.seen_bank);
  return {before / after >= 10.0, fmt("sum ||B^T A||_F %.4g -> %.4g, reduction %.1fx (need >= 10x)", before,
                                      after, before / after)};
}

Outcome c3_recovery() {
  const auto& e = main_run();
  const auto scores = subspace_recovery_score(e.model.refined, e.world);
  double mean = 0.0;
  std::string per;
  for (const auto& s : scores) {
    mean += s.mean_cosine;
    per += fmt(" %.4f", s.mean_cosine);
  }
  mean /= static_cast<double>(scores.size());
  return {mean >= 0.90, fmt("mean principal cosine %.4f (layers:%s), need >= 0.90", mean, per.c_str())};
}

Outcome c4_preservation() {
  const auto& e = main_run();
  const auto age_std = preservation(e.support, e.model, e.bank, 1.0, 128, kSeed);
  auto variant_spec = acceptance_spec();
  variant_spec.category_specific_scale = 2.5;
  const auto v = run_experiment(variant_spec);
  const auto age_var = preservation(v.support, v.model, v.bank, 1.0, 128, kSeed);
  const auto base_var = baseline_preservation(v.support, v.seen, v.seen_bank, v.bank, 128, derive_seed(kSeed, 0x10000));
  const bool pass = age_std.min_rate() >= 0.95 && base_var.rate() < age_var.rate();
  return {pass, fmt("AGE worst per-code rate %.4f (overall %.4f) on %zu unseen codes x 128 edits, need >= 0.95; "
                    "variant world: Sample-Train %.4f vs AGE %.4f, need strictly lower",
                    age_std.min_rate(), age_std.rate(), e.support.size(), base_var.rate(), age_var.rate())};
}

Outcome c5_trend() {
  const auto& e = main_run();
  const std::vector<double> alphas{0.3, 0.5, 0.7, 1.0, 1.5, 2.0};
  std::vector<double> div, pres;
  std::string table;
  for (const double a : alphas) {
    div.push_back(edit_diversity(e.unseen.codes(), e.model, a, 32, kSeed));
    pres.push_back(preservation(e.unseen.codes(), e.model, e.bank, a, 32, kSeed).rate());
    table += fmt(" a=%.1f:(div %.4f, pres %.4f)", a, div.back(), pres.back());
  }
  const bool d = monotone_with_one_tie(div, true), p = monotone_with_one_tie(pres, false);
  return {d && p, fmt("diversity non-decreasing %s, preservation non-increasing %s;%s", d ? "yes" : "no",
                      p ? "yes" : "no", table.c_str())};
}

Outcome c6_reconstruction() {
  const auto& e = main_run();
  const double rec = mean_reconstruction_loss(e.test, e.seen_bank, e.trained.dictionary, &e.trained.encoder,
                                              e.world, ReconstructionSpace::kImage);
  const double base = mean_reconstruction_loss(e.test, e.seen_bank, e.trained.dictionary, nullptr, e.world,
                                               ReconstructionSpace::kImage);
  return {rec <= 0.10 * base,
          fmt("held-out L_rec %.4g vs zero-delta %.4g, ratio %.4f (need <= 0.10)", rec, base, rec / base)};
}

Outcome c7_linear_algebra() {
  Rng rng(7007);
  double pinv_worst = 0.0, recon_worst = 0.0, sv_worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Matrix a = gaussian_matrix(rng, 1 + rng.index(64), 1 + rng.index(64));
    const Matrix p = pseudo_inverse(a);
    pinv_worst = std::max({pinv_worst, oracle::max_abs(a * p * a - a), oracle::max_abs(p * a * p - p),
                           oracle::max_abs((a * p).transpose() - a * p), oracle::max_abs((p * a).transpose() - p * a)});
  }
  for (int i = 0; i < 50; ++i) {
    const Matrix a = gaussian_matrix(rng, 1 + rng.index(32), 1 + rng.index(32));
    const auto s = svd(a);
    recon_worst = std::max(recon_worst, oracle::rel_diff(s.reconstruct(), a));
    const auto expect = oracle::singular_values(a);
    for (std::size_t k = 0; k < expect.size(); ++k) {
      sv_worst = std::max(sv_worst, std::abs(s.singular_values(static_cast<Eigen::Index>(k)) - expect[k]));
    }
  }
  const bool pass = pinv_worst <= 1e-9 && recon_worst <= 1e-10 && sv_worst <= 1e-8;
  return {pass, fmt("Moore-Penrose max residual %.3g (1e-9) on 100 matrices; SVD reconstruction %.3g (1e-10), "
                    "singular values vs bisection %.3g (1e-8) on 50 matrices",
                    pinv_worst, recon_worst, sv_worst)};
}

Outcome c8_commonality() {
  Rng rng(7008);
  const std::size_t layers = 3, dim = 10, l = 7;
  LatentDataset ds(layers, dim);
  const std::size_t counts[] = {3, 11, 6};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto id = ds.add_category("c" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) ds.add_sample(id, LatentCode(gaussian_matrix(rng, layers, dim)));
  }
  std::vector<Matrix> mats;
  for (std::size_t k = 0; k < layers; ++k) mats.push_back(gaussian_matrix(rng, dim, l));
  const DirectionDictionary a(mats);
  const auto profile = commonality_profile(ds, a, build_embedding_bank(ds));
  double worst = 0.0;
  for (std::size_t layer = 0; layer < layers; ++layer) {
    const Matrix pinv = oracle::pinv(a.layer(layer));
    std::vector<double> outer(l, 0.0);
    for (std::size_t m = 0; m < 3; ++m) {
      std::vector<double> mean(dim, 0.0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels()[i] != m) continue;
        for (std::size_t j = 0; j < dim; ++j) mean[j] += ds.codes()[i].values()(Eigen::Index(layer), Eigen::Index(j));
        ++n;
      }
      for (auto& v : mean) v /= double(n);
      std::vector<double> inner(l, 0.0);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels()[i] != m) continue;
        for (std::size_t r = 0; r < l; ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            s += pinv(Eigen::Index(r), Eigen::Index(j)) *
                 (ds.codes()[i].values()(Eigen::Index(layer), Eigen::Index(j)) - mean[j]);
          }
          inner[r] += std::abs(s);
        }
      }
      for (std::size_t r = 0; r < l; ++r) outer[r] += inner[r] / double(n);
    }
    for (std::size_t r = 0; r < l; ++r) {
      worst = std::max(worst, std::abs(profile.per_layer[layer](Eigen::Index(r)) - outer[r] / 3.0));
    }
  }
  return {worst <= 1e-12, fmt("max deviation from nested-loop profile %.3g on 3 categories of 3/11/6 samples (1e-12)", worst)};
}

Outcome c9_determinism() {
  const auto root = harness::fresh_dir("acceptance_determinism");
  harness::write_text(root / "config.json", R"({
    "seed": 101,
    "world": {"layers": 3, "dim": 32, "image_dim": 128, "seen_categories": 8, "unseen_categories": 4,
              "irrelevant_rank": 4, "class_separation": 4, "noise_sigma": 0.02},
    "train": {"dictionary_size": 16, "epochs": 20},
    "inference": {"t": 4, "count": 32},
    "analyze": {"svg": true}
  })");
  const std::string cfg = (root / "config.json").string();
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    for (const char* verb : {"synth", "train", "edit", "analyze"}) {
      const auto r = harness::run({verb, "--config", cfg, "--out", out});
      if (r.code != 0) return {false, fmt("%s failed in run %s: %s", verb, run, r.err.c_str())};
    }
    const auto r = harness::run({"edit", "--config", cfg, "--out", out, "--baseline"});
    if (r.code != 0) return {false, fmt("edit --baseline failed in run %s", run)};
  }
  const auto a = harness::snapshot(root / "a"), b = harness::snapshot(root / "b");
  std::size_t differing = 0;
  std::string names;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      names += " " + name;
    }
  }
  const bool pass = a.size() == b.size() && differing == 0 && a.size() >= 15;
  return {pass, fmt("%zu artifacts compared byte-for-byte (timestamps excluded), %zu differ%s", a.size(), differing,
                    names.c_str())};
}

Outcome c10_transfer() {
  const auto& e = main_run();
  std::vector<LatentCode> codes = support_codes(e.seen);
  codes.insert(codes.end(), e.support.begin(), e.support.end());
  double worst = 0.0;
  for (std::size_t j = 0; j < 10; ++j) {
    const Matrix c = transferability_check(codes, e.model.refined, edit_sample(e.model, kSeed, j), 1.0);
    worst = std::max(worst, (c.array() - 1.0).abs().maxCoeff());
  }
  return {worst <= 1e-12, fmt("max |cosine - 1| %.3g over %zu categories x 10 sampled edits (1e-12)", worst, codes.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", c1_gradients},     {"orthogonality residual", c2_orthogonality},
      {"subspace recovery", c3_recovery},         {"category preservation", c4_preservation},
      {"diversity/preservation trend", c5_trend}, {"reconstruction", c6_reconstruction},
      {"linear-algebra oracles", c7_linear_algebra}, {"commonality fidelity", c8_commonality},
      {"pipeline determinism", c9_determinism},   {"transferability", c10_transfer},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("threw: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s: %s [%.1fs]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
              criteria.size());
  return failed == 0 ? 0 : 1;
}
