#include "age/app/commands.hpp"

#include <chrono>
#include <ostream>

#include "CLI11.hpp"
#include "age/app/evaluation.hpp"
#include "age/app/formats.hpp"
#include "age/app/report.hpp"
#include "age/error.hpp"
#include "age/random.hpp"
#include "age/spectral.hpp"

namespace age::app {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream ids under the global seed for the three synthesized datasets.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kUnseenStream = 3;
constexpr std::uint64_t kBaselineStream = 0x10000;

class Run {
 public:
  Run(const RunConfig& config, std::string command) {
    record_.command = std::move(command);
    record_.config_hash = config_hash(config);
    record_.run_id = make_run_id(record_.command, record_.config_hash);
    record_.started_at = utc_timestamp();
    out_ = config.out;
  }

  MetricsRecord& record() { return record_; }

  void finish(std::ostream& log) {
    record_.finished_at = utc_timestamp();
    const json line = record_.to_json();
    write_lines(metrics_path(out_, record_.command), {line});
    log << line.dump() << '\n';
  }

 private:
  MetricsRecord record_;
  fs::path out_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("missing artifact '" + path.string() + "'");
}

void check_world(const SyntheticWorld& world, const RunConfig& config) {
  if (world.layers() != config.world.layers || world.dim() != config.world.dim) {
    throw ConfigError("world file shape does not match the config");
  }
}

void check_dictionary(const DirectionDictionary& a, const SyntheticWorld& world) {
  if (a.layers() != world.layers() || a.dim() != world.dim()) {
    throw ShapeError("dictionary shape does not match the world");
  }
}

json code_json(const SparseCode& code) {
  json groups = json::array();
  for (const auto& g : code.groups) groups.push_back(std::vector<double>(g.data(), g.data() + g.size()));
  return groups;
}

}  // namespace

fs::path metrics_path(const fs::path& out, const std::string& command) {
  return out / (command + ".metrics.jsonl");
}

RunConfig resolve_config(const std::optional<fs::path>& config_path, const CliOverrides& o) {
  RunConfig c = config_path ? load_config(*config_path) : parse_config(json::object());
  if (o.seed) {
    c.seed = *o.seed;
    c.apply_global_seed();
  }
  if (o.alpha) c.inference.alpha = *o.alpha;
  if (o.t) c.inference.t = *o.t;
  if (o.count) c.inference.count = *o.count;
  if (o.baseline) c.inference.baseline = true;
  if (o.out) c.out = *o.out;
  c.train.threads = threads_from_env();
  c.validate();
  return c;
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
  Run run(config, "synth");
  ensure_dir(config.out);
  const auto world = generate_world(config.world);
  const auto& s = config.world;
  const auto seed = s.seed;
  const auto seen = sample_dataset(world, config.data.train_per_category, Split::kSeen,
                                   derive_seed(seed, kTrainStream));
  const auto test = sample_dataset(world, config.data.test_per_category, Split::kSeen,
                                   derive_seed(seed, kTestStream));
  write_world(config.out / files::kWorld, world);
  write_dataset(config.out / files::kSeen, seen);
  write_dataset(config.out / files::kTest, test);
  std::size_t unseen_size = 0;
  if (s.unseen_categories > 0) {
    const auto unseen = sample_dataset(world, config.data.unseen_per_category, Split::kUnseen,
                                       derive_seed(seed, kUnseenStream));
    write_dataset(config.out / files::kUnseen, unseen);
    unseen_size = unseen.size();
  } else {
    log << "note: K=0, no unseen categories; " << files::kUnseen << " not written\n";
  }
  log << "synth: M=" << s.seen_categories << " K=" << s.unseen_categories << " N=" << seen.size()
      << " train, " << test.size() << " test, " << unseen_size << " unseen; L=" << s.layers
      << " d=" << s.dim << " p=" << s.image_dim << " k=" << s.irrelevant_rank << " -> "
      << config.out.string() << '\n';
  auto& r = run.record();
  r.add("seen_categories", static_cast<double>(s.seen_categories));
  r.add("unseen_categories", static_cast<double>(s.unseen_categories));
  r.add("train_samples", static_cast<double>(seen.size()));
  r.add("test_samples", static_cast<double>(test.size()));
  r.add("unseen_samples", static_cast<double>(unseen_size));
  run.finish(log);
}

void cmd_train(const RunConfig& config, bool resume, std::ostream& log) {
  Run run(config, "train");
  const fs::path dir = config.out;
  require_file(dir / files::kWorld);
  require_file(dir / files::kSeen);
  const auto world = read_world(dir / files::kWorld);
  check_world(world, config);
  const auto seen = read_dataset(dir / files::kSeen, Split::kSeen);

  TrainState state;
  if (resume) {
    require_file(dir / files::kCheckpoint);
    state = read_checkpoint(dir / files::kCheckpoint);
    const auto& dims = state.encoder.dims;
    if (state.dictionary.size() != config.train.dictionary_size || dims.hidden != config.train.hidden ||
        dims.leak_slope != config.train.leak_slope ||
        !(state.encoder.grouping == config.train.resolved_grouping(world.layers()))) {
      throw ConfigError("checkpoint does not match the train config");
    }
  } else {
    state = init_train_state(world.layers(), world.dim(), config.train);
  }

  const auto data = prepare_training_data(seen, world, config.train);
  const fs::path report_path = dir / files::kTrainReport;
  if (!resume) write_lines(report_path, {});
  EpochRecord last;
  bool any = false;
  train_epochs(state, data, world, config.train, config.train.epochs, [&](const EpochRecord& e) {
    write_lines(report_path,
                {json{{"epoch", e.epoch}, {"rec", e.rec}, {"sparse", e.sparse}, {"orth", e.orth},
                      {"total", e.total}}},
                true);
    last = e;
    any = true;
  });

  write_dictionary(dir / files::kDictionary, state.dictionary);
  write_checkpoint(dir / files::kCheckpoint, state);

  auto& r = run.record();
  r.add("epochs_done", static_cast<double>(state.epochs_done));
  r.add("steps", static_cast<double>(state.step));
  if (any) {
    r.add("rec", last.rec);
    r.add("sparse", last.sparse);
    r.add("orth", last.orth);
    r.add("total", last.total);
  }
  r.add("orth_residual", orthogonality_residual(state.dictionary, data.bank));
  log << "train: " << state.epochs_done << " epochs, " << state.step << " steps -> "
      << (dir / files::kDictionary).string() << '\n';
  run.finish(log);
}

void cmd_edit(const RunConfig& config, std::ostream& log) {
  Run run(config, "edit");
  const fs::path dir = config.out;
  for (const char* f : {files::kWorld, files::kSeen, files::kUnseen, files::kDictionary}) require_file(dir / f);
  const auto world = read_world(dir / files::kWorld);
  check_world(world, config);
  const auto seen = read_dataset(dir / files::kSeen, Split::kSeen);
  const auto unseen = read_dataset(dir / files::kUnseen, Split::kUnseen);
  const auto dictionary = read_dictionary(dir / files::kDictionary).dictionary;
  check_dictionary(dictionary, world);
  const auto grouping = config.train.resolved_grouping(world.layers());
  const auto seen_bank = build_embedding_bank(seen);
  const auto bank = proxy_bank(seen, unseen);
  const auto queries = support_codes(unseen);
  const auto& inf = config.inference;

  LatentDataset edited(world.layers(), world.dim(), Split::kUnseen);
  std::vector<json> provenance;
  std::size_t kept = 0;
  if (inf.baseline) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& name = unseen.categories()[i];
      const auto id = edited.add_category(name);
      const auto label = nearest_class_index(queries[i], bank);
      const auto stream = derive_seed(inf.seed, kBaselineStream + i);
      const auto draws = baseline_sample_train_edits(queries[i], seen, seen_bank, stream, inf.count);
      for (std::size_t j = 0; j < draws.size(); ++j) {
        kept += nearest_class_index(draws[j].edited, bank) == label;
        provenance.push_back({{"code", i}, {"category", name}, {"edit", j}, {"mode", "sample_train"},
                              {"seed", stream}, {"draw", j}, {"sample_index", draws[j].sample_index}});
        edited.add_sample(id, draws[j].edited);
      }
    }
    write_dataset(dir / files::kBaselineEdits, edited);
    write_lines(dir / files::kBaselineProvenance, provenance);
  } else {
    std::optional<EncoderParams> encoder;
    if (inf.use_encoder_codes) {
      require_file(dir / files::kCheckpoint);
      encoder = read_checkpoint(dir / files::kCheckpoint).encoder;
    }
    const auto model = build_edit_model(seen, dictionary, seen_bank, grouping, config.inference_options(),
                                        encoder ? &*encoder : nullptr);
    write_refined(dir / files::kRefined, dictionary, model.refined);
    std::vector<SparseCode> draws;
    for (std::size_t j = 0; j < inf.count; ++j) draws.push_back(edit_sample(model, inf.seed, j));
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& name = unseen.categories()[i];
      const auto id = edited.add_category(name);
      const auto label = nearest_class_index(queries[i], bank);
      for (std::size_t j = 0; j < draws.size(); ++j) {
        auto w = edit(queries[i], model.refined, draws[j], inf.alpha);
        kept += nearest_class_index(w, bank) == label;
        provenance.push_back({{"code", i}, {"category", name}, {"edit", j}, {"mode", "age"},
                              {"seed", derive_seed(inf.seed, j)}, {"alpha", inf.alpha},
                              {"n_tilde", code_json(draws[j])}});
        edited.add_sample(id, std::move(w));
      }
    }
    write_dataset(dir / files::kEdits, edited);
    write_lines(dir / files::kEditProvenance, provenance);
  }
  auto& r = run.record();
  r.add("codes", static_cast<double>(queries.size()));
  r.add("edits", static_cast<double>(edited.size()));
  r.add("preservation", edited.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(edited.size()));
  log << "edit: " << edited.size() << (inf.baseline ? " sample-train" : " AGE") << " edits of "
      << queries.size() << " unseen codes\n";
  run.finish(log);
}

void cmd_analyze(const RunConfig& config, std::ostream& log) {
  Run run(config, "analyze");
  const fs::path dir = config.out;
  for (const char* f : {files::kWorld, files::kSeen, files::kTest, files::kDictionary, files::kCheckpoint}) {
    require_file(dir / f);
  }
  const auto world = read_world(dir / files::kWorld);
  check_world(world, config);
  const auto seen = read_dataset(dir / files::kSeen, Split::kSeen);
  const auto test = read_dataset(dir / files::kTest, Split::kSeen);
  const auto dictionary = read_dictionary(dir / files::kDictionary).dictionary;
  check_dictionary(dictionary, world);
  const auto state = read_checkpoint(dir / files::kCheckpoint);
  const auto grouping = config.train.resolved_grouping(world.layers());
  const auto seen_bank = build_embedding_bank(seen);
  const auto& inf = config.inference;
  auto& r = run.record();

  const auto model = build_edit_model(seen, dictionary, seen_bank, grouping, config.inference_options(),
                                      inf.use_encoder_codes ? &state.encoder : nullptr);

  const auto recovery = subspace_recovery_score(model.refined, world);
  double recovery_mean = 0.0;
  for (std::size_t l = 0; l < recovery.size(); ++l) {
    r.add("recovery_layer" + std::to_string(l), recovery[l].mean_cosine);
    recovery_mean += recovery[l].mean_cosine;
  }
  r.add("recovery", recovery_mean / static_cast<double>(recovery.size()));

  const auto initial = init_train_state(world.layers(), world.dim(), config.train).dictionary;
  const double orth0 = orthogonality_residual(initial, seen_bank);
  const double orth = orthogonality_residual(dictionary, seen_bank);
  r.add("orth_residual_initial", orth0);
  r.add("orth_residual", orth);
  r.add("orth_reduction", orth0 / orth);

  if (!test.empty()) {
    const auto space = config.train.reconstruction;
    const double rec = mean_reconstruction_loss(test, seen_bank, dictionary, &state.encoder, world, space);
    const double rec0 = mean_reconstruction_loss(test, seen_bank, dictionary, nullptr, world, space);
    r.add("rec_test", rec);
    r.add("rec_test_zero_delta", rec0);
    r.add("rec_ratio", rec / rec0);
  }

  std::vector<LatentCode> transfer_codes = support_codes(seen);
  if (fs::is_regular_file(dir / files::kUnseen)) {
    const auto unseen = read_dataset(dir / files::kUnseen, Split::kUnseen);
    const auto bank = proxy_bank(seen, unseen);
    const auto support = support_codes(unseen);
    transfer_codes.insert(transfer_codes.end(), support.begin(), support.end());

    r.add("preservation", preservation(support, model, bank, inf.alpha, inf.count, inf.seed).rate());
    r.add("baseline_preservation",
          baseline_preservation(support, seen, seen_bank, bank, inf.count,
                                derive_seed(inf.seed, kBaselineStream))
              .rate());

    const auto& alphas = config.analyze.alphas;
    const auto edits = config.analyze.edits_per_code;
    Series pres{"preservation", {}}, sup{"support_preservation", {}}, div{"diversity", {}};
    for (const double a : alphas) {
      pres.values.push_back(preservation(unseen.codes(), model, bank, a, edits, inf.seed).rate());
      sup.values.push_back(preservation(support, model, bank, a, edits, inf.seed).rate());
      div.values.push_back(edit_diversity(support, model, a, edits, inf.seed));
    }
    write_csv(dir / files::kSweepCsv, "alpha", alphas, {pres, sup, div});
    if (config.analyze.svg) write_svg(dir / files::kSweepSvg, "alpha", alphas, {pres, div});
    r.add("diversity_nondecreasing", monotone_with_one_tie(div.values, true) ? 1.0 : 0.0);
    r.add("preservation_nonincreasing", monotone_with_one_tie(pres.values, false) ? 1.0 : 0.0);
  } else {
    log << "note: no " << files::kUnseen << "; preservation and alpha sweep skipped\n";
  }

  const auto transfer = transferability_check(transfer_codes, model.refined,
                                              edit_sample(model, inf.seed, 0), inf.alpha);
  r.add("transfer_min_cosine", transfer.minCoeff());

  std::vector<double> index;
  std::vector<Series> spectra;
  const auto directions = disentangled_directions(model.refined);
  for (std::size_t l = 0; l < directions.size(); ++l) {
    const auto& sv = directions[l].singular_values;
    Series s{"layer" + std::to_string(l), {}};
    for (Eigen::Index k = 0; k < sv.size(); ++k) s.values.push_back(sv(k));
    spectra.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < model.refined.t(); ++k) index.push_back(static_cast<double>(k));
  for (auto& s : spectra) s.values.resize(index.size(), 0.0);
  write_csv(dir / files::kSpectraCsv, "index", index, spectra);

  log << "analyze: recovery " << recovery_mean / static_cast<double>(recovery.size())
      << ", orth residual " << orth0 << " -> " << orth << '\n';
  run.finish(log);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attribute group editing on a synthetic latent world", "age"};
  app.require_subcommand(1);
  std::optional<fs::path> config_path;
  CliOverrides o;
  bool resume = false;
  std::string command = "age";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Global seed");
    sub->add_option("--out", o.out, "Artifact directory");
  };
  auto add_inference = [&](CLI::App* sub) {
    sub->add_option("--alpha", o.alpha, "Edit strength");
    sub->add_option("--t", o.t, "Directions kept per layer");
    sub->add_option("--count", o.count, "Edits per unseen code");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic world and datasets");
  add_common(synth);
  auto* train = app.add_subcommand("train", "Learn the direction dictionary and encoder");
  add_common(train);
  train->add_flag("--resume", resume, "Continue from the checkpoint in --out");
  auto* edit = app.add_subcommand("edit", "Edit unseen one-shot codes");
  add_common(edit);
  add_inference(edit);
  edit->add_flag("--baseline", o.baseline, "Sample-Train edits instead of AGE");
  auto* analyze = app.add_subcommand("analyze", "Compute metrics and curves");
  add_common(analyze);
  add_inference(analyze);

  auto report = [&](const std::string& kind, const std::string& message, json extra) {
    err << "age: error: " << kind << ": " << message << '\n';
    json record{{"error", kind}, {"message", message}, {"command", command}};
    record.update(extra);
    err << record.dump() << '\n';
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    report("UsageError", e.what(), json::object());
    return 2;
  }

  try {
    const auto config = [&] {
      for (auto* sub : app.get_subcommands()) command = sub->get_name();
      return resolve_config(config_path, o);
    }();
    if (command == "synth") cmd_synth(config, out);
    else if (command == "train") cmd_train(config, resume, out);
    else if (command == "edit") cmd_edit(config, out);
    else cmd_analyze(config, out);
  } catch (const DivergenceError& e) {
    report(e.kind(), e.what(), json{{"epoch", e.epoch()}});
    return 4;
  } catch (const ConfigError& e) {
    report(e.kind(), e.what(), json::object());
    return 2;
  } catch (const IoError& e) {
    report(e.kind(), e.what(), json::object());
    return 3;
  } catch (const Error& e) {
    report(e.kind(), e.what(), json::object());
    return 1;
  } catch (const std::exception& e) {
    report("InternalError", e.what(), json::object());
    return 1;
  }
  return 0;
}

}  // namespace age::app
