#pragma once

// Experiment specs and the runners behind the `train`, `simulate` and
// `evaluate` commands. Every sub-seed is derived from the spec's one seed.

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dedsi/beam.hpp"
#include "dedsi/config.hpp"
#include "dedsi/corpus.hpp"
#include "dedsi/ensemble.hpp"
#include "dedsi/eval.hpp"
#include "dedsi/gossip.hpp"
#include "dedsi/model.hpp"
#include "dedsi/synthetic.hpp"
#include "dedsi/train.hpp"
#include "dedsi/vocab.hpp"

namespace dedsi {

enum class ExperimentKind { single, content_oblivious, ensemble10, decentralized, magnet_compare };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::single: return "single";
    case ExperimentKind::content_oblivious: return "content_oblivious";
    case ExperimentKind::ensemble10: return "ensemble10";
    case ExperimentKind::decentralized: return "decentralized";
    case ExperimentKind::magnet_compare: return "magnet_compare";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::single, ExperimentKind::content_oblivious, ExperimentKind::ensemble10,
                 ExperimentKind::decentralized, ExperimentKind::magnet_compare})
    if (to_string(k) == s) return k;
  throw Error(concat("unknown experiment '", s, "'"));
}

struct ExperimentSpec {
  ExperimentKind experiment = ExperimentKind::single;
  std::uint64_t seed = 7;
  std::string corpus_source = "synthetic";  // or a TSV path, relative to the workdir
  SyntheticOptions synthetic;
  std::vector<std::size_t> doc_counts{60};
  SplitSpec split;
  std::size_t n_seen_max = 8;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::size_t> ks{1, 2, 3, 4, 5};
  std::size_t beam_width = 5;
  std::size_t num_shards = 3;
  std::size_t per_shard = 3;
  SimConfig simulation;
  std::size_t rolling_window = 500;
  std::size_t snapshot_every = 500;
  std::string output_dir;

  std::size_t max_k() const { return *std::max_element(ks.begin(), ks.end()); }
};

/// Rederives every sub-seed from spec.seed and fills dependent defaults.
inline void resolve(ExperimentSpec& s) {
  if (s.doc_counts.empty()) throw Error("spec: doc_counts must not be empty");
  if (s.ks.empty()) throw Error("spec: ks must not be empty");
  for (auto k : s.ks)
    if (k == 0) throw Error("spec: every k must be >= 1");
  if (s.beam_width < s.max_k()) throw Error(concat("spec: beam_width ", s.beam_width, " is below the largest k"));
  if (s.experiment == ExperimentKind::content_oblivious &&
      (s.n_seen_max == 0 || s.n_seen_max > s.split.train_per_doc)) {
    throw Error(concat("spec: n_seen_max must be in 1..", s.split.train_per_doc));
  }
  s.synthetic.seed = derive_seed(s.seed, "synthetic");
  s.model.seed = derive_seed(s.seed, "model");
  s.train.seed = derive_seed(s.seed, "train");
  s.simulation.seed = derive_seed(s.seed, "simulation");
  s.simulation.num_shards = s.num_shards;
  s.train.validate();
  if (s.experiment == ExperimentKind::decentralized) s.simulation.validate();
  if (s.output_dir.empty()) s.output_dir = "runs/" + to_string(s.experiment);
}

inline Json to_json(const SplitSpec& s) {
  return {{"train", s.train_per_doc}, {"val", s.val_per_doc}, {"test", s.test_per_doc}};
}

inline Json to_json(const ExperimentSpec& s) {
  return {{"experiment", to_string(s.experiment)},
          {"seed", s.seed},
          {"corpus", {{"source", s.corpus_source}, {"synthetic", to_json(s.synthetic)}}},
          {"doc_counts", s.doc_counts},
          {"split", to_json(s.split)},
          {"n_seen_max", s.n_seen_max},
          {"model", to_json(s.model)},
          {"train", to_json(s.train)},
          {"ks", s.ks},
          {"beam_width", s.beam_width},
          {"num_shards", s.num_shards},
          {"per_shard", s.per_shard},
          {"simulation", to_json(s.simulation)},
          {"rolling_window", s.rolling_window},
          {"snapshot_every", s.snapshot_every},
          {"output_dir", s.output_dir}};
}

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(concat("spec: '", where, "' must be a table"));
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error(concat("spec: unknown key '", key, "' in ", where));
}

}  // namespace detail

/// Builds a resolved spec from a parsed JSON/TOML document. Unknown keys are
/// errors so that typos cannot silently fall back to defaults.
inline ExperimentSpec experiment_spec_from_json(const Json& j) {
  detail::reject_unknown_keys(j,
                              {"experiment", "seed", "corpus", "doc_counts", "split", "n_seen_max", "model", "train",
                               "ks", "beam_width", "num_shards", "per_shard", "simulation", "rolling_window",
                               "snapshot_every", "output_dir"},
                              "spec");
  ExperimentSpec s;
  try {
    s.experiment = experiment_kind_from_string(j.value("experiment", std::string("single")));
    s.seed = j.value("seed", s.seed);
    s.doc_counts = j.value("doc_counts", s.doc_counts);
    s.n_seen_max = j.value("n_seen_max", s.n_seen_max);
    s.ks = j.value("ks", s.ks);
    s.beam_width = j.value("beam_width", s.beam_width);
    s.num_shards = j.value("num_shards", s.num_shards);
    s.per_shard = j.value("per_shard", s.per_shard);
    s.rolling_window = j.value("rolling_window", s.rolling_window);
    s.snapshot_every = j.value("snapshot_every", s.snapshot_every);
    s.output_dir = j.value("output_dir", s.output_dir);
    if (j.contains("split")) {
      const auto& sp = j.at("split");
      detail::reject_unknown_keys(sp, {"train", "val", "test"}, "split");
      s.split.train_per_doc = sp.value("train", s.split.train_per_doc);
      s.split.val_per_doc = sp.value("val", s.split.val_per_doc);
      s.split.test_per_doc = sp.value("test", s.split.test_per_doc);
    }
    const auto max_docs = *std::max_element(s.doc_counts.begin(), s.doc_counts.end());
    s.synthetic.num_docs = max_docs;
    s.synthetic.queries_per_doc = s.split.total();
    if (j.contains("corpus")) {
      const auto& c = j.at("corpus");
      detail::reject_unknown_keys(c, {"source", "synthetic"}, "corpus");
      s.corpus_source = c.value("source", s.corpus_source);
      if (c.contains("synthetic")) {
        detail::reject_unknown_keys(c.at("synthetic"),
                                    {"num_docs", "queries_per_doc", "own_keywords", "cluster_size", "cluster_keywords",
                                     "filler_words", "filler_prob", "min_terms", "max_terms", "seed"},
                                    "corpus.synthetic");
        s.synthetic = synthetic_options_from_json(c.at("synthetic"), s.synthetic);
      }
    }
    if (j.contains("model")) {
      detail::reject_unknown_keys(j.at("model"),
                                  {"architecture", "dim", "encoder_layers", "optimizer", "learning_rate", "beta1",
                                   "beta2", "epsilon", "grad_clip", "init", "embedding_init", "seed"},
                                  "model");
      s.model = model_config_from_json(j.at("model"), s.model);
    }
    if (j.contains("train")) {
      detail::reject_unknown_keys(j.at("train"),
                                  {"batch_size", "max_epochs", "early_stop_window", "early_stop_delta", "seed"},
                                  "train");
      s.train = train_config_from_json(j.at("train"), s.train);
    }
    if (j.contains("simulation")) {
      detail::reject_unknown_keys(j.at("simulation"),
                                  {"num_peers", "num_shards", "batch_size", "self_seed_size", "batch_budget",
                                   "personal_min_docs", "personal_max_docs", "max_rounds", "round_interval", "seed"},
                                  "simulation");
      s.simulation = sim_config_from_json(j.at("simulation"), s.simulation);
    }
  } catch (const Json::exception& e) {
    throw Error(concat("spec: ", e.what()));
  }
  resolve(s);
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  return experiment_spec_from_json(load_spec_document(path));
}

/// Hash of the complete resolved spec.
inline std::string spec_hash(const ExperimentSpec& s) { return hex64(fnv1a64(to_json(s).dump())); }

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct RunOptions {
  std::filesystem::path base_dir = ".";       // resolves a relative corpus path
  std::optional<std::filesystem::path> artifacts;  // checkpoints and per-epoch CSVs land here when set
  std::ostream* log = nullptr;
};

namespace detail {

inline void log_line(const RunOptions& o, const std::string& line) {
  if (o.log) *o.log << line << std::endl;
}

inline std::string file_stem(std::string arm) {
  for (auto& c : arm)
    if (c == '/' || c == '=') c = '_';
  return arm;
}

inline Report new_report(const ExperimentSpec& spec) {
  Report r;
  r.experiment = to_string(spec.experiment);
  r.spec_hash = spec_hash(spec);
  r.seed = spec.seed;
  return r;
}

inline std::string str(std::size_t v) { return std::to_string(v); }

}  // namespace detail

inline Corpus load_base_corpus(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  if (spec.corpus_source == "synthetic") return synthesize_corpus(spec.synthetic);
  IngestOptions io;
  io.min_queries_per_doc = spec.split.total();
  std::filesystem::path p(spec.corpus_source);
  if (p.is_relative()) p = opt.base_dir / p;
  return ingest_orcas(p, io);
}

inline Corpus select_corpus(const ExperimentSpec& spec, const Corpus& base, std::size_t n_docs) {
  return select_documents(base, n_docs, spec.split.total(), derive_seed(spec.seed, "select"));
}

struct TrainedArm {
  std::string arm;
  TrainResult<ReferenceModel> result;
};

/// Trains one arm with the spec's model and training configs; the vocabulary
/// covers the arm's own training queries and the corpus identifier alphabet.
inline TrainedArm train_arm(const ExperimentSpec& spec, const std::string& arm, const Corpus& corpus,
                            const std::vector<QueryDocPair>& train, const std::vector<QueryDocPair>& val,
                            const RunOptions& opt) {
  auto vocab = std::make_shared<const Vocabulary>(build_vocab(train, corpus));
  auto model = make_model(vocab, corpus, spec.model);
  auto result = train_epochs(model, train, val, spec.train);
  detail::log_line(opt, concat(arm, ": ", result.history.size(), " epochs, best epoch ", result.best.epoch,
                               " val top-1 ", format_double(result.best.val_accuracy)));
  if (opt.artifacts) {
    const auto dir = *opt.artifacts;
    std::filesystem::create_directories(dir / "checkpoints");
    std::filesystem::create_directories(dir / "epochs");
    save_checkpoint(dir / "checkpoints" / (detail::file_stem(arm) + ".json"), result.best);
    write_epoch_metrics_csv(dir / "epochs" / (detail::file_stem(arm) + ".csv"), result.history);
  }
  return {arm, std::move(result)};
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

/// One model on the full training split of the first corpus size.
inline Report run_single(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  const auto base = load_base_corpus(spec, opt);
  const auto corpus = select_corpus(spec, base, spec.doc_counts.front());
  const auto splits = make_splits(corpus, spec.split);
  auto trained = train_arm(spec, "single", corpus, splits.train, splits.val, opt);
  Report report = detail::new_report(spec);
  MetricsRecord label{"single", "all", "-", 1, 0.0, 0, spec.seed};
  const auto& model = trained.result.best.model;
  report.records = topk_accuracies(single_model_ranker(model, spec.beam_width, spec.max_k()), splits.test, spec.ks, label);
  report.summary = {{"best_epoch", trained.result.best.epoch},
                    {"val_top1", trained.result.best.val_accuracy},
                    {"epochs_run", trained.result.history.size()},
                    {"train_top1", top1_accuracy(model, splits.train)}};
  return report;
}

/// Unseen-query accuracy as a function of how many queries per document
/// were seen in training, for every corpus size in the spec.
inline Report run_content_oblivious(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  const auto base = load_base_corpus(spec, opt);
  Report report = detail::new_report(spec);
  PlotTable plot{"seen_queries", {"n_docs", "n_seen", "k", "accuracy"}, {}};
  Json summary = Json::array();
  for (auto n_docs : spec.doc_counts) {
    const auto corpus = select_corpus(spec, base, n_docs);
    const auto splits = make_splits(corpus, spec.split);
    for (std::size_t n = 1; n <= spec.n_seen_max; ++n) {
      const auto arm = concat("seen/N=", n_docs, "/n=", n);
      auto trained = train_arm(spec, arm, corpus, first_n_queries(splits.train, n), splits.val, opt);
      const auto& model = trained.result.best.model;
      MetricsRecord label{arm, "all", "-", 1, 0.0, 0, spec.seed};
      for (auto& r : topk_accuracies(single_model_ranker(model, spec.beam_width, spec.max_k()), splits.test, spec.ks,
                                     label)) {
        plot.rows.push_back({detail::str(n_docs), detail::str(n), detail::str(r.k), format_double(r.accuracy)});
        report.records.push_back(std::move(r));
      }
      summary.push_back({{"arm", arm}, {"best_epoch", trained.result.best.epoch},
                         {"epochs_run", trained.result.history.size()}});
    }
  }
  report.summary = {{"arms", summary}};
  report.plots.push_back(std::move(plot));
  return report;
}

/// Per-shard ("personal") models fused across shards, compared with each
/// personal model on its own shard and with one model over every document.
inline Report run_ensemble10(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  const auto base = load_base_corpus(spec, opt);
  const auto corpus = select_corpus(spec, base, spec.doc_counts.front());
  const auto splits = make_splits(corpus, spec.split);
  const auto shards = partition_shards(corpus, spec.num_shards, derive_seed(spec.seed, "shards"));
  const auto kmax = spec.max_k();
  Report report = detail::new_report(spec);

  std::vector<ReferenceModel> personal;
  for (const auto& shard : shards) {
    const auto arm = concat("personal/shard=", shard.shard_id);
    auto trained = train_arm(spec, arm, corpus, restrict_to(splits.train, shard.doc_ids),
                             restrict_to(splits.val, shard.doc_ids), opt);
    personal.push_back(std::move(trained.result.best.model));
  }
  auto singular = train_arm(spec, "singular", corpus, splits.train, splits.val, opt).result.best.model;

  Ranker ensemble = [&](const std::string& q) {
    std::vector<ModelResult> results;
    for (std::size_t s = 0; s < personal.size(); ++s)
      results.push_back(model_result(personal[s], q, spec.beam_width, {static_cast<int>(s), -1}));
    return merge_across_shards(results, kmax, q);
  };

  // arm -> k -> per-shard accuracies
  std::map<std::string, std::map<std::size_t, std::vector<double>>> per_shard;
  for (std::size_t s = 0; s < shards.size(); ++s) {
    const auto test = restrict_to(splits.test, shards[s].doc_ids);
    const auto shard = std::to_string(s);
    for (auto& r : topk_accuracies(ensemble, test, spec.ks, {"ensemble", shard, "-", 1, 0.0, 0, spec.seed})) {
      per_shard["ensemble"][r.k].push_back(r.accuracy);
      report.records.push_back(std::move(r));
    }
    for (auto& r : topk_accuracies(single_model_ranker(personal[s], spec.beam_width, kmax, {static_cast<int>(s), -1}),
                                   test, spec.ks, {"personal", shard, "-", 1, 0.0, 0, spec.seed})) {
      per_shard["personal"][r.k].push_back(r.accuracy);
      report.records.push_back(std::move(r));
    }
  }

  // The full-corpus comparison uses one test set for both arms.
  const auto& full_test = splits.test;
  std::map<std::string, std::map<std::size_t, double>> overall;
  for (auto& r : topk_accuracies(ensemble, full_test, spec.ks, {"ensemble", "all", "-", 1, 0.0, 0, spec.seed})) {
    overall["ensemble"][r.k] = r.accuracy;
    report.records.push_back(std::move(r));
  }
  for (auto& r : topk_accuracies(single_model_ranker(singular, spec.beam_width, kmax), full_test, spec.ks,
                                 {"singular", "all", "-", 1, 0.0, 0, spec.seed})) {
    overall["singular"][r.k] = r.accuracy;
    report.records.push_back(std::move(r));
  }

  PlotTable plot{"ensemble_by_k", {"arm", "k", "mean", "stdev"}, {}};
  Json summary = Json::object();
  for (const auto& [arm, by_k] : per_shard) {
    for (const auto& [k, xs] : by_k) {
      const auto ms = mean_stdev(xs);
      summary["per_shard"][arm][concat("top", k)] = {{"mean", ms.mean}, {"stdev", ms.stdev}};
      plot.rows.push_back({arm, detail::str(k), format_double(ms.mean), format_double(ms.stdev)});
    }
  }
  for (const auto& [arm, by_k] : overall) {
    for (const auto& [k, acc] : by_k) {
      summary["all"][arm][concat("top", k)] = acc;
      plot.rows.push_back({arm + "/all", detail::str(k), format_double(acc), "0"});
    }
  }
  summary["test_pairs"] = full_test.size();
  report.summary = std::move(summary);
  report.plots.push_back(std::move(plot));
  return report;
}

// ---------------------------------------------------------------------------
// Decentralized training
// ---------------------------------------------------------------------------

struct SimulationSetup {
  Corpus corpus;
  Splits splits;
  std::vector<Shard> shards;
  std::shared_ptr<const Vocabulary> vocab;
};

/// Corpus, splits and shards for the gossip experiment. All peers share one
/// vocabulary built from the complete training split.
inline SimulationSetup simulation_setup(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  SimulationSetup s;
  s.corpus = select_corpus(spec, load_base_corpus(spec, opt), spec.doc_counts.front());
  s.splits = make_splits(s.corpus, spec.split);
  s.shards = partition_shards(Corpus::from_pairs(s.splits.train), spec.num_shards, derive_seed(spec.seed, "shards"));
  s.vocab = std::make_shared<const Vocabulary>(build_vocab(s.splits.train, s.corpus));
  return s;
}

inline RoundEngine<ReferenceModel> init_simulation(const ExperimentSpec& spec, const SimulationSetup& setup) {
  const auto vocab = setup.vocab;
  const auto& corpus = setup.corpus;
  return init_network<ReferenceModel>(spec.simulation, setup.shards, [&](int, std::uint64_t seed) {
    ModelConfig cfg = spec.model;
    cfg.seed = seed;
    return make_model(vocab, corpus, cfg);
  });
}

/// Evaluates a finished simulation: summed pools of per_shard models drawn
/// from every group or only the shard's own group, plus each peer alone.
/// Each shard's test universe is restricted to documents its peers sampled.
inline Report evaluate_decentralized(const ExperimentSpec& spec, const SimulationSetup& setup,
                                     const RoundEngine<ReferenceModel>& engine) {
  Report report = detail::new_report(spec);
  const auto kmax = spec.max_k();
  PlotTable table{"decentralized_by_shard", {"shard", "pool", "k", "accuracy"}, {}};
  Json shards_summary = Json::array();

  for (std::size_t s = 0; s < engine.groups.size(); ++s) {
    const auto sid = static_cast<int>(s);
    const auto covered = covered_doc_ids(engine, sid);
    const auto test = restrict_to(setup.splits.test, covered);
    const auto shard = std::to_string(s);
    Json pools = Json::object();
    for (auto kind : {PoolKind::all_shards, PoolKind::own_shard}) {
      const std::string pool_name = kind == PoolKind::all_shards ? "all_shards" : "own_shard";
      const auto members = sample_model_pool(engine, spec.per_shard, {kind, sid},
                                             derive_seed(spec.seed, "pool/" + pool_name, s));
      Ranker summed = [&](const std::string& q) {
        std::vector<ModelResult> results;
        for (const auto& m : members) results.push_back(model_result(*m.model, q, spec.beam_width, {m.shard_id, m.peer_id}));
        return merge_summed(results, kmax, q);
      };
      for (auto& r : topk_accuracies(summed, test, spec.ks, {"summed", shard, pool_name, 1, 0.0, 0, spec.seed})) {
        table.rows.push_back({shard, pool_name, detail::str(r.k), format_double(r.accuracy)});
        pools[pool_name][concat("top", r.k)] = r.accuracy;
        report.records.push_back(std::move(r));
      }
      std::vector<int> ids;
      for (const auto& m : members) ids.push_back(m.peer_id);
      pools[pool_name]["peers"] = ids;
    }
    std::map<std::size_t, std::vector<double>> individual;
    for (int id : engine.groups[s]) {
      const auto& peer = engine.peers[static_cast<std::size_t>(id)];
      for (auto& r : topk_accuracies(single_model_ranker(peer.model, spec.beam_width, kmax, {sid, id}), test, spec.ks,
                                     {concat("peer/", id), shard, "-", 1, 0.0, 0, spec.seed})) {
        individual[r.k].push_back(r.accuracy);
        report.records.push_back(std::move(r));
      }
    }
    Json ind = Json::object();
    for (const auto& [k, xs] : individual) {
      const auto ms = mean_stdev(xs);
      ind[concat("top", k)] = {{"mean", ms.mean}, {"stdev", ms.stdev}};
    }
    shards_summary.push_back({{"shard", s},
                              {"covered_docs", covered.size()},
                              {"shard_docs", engine.shard_docs[s].size()},
                              {"test_pairs", test.size()},
                              {"pools", pools},
                              {"individual", ind}});
  }

  PlotTable loss{"loss_rolling_mean", {"peer_id", "batch_idx", "rolling_loss"}, {}};
  Json peers = Json::array();
  for (const auto& p : engine.peers) {
    if (p.loss_trace.empty()) continue;
    const auto w = std::min(spec.rolling_window, p.loss_trace.size());
    const auto rm = rolling_mean(p.loss_trace, w);
    for (std::size_t i = 0; i < rm.size(); ++i) loss.rows.push_back({detail::str(static_cast<std::size_t>(p.peer_id)), detail::str(i), format_double(rm[i])});
    peers.push_back({{"peer_id", p.peer_id}, {"window", w}, {"first_window", rm[w - 1]}, {"final_window", rm.back()}});
  }
  report.summary = {{"shards", shards_summary},
                    {"rolling_loss", peers},
                    {"rounds", engine.rounds},
                    {"messages", engine.messages},
                    {"cross_group_messages", engine.cross_group_messages}};
  report.plots.push_back(std::move(table));
  report.plots.push_back(std::move(loss));
  return report;
}

inline Report run_decentralized(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  const auto setup = simulation_setup(spec, opt);
  auto engine = init_simulation(spec, setup);
  run_simulation(engine);
  return evaluate_decentralized(spec, setup, engine);
}

// ---------------------------------------------------------------------------
// Identifier format comparison
// ---------------------------------------------------------------------------

/// Same documents and queries trained under the original identifiers and
/// under random 40-hex magnet identifiers, with shared seeds.
inline Report run_magnet_compare(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  const auto base = load_base_corpus(spec, opt);
  Report report = detail::new_report(spec);
  PlotTable plot{"magnet_vs_docid", {"id_mode", "n_docs", "k", "accuracy"}, {}};
  bool all_magnet_ids_valid = true;
  for (auto n_docs : spec.doc_counts) {
    const auto docid_corpus = select_corpus(spec, base, n_docs);
    const auto magnet_corpus = assign_magnet_links(docid_corpus, derive_seed(spec.seed, "magnet", n_docs));
    for (const auto& d : magnet_corpus.docs) all_magnet_ids_valid = all_magnet_ids_valid && is_magnet_id(d.id);
    for (const auto* corpus : {&docid_corpus, &magnet_corpus}) {
      const std::string mode = corpus->id_mode == IdMode::magnet ? "magnet" : "docid";
      const auto arm = concat(mode, "/N=", n_docs);
      const auto splits = make_splits(*corpus, spec.split);
      auto trained = train_arm(spec, arm, *corpus, splits.train, splits.val, opt);
      const auto& model = trained.result.best.model;
      for (auto& r : topk_accuracies(single_model_ranker(model, spec.beam_width, spec.max_k()), splits.test, spec.ks,
                                     {arm, "all", "-", 1, 0.0, 0, spec.seed})) {
        plot.rows.push_back({mode, detail::str(n_docs), detail::str(r.k), format_double(r.accuracy)});
        report.records.push_back(std::move(r));
      }
    }
    if (opt.artifacts) {
      std::filesystem::create_directories(*opt.artifacts);
      write_magnet_mapping(*opt.artifacts / concat("magnet_mapping_N", n_docs, ".tsv"), magnet_corpus);
    }
  }
  report.summary = {{"all_magnet_ids_valid", all_magnet_ids_valid}};
  report.plots.push_back(std::move(plot));
  return report;
}

/// Runs the spec's experiment end to end.
inline Report run_experiment(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  switch (spec.experiment) {
    case ExperimentKind::single: return run_single(spec, opt);
    case ExperimentKind::content_oblivious: return run_content_oblivious(spec, opt);
    case ExperimentKind::ensemble10: return run_ensemble10(spec, opt);
    case ExperimentKind::decentralized: return run_decentralized(spec, opt);
    case ExperimentKind::magnet_compare: return run_magnet_compare(spec, opt);
  }
  throw Error("run_experiment: unknown experiment");
}

}  // namespace dedsi
