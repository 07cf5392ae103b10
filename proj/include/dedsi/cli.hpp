#pragma once

// Command-line front end. `run_cli` takes argv-style arguments and output
// streams so the whole tool can be driven from tests.

#include <Eigen/Core>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dedsi/experiments.hpp"

namespace dedsi {

inline constexpr std::string_view kVersion = "0.1.0";

namespace cli {

namespace fs = std::filesystem;

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

inline std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(concat("cannot read '", p.string(), "'"));
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

/// Lists every produced file with its content hash. The timestamps make this
/// the one output that differs between identical runs.
inline void write_run_manifest(const fs::path& out_dir, const std::string& command, const std::string& spec_hash,
                               std::uint64_t seed, const std::string& started, std::vector<fs::path> files) {
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  Json list = Json::array();
  for (const auto& f : files) list.push_back({{"path", fs::relative(f, out_dir).generic_string()}, {"hash", file_hash(f)}});
  const Json j = {{"command", command},
                  {"spec_hash", spec_hash},
                  {"seed", seed},
                  {"versions",
                   {{"dedsi", kVersion},
                    {"nlohmann_json", concat(NLOHMANN_JSON_VERSION_MAJOR, '.', NLOHMANN_JSON_VERSION_MINOR, '.',
                                             NLOHMANN_JSON_VERSION_PATCH)},
                    {"eigen", concat(EIGEN_WORLD_VERSION, '.', EIGEN_MAJOR_VERSION, '.', EIGEN_MINOR_VERSION)},
                    {"cli11", CLI11_VERSION}}},
                  {"started_at", started},
                  {"finished_at", utc_now()},
                  {"files", list}};
  write_json_file(out_dir / "run_manifest.json", j, 2);
}

inline std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") out.push_back(e.path());
  return out;
}

struct Context {
  fs::path workdir = ".";
  std::ostream& out;
  std::ostream& err;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : workdir / p; }
};

/// Loads a spec, applying the DEDSI_SEED override before sub-seeds are derived.
inline ExperimentSpec load_spec(const Context& ctx, const std::string& path) {
  const auto p = ctx.resolve(path);
  if (!fs::exists(p)) throw Error(concat("spec file '", p.string(), "' does not exist"));
  Json j = load_spec_document(p);
  if (const char* env = std::getenv("DEDSI_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      j["seed"] = seed;
    } catch (const std::exception&) {
      throw Error(concat("DEDSI_SEED='", env, "' is not an unsigned integer"));
    }
  }
  return experiment_spec_from_json(j);
}

inline fs::path prepare_out_dir(const Context& ctx, const ExperimentSpec& spec) {
  const auto dir = ctx.resolve(spec.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(concat("cannot create output directory '", dir.string(), "'"));
  write_json_file(dir / "spec.resolved.json", to_json(spec), 2);
  return dir;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string output = "corpus";
  std::size_t docs = 0;  // 0 keeps every qualifying document
  std::size_t min_queries = 1;
  std::uint64_t seed = 7;
  double max_malformed = 0.01;
  std::string split;  // "train/val/test", empty for none
  bool magnet = false;
};

inline SplitSpec parse_split(const std::string& s) {
  SplitSpec out;
  char a = 0, b = 0;
  std::istringstream in(s);
  if (!(in >> out.train_per_doc >> a >> out.val_per_doc >> b >> out.test_per_doc) || a != '/' || b != '/' ||
      in.peek() != std::char_traits<char>::eof()) {
    throw Error(concat("--split '", s, "' must look like 20/20/20"));
  }
  return out;
}

inline int cmd_ingest(const Context& ctx, const IngestArgs& a) {
  const auto started = utc_now();
  const auto input = ctx.resolve(a.input);
  if (!fs::exists(input)) throw Error(concat("input file '", input.string(), "' does not exist"));
  IngestOptions io;
  io.min_queries_per_doc = a.min_queries;
  io.max_malformed_fraction = a.max_malformed;
  IngestReport rep;
  Corpus corpus = ingest_orcas(input, io, &rep);
  const auto n = a.docs == 0 ? corpus.docs.size() : a.docs;
  corpus = select_documents(corpus, n, a.min_queries, a.seed);

  const auto dir = ctx.resolve(a.output);
  fs::create_directories(dir);
  std::vector<fs::path> files;
  if (a.magnet) {
    corpus = assign_magnet_links(corpus, derive_seed(a.seed, "magnet"));
    corpus.manifest.magnet_mapping_path = "magnet_mapping.tsv";
    write_magnet_mapping(dir / "magnet_mapping.tsv", corpus);
    files.push_back(dir / "magnet_mapping.tsv");
  }
  write_pairs_tsv(dir / "corpus.tsv", corpus.pairs());
  files.push_back(dir / "corpus.tsv");
  if (!a.split.empty()) {
    const auto splits = make_splits(corpus, parse_split(a.split));
    for (const auto& [name, pairs] : {std::pair{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}) {
      write_pairs_tsv(dir / concat(name, ".tsv"), *pairs);
      files.push_back(dir / concat(name, ".tsv"));
    }
  }
  const auto manifest = corpus_manifest(corpus);
  write_json_file(dir / "corpus_manifest.json", manifest, 2);
  files.push_back(dir / "corpus_manifest.json");
  write_run_manifest(dir, "ingest", hex64(fnv1a64(manifest.dump())), a.seed, started, files);
  ctx.out << "ingested " << corpus.docs.size() << " documents, " << corpus.num_pairs() << " pairs ("
          << rep.malformed << " malformed rows skipped) -> " << (dir / "corpus_manifest.json").string() << '\n';
  return 0;
}

inline int finish_report(const Context& ctx, const std::string& command, const ExperimentSpec& spec,
                         const fs::path& dir, const Report& report, const std::string& started) {
  emit_report(report, dir);
  write_run_manifest(dir, command, report.spec_hash, spec.seed, started, files_under(dir));
  ctx.out << command << ": " << report.records.size() << " metric rows -> " << (dir / "metrics.csv").string() << '\n';
  return 0;
}

inline int cmd_train(const Context& ctx, const std::string& spec_path) {
  const auto started = utc_now();
  const auto spec = load_spec(ctx, spec_path);
  if (spec.experiment != ExperimentKind::single && spec.experiment != ExperimentKind::content_oblivious) {
    throw Error(concat("train handles 'single' and 'content_oblivious' specs; use simulate/evaluate for '",
                       to_string(spec.experiment), "'"));
  }
  const auto dir = prepare_out_dir(ctx, spec);
  RunOptions opt{ctx.workdir, dir, &ctx.out};
  return finish_report(ctx, "train", spec, dir, run_experiment(spec, opt), started);
}

struct SimulateArgs {
  std::string spec;
  bool resume = false;
};

inline constexpr const char* kSnapshotFile = "snapshot.json";
inline constexpr const char* kFinalStateFile = "simulation_state.json";

inline Json wrap_snapshot(const ExperimentSpec& spec, const RoundEngine<ReferenceModel>& engine) {
  return {{"spec_hash", spec_hash(spec)}, {"engine", snapshot_json(engine)}};
}

inline RoundEngine<ReferenceModel> unwrap_snapshot(const ExperimentSpec& spec, const fs::path& path) {
  const auto j = read_json_file(path);
  if (j.value("spec_hash", "") != spec_hash(spec)) {
    throw Error(concat("'", path.string(), "' was written for a different spec"));
  }
  return engine_from_snapshot(j.at("engine"));
}

inline int cmd_simulate(const Context& ctx, const SimulateArgs& a) {
  const auto started = utc_now();
  const auto spec = load_spec(ctx, a.spec);
  if (spec.experiment != ExperimentKind::decentralized) {
    throw Error(concat("simulate needs a 'decentralized' spec, got '", to_string(spec.experiment), "'"));
  }
  const auto dir = prepare_out_dir(ctx, spec);
  const auto setup = simulation_setup(spec, {ctx.workdir, std::nullopt, nullptr});
  const auto snapshot_path = dir / kSnapshotFile;
  RoundEngine<ReferenceModel> engine;
  if (a.resume && fs::exists(snapshot_path)) {
    engine = unwrap_snapshot(spec, snapshot_path);
    ctx.out << "resuming at round " << engine.rounds << '\n';
  } else {
    if (a.resume) ctx.out << "no snapshot found, starting fresh\n";
    engine = init_simulation(spec, setup);
  }

  auto most_batches = [](const RoundEngine<ReferenceModel>& e) {
    std::size_t m = 0;
    for (const auto& p : e.peers) m = std::max(m, p.batches_done);
    return m;
  };
  std::size_t last_snapshot = spec.snapshot_every == 0 ? 0 : most_batches(engine) / spec.snapshot_every;
  run_simulation<ReferenceModel>(engine, [&](const RoundEngine<ReferenceModel>& e) {
    if (e.rounds % 100 == 0) {
      std::size_t least = e.peers.front().batches_done;
      for (const auto& p : e.peers) least = std::min(least, p.batches_done);
      ctx.out << "round " << e.rounds << ": batches " << least << ".." << most_batches(e) << " of "
              << e.cfg.batch_budget << ", messages " << e.messages << std::endl;
    }
    if (spec.snapshot_every != 0 && most_batches(e) / spec.snapshot_every > last_snapshot) {
      last_snapshot = most_batches(e) / spec.snapshot_every;
      write_json_file(snapshot_path, wrap_snapshot(spec, e));
    }
  });
  ctx.out << "simulation finished after " << engine.rounds << " rounds\n";

  std::error_code ec;
  fs::remove(snapshot_path, ec);
  fs::create_directories(dir / "checkpoints");
  for (const auto& p : engine.peers) {
    save_checkpoint(dir / "checkpoints" / concat("peer_", p.peer_id, ".json"),
                    {p.model, p.batches_done, 0.0, config_hash(to_json(spec.model))});
  }
  write_json_file(dir / kFinalStateFile, wrap_snapshot(spec, engine));
  write_json_file(dir / "simulation_manifest.json", simulation_manifest(engine), 2);
  write_json_file(dir / "message_stats.json", message_stats(engine), 2);
  write_loss_csv(dir / "loss.csv", engine);
  write_run_manifest(dir, "simulate", spec_hash(spec), spec.seed, started, files_under(dir));
  return 0;
}

inline int cmd_evaluate(const Context& ctx, const std::string& spec_path) {
  const auto started = utc_now();
  const auto spec = load_spec(ctx, spec_path);
  const auto dir = prepare_out_dir(ctx, spec);
  Report report;
  if (spec.experiment == ExperimentKind::decentralized) {
    const auto state = dir / kFinalStateFile;
    if (!fs::exists(state)) throw Error(concat("'", state.string(), "' not found; run simulate first"));
    const auto engine = unwrap_snapshot(spec, state);
    report = evaluate_decentralized(spec, simulation_setup(spec, {ctx.workdir, std::nullopt, nullptr}), engine);
  } else {
    report = run_experiment(spec, {ctx.workdir, dir, &ctx.out});
  }
  return finish_report(ctx, "evaluate", spec, dir, report, started);
}

/// Prints metrics.json as a table and writes it to report.md.
inline int cmd_report(const Context& ctx, const std::string& spec_path, const std::string& dir_arg) {
  fs::path dir;
  if (!dir_arg.empty()) {
    dir = ctx.resolve(dir_arg);
  } else if (!spec_path.empty()) {
    dir = ctx.resolve(load_spec(ctx, spec_path).output_dir);
  } else {
    throw Error("report needs --spec or --dir");
  }
  const auto metrics = dir / "metrics.json";
  if (!fs::exists(metrics)) throw Error(concat("'", metrics.string(), "' not found; run evaluate first"));
  const auto j = read_json_file(metrics);
  std::ostringstream md;
  md << "# " << j.at("experiment").get<std::string>() << "\n\n";
  md << "spec hash `" << j.at("spec_hash").get<std::string>() << "`, seed " << j.at("seed").get<std::uint64_t>()
     << "\n\n";
  md << "| arm | shard | pool | k | accuracy | support |\n|---|---|---|---|---|---|\n";
  for (const auto& r : j.at("records")) {
    md << "| " << r.at("arm").get<std::string>() << " | " << r.at("shard").get<std::string>() << " | "
       << r.at("pool").get<std::string>() << " | " << r.at("k").get<std::size_t>() << " | " << std::fixed
       << std::setprecision(4) << r.at("accuracy").get<double>() << std::defaultfloat << " | "
       << r.at("support").get<std::size_t>() << " |\n";
  }
  md << "\n```json\n" << j.at("summary").dump(2) << "\n```\n";
  {
    std::ofstream f(dir / "report.md", std::ios::binary);
    if (!f) throw Error(concat("cannot write '", (dir / "report.md").string(), "'"));
    f << md.str();
  }
  ctx.out << md.str();
  return 0;
}

}  // namespace cli

/// Entry point shared by the executable and the tests. Returns the exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"De-DSI laboratory: generative retrieval, gossip training and ensembles", "dedsi"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "Directory all relative paths are resolved against");

  cli::IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Read a click log, select documents, write corpus files");
  c_ingest->add_option("--input", ingest.input, "Query/docid TSV (2 or 4 columns)")->required();
  c_ingest->add_option("--output", ingest.output, "Output directory")->capture_default_str();
  c_ingest->add_option("--docs", ingest.docs, "Documents to keep (0 = all qualifying)")->capture_default_str();
  c_ingest->add_option("--min-queries", ingest.min_queries, "Queries a document needs to qualify")->capture_default_str();
  c_ingest->add_option("--seed", ingest.seed, "Selection seed")->capture_default_str();
  c_ingest->add_option("--max-malformed", ingest.max_malformed, "Tolerated fraction of malformed rows")
      ->capture_default_str();
  c_ingest->add_option("--split", ingest.split, "Also write train/val/test TSVs, e.g. 20/20/20");
  c_ingest->add_flag("--magnet", ingest.magnet, "Replace docids with random 40-hex magnet identifiers");

  std::string spec_path;
  auto* c_train = app.add_subcommand("train", "Train the models of a single or content_oblivious spec");
  c_train->add_option("--spec", spec_path, "Experiment spec (JSON or TOML)")->required();

  cli::SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run the gossip simulation of a decentralized spec");
  c_sim->add_option("--spec", sim.spec, "Experiment spec (JSON or TOML)")->required();
  c_sim->add_flag("--resume", sim.resume, "Continue from the last snapshot in the output directory");

  auto* c_eval = app.add_subcommand("evaluate", "Run an experiment and write its metrics");
  c_eval->add_option("--spec", spec_path, "Experiment spec (JSON or TOML)")->required();

  std::string report_dir;
  auto* c_report = app.add_subcommand("report", "Summarize metrics.json as a table");
  auto* report_spec = c_report->add_option("--spec", spec_path, "Experiment spec whose output_dir to read");
  c_report->add_option("--dir", report_dir, "Output directory to read")->excludes(report_spec);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  cli::Context ctx{workdir, out, err};
  try {
    if (*c_ingest) return cli::cmd_ingest(ctx, ingest);
    if (*c_train) return cli::cmd_train(ctx, spec_path);
    if (*c_sim) return cli::cmd_simulate(ctx, sim);
    if (*c_eval) return cli::cmd_evaluate(ctx, spec_path);
    if (*c_report) return cli::cmd_report(ctx, spec_path, report_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace dedsi
