// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>

#include "support.hpp"

using namespace dedsi;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome softmax_merge_oracle() {
  Rng rng(derive_seed(1, "acceptance/merge"));
  std::size_t mismatches = 0;
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto results = fixtures::random_model_results(rng, 2, 10, 5);
    const auto k = static_cast<std::size_t>(uniform_between(rng, 1, 50));
    if (!fixtures::same_ranking(merge_across_shards(results, k), fixtures::oracle_merge(results, k, false))) ++mismatches;
    if (!fixtures::same_ranking(merge_summed(results, k), fixtures::oracle_merge(results, k, true))) ++mismatches;
    for (const auto& r : results) {
      const auto p = softmax_normalize(r);
      double s = 0.0;
      for (const auto& c : p) s += c.prob;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      auto shifted = r;
      const double c = 200.0 * uniform_real(rng) - 100.0;
      for (auto& x : shifted.candidates) x.score += c;
      const auto q = softmax_normalize(shifted);
      for (std::size_t i = 0; i < p.size(); ++i) worst_shift = std::max(worst_shift, std::abs(p[i].prob - q[i].prob));
    }
  }
  auto from_probs = [](int shard, std::vector<std::pair<std::string, double>> probs) {
    ModelResult r{{shard, -1}, {}};
    for (auto& [d, p] : probs) r.candidates.push_back({d, std::log(p)});
    return r;
  };
  const auto example = merge_across_shards({from_probs(0, {{"DocA1", 0.6}, {"DocA2", 0.3}, {"DocA3", 0.1}}),
                                            from_probs(1, {{"DocB1", 0.82}, {"DocB2", 0.18}}),
                                            from_probs(2, {{"DocE1", 0.48}, {"DocE2", 0.42}, {"DocE3", 0.1}}),
                                            from_probs(3, {{"DocG1", 0.45}, {"DocG2", 0.35}, {"DocG3", 0.2}}),
                                            from_probs(4, {{"DocJ1", 0.5}, {"DocJ2", 0.3}, {"DocJ3", 0.2}})},
                                           5);
  const std::vector<std::pair<std::string, double>> want{
      {"DocB1", 0.82}, {"DocA1", 0.6}, {"DocJ1", 0.5}, {"DocE1", 0.48}, {"DocG1", 0.45}};
  bool example_ok = example.ranked.size() == 5;
  for (std::size_t i = 0; example_ok && i < 5; ++i)
    example_ok = example.ranked[i].docid == want[i].first && std::abs(example.ranked[i].score - want[i].second) < 1e-12;
  return {mismatches == 0 && worst_sum <= 1e-9 && worst_shift <= 1e-9 && example_ok,
          concat("oracle mismatches=", mismatches, " max|sum-1|=", worst_sum, " max shift drift=", worst_shift,
                 " worked example ", example_ok ? "ok" : "WRONG")};
}

Outcome beam_exactness() {
  std::size_t bad = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const fixtures::TableModel model(4, derive_seed(seed, "acceptance/beam"));
    const auto all = fixtures::enumerate_sequences(model, 3);
    for (std::size_t width : {27u, 33u, 39u, 100u}) {
      const auto beam = beam_search_symbols(model, {}, width, 3);
      if (beam.size() != std::min<std::size_t>(width, all.size())) ++bad;
      for (std::size_t i = 0; i < beam.size() && i < all.size(); ++i) {
        if (beam[i].symbols != all[i].symbols) ++bad;
        worst = std::max(worst, std::abs(beam[i].score - all[i].score));
        if (i && beam[i].score > beam[i - 1].score) ++bad;
      }
    }
    const auto one = beam_search_symbols(model, {}, 1, 3);
    const auto greedy = greedy_symbols(model, {}, 3);
    if (one.size() != 1 || one[0].symbols != greedy.symbols) ++bad;
  }
  return {bad == 0 && worst <= 1e-9, concat("ordering/greedy violations=", bad, " max score error=", worst)};
}

Outcome gossip_invariants() {
  const auto corpus = synthesize_corpus(fixtures::small_synthetic(60, 20, derive_seed(3, "acceptance/gossip")));
  const auto shards = partition_shards(corpus, 3, 3);
  auto vocab = std::make_shared<const Vocabulary>(build_vocab(corpus));
  SimConfig cfg;
  cfg.personal_min_docs = 8;
  cfg.personal_max_docs = 12;
  cfg.batch_budget = 1000000;
  cfg.seed = 3;
  ModelConfig mc;
  mc.dim = 16;
  auto run = [&] {
    auto e = init_network<ReferenceModel>(cfg, shards, [&](int, std::uint64_t seed) {
      auto k = mc;
      k.seed = seed;
      return make_model(vocab, corpus, k);
    });
    for (int r = 0; r < 200; ++r) {
      gossip_round(e);
      end_round(e);
    }
    return e;
  };
  const auto a = run();
  const auto b = run();
  std::size_t bad_batches = 0, batches = 0;
  bool identical = true, conserved = true;
  for (std::size_t i = 0; i < a.peers.size(); ++i) {
    const auto& p = a.peers[i];
    batches += p.batches_done;
    for (auto s : p.self_pairs_per_batch)
      if (s != 1) ++bad_batches;
    if (p.trained_pairs != 32 * p.batches_done) ++bad_batches;
    identical = identical && p.loss_trace == b.peers[i].loss_trace;
    conserved = conserved && p.received + p.self_seeded == p.trained_pairs + p.batch.size() + p.discarded;
  }
  const bool ok = a.cross_group_messages == 0 && a.messages == 200 * 30 && bad_batches == 0 && batches > 0 &&
                  identical && conserved && cfg.self_seed_size() == 1;
  return {ok, concat("messages=", a.messages, " cross-group=", a.cross_group_messages, " batches=", batches,
                     " malformed batches=", bad_batches, " traces identical=", identical)};
}

Outcome topk_and_splits() {
  Rng rng(derive_seed(4, "acceptance/splits"));
  std::size_t violations = 0;
  for (int t = 0; t < 500; ++t) {
    auto corpus = fixtures::random_corpus(rng, 25, 15);
    std::size_t min_q = SIZE_MAX;
    for (const auto& d : corpus.docs) min_q = std::min(min_q, d.queries.size());
    const std::size_t train = std::max<std::size_t>(1, min_q / 2);
    const std::size_t val = (min_q - train) / 2;
    const SplitSpec spec{train, val, min_q - train - val};
    const auto s = make_splits(corpus, spec);
    std::set<QueryDocPair> tr(s.train.begin(), s.train.end()), va(s.val.begin(), s.val.end());
    for (const auto& p : s.val) violations += tr.count(p);
    for (const auto& p : s.test) violations += tr.count(p) + va.count(p);
    std::set<QueryDocPair> previous;
    for (std::size_t n = 1; n <= train; ++n) {
      const auto subset = first_n_queries(s.train, n);
      const std::set<QueryDocPair> cur(subset.begin(), subset.end());
      for (const auto& p : previous) violations += cur.count(p) ? 0 : 1;
      if (subset.size() != n * corpus.docs.size()) ++violations;
      previous = cur;
    }
    const auto pool = corpus.doc_ids();
    const auto seed = static_cast<std::uint64_t>(t);
    Ranker ranker = [&](const std::string& q) {
      Rng r(fnv1a64(q, seed));
      EnsembleResult out{q, 5, {}};
      for (auto i : sample_without_replacement(r, pool.size(), std::min<std::size_t>(6, pool.size())))
        out.ranked.push_back({pool[i], 0.0, {}});
      return out;
    };
    const auto recs = topk_accuracies(ranker, corpus.pairs(), {1, 2, 3, 4, 5, 6}, {});
    for (std::size_t i = 1; i < recs.size(); ++i)
      if (recs[i].accuracy < recs[i - 1].accuracy) ++violations;
  }
  return {violations == 0, concat("violations over 500 corpora=", violations)};
}

Outcome rolling_mean_check() {
  Rng rng(derive_seed(5, "acceptance/rolling"));
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    std::vector<double> trace(8000);
    for (auto& x : trace) x = 8.0 * uniform_real(rng) + (t % 2 ? 1e3 : 0.0);
    const auto fast = rolling_mean(trace, 500);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const std::size_t lo = i + 1 >= 500 ? i + 1 - 500 : 0;
      long double s = 0.0L;  // extended precision so the reference adds no error of its own
      for (std::size_t j = lo; j <= i; ++j) s += trace[j];
      const auto naive = static_cast<double>(s / static_cast<long double>(i + 1 - lo));
      worst = std::max(worst, std::abs(fast[i] - naive));
    }
  }
  return {worst <= 1e-12, concat("max deviation=", worst)};
}

Outcome memorization() {
  SyntheticOptions so = fixtures::small_synthetic(30, 10, derive_seed(6, "acceptance/memorize"));
  const auto corpus = synthesize_corpus(so);
  const auto train = corpus.pairs();
  auto vocab = std::make_shared<const Vocabulary>(build_vocab(train, corpus));
  ModelConfig mc;
  mc.seed = derive_seed(6, "model");
  TrainConfig tc;
  tc.seed = derive_seed(6, "train");
  auto model = make_model(vocab, corpus, mc);
  // Memorization is judged on the training queries themselves.
  const auto r = train_epochs(model, train, train, tc);
  const double acc = top1_accuracy(r.best.model, train);
  return {acc >= 0.95, concat("train top-1=", acc, " after ", r.history.size(), " epochs")};
}

ExperimentSpec desk_spec(ExperimentKind kind, std::uint64_t seed) {
  ExperimentSpec s;
  s.experiment = kind;
  s.seed = seed;
  s.doc_counts = {60};
  s.synthetic.num_docs = 60;
  s.synthetic.queries_per_doc = s.split.total();
  return s;
}

Outcome seen_queries_trend() {
  auto spec = desk_spec(ExperimentKind::content_oblivious, 7);
  resolve(spec);
  const auto corpus = select_corpus(spec, load_base_corpus(spec), 60);
  const auto splits = make_splits(corpus, spec.split);
  double acc[2];
  std::size_t i = 0;
  for (std::size_t n : {1u, 8u}) {
    const auto arm = train_arm(spec, concat("n=", n), corpus, first_n_queries(splits.train, n), splits.val, {});
    acc[i++] = top1_accuracy(arm.result.best.model, splits.test);
  }
  return {acc[1] - acc[0] >= 0.20, concat("test top-1 n=1: ", acc[0], " n=8: ", acc[1], " gain=", acc[1] - acc[0])};
}

Outcome ensemble_vs_personal() {
  auto spec = desk_spec(ExperimentKind::ensemble10, 8);
  resolve(spec);
  const auto report = run_ensemble10(spec);
  const double ens1 = report.summary["all"]["ensemble"]["top1"].get<double>();
  const double ens5 = report.summary["all"]["ensemble"]["top5"].get<double>();
  const double pers5 = report.summary["per_shard"]["personal"]["top5"]["mean"].get<double>();
  return {ens5 >= ens1 && std::abs(ens5 - pers5) <= 0.15,
          concat("ensemble top-1=", ens1, " top-5=", ens5, " mean personal top-5=", pers5)};
}

Outcome decentralized_end_to_end() {
  auto spec = desk_spec(ExperimentKind::decentralized, 9);
  spec.simulation.num_peers = 6;
  spec.simulation.batch_budget = 300;
  spec.simulation.personal_min_docs = 12;
  spec.simulation.personal_max_docs = 16;
  spec.per_shard = 2;
  spec.ks = {1, 5};
  spec.rolling_window = 50;
  resolve(spec);
  const auto setup = simulation_setup(spec);
  auto engine = init_simulation(spec, setup);
  const auto stats = run_simulation(engine);
  const auto report = evaluate_decentralized(spec, setup, engine);
  bool loss_falls = engine.finished();
  std::string losses;
  for (const auto& p : report.summary["rolling_loss"]) {
    const double first = p["first_window"].get<double>(), last = p["final_window"].get<double>();
    loss_falls = loss_falls && last < first;
    losses += concat(" ", format_double(first).substr(0, 5), "->", format_double(last).substr(0, 5));
  }
  bool pools_ok = true;
  std::string pools;
  for (const auto& s : report.summary["shards"]) {
    const double t1 = s["pools"]["own_shard"]["top1"].get<double>(), t5 = s["pools"]["own_shard"]["top5"].get<double>();
    pools_ok = pools_ok && t5 >= t1 && t1 >= 0.0 && t5 <= 1.0;
    pools += concat(" ", t1, "/", t5);
  }
  return {loss_falls && pools_ok, concat("rounds=", stats.rounds, " rolling loss", losses, "; own-shard top-1/top-5", pools)};
}

Outcome magnet_vs_docid() {
  ExperimentSpec spec;
  spec.experiment = ExperimentKind::magnet_compare;
  spec.seed = 10;
  spec.doc_counts = {40};
  spec.split = {20, 10, 10};
  spec.ks = {1, 5};
  spec.synthetic.num_docs = 40;
  spec.synthetic.queries_per_doc = spec.split.total();
  resolve(spec);
  const auto report = run_magnet_compare(spec);
  double docid = -1, magnet = -1;
  for (const auto& r : report.records) {
    if (r.k != 1) continue;
    if (r.arm == "docid/N=40") docid = r.accuracy;
    if (r.arm == "magnet/N=40") magnet = r.accuracy;
  }
  const bool ids_ok = report.summary["all_magnet_ids_valid"].get<bool>();
  return {ids_ok && docid >= 0 && magnet >= 0 && std::abs(docid - magnet) <= 0.10,
          concat("top-1 docid=", docid, " magnet=", magnet, " ids 40-hex=", ids_ok)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"softmax and merge match the brute-force oracle", softmax_merge_oracle},
      {"beam search is exact against enumeration", beam_exactness},
      {"gossip protocol invariants", gossip_invariants},
      {"top-k monotonicity and split integrity", topk_and_splits},
      {"rolling mean matches naive recomputation", rolling_mean_check},
      {"memorization of training queries", memorization},
      {"seen-queries trend", seen_queries_trend},
      {"ensemble versus personal models", ensemble_vs_personal},
      {"decentralized end to end", decentralized_end_to_end},
      {"magnet versus docid identifiers", magnet_vs_docid},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, concat("threw: ", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2zu %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
