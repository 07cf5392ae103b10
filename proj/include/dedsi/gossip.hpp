#pragma once

// Discrete-round simulation of data-gossip training inside peer groups.
//
// Each shard is served by one group of peers. Every round each peer sends one
// pair from its personal dataset to a uniformly chosen other member of its
// group. Receipts are buffered in the recipient's inbox and drained at the
// end of the round in ascending peer order; whenever a peer's batch reaches
// the batch size it trains once and starts the next batch with a fresh
// self-seed sample of its own data.

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dedsi/corpus.hpp"
#include "dedsi/model.hpp"
#include "dedsi/train.hpp"

namespace dedsi {

struct SimConfig {
  std::size_t num_peers = 30;
  std::size_t num_shards = 3;
  std::size_t batch_size = 32;
  std::size_t batch_budget = 8000;
  std::size_t personal_min_docs = 200;
  std::size_t personal_max_docs = 300;
  std::size_t max_rounds = 0;  // 0 = unbounded
  std::uint64_t seed = 1;

  /// Nearest integer to batch_size / num_peers, ties to even.
  std::size_t self_seed_size() const { return round_half_even_div(batch_size, num_peers); }

  std::size_t group_size() const { return num_shards == 0 ? 0 : num_peers / num_shards; }

  void validate() const {
    if (num_shards == 0) throw Error("SimConfig: num_shards must be >= 1");
    if (num_peers % num_shards != 0) {
      throw Error(concat("SimConfig: ", num_peers, " peers cannot be split evenly into ", num_shards, " groups"));
    }
    if (group_size() < 2) throw Error("SimConfig: every group needs at least 2 peers to have a gossip recipient");
    if (batch_size == 0) throw Error("SimConfig: batch_size must be >= 1");
    if (self_seed_size() >= batch_size) throw Error("SimConfig: self-seed sample fills the whole batch");
    if (batch_budget == 0) throw Error("SimConfig: batch_budget must be >= 1");
  }
};

inline Json to_json(const SimConfig& c) {
  return {{"num_peers", c.num_peers},
          {"num_shards", c.num_shards},
          {"batch_size", c.batch_size},
          {"self_seed_size", c.self_seed_size()},
          {"batch_budget", c.batch_budget},
          {"personal_min_docs", c.personal_min_docs},
          {"personal_max_docs", c.personal_max_docs},
          {"max_rounds", c.max_rounds},
          {"round_interval", "unit tick"},
          {"seed", c.seed}};
}

inline SimConfig sim_config_from_json(const Json& j, SimConfig c = {}) {
  c.num_peers = j.value("num_peers", c.num_peers);
  c.num_shards = j.value("num_shards", c.num_shards);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.batch_budget = j.value("batch_budget", c.batch_budget);
  c.personal_min_docs = j.value("personal_min_docs", c.personal_min_docs);
  c.personal_max_docs = j.value("personal_max_docs", c.personal_max_docs);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.seed = j.value("seed", c.seed);
  return c;
}

struct BatchEntry {
  QueryDocPair pair;
  int origin_peer = -1;
  bool self_seeded = false;
};

template <typename M>
struct Peer {
  int peer_id = 0;
  int shard_id = 0;
  std::vector<std::string> doc_ids;  // personal documents, sorted
  std::vector<QueryDocPair> dataset;
  std::vector<BatchEntry> batch;
  std::vector<BatchEntry> inbox;
  M model;
  Rng rng;
  std::size_t batches_done = 0;
  std::vector<double> loss_trace;
  std::vector<std::size_t> self_pairs_per_batch;

  std::size_t sent = 0;
  std::size_t received = 0;
  std::size_t self_seeded = 0;
  std::size_t trained_pairs = 0;
  std::size_t discarded = 0;
};

template <typename M>
struct RoundEngine {
  SimConfig cfg;
  std::vector<Peer<M>> peers;
  std::vector<std::vector<int>> groups;  // shard_id -> peer ids
  std::vector<std::vector<std::string>> shard_docs;
  Rng rng;
  std::size_t rounds = 0;
  std::size_t messages = 0;
  std::size_t cross_group_messages = 0;

  bool finished() const {
    for (const auto& p : peers)
      if (p.batches_done < cfg.batch_budget) return false;
    return true;
  }
};

namespace detail {

template <typename M>
void seed_batch(Peer<M>& peer, std::size_t k) {
  peer.batch.clear();
  for (auto i : sample_without_replacement(peer.rng, peer.dataset.size(), k)) {
    peer.batch.push_back({peer.dataset[i], peer.peer_id, true});
  }
  peer.self_seeded += k;
}

}  // namespace detail

/// Builds the peer groups. `make_model(peer_id, seed)` constructs each
/// peer's model from an independent seed derived from (cfg.seed, peer_id).
template <typename M, typename Factory>
RoundEngine<M> init_network(const SimConfig& cfg, const std::vector<Shard>& shards, Factory&& make_model) {
  cfg.validate();
  if (shards.size() != cfg.num_shards) {
    throw Error(concat("init_network: ", shards.size(), " shards supplied, config expects ", cfg.num_shards));
  }
  RoundEngine<M> engine{cfg, {}, std::vector<std::vector<int>>(cfg.num_shards), {}, Rng(derive_seed(cfg.seed, "gossip")),
                        0, 0, 0};
  for (const auto& s : shards) engine.shard_docs.push_back(s.doc_ids);
  const auto per_group = cfg.group_size();
  const auto self_seed = cfg.self_seed_size();
  engine.peers.reserve(cfg.num_peers);
  for (std::size_t id = 0; id < cfg.num_peers; ++id) {
    const auto shard = id / per_group;
    auto personal = sample_personal_dataset(shards[shard], cfg.personal_min_docs, cfg.personal_max_docs,
                                            derive_seed(cfg.seed, "personal_dataset", id));
    if (personal.pairs.size() < self_seed) {
      throw Error(concat("init_network: peer ", id, " has ", personal.pairs.size(), " pairs, self-seed needs ",
                         self_seed));
    }
    Peer<M> peer{static_cast<int>(id),
                 static_cast<int>(shard),
                 std::move(personal.doc_ids),
                 std::move(personal.pairs),
                 {},
                 {},
                 make_model(static_cast<int>(id), derive_seed(cfg.seed, "peer_model", id)),
                 Rng(derive_seed(cfg.seed, "peer_self_seed", id)),
                 0,
                 {},
                 {}};
    detail::seed_batch(peer, self_seed);
    engine.groups[shard].push_back(static_cast<int>(id));
    engine.peers.push_back(std::move(peer));
  }
  return engine;
}

/// Every peer sends one uniformly drawn pair of its dataset to a uniformly
/// drawn other member of its group. Deliveries land in recipients' inboxes.
template <typename M>
void gossip_round(RoundEngine<M>& engine) {
  for (auto& sender : engine.peers) {
    const auto& group = engine.groups[static_cast<std::size_t>(sender.shard_id)];
    if (group.size() < 2) throw Error(concat("gossip_round: group ", sender.shard_id, " has no recipient for peer ", sender.peer_id));
    const auto& pair = sender.dataset[uniform_index(engine.rng, sender.dataset.size())];
    // Choose among the group minus the sender.
    auto pick = uniform_index(engine.rng, group.size() - 1);
    int recipient = group[pick];
    if (recipient == sender.peer_id) recipient = group.back();
    auto& target = engine.peers[static_cast<std::size_t>(recipient)];
    target.inbox.push_back({pair, sender.peer_id, false});
    ++sender.sent;
    ++engine.messages;
    if (target.shard_id != sender.shard_id) ++engine.cross_group_messages;
  }
  ++engine.rounds;
}

/// Trains once if the batch is full, then starts the next batch with a
/// fresh self-seed sample (unless the budget is exhausted).
template <RetrieverModel M>
std::optional<double> maybe_train(Peer<M>& peer, const SimConfig& cfg) {
  if (peer.batch.size() < cfg.batch_size) return std::nullopt;
  std::vector<QueryDocPair> pairs;
  std::size_t self = 0;
  pairs.reserve(peer.batch.size());
  for (const auto& e : peer.batch) {
    pairs.push_back(e.pair);
    if (e.self_seeded) ++self;
  }
  const double loss = train_batch(peer.model, pairs);
  peer.loss_trace.push_back(loss);
  peer.self_pairs_per_batch.push_back(self);
  peer.trained_pairs += pairs.size();
  ++peer.batches_done;
  peer.batch.clear();
  if (peer.batches_done < cfg.batch_budget) detail::seed_batch(peer, cfg.self_seed_size());
  return loss;
}

/// Drains every inbox into its batch in ascending peer order, training
/// whenever a batch fills. Receipts of peers past their budget are dropped.
template <RetrieverModel M>
void end_round(RoundEngine<M>& engine) {
  for (auto& peer : engine.peers) {
    for (auto& e : peer.inbox) {
      ++peer.received;
      if (peer.batches_done >= engine.cfg.batch_budget) {
        ++peer.discarded;
        continue;
      }
      peer.batch.push_back(std::move(e));
      maybe_train(peer, engine.cfg);
    }
    peer.inbox.clear();
  }
}

struct SimulationStats {
  std::size_t rounds = 0;
  std::size_t messages = 0;
  std::size_t cross_group_messages = 0;
};

/// Alternates gossip rounds and batch draining until every peer has trained
/// cfg.batch_budget batches. Peers past their budget keep sending.
template <RetrieverModel M>
SimulationStats run_simulation(RoundEngine<M>& engine,
                               const std::function<void(const RoundEngine<M>&)>& on_round = {}) {
  while (!engine.finished()) {
    if (engine.cfg.max_rounds != 0 && engine.rounds >= engine.cfg.max_rounds) {
      throw Error(concat("run_simulation: budget not reached after ", engine.rounds, " rounds"));
    }
    gossip_round(engine);
    end_round(engine);
    if (on_round) on_round(engine);
  }
  return {engine.rounds, engine.messages, engine.cross_group_messages};
}

/// Element i is the mean of trace[max(0, i-window+1) .. i].
inline std::vector<double> rolling_mean(const std::vector<double>& trace, std::size_t window) {
  if (window == 0) throw Error("rolling_mean: window must be >= 1");
  if (trace.empty()) throw Error("rolling_mean: empty trace");
  std::vector<double> out(trace.size());
  // Compensated running sum keeps drift far below 1e-12 on long traces.
  double sum = 0.0, comp = 0.0;
  auto add = [&](double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    add(trace[i]);
    if (i >= window) add(-trace[i - window]);
    const auto n = std::min(i + 1, window);
    out[i] = (sum + comp) / static_cast<double>(n);
  }
  return out;
}

enum class PoolKind { all_shards, own_shard };

struct PoolSpec {
  PoolKind kind = PoolKind::all_shards;
  int shard_id = 0;  // used by own_shard
};

template <typename M>
struct PoolMember {
  int peer_id;
  int shard_id;
  const M* model;
};

/// Seeded draw without replacement of per_shard peers from each qualifying group.
template <typename M>
std::vector<PoolMember<M>> sample_model_pool(const RoundEngine<M>& engine, std::size_t per_shard, PoolSpec pool,
                                             std::uint64_t seed) {
  std::vector<PoolMember<M>> out;
  Rng rng(derive_seed(seed, "sample_model_pool"));
  for (std::size_t s = 0; s < engine.groups.size(); ++s) {
    if (pool.kind == PoolKind::own_shard && static_cast<int>(s) != pool.shard_id) continue;
    const auto& group = engine.groups[s];
    if (per_shard > group.size()) {
      throw Error(concat("sample_model_pool: per_shard ", per_shard, " exceeds group size ", group.size()));
    }
    for (auto i : sample_without_replacement(rng, group.size(), per_shard)) {
      const auto& peer = engine.peers[static_cast<std::size_t>(group[i])];
      out.push_back({peer.peer_id, peer.shard_id, &peer.model});
    }
  }
  if (pool.kind == PoolKind::own_shard && (pool.shard_id < 0 || static_cast<std::size_t>(pool.shard_id) >= engine.groups.size())) {
    throw Error(concat("sample_model_pool: unknown shard ", pool.shard_id));
  }
  return out;
}

/// Documents of a shard sampled by at least one peer of its group.
template <typename M>
std::vector<std::string> covered_doc_ids(const RoundEngine<M>& engine, int shard_id) {
  std::set<std::string> docs;
  for (int id : engine.groups.at(static_cast<std::size_t>(shard_id))) {
    const auto& p = engine.peers[static_cast<std::size_t>(id)];
    docs.insert(p.doc_ids.begin(), p.doc_ids.end());
  }
  return {docs.begin(), docs.end()};
}

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

template <typename M>
Json simulation_manifest(const RoundEngine<M>& engine) {
  Json shards = Json::array();
  for (std::size_t s = 0; s < engine.shard_docs.size(); ++s) {
    shards.push_back({{"shard_id", s}, {"doc_ids", engine.shard_docs[s]}, {"peers", engine.groups[s]}});
  }
  Json peers = Json::array();
  for (const auto& p : engine.peers) {
    peers.push_back({{"peer_id", p.peer_id},
                     {"shard_id", p.shard_id},
                     {"num_docs", p.doc_ids.size()},
                     {"num_pairs", p.dataset.size()},
                     {"model_seed", derive_seed(engine.cfg.seed, "peer_model", static_cast<std::uint64_t>(p.peer_id))},
                     {"self_seed_rng_seed",
                      derive_seed(engine.cfg.seed, "peer_self_seed", static_cast<std::uint64_t>(p.peer_id))}});
  }
  return {{"config", to_json(engine.cfg)}, {"shards", shards}, {"peers", peers}};
}

template <typename M>
Json message_stats(const RoundEngine<M>& engine) {
  Json peers = Json::array();
  for (const auto& p : engine.peers) {
    peers.push_back({{"peer_id", p.peer_id},
                     {"shard_id", p.shard_id},
                     {"sent", p.sent},
                     {"received", p.received},
                     {"self_seeded", p.self_seeded},
                     {"trained_pairs", p.trained_pairs},
                     {"discarded", p.discarded},
                     {"pending", p.batch.size()},
                     {"batches_done", p.batches_done}});
  }
  return {{"rounds", engine.rounds},
          {"messages", engine.messages},
          {"cross_group_messages", engine.cross_group_messages},
          {"peers", peers}};
}

template <typename M>
void write_loss_csv(const std::filesystem::path& path, const RoundEngine<M>& engine) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(concat("cannot write '", path.string(), "'"));
  out << "peer_id,batch_idx,loss\n";
  out.precision(17);
  for (const auto& p : engine.peers)
    for (std::size_t i = 0; i < p.loss_trace.size(); ++i) out << p.peer_id << ',' << i << ',' << p.loss_trace[i] << '\n';
}

// ---------------------------------------------------------------------------
// Snapshots of a reference-model simulation, for resumable runs
// ---------------------------------------------------------------------------

namespace detail {

inline Json pairs_json(const std::vector<QueryDocPair>& pairs) {
  Json a = Json::array();
  for (const auto& p : pairs) a.push_back({p.query, p.docid});
  return a;
}

inline std::vector<QueryDocPair> pairs_from_json(const Json& j) {
  std::vector<QueryDocPair> out;
  for (const auto& e : j) out.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  return out;
}

inline Json entries_json(const std::vector<BatchEntry>& entries) {
  Json a = Json::array();
  for (const auto& e : entries) a.push_back({e.pair.query, e.pair.docid, e.origin_peer, e.self_seeded});
  return a;
}

inline std::vector<BatchEntry> entries_from_json(const Json& j) {
  std::vector<BatchEntry> out;
  for (const auto& e : j) {
    out.push_back({{e.at(0).get<std::string>(), e.at(1).get<std::string>()}, e.at(2).get<int>(), e.at(3).get<bool>()});
  }
  return out;
}

}  // namespace detail

inline Json snapshot_json(const RoundEngine<ReferenceModel>& engine) {
  Json peers = Json::array();
  for (const auto& p : engine.peers) {
    peers.push_back({{"peer_id", p.peer_id},
                     {"shard_id", p.shard_id},
                     {"doc_ids", p.doc_ids},
                     {"dataset", detail::pairs_json(p.dataset)},
                     {"batch", detail::entries_json(p.batch)},
                     {"inbox", detail::entries_json(p.inbox)},
                     {"model", p.model.to_json(true)},
                     {"rng", rng_state(p.rng)},
                     {"batches_done", p.batches_done},
                     {"loss_trace", p.loss_trace},
                     {"self_pairs_per_batch", p.self_pairs_per_batch},
                     {"sent", p.sent},
                     {"received", p.received},
                     {"self_seeded", p.self_seeded},
                     {"trained_pairs", p.trained_pairs},
                     {"discarded", p.discarded}});
  }
  return {{"format", "dedsi-simulation-snapshot"},
          {"config", to_json(engine.cfg)},
          {"groups", engine.groups},
          {"shard_docs", engine.shard_docs},
          {"rng", rng_state(engine.rng)},
          {"rounds", engine.rounds},
          {"messages", engine.messages},
          {"cross_group_messages", engine.cross_group_messages},
          {"peers", peers}};
}

inline RoundEngine<ReferenceModel> engine_from_snapshot(const Json& j) {
  if (j.value("format", "") != "dedsi-simulation-snapshot") throw Error("not a simulation snapshot");
  RoundEngine<ReferenceModel> engine;
  engine.cfg = sim_config_from_json(j.at("config"));
  engine.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  engine.shard_docs = j.at("shard_docs").get<std::vector<std::vector<std::string>>>();
  restore_rng(engine.rng, j.at("rng").get<std::string>());
  engine.rounds = j.at("rounds").get<std::size_t>();
  engine.messages = j.at("messages").get<std::size_t>();
  engine.cross_group_messages = j.at("cross_group_messages").get<std::size_t>();
  std::shared_ptr<const Vocabulary> vocab;
  for (const auto& pj : j.at("peers")) {
    auto model = ReferenceModel::from_json(pj.at("model"), vocab);
    vocab = model.shared_vocab();
    Peer<ReferenceModel> p{pj.at("peer_id").get<int>(),
                           pj.at("shard_id").get<int>(),
                           pj.at("doc_ids").get<std::vector<std::string>>(),
                           detail::pairs_from_json(pj.at("dataset")),
                           detail::entries_from_json(pj.at("batch")),
                           detail::entries_from_json(pj.at("inbox")),
                           std::move(model),
                           Rng(),
                           0,
                           {},
                           {}};
    restore_rng(p.rng, pj.at("rng").get<std::string>());
    p.batches_done = pj.at("batches_done").get<std::size_t>();
    p.loss_trace = pj.at("loss_trace").get<std::vector<double>>();
    p.self_pairs_per_batch = pj.at("self_pairs_per_batch").get<std::vector<std::size_t>>();
    p.sent = pj.at("sent").get<std::size_t>();
    p.received = pj.at("received").get<std::size_t>();
    p.self_seeded = pj.at("self_seeded").get<std::size_t>();
    p.trained_pairs = pj.at("trained_pairs").get<std::size_t>();
    p.discarded = pj.at("discarded").get<std::size_t>();
    engine.peers.push_back(std::move(p));
  }
  return engine;
}

}  // namespace dedsi
