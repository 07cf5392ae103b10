#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dedsi/common.hpp"

namespace dedsi {

using Json = nlohmann::json;

enum class IdMode { orcas, magnet };

inline std::string to_string(IdMode m) { return m == IdMode::orcas ? "orcas" : "magnet"; }

inline IdMode id_mode_from_string(const std::string& s) {
  if (s == "orcas" || s == "docid") return IdMode::orcas;
  if (s == "magnet") return IdMode::magnet;
  throw Error(concat("unknown id mode '", s, "'"));
}

struct QueryDocPair {
  std::string query;
  std::string docid;

  friend bool operator==(const QueryDocPair&, const QueryDocPair&) = default;
  friend auto operator<=>(const QueryDocPair&, const QueryDocPair&) = default;
};

struct Document {
  std::string id;
  std::vector<std::string> queries;  // order of first appearance, no duplicates
};

struct CorpusManifest {
  std::string source;
  std::uint64_t seed = 0;
  std::map<std::string, std::int64_t> filters;
  std::vector<std::pair<std::string, std::string>> magnet_mapping;  // old -> new, corpus order
  std::string magnet_mapping_path;
};

struct Corpus {
  std::vector<Document> docs;
  IdMode id_mode = IdMode::orcas;
  CorpusManifest manifest;

  std::size_t num_pairs() const {
    std::size_t n = 0;
    for (const auto& d : docs) n += d.queries.size();
    return n;
  }

  std::vector<QueryDocPair> pairs() const {
    std::vector<QueryDocPair> out;
    out.reserve(num_pairs());
    for (const auto& d : docs)
      for (const auto& q : d.queries) out.push_back({q, d.id});
    return out;
  }

  std::vector<std::string> doc_ids() const {
    std::vector<std::string> ids;
    ids.reserve(docs.size());
    for (const auto& d : docs) ids.push_back(d.id);
    return ids;
  }

  /// Sorted distinct characters over all docids.
  std::string id_alphabet() const {
    std::set<char> chars;
    for (const auto& d : docs) chars.insert(d.id.begin(), d.id.end());
    return {chars.begin(), chars.end()};
  }

  /// Groups pairs by docid in order of first appearance, dropping repeated pairs.
  static Corpus from_pairs(const std::vector<QueryDocPair>& pairs, IdMode mode = IdMode::orcas) {
    Corpus c;
    c.id_mode = mode;
    std::unordered_map<std::string, std::size_t> index;
    std::unordered_set<std::string> seen;
    for (const auto& p : pairs) {
      auto [it, fresh] = index.try_emplace(p.docid, c.docs.size());
      if (fresh) c.docs.push_back({p.docid, {}});
      if (seen.insert(p.docid + '\t' + p.query).second) c.docs[it->second].queries.push_back(p.query);
    }
    return c;
  }
};

struct SplitSpec {
  std::size_t train_per_doc = 20;
  std::size_t val_per_doc = 20;
  std::size_t test_per_doc = 20;

  std::size_t total() const { return train_per_doc + val_per_doc + test_per_doc; }
};

struct Splits {
  std::vector<QueryDocPair> train;
  std::vector<QueryDocPair> val;
  std::vector<QueryDocPair> test;
};

struct Shard {
  int shard_id = 0;
  std::vector<std::string> doc_ids;  // sorted
  std::vector<QueryDocPair> pairs;

  bool contains(const std::string& docid) const {
    return std::binary_search(doc_ids.begin(), doc_ids.end(), docid);
  }
};

struct PersonalDataset {
  std::vector<std::string> doc_ids;  // sorted
  std::vector<QueryDocPair> pairs;
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Trim, collapse internal whitespace runs to one space, lowercase ASCII.
inline std::string normalize_query(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline bool valid_docid(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isgraph(c) != 0; });
}

inline bool is_magnet_id(std::string_view id) {
  return id.size() == 40 &&
         std::all_of(id.begin(), id.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct IngestOptions {
  std::optional<std::size_t> max_docs;  // only the first max_docs distinct docids are tracked
  std::size_t min_queries_per_doc = 1;
  double max_malformed_fraction = 0.01;
};

struct IngestReport {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> messages;  // first few malformed-row diagnostics
};

/// Parses one TSV row. Accepts `query \t docid` and `qid \t query \t docid \t url`.
inline std::optional<QueryDocPair> parse_tsv_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  std::string_view q, d;
  if (cols.size() == 2) {
    q = cols[0];
    d = cols[1];
  } else if (cols.size() == 4) {
    q = cols[1];
    d = cols[2];
  } else {
    return std::nullopt;
  }
  QueryDocPair p{normalize_query(q), trim(d)};
  if (p.query.empty() || !valid_docid(p.docid)) return std::nullopt;
  return p;
}

inline Corpus ingest_orcas(std::istream& in, const IngestOptions& opt, IngestReport* report = nullptr,
                           const std::string& source = "<stream>") {
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep = {};

  Corpus corpus;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::unordered_set<std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    ++rep.rows;
    auto pair = parse_tsv_row(line);
    if (!pair) {
      ++rep.malformed;
      if (rep.messages.size() < 20) rep.messages.push_back(concat(source, ":", lineno, ": malformed row skipped"));
      continue;
    }
    auto it = index.find(pair->docid);
    if (it == index.end()) {
      if (opt.max_docs && corpus.docs.size() >= *opt.max_docs) continue;
      it = index.emplace(pair->docid, corpus.docs.size()).first;
      corpus.docs.push_back({pair->docid, {}});
      seen.emplace_back();
    }
    if (seen[it->second].insert(pair->query).second) {
      corpus.docs[it->second].queries.push_back(std::move(pair->query));
    } else {
      ++rep.duplicates;
    }
  }
  if (rep.rows > 0 && static_cast<double>(rep.malformed) > opt.max_malformed_fraction * static_cast<double>(rep.rows)) {
    throw Error(concat(source, ": ", rep.malformed, " of ", rep.rows, " rows malformed (limit ",
                       opt.max_malformed_fraction * 100.0, "%)"));
  }
  std::erase_if(corpus.docs, [&](const Document& d) { return d.queries.size() < opt.min_queries_per_doc; });

  corpus.manifest.source = source;
  corpus.manifest.filters["min_queries_per_doc"] = static_cast<std::int64_t>(opt.min_queries_per_doc);
  if (opt.max_docs) corpus.manifest.filters["max_docs"] = static_cast<std::int64_t>(*opt.max_docs);
  return corpus;
}

inline Corpus ingest_orcas(const std::filesystem::path& path, const IngestOptions& opt, IngestReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(concat("cannot read '", path.string(), "'"));
  return ingest_orcas(in, opt, report, path.string());
}

// ---------------------------------------------------------------------------
// Selection and splitting
// ---------------------------------------------------------------------------

/// Seeded uniform sample of n_docs documents having at least min_queries queries;
/// each kept document is truncated to its first min_queries queries. Kept
/// documents retain corpus order.
inline Corpus select_documents(const Corpus& corpus, std::size_t n_docs, std::size_t min_queries, std::uint64_t seed) {
  std::vector<std::size_t> qualifying;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i)
    if (corpus.docs[i].queries.size() >= min_queries) qualifying.push_back(i);
  if (qualifying.size() < n_docs) {
    throw Error(concat("select_documents: requested ", n_docs, " documents with >= ", min_queries,
                       " queries but only ", qualifying.size(), " available"));
  }
  Rng rng(derive_seed(seed, "select_documents"));
  auto picks = sample_without_replacement(rng, qualifying.size(), n_docs);
  std::vector<std::size_t> chosen;
  chosen.reserve(n_docs);
  for (auto p : picks) chosen.push_back(qualifying[p]);
  std::sort(chosen.begin(), chosen.end());

  Corpus out;
  out.id_mode = corpus.id_mode;
  out.manifest = corpus.manifest;
  out.manifest.seed = seed;
  out.manifest.filters["n_docs"] = static_cast<std::int64_t>(n_docs);
  out.manifest.filters["min_queries"] = static_cast<std::int64_t>(min_queries);
  for (auto i : chosen) {
    Document d = corpus.docs[i];
    d.queries.resize(min_queries);
    out.docs.push_back(std::move(d));
  }
  return out;
}

inline Splits make_splits(const Corpus& corpus, const SplitSpec& spec) {
  Splits s;
  for (const auto& d : corpus.docs) {
    if (d.queries.size() < spec.total()) {
      throw Error(concat("make_splits: document ", d.id, " has ", d.queries.size(), " queries, split needs ",
                         spec.total()));
    }
    std::size_t i = 0;
    for (; i < spec.train_per_doc; ++i) s.train.push_back({d.queries[i], d.id});
    for (; i < spec.train_per_doc + spec.val_per_doc; ++i) s.val.push_back({d.queries[i], d.id});
    for (; i < spec.total(); ++i) s.test.push_back({d.queries[i], d.id});
  }
  return s;
}

/// First n training pairs of every document, preserving input order.
inline std::vector<QueryDocPair> first_n_queries(const std::vector<QueryDocPair>& train, std::size_t n) {
  if (n == 0) throw Error("first_n_queries: n must be >= 1");
  std::unordered_map<std::string, std::size_t> available;
  for (const auto& p : train) ++available[p.docid];
  for (const auto& [doc, count] : available) {
    if (count < n) throw Error(concat("first_n_queries: document ", doc, " has only ", count, " training queries, n=", n));
  }
  std::unordered_map<std::string, std::size_t> taken;
  std::vector<QueryDocPair> out;
  for (const auto& p : train) {
    if (taken[p.docid]++ < n) out.push_back(p);
  }
  return out;
}

inline std::vector<QueryDocPair> restrict_to(const std::vector<QueryDocPair>& pairs,
                                             const std::vector<std::string>& sorted_doc_ids) {
  std::vector<QueryDocPair> out;
  for (const auto& p : pairs)
    if (std::binary_search(sorted_doc_ids.begin(), sorted_doc_ids.end(), p.docid)) out.push_back(p);
  return out;
}

/// Seeded shuffle of documents dealt round-robin into num_shards disjoint shards.
inline std::vector<Shard> partition_shards(const Corpus& corpus, std::size_t num_shards, std::uint64_t seed) {
  if (num_shards == 0) throw Error("partition_shards: num_shards must be >= 1");
  if (num_shards > corpus.docs.size()) {
    throw Error(concat("partition_shards: ", num_shards, " shards requested for ", corpus.docs.size(), " documents"));
  }
  std::vector<std::size_t> order(corpus.docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "partition_shards"));
  shuffle(order, rng);

  std::vector<std::vector<std::size_t>> members(num_shards);
  for (std::size_t i = 0; i < order.size(); ++i) members[i % num_shards].push_back(order[i]);

  std::vector<Shard> shards(num_shards);
  for (std::size_t s = 0; s < num_shards; ++s) {
    auto& m = members[s];
    std::sort(m.begin(), m.end());
    shards[s].shard_id = static_cast<int>(s);
    for (auto i : m) {
      shards[s].doc_ids.push_back(corpus.docs[i].id);
      for (const auto& q : corpus.docs[i].queries) shards[s].pairs.push_back({q, corpus.docs[i].id});
    }
    std::sort(shards[s].doc_ids.begin(), shards[s].doc_ids.end());
  }
  return shards;
}

inline PersonalDataset sample_personal_dataset(const Shard& shard, std::size_t min_docs, std::size_t max_docs,
                                               std::uint64_t seed) {
  if (min_docs > max_docs) throw Error(concat("sample_personal_dataset: min_docs ", min_docs, " > max_docs ", max_docs));
  if (max_docs > shard.doc_ids.size()) {
    throw Error(concat("sample_personal_dataset: max_docs ", max_docs, " exceeds shard size ", shard.doc_ids.size()));
  }
  Rng rng(derive_seed(seed, "sample_personal_dataset"));
  const auto k = static_cast<std::size_t>(uniform_between(rng, min_docs, max_docs));
  PersonalDataset out;
  for (auto i : sample_without_replacement(rng, shard.doc_ids.size(), k)) out.doc_ids.push_back(shard.doc_ids[i]);
  std::sort(out.doc_ids.begin(), out.doc_ids.end());
  out.pairs = restrict_to(shard.pairs, out.doc_ids);
  return out;
}

// ---------------------------------------------------------------------------
// Magnet identifiers
// ---------------------------------------------------------------------------

inline std::string random_infohash(Rng& rng) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(40, '0');
  for (std::size_t i = 0; i < 40; i += 16) {
    std::uint64_t bits = rng();
    for (std::size_t j = i; j < std::min<std::size_t>(i + 16, 40); ++j) {
      out[j] = digits[bits & 0xf];
      bits >>= 4;
    }
  }
  return out;
}

inline Corpus assign_magnet_links(const Corpus& corpus, std::uint64_t seed, int retry_budget = 16) {
  if (corpus.id_mode != IdMode::orcas) throw Error("assign_magnet_links: corpus is already in magnet mode");
  Rng rng(derive_seed(seed, "assign_magnet_links"));
  std::unordered_set<std::string> used;
  Corpus out = corpus;
  out.id_mode = IdMode::magnet;
  out.manifest.magnet_mapping.clear();
  for (auto& d : out.docs) {
    std::string id;
    int attempt = 0;
    do {
      if (attempt++ > retry_budget) throw Error("assign_magnet_links: identifier collision after retry budget");
      id = random_infohash(rng);
    } while (!used.insert(id).second);
    out.manifest.magnet_mapping.emplace_back(d.id, id);
    d.id = id;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string query_order_hash(const Document& d) {
  std::uint64_t h = kFnvOffset;
  for (const auto& q : d.queries) {
    h = fnv1a64(q, h);
    h = fnv1a64("\n", h);
  }
  return hex64(h);
}

/// Deterministic manifest; nlohmann::json objects keep keys sorted.
inline Json corpus_manifest(const Corpus& c) {
  Json docs = Json::array();
  for (const auto& d : c.docs) {
    docs.push_back({{"docid", d.id}, {"num_queries", d.queries.size()}, {"query_order_hash", query_order_hash(d)}});
  }
  Json filters = Json::object();
  for (const auto& [k, v] : c.manifest.filters) filters[k] = v;
  Json j = {
      {"source", c.manifest.source},
      {"seed", c.manifest.seed},
      {"filters", filters},
      {"id_mode", to_string(c.id_mode)},
      {"id_alphabet", c.id_alphabet()},
      {"num_docs", c.docs.size()},
      {"num_pairs", c.num_pairs()},
      {"docs", docs},
  };
  if (c.id_mode == IdMode::magnet) {
    Json mapping = Json::array();
    for (const auto& [from, to] : c.manifest.magnet_mapping) mapping.push_back({{"from", from}, {"to", to}});
    j["magnet_mapping"] = mapping;
    j["magnet_mapping_path"] = c.manifest.magnet_mapping_path;
  }
  return j;
}

inline void write_pairs_tsv(const std::filesystem::path& path, const std::vector<QueryDocPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(concat("cannot write '", path.string(), "'"));
  for (const auto& p : pairs) out << p.query << '\t' << p.docid << '\n';
  if (!out) throw Error(concat("write failed for '", path.string(), "'"));
}

inline std::vector<QueryDocPair> read_pairs_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(concat("cannot read '", path.string(), "'"));
  std::vector<QueryDocPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto p = parse_tsv_row(line);
    if (!p) throw Error(concat(path.string(), ":", lineno, ": malformed row"));
    out.push_back(std::move(*p));
  }
  return out;
}

inline void write_magnet_mapping(const std::filesystem::path& path, const Corpus& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(concat("cannot write '", path.string(), "'"));
  for (const auto& [from, to] : c.manifest.magnet_mapping) out << from << '\t' << to << '\n';
}

}  // namespace dedsi
