#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dedsi/beam.hpp"
#include "dedsi/corpus.hpp"

namespace dedsi {

struct ResultSource {
  int shard_id = 0;
  int peer_id = -1;

  friend bool operator==(const ResultSource&, const ResultSource&) = default;
};

struct ModelResult {
  ResultSource source;
  std::vector<BeamCandidate> candidates;  // raw scores, non-increasing
};

struct NormalizedCandidate {
  std::string docid;
  double prob = 0.0;
  ResultSource source;
};

struct RankedDoc {
  std::string docid;
  double score = 0.0;
  ResultSource source;  // the contributing model with the largest probability
};

struct EnsembleResult {
  std::string query;
  std::size_t k = 0;
  std::vector<RankedDoc> ranked;  // distinct docids, scores non-increasing
};

/// Softmax over one model's raw beam scores, with the maximum subtracted
/// before exponentiation. Candidate order is preserved.
inline std::vector<NormalizedCandidate> softmax_normalize(const ModelResult& result) {
  if (result.candidates.empty()) throw Error("softmax_normalize: empty candidate list");
  double mx = result.candidates.front().score;
  for (const auto& c : result.candidates) mx = std::max(mx, c.score);
  std::vector<double> e;
  e.reserve(result.candidates.size());
  double z = 0.0;
  for (const auto& c : result.candidates) {
    e.push_back(std::exp(c.score - mx));
    z += e.back();
  }
  std::vector<NormalizedCandidate> out;
  out.reserve(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out.push_back({result.candidates[i].docid, e[i] / z, result.source});
  return out;
}

namespace detail {

inline void rank_and_truncate(std::vector<RankedDoc>& docs, std::size_t k) {
  std::sort(docs.begin(), docs.end(), [](const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.docid < b.docid;
  });
  if (docs.size() > k) docs.resize(k);
}

}  // namespace detail

/// Pools every model's normalized candidates, keeps the highest probability
/// per docid, and returns the k best (ties by ascending docid).
inline EnsembleResult merge_across_shards(const std::vector<ModelResult>& results, std::size_t k,
                                          std::string query = {}) {
  if (results.empty()) throw Error("merge_across_shards: no model results");
  if (k == 0) throw Error("merge_across_shards: k must be >= 1");
  std::map<std::string, RankedDoc> best;
  for (const auto& r : results) {
    for (auto& c : softmax_normalize(r)) {
      auto [it, fresh] = best.try_emplace(c.docid, RankedDoc{c.docid, c.prob, c.source});
      if (!fresh && c.prob > it->second.score) it->second = {c.docid, c.prob, c.source};
    }
  }
  EnsembleResult out{std::move(query), k, {}};
  for (auto& [_, d] : best) out.ranked.push_back(std::move(d));
  detail::rank_and_truncate(out.ranked, k);
  return out;
}

/// Sums each docid's normalized probability over all models (absent = 0),
/// then returns the k best. Selection happens only after summing.
inline EnsembleResult merge_summed(const std::vector<ModelResult>& results, std::size_t k, std::string query = {}) {
  if (results.empty()) throw Error("merge_summed: no model results");
  if (k == 0) throw Error("merge_summed: k must be >= 1");
  struct Acc {
    double sum = 0.0;
    double top = -1.0;
    ResultSource source;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : results) {
    for (const auto& c : softmax_normalize(r)) {
      auto& a = acc[c.docid];
      a.sum += c.prob;
      if (c.prob > a.top) {
        a.top = c.prob;
        a.source = c.source;
      }
    }
  }
  EnsembleResult out{std::move(query), k, {}};
  for (const auto& [docid, a] : acc) out.ranked.push_back({docid, a.sum, a.source});
  detail::rank_and_truncate(out.ranked, k);
  return out;
}

inline Json to_json(const ResultSource& s) { return {{"shard", s.shard_id}, {"peer", s.peer_id}}; }

inline Json to_json(const EnsembleResult& r) {
  Json ranked = Json::array();
  for (const auto& d : r.ranked) ranked.push_back({{"docid", d.docid}, {"score", d.score}, {"source", to_json(d.source)}});
  return {{"query", r.query}, {"k", r.k}, {"ranked", ranked}};
}

inline EnsembleResult ensemble_result_from_json(const Json& j) {
  EnsembleResult r{j.at("query").get<std::string>(), j.at("k").get<std::size_t>(), {}};
  for (const auto& d : j.at("ranked")) {
    const auto& s = d.at("source");
    r.ranked.push_back({d.at("docid").get<std::string>(), d.at("score").get<double>(),
                        {s.at("shard").get<int>(), s.at("peer").get<int>()}});
  }
  return r;
}

/// Beam-search output of one model wrapped as a ModelResult.
template <RetrieverModel M>
ModelResult model_result(const M& model, std::string_view query, std::size_t beam_width, ResultSource source) {
  return {source, beam_search(model, query, beam_width)};
}

}  // namespace dedsi
