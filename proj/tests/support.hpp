#pragma once

// Mock models and brute-force oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dedsi/dedsi.hpp"

namespace dedsi::fixtures {

/// Sequence model whose next-symbol distribution is a seeded pseudo-random
/// function of the symbols emitted so far. Ignores the query.
class TableModel {
 public:
  using State = std::vector<int>;

  TableModel(std::size_t symbols, std::uint64_t seed) : symbols_(symbols), seed_(seed) {}

  std::size_t id_symbols() const { return symbols_; }
  State start(const EncodedQuery&) const { return {}; }
  State advance(const State& s, int symbol) const {
    State n = s;
    n.push_back(symbol);
    return n;
  }

  std::vector<double> log_probs(const State& s) const {
    std::uint64_t h = seed_;
    for (int x : s) h = splitmix64(h ^ static_cast<std::uint64_t>(x + 1));
    Rng rng(h);
    std::vector<double> logits(symbols_);
    for (auto& l : logits) l = 4.0 * uniform_real(rng) - 2.0;
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    for (auto& l : logits) l -= std::log(z);
    return logits;
  }

 private:
  std::size_t symbols_;
  std::uint64_t seed_;
};

/// Every identifier of length 1..max_len with its exact score: the sum of
/// symbol log-probabilities plus the end symbol when shorter than max_len.
/// Ranked by score, ties by symbol sequence.
template <SequenceModel M>
std::vector<SymbolHypothesis> enumerate_sequences(const M& model, std::size_t max_len) {
  std::vector<SymbolHypothesis> out;
  std::vector<std::pair<std::vector<int>, typename M::State>> frontier{{{}, model.start({})}};
  std::vector<double> prefix_score{0.0};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::pair<std::vector<int>, typename M::State>> next;
    std::vector<double> next_score;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto lp = model.log_probs(frontier[i].second);
      for (int s = 1; s < static_cast<int>(model.id_symbols()); ++s) {
        auto seq = frontier[i].first;
        seq.push_back(s);
        const double score = prefix_score[i] + lp[static_cast<std::size_t>(s)];
        auto state = model.advance(frontier[i].second, s);
        if (len < max_len) {
          out.push_back({seq, score + model.log_probs(state)[0]});
        } else {
          out.push_back({seq, score});
        }
        next.emplace_back(std::move(seq), std::move(state));
        next_score.push_back(score);
      }
    }
    frontier = std::move(next);
    prefix_score = std::move(next_score);
  }
  std::sort(out.begin(), out.end(), [](const SymbolHypothesis& a, const SymbolHypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.symbols < b.symbols;
  });
  return out;
}

/// Random beam outputs over a small docid pool so models collide on docids.
/// Scores are quantized now and then to produce exact ties.
inline std::vector<ModelResult> random_model_results(Rng& rng, std::size_t min_models = 2, std::size_t max_models = 10,
                                                     std::size_t max_candidates = 5) {
  const auto models = static_cast<std::size_t>(uniform_between(rng, min_models, max_models));
  const std::size_t pool = 3 + uniform_index(rng, 12);
  const bool quantize = uniform_index(rng, 4) == 0;
  std::vector<ModelResult> out;
  for (std::size_t m = 0; m < models; ++m) {
    const auto n = static_cast<std::size_t>(uniform_between(rng, 1, std::min(max_candidates, pool)));
    ModelResult r{{static_cast<int>(m % 3), static_cast<int>(m)}, {}};
    for (auto i : sample_without_replacement(rng, pool, n)) {
      double score = -12.0 * uniform_real(rng);
      if (quantize) score = std::round(score);
      r.candidates.push_back({"doc" + std::to_string(i), score});
    }
    std::sort(r.candidates.begin(), r.candidates.end(),
              [](const BeamCandidate& a, const BeamCandidate& b) { return a.score > b.score; });
    out.push_back(std::move(r));
  }
  return out;
}

/// Softmax written out directly, for the oracles below.
inline std::vector<double> oracle_softmax(const std::vector<BeamCandidate>& c) {
  double mx = -INFINITY;
  for (const auto& x : c) mx = std::max(mx, x.score);
  std::vector<double> p;
  double z = 0.0;
  for (const auto& x : c) {
    p.push_back(std::exp(x.score - mx));
    z += p.back();
  }
  for (auto& x : p) x /= z;
  return p;
}

struct OracleDoc {
  std::string docid;
  double score;
};

/// Pools every (docid, prob) entry, then either keeps the max or sums per
/// docid by scanning the whole pool, and fully sorts before truncating.
inline std::vector<OracleDoc> oracle_merge(const std::vector<ModelResult>& results, std::size_t k, bool summed) {
  std::vector<OracleDoc> pooled;
  for (const auto& r : results) {
    const auto p = oracle_softmax(r.candidates);
    for (std::size_t i = 0; i < p.size(); ++i) pooled.push_back({r.candidates[i].docid, p[i]});
  }
  std::vector<OracleDoc> merged;
  for (const auto& e : pooled) {
    if (std::any_of(merged.begin(), merged.end(), [&](const OracleDoc& m) { return m.docid == e.docid; })) continue;
    double v = summed ? 0.0 : -1.0;
    for (const auto& f : pooled) {
      if (f.docid != e.docid) continue;
      v = summed ? v + f.score : std::max(v, f.score);
    }
    merged.push_back({e.docid, v});
  }
  std::sort(merged.begin(), merged.end(), [](const OracleDoc& a, const OracleDoc& b) {
    return a.score != b.score ? a.score > b.score : a.docid < b.docid;
  });
  if (merged.size() > k) merged.resize(k);
  return merged;
}

inline bool same_ranking(const EnsembleResult& got, const std::vector<OracleDoc>& want) {
  if (got.ranked.size() != want.size()) return false;
  for (std::size_t i = 0; i < want.size(); ++i)
    if (got.ranked[i].docid != want[i].docid || got.ranked[i].score != want[i].score) return false;
  return true;
}

/// Small random corpus: docids "D" + digits, 1..max_queries distinct queries each.
inline Corpus random_corpus(Rng& rng, std::size_t max_docs = 30, std::size_t max_queries = 12) {
  const auto n = static_cast<std::size_t>(uniform_between(rng, 1, max_docs));
  std::vector<QueryDocPair> pairs;
  for (std::size_t d = 0; d < n; ++d) {
    const auto q = static_cast<std::size_t>(uniform_between(rng, 1, max_queries));
    for (std::size_t i = 0; i < q; ++i) pairs.push_back({concat("q", d, "x", i), concat("D", 1000 + d)});
  }
  shuffle(pairs, rng);
  return Corpus::from_pairs(pairs);
}

/// Synthetic options for quick model tests.
inline SyntheticOptions small_synthetic(std::size_t docs, std::size_t queries, std::uint64_t seed) {
  SyntheticOptions o;
  o.num_docs = docs;
  o.queries_per_doc = queries;
  o.seed = seed;
  return o;
}

}  // namespace dedsi::fixtures
