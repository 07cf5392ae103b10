#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dedsi/model.hpp"

namespace dedsi {

/// A decoded identifier with the cumulative log-probability of its symbols.
/// The text may be a hallucination that names no real document.
struct BeamCandidate {
  std::string docid;
  double score = 0.0;

  friend bool operator==(const BeamCandidate&, const BeamCandidate&) = default;
};

struct SymbolHypothesis {
  std::vector<int> symbols;  // identifier symbols, boundary excluded
  double score = 0.0;
};

namespace detail {

inline bool hypothesis_before(const SymbolHypothesis& a, const SymbolHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.symbols < b.symbols;
}

}  // namespace detail

/// Length-bounded beam search over decoder symbols.
///
/// Each step expands every live hypothesis by every symbol, keeps the
/// beam_width best expansions overall, and retires the ones that chose the
/// boundary symbol. Hypotheses reaching max_len symbols retire without an
/// end symbol. The empty identifier is never produced. Scores are sums of
/// symbol log-probabilities with no length normalization. Ties are broken
/// by symbol sequence so the result is fully deterministic; with width 1
/// this is exactly greedy decoding.
template <SequenceModel M>
std::vector<SymbolHypothesis> beam_search_symbols(const M& model, const EncodedQuery& query, std::size_t beam_width,
                                                  std::size_t max_len) {
  if (beam_width == 0) throw Error("beam_search: beam_width must be >= 1");
  if (max_len == 0) throw Error("beam_search: max_len must be >= 1");

  struct Live {
    SymbolHypothesis hyp;
    typename M::State state;
  };
  struct Expansion {
    std::size_t parent;
    int symbol;
    SymbolHypothesis hyp;  // symbols include the new symbol, boundary included as 0
  };

  const auto num_symbols = static_cast<int>(model.id_symbols());
  std::vector<Live> live;
  live.push_back({{}, model.start(query)});
  std::vector<SymbolHypothesis> finished;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Expansion> expansions;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto lp = model.log_probs(live[i].state);
      for (int s = step == 0 ? 1 : 0; s < num_symbols; ++s) {
        Expansion e{i, s, live[i].hyp};
        e.hyp.symbols.push_back(s);
        e.hyp.score += lp[static_cast<std::size_t>(s)];
        expansions.push_back(std::move(e));
      }
    }
    const auto keep = std::min(beam_width, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep), expansions.end(),
                      [](const Expansion& a, const Expansion& b) { return detail::hypothesis_before(a.hyp, b.hyp); });

    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      auto& e = expansions[i];
      if (e.symbol == 0) {
        e.hyp.symbols.pop_back();
        finished.push_back(std::move(e.hyp));
      } else if (step + 1 == max_len) {
        finished.push_back(std::move(e.hyp));
      } else {
        next.push_back({std::move(e.hyp), model.advance(live[e.parent].state, e.symbol)});
      }
    }
    live = std::move(next);
  }

  std::sort(finished.begin(), finished.end(), detail::hypothesis_before);
  if (finished.size() > beam_width) finished.resize(beam_width);
  return finished;
}

/// Argmax decoding; the boundary symbol is disallowed at the first step.
template <SequenceModel M>
SymbolHypothesis greedy_symbols(const M& model, const EncodedQuery& query, std::size_t max_len) {
  if (max_len == 0) throw Error("greedy_decode: max_len must be >= 1");
  SymbolHypothesis out;
  auto state = model.start(query);
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = model.log_probs(state);
    int best = step == 0 ? 1 : 0;
    for (int s = best + 1; s < static_cast<int>(lp.size()); ++s)
      if (lp[static_cast<std::size_t>(s)] > lp[static_cast<std::size_t>(best)]) best = s;
    out.score += lp[static_cast<std::size_t>(best)];
    if (best == 0) break;
    out.symbols.push_back(best);
    if (step + 1 < max_len) state = model.advance(state, best);
  }
  return out;
}

template <RetrieverModel M>
std::vector<BeamCandidate> beam_search(const M& model, std::string_view query, std::size_t beam_width,
                                       std::size_t max_len) {
  const auto encoded = model.vocab().encode_query(query);
  std::vector<BeamCandidate> out;
  for (auto& h : beam_search_symbols(model, encoded, beam_width, max_len)) {
    out.push_back({model.vocab().decode_docid(h.symbols), h.score});
  }
  return out;
}

template <RetrieverModel M>
std::vector<BeamCandidate> beam_search(const M& model, std::string_view query, std::size_t beam_width) {
  return beam_search(model, query, beam_width, model.max_id_len());
}

template <RetrieverModel M>
std::string greedy_decode(const M& model, std::string_view query) {
  const auto encoded = model.vocab().encode_query(query);
  return model.vocab().decode_docid(greedy_symbols(model, encoded, model.max_id_len()).symbols);
}

}  // namespace dedsi
