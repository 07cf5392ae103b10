#pragma once

// Synthetic click-log generator with ORCAS-like shape. Each document owns a
// few private keywords and shares a few more with the documents of its topic
// cluster; queries are short bags of those keywords plus the odd filler word.
// Unseen test queries of a document therefore overlap its training queries
// only partially, which is what makes seen-query count matter.

#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dedsi/common.hpp"
#include "dedsi/corpus.hpp"

namespace dedsi {

struct SyntheticOptions {
  std::size_t num_docs = 60;
  std::size_t queries_per_doc = 60;
  std::size_t own_keywords = 5;
  std::size_t cluster_size = 4;
  std::size_t cluster_keywords = 3;
  std::size_t filler_words = 30;
  double filler_prob = 0.4;
  std::size_t min_terms = 2;
  std::size_t max_terms = 3;
  std::uint64_t seed = 1;
};

inline Json to_json(const SyntheticOptions& o) {
  return {{"num_docs", o.num_docs},         {"queries_per_doc", o.queries_per_doc},
          {"own_keywords", o.own_keywords}, {"cluster_size", o.cluster_size},
          {"cluster_keywords", o.cluster_keywords}, {"filler_words", o.filler_words},
          {"filler_prob", o.filler_prob},   {"min_terms", o.min_terms},
          {"max_terms", o.max_terms},       {"seed", o.seed}};
}

inline SyntheticOptions synthetic_options_from_json(const Json& j, SyntheticOptions o = {}) {
  o.num_docs = j.value("num_docs", o.num_docs);
  o.queries_per_doc = j.value("queries_per_doc", o.queries_per_doc);
  o.own_keywords = j.value("own_keywords", o.own_keywords);
  o.cluster_size = j.value("cluster_size", o.cluster_size);
  o.cluster_keywords = j.value("cluster_keywords", o.cluster_keywords);
  o.filler_words = j.value("filler_words", o.filler_words);
  o.filler_prob = j.value("filler_prob", o.filler_prob);
  o.min_terms = j.value("min_terms", o.min_terms);
  o.max_terms = j.value("max_terms", o.max_terms);
  o.seed = j.value("seed", o.seed);
  return o;
}

namespace detail {

inline std::string pronounceable_word(Rng& rng) {
  static constexpr std::string_view consonants = "bcdfghjklmnprstvwz";
  static constexpr std::string_view vowels = "aeiou";
  const auto syllables = uniform_between(rng, 2, 3);
  std::string w;
  for (std::uint64_t s = 0; s < syllables; ++s) {
    w.push_back(consonants[uniform_index(rng, consonants.size())]);
    w.push_back(vowels[uniform_index(rng, vowels.size())]);
  }
  if (uniform_index(rng, 2) == 0) w.push_back(consonants[uniform_index(rng, consonants.size())]);
  return w;
}

}  // namespace detail

inline Corpus synthesize_corpus(const SyntheticOptions& o) {
  if (o.num_docs == 0) throw Error("synthesize_corpus: num_docs must be >= 1");
  if (o.min_terms == 0 || o.min_terms > o.max_terms) throw Error("synthesize_corpus: bad term bounds");
  if (o.max_terms > o.own_keywords + o.cluster_keywords) throw Error("synthesize_corpus: max_terms exceeds keywords");
  if (o.cluster_size == 0) throw Error("synthesize_corpus: cluster_size must be >= 1");

  Rng rng(derive_seed(o.seed, "synthesize_corpus"));
  const std::size_t num_clusters = (o.num_docs + o.cluster_size - 1) / o.cluster_size;
  const std::size_t lexicon_size = o.num_docs * o.own_keywords + num_clusters * o.cluster_keywords + o.filler_words;

  std::set<std::string> used;
  std::vector<std::string> lexicon;
  while (lexicon.size() < lexicon_size) {
    auto w = detail::pronounceable_word(rng);
    if (used.insert(w).second) lexicon.push_back(std::move(w));
  }
  std::size_t cursor = 0;
  auto take = [&](std::size_t n) {
    std::vector<std::string> out(lexicon.begin() + static_cast<std::ptrdiff_t>(cursor),
                                 lexicon.begin() + static_cast<std::ptrdiff_t>(cursor + n));
    cursor += n;
    return out;
  };
  const auto fillers = take(o.filler_words);
  std::vector<std::vector<std::string>> cluster_terms;
  for (std::size_t c = 0; c < num_clusters; ++c) cluster_terms.push_back(take(o.cluster_keywords));

  Corpus corpus;
  corpus.manifest.source = "synthetic";
  corpus.manifest.seed = o.seed;
  std::set<std::string> ids;
  for (std::size_t d = 0; d < o.num_docs; ++d) {
    std::string id;
    do {
      id = "D" + std::to_string(1000000 + uniform_index(rng, 9000000));
    } while (!ids.insert(id).second);

    auto terms = take(o.own_keywords);
    const auto& shared = cluster_terms[d / o.cluster_size];
    terms.insert(terms.end(), shared.begin(), shared.end());

    Document doc{id, {}};
    std::set<std::string> seen;
    std::size_t attempts = 0;
    while (doc.queries.size() < o.queries_per_doc) {
      if (++attempts > 1000 * o.queries_per_doc + 1000) {
        throw Error(concat("synthesize_corpus: cannot draw ", o.queries_per_doc, " distinct queries per document"));
      }
      const auto m = static_cast<std::size_t>(uniform_between(rng, o.min_terms, o.max_terms));
      std::vector<std::string> words;
      for (auto i : sample_without_replacement(rng, terms.size(), m)) words.push_back(terms[i]);
      if (!fillers.empty() && uniform_real(rng) < o.filler_prob) {
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, words.size() + 1)),
                     fillers[uniform_index(rng, fillers.size())]);
      }
      std::string q;
      for (const auto& w : words) {
        if (!q.empty()) q.push_back(' ');
        q += w;
      }
      if (seen.insert(q).second) doc.queries.push_back(std::move(q));
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

/// Writes the corpus as raw 4-column ORCAS rows (qid, query, docid, url).
inline void write_orcas_tsv(std::ostream& out, const Corpus& c) {
  std::size_t qid = 1;
  for (const auto& d : c.docs) {
    for (const auto& q : d.queries) {
      out << qid++ << '\t' << q << '\t' << d.id << "\thttps://example.org/" << d.id << '\n';
    }
  }
}

}  // namespace dedsi
