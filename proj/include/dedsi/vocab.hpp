#pragma once

#include <algorithm>
#include <array>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dedsi/common.hpp"
#include "dedsi/corpus.hpp"

namespace dedsi {

/// Query tokens with pooling weights. Every word carries weight
/// 1/num_words; an out-of-vocabulary word spreads its weight evenly over
/// its character fallback tokens.
struct EncodedQuery {
  std::vector<int> tokens;
  std::vector<double> weights;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Query-side and identifier-side token tables.
///
/// Query side: four specials, then whole words, then single-character
/// fallback tokens (spelled "##c") used for out-of-vocabulary words.
/// Identifier side: one token per docid character. Decoder symbols are
/// 0 for the sequence boundary (BOS on input, EOS on output) and 1 + i for
/// the i-th character of the sorted identifier alphabet.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kBoundary = 0;

  Vocabulary() : Vocabulary(std::vector<std::string>{}, std::string{}) {}

  Vocabulary(const std::vector<std::string>& words_and_chars, std::string id_alphabet)
      : id_alphabet_(std::move(id_alphabet)) {
    query_tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    query_tokens_.insert(query_tokens_.end(), words_and_chars.begin(), words_and_chars.end());
    for (std::size_t i = 0; i < query_tokens_.size(); ++i) {
      if (!query_index_.emplace(query_tokens_[i], static_cast<int>(i)).second) {
        throw Error(concat("duplicate query token '", query_tokens_[i], "'"));
      }
    }
    id_index_.fill(-1);
    for (std::size_t i = 0; i < id_alphabet_.size(); ++i) {
      auto& slot = id_index_[static_cast<unsigned char>(id_alphabet_[i])];
      if (slot != -1) throw Error("duplicate identifier character");
      slot = static_cast<int>(i) + 1;
    }
  }

  std::size_t query_size() const { return query_tokens_.size(); }
  /// Decoder symbol count: boundary plus one per identifier character.
  std::size_t id_symbols() const { return id_alphabet_.size() + 1; }
  const std::string& id_alphabet() const { return id_alphabet_; }
  const std::vector<std::string>& query_tokens() const { return query_tokens_; }

  int query_index(const std::string& token) const {
    auto it = query_index_.find(token);
    return it == query_index_.end() ? kUnk : it->second;
  }

  EncodedQuery encode_query(std::string_view query) const {
    std::vector<std::vector<int>> words;
    std::size_t start = 0;
    while (start <= query.size()) {
      auto end = query.find(' ', start);
      if (end == std::string_view::npos) end = query.size();
      if (end > start) {
        std::string word(query.substr(start, end - start));
        auto it = query_index_.find(word);
        if (it != query_index_.end()) {
          words.push_back({it->second});
        } else {
          std::vector<int> chars;
          for (char c : word) chars.push_back(query_index(std::string("##") + c));
          words.push_back(std::move(chars));
        }
      }
      start = end + 1;
    }
    EncodedQuery out;
    if (words.empty()) {
      out.tokens.push_back(kUnk);
      out.weights.push_back(1.0);
      return out;
    }
    for (const auto& w : words) {
      const double weight = 1.0 / static_cast<double>(words.size() * w.size());
      for (int t : w) {
        out.tokens.push_back(t);
        out.weights.push_back(weight);
      }
    }
    return out;
  }

  bool can_encode_docid(std::string_view docid) const {
    return !docid.empty() && std::all_of(docid.begin(), docid.end(),
                                         [&](char c) { return id_index_[static_cast<unsigned char>(c)] != -1; });
  }

  std::vector<int> encode_docid(std::string_view docid) const {
    std::vector<int> out;
    out.reserve(docid.size());
    for (char c : docid) {
      int s = id_index_[static_cast<unsigned char>(c)];
      if (s == -1) throw Error(concat("identifier character '", c, "' not in vocabulary (docid ", docid, ")"));
      out.push_back(s);
    }
    return out;
  }

  std::string decode_docid(const std::vector<int>& symbols) const {
    std::string out;
    out.reserve(symbols.size());
    for (int s : symbols) {
      if (s <= 0 || static_cast<std::size_t>(s) > id_alphabet_.size()) throw Error("decode_docid: symbol out of range");
      out.push_back(id_alphabet_[static_cast<std::size_t>(s - 1)]);
    }
    return out;
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a64(id_alphabet_);
    for (const auto& t : query_tokens_) h = fnv1a64(t + '\x1f', h);
    return h;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_alphabet_ == b.id_alphabet_ && a.query_tokens_ == b.query_tokens_;
  }

 private:
  std::vector<std::string> query_tokens_;
  std::unordered_map<std::string, int> query_index_;
  std::string id_alphabet_;
  std::array<int, 256> id_index_{};
};

/// Query tokens come from `query_source`; identifier alphabet from `ids`.
inline Vocabulary build_vocab(const std::vector<QueryDocPair>& query_source, const Corpus& ids) {
  if (ids.docs.empty()) throw Error("build_vocab: empty corpus");
  std::set<std::string> words;
  std::set<char> chars;
  for (const auto& p : query_source) {
    std::size_t start = 0;
    while (start <= p.query.size()) {
      auto end = p.query.find(' ', start);
      if (end == std::string::npos) end = p.query.size();
      if (end > start) {
        auto w = p.query.substr(start, end - start);
        if (w != "<pad>" && w != "<bos>" && w != "<eos>" && w != "<unk>" && !w.starts_with("##")) words.insert(std::move(w));
      }
      start = end + 1;
    }
    for (char c : p.query)
      if (c != ' ') chars.insert(c);
  }
  std::vector<std::string> tokens(words.begin(), words.end());
  for (char c : chars) tokens.push_back(std::string("##") + c);
  return Vocabulary(tokens, ids.id_alphabet());
}

inline Vocabulary build_vocab(const Corpus& corpus) { return build_vocab(corpus.pairs(), corpus); }

inline Json to_json(const Vocabulary& v) {
  std::vector<std::string> tokens(v.query_tokens().begin() + 4, v.query_tokens().end());
  return {{"query_tokens", tokens}, {"id_alphabet", v.id_alphabet()}};
}

inline Vocabulary vocabulary_from_json(const Json& j) {
  return Vocabulary(j.at("query_tokens").get<std::vector<std::string>>(), j.at("id_alphabet").get<std::string>());
}

}  // namespace dedsi
