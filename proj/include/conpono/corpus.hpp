/* Copyright 2026 The conpono-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Text ingestion: sentence segmentation, tokenization, vocabulary, and the
// synthetic ordered corpus used for self-contained experiments.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "conpono/common.hpp"

namespace conpono {

using TokenId = std::int32_t;
using Sentence = std::vector<TokenId>;
using Paragraph = std::vector<Sentence>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kNumSpecials = 5;

inline bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

/// Discourse markers counted by the marker analysis and emitted as
/// connectives by the synthetic generator.
inline const std::array<std::string_view, 13> kDiscourseMarkers = {
    "but", "when", "if", "before", "because", "while", "though",
    "after", "so", "although", "then", "also", "still"};

// ---------------------------------------------------------------------------
// Segmentation and tokenization

inline const std::array<std::string_view, 9> kAbbreviations = {"dr.", "mr.", "mrs.", "ms.", "st.",
                                                               "vs.", "etc.", "e.g.", "i.e."};

namespace detail {
inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
inline bool is_punct(char c) {
  return static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c)) != 0;
}
inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}
}  // namespace detail

/// Splits on '.', '!' or '?' followed by whitespace (or end of text). A
/// period closing a guarded abbreviation does not end a sentence.
inline std::vector<std::string> segment_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::string_view piece = detail::trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!detail::is_terminal(text[i])) continue;
    const bool boundary = i + 1 == text.size() || detail::is_space(text[i + 1]);
    if (!boundary) continue;
    if (text[i] == '.') {
      std::size_t w = i;
      while (w > start && !detail::is_space(text[w - 1])) --w;
      const std::string word = detail::lower_ascii(text.substr(w, i + 1 - w));
      if (std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end()) continue;
    }
    emit(i + 1);
  }
  emit(text.size());
  return out;
}

/// Lowercased words; ASCII punctuation characters become single tokens.
inline std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(detail::lower_ascii(cur));
    cur.clear();
  };
  for (char c : sentence) {
    if (detail::is_space(c)) {
      flush();
    } else if (detail::is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Corpora

/// Paragraph-structured document whose sentences are surface tokens.
struct TextDocument {
  std::int64_t doc_id = 0;
  std::vector<std::vector<std::vector<std::string>>> paragraphs;

  friend bool operator==(const TextDocument&, const TextDocument&) = default;
};
using TextCorpus = std::vector<TextDocument>;

/// Paragraph-structured document of token ids.
struct Document {
  std::int64_t doc_id = 0;
  std::vector<Paragraph> paragraphs;

  friend bool operator==(const Document&, const Document&) = default;
};
using Corpus = std::vector<Document>;

/// Parses the plain-text corpus format: documents separated by a line that
/// is exactly "===", paragraphs by blank lines. Documents are numbered from
/// `first_doc_id` in input order; empty paragraphs and documents are dropped.
inline TextCorpus parse_text_corpus(std::string_view text, std::int64_t first_doc_id = 0) {
  TextCorpus corpus;
  TextDocument doc;
  std::string para;
  auto close_paragraph = [&] {
    std::vector<std::vector<std::string>> sents;
    for (const std::string& s : segment_sentences(para)) {
      auto toks = tokenize(s);
      if (!toks.empty()) sents.push_back(std::move(toks));
    }
    if (!sents.empty()) doc.paragraphs.push_back(std::move(sents));
    para.clear();
  };
  auto close_document = [&] {
    close_paragraph();
    if (!doc.paragraphs.empty()) {
      doc.doc_id = first_doc_id + static_cast<std::int64_t>(corpus.size());
      corpus.push_back(std::move(doc));
    }
    doc = TextDocument{};
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line == "===") {
      close_document();
    } else if (detail::trim(line).empty()) {
      close_paragraph();
    } else {
      if (!para.empty()) para.push_back(' ');
      para.append(line);
    }
    pos = nl + 1;
  }
  close_document();
  return corpus;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  Vocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"} {}

  /// Restores a vocabulary from its id-ordered token list.
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    if (tokens.size() < static_cast<std::size_t>(kNumSpecials))
      fail("vocabulary has ", tokens.size(), " tokens; the 5 specials are required");
    for (std::size_t i = 0; i < static_cast<std::size_t>(kNumSpecials); ++i)
      if (tokens[i] != v.tokens_[i]) fail("vocabulary id ", i, " must be ", v.tokens_[i], ", got ", tokens[i]);
    for (std::size_t i = static_cast<std::size_t>(kNumSpecials); i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

  void add(const std::string& token) {
    if (index_.contains(token)) fail("duplicate vocabulary token: ", token);
    index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(token);
  }

  nlohmann::json to_json() const { return {{"tokens", tokens_}}; }
  static Vocabulary from_json(const nlohmann::json& j) {
    if (!j.contains("tokens") || !j["tokens"].is_array()) fail("vocabulary JSON lacks a \"tokens\" array");
    return from_tokens(j["tokens"].get<std::vector<std::string>>());
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps the max_size - 5 most frequent tokens; equal counts are ordered
/// lexicographically.
inline Vocabulary build_vocab(const TextCorpus& corpus, std::size_t max_size) {
  if (max_size < 6) fail("vocabulary max_size must be >= 6, got ", max_size);
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& doc : corpus)
    for (const auto& para : doc.paragraphs)
      for (const auto& sent : para)
        for (const auto& tok : sent) ++counts[tok];
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary vocab;
  const std::size_t keep = std::min(ranked.size(), max_size - static_cast<std::size_t>(kNumSpecials));
  for (std::size_t i = 0; i < keep; ++i) vocab.add(ranked[i].first);
  return vocab;
}

/// Convenience overload over raw sentence strings.
inline Vocabulary build_vocab(const std::vector<std::string>& sentences, std::size_t max_size) {
  TextDocument doc;
  std::vector<std::vector<std::string>> para;
  for (const auto& s : sentences) para.push_back(tokenize(s));
  doc.paragraphs.push_back(std::move(para));
  return build_vocab(TextCorpus{doc}, max_size);
}

inline Sentence encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  Sentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.id(t));
  return out;
}

inline Sentence encode_sentence(std::string_view sentence, const Vocabulary& vocab) {
  return encode_tokens(tokenize(sentence), vocab);
}

inline Corpus encode_corpus(const TextCorpus& text, const Vocabulary& vocab) {
  Corpus out;
  out.reserve(text.size());
  for (const auto& td : text) {
    Document d{td.doc_id, {}};
    for (const auto& para : td.paragraphs) {
      Paragraph p;
      for (const auto& sent : para)
        if (!sent.empty()) p.push_back(encode_tokens(sent, vocab));
      if (!p.empty()) d.paragraphs.push_back(std::move(p));
    }
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t num_docs = 100;
  std::size_t paragraphs_per_doc = 4;
  std::size_t min_sentences = 6;
  std::size_t max_sentences = 20;
  std::int64_t first_doc_id = 0;
};

inline constexpr std::size_t kSyntheticTopics = 64;
inline constexpr std::size_t kSyntheticOrdinals = 32;
inline constexpr std::size_t kSyntheticFillers = 2000;
inline constexpr double kSyntheticConnectiveRate = 0.3;

inline std::string synthetic_topic(std::size_t i) { return "topic" + std::to_string(i); }
inline std::string synthetic_ordinal(std::size_t i) { return "ord" + std::to_string(i); }
inline std::string synthetic_filler(std::size_t i) { return "w" + std::to_string(i); }

/// Paragraphs whose sentences read [topic, ordinal, connective?, fillers...].
/// The ordinal walks a 32-token cycle from a random offset, so sentence order
/// and distances are recoverable from content alone.
inline TextCorpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.min_sentences < 6 || cfg.max_sentences > 20 || cfg.min_sentences > cfg.max_sentences)
    fail("sentences-per-paragraph range [", cfg.min_sentences, ",", cfg.max_sentences,
         "] must lie within [6, 20]");
  std::mt19937_64 rng(hash_seed({cfg.seed, 0x5e17ULL}));
  std::vector<double> zipf(kSyntheticFillers);
  for (std::size_t r = 0; r < zipf.size(); ++r) zipf[r] = 1.0 / static_cast<double>(r + 1);
  std::discrete_distribution<std::size_t> filler(zipf.begin(), zipf.end());
  std::uniform_int_distribution<std::size_t> topic(0, kSyntheticTopics - 1);
  std::uniform_int_distribution<std::size_t> offset(0, kSyntheticOrdinals - 1);
  std::uniform_int_distribution<std::size_t> length(cfg.min_sentences, cfg.max_sentences);
  std::uniform_int_distribution<std::size_t> filler_count(4, 8);
  std::uniform_int_distribution<std::size_t> marker(0, kDiscourseMarkers.size() - 1);
  std::bernoulli_distribution connective(kSyntheticConnectiveRate);

  TextCorpus corpus;
  for (std::size_t d = 0; d < cfg.num_docs; ++d) {
    TextDocument doc{cfg.first_doc_id + static_cast<std::int64_t>(d), {}};
    for (std::size_t p = 0; p < cfg.paragraphs_per_doc; ++p) {
      const std::string topic_tok = synthetic_topic(topic(rng));
      const std::size_t start = offset(rng);
      const std::size_t n = length(rng);
      std::vector<std::vector<std::string>> para;
      for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::string> sent{topic_tok, synthetic_ordinal((start + j) % kSyntheticOrdinals)};
        if (connective(rng)) sent.emplace_back(kDiscourseMarkers[marker(rng)]);
        const std::size_t nf = filler_count(rng);
        for (std::size_t f = 0; f < nf; ++f) sent.push_back(synthetic_filler(filler(rng)));
        para.push_back(std::move(sent));
      }
      doc.paragraphs.push_back(std::move(para));
    }
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

/// Ordinal index (0..31) carried by a synthetic sentence, or -1.
inline int synthetic_ordinal_of(const Sentence& sent, const Vocabulary& vocab) {
  for (TokenId id : sent) {
    if (is_special(id)) continue;
    const std::string& tok = vocab.token(id);
    if (tok.size() > 3 && tok.compare(0, 3, "ord") == 0) return std::stoi(tok.substr(3));
  }
  return -1;
}

/// Recovers the original position of each sentence of a synthetic paragraph
/// presented in any order: the chain start is the ordinal whose predecessor
/// is absent (paragraphs are shorter than the cycle).
inline std::vector<int> recover_sentence_positions(const std::vector<Sentence>& sentences, const Vocabulary& vocab) {
  const int cycle = static_cast<int>(kSyntheticOrdinals);
  std::vector<int> ords;
  std::vector<bool> present(kSyntheticOrdinals, false);
  for (const auto& s : sentences) {
    const int o = synthetic_ordinal_of(s, vocab);
    if (o < 0) fail("sentence carries no ordinal token");
    ords.push_back(o);
    present[static_cast<std::size_t>(o)] = true;
  }
  int start = -1;
  for (int o : ords)
    if (!present[static_cast<std::size_t>((o + cycle - 1) % cycle)]) start = o;
  if (start < 0) fail("ordinal chain has no start; paragraph spans the full cycle");
  std::vector<int> pos;
  for (int o : ords) pos.push_back((o - start + cycle) % cycle);
  return pos;
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
  std::size_t documents = 0;
  std::map<std::size_t, std::size_t> paragraph_lengths;  // sentences -> paragraphs
  std::vector<std::uint64_t> token_counts;                // indexed by id
  std::vector<std::string> tokens;                        // id -> surface form
  std::uint64_t total_tokens = 0;

  std::uint64_t count(std::string_view token) const {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == token) return token_counts[i];
    return 0;
  }
};

inline CorpusStats compute_stats(const Corpus& corpus, const Vocabulary& vocab) {
  CorpusStats s;
  s.documents = corpus.size();
  s.token_counts.assign(vocab.size(), 0);
  s.tokens = vocab.tokens();
  for (const auto& d : corpus)
    for (const auto& p : d.paragraphs) {
      ++s.paragraph_lengths[p.size()];
      for (const auto& sent : p)
        for (TokenId id : sent) {
          ++s.token_counts.at(static_cast<std::size_t>(id));
          ++s.total_tokens;
        }
    }
  return s;
}

inline nlohmann::json stats_to_json(const CorpusStats& s) {
  nlohmann::json hist = nlohmann::json::object();
  for (auto [len, n] : s.paragraph_lengths) hist[std::to_string(len)] = n;
  return {{"documents", s.documents},
          {"paragraph_length_histogram", hist},
          {"tokens", s.tokens},
          {"token_counts", s.token_counts},
          {"total_tokens", s.total_tokens}};
}

inline CorpusStats stats_from_json(const nlohmann::json& j) {
  CorpusStats s;
  try {
    s.documents = j.at("documents").get<std::size_t>();
    for (auto& [k, v] : j.at("paragraph_length_histogram").items())
      s.paragraph_lengths[std::stoul(k)] = v.get<std::size_t>();
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    s.token_counts = j.at("token_counts").get<std::vector<std::uint64_t>>();
    s.total_tokens = j.at("total_tokens").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail("malformed corpus stats: ", e.what());
  }
  if (s.tokens.size() != s.token_counts.size()) fail("corpus stats: tokens and token_counts differ in length");
  return s;
}

// ---------------------------------------------------------------------------
// JSON Lines

inline std::string text_corpus_to_jsonl(const TextCorpus& corpus) {
  std::string out;
  for (const auto& d : corpus) {
    nlohmann::json j = {{"doc_id", d.doc_id}, {"paragraphs", d.paragraphs}};
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus) {
    nlohmann::json j = {{"doc_id", d.doc_id}, {"paragraphs", d.paragraphs}};
    out += j.dump() + "\n";
  }
  return out;
}

namespace detail {
template <class F>
void for_each_jsonl(std::string_view text, F&& f) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail("JSON Lines parse error at line ", line_no, ": ", e.what());
    }
    f(j, line_no);
  }
}
}  // namespace detail

/// Whether the corpus file holds surface tokens rather than ids.
inline bool jsonl_corpus_is_text(std::string_view text) {
  bool is_text = false, decided = false;
  detail::for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t) {
    if (decided) return;
    for (const auto& p : j.at("paragraphs"))
      for (const auto& s : p)
        for (const auto& t : s) {
          is_text = t.is_string();
          decided = true;
          return;
        }
  });
  return is_text;
}

inline TextCorpus text_corpus_from_jsonl(std::string_view text) {
  TextCorpus out;
  detail::for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back({j.at("doc_id").get<std::int64_t>(),
                     j.at("paragraphs").get<std::vector<std::vector<std::vector<std::string>>>>()});
    } catch (const nlohmann::json::exception& e) {
      fail("corpus line ", line, ": ", e.what());
    }
  });
  return out;
}

inline Corpus corpus_from_jsonl(std::string_view text) {
  Corpus out;
  detail::for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back({j.at("doc_id").get<std::int64_t>(), j.at("paragraphs").get<std::vector<Paragraph>>()});
    } catch (const nlohmann::json::exception& e) {
      fail("corpus line ", line, ": ", e.what());
    }
  });
  return out;
}

}  // namespace conpono
