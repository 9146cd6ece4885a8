#ifndef PBMT_CORPUS_HPP
#define PBMT_CORPUS_HPP

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbmt/util.hpp"

namespace pbmt {

// Token annotation layers. Source tokens carry form|lemma|tag|afun|parent,
// target tokens form|lemma|tag.
enum class Side { Source, Target };

constexpr const char* kSentStart = "<s>";
constexpr const char* kSentEnd = "</s>";

constexpr int kSourceFactorCount = 5;
constexpr int kTargetFactorCount = 3;

inline int factor_count(Side side) {
  return side == Side::Source ? kSourceFactorCount : kTargetFactorCount;
}

// Index of a factor letter within a side's schema. Letters: f(orm), l(emma),
// t(ag), a(nalytical function), p(arent lemma); the last two are source-only.
inline int factor_index(char letter, Side side) {
  switch (letter) {
    case 'f': return 0;
    case 'l': return 1;
    case 't': return 2;
    case 'a': if (side == Side::Source) return 3; break;
    case 'p': if (side == Side::Source) return 4; break;
    default: break;
  }
  throw std::runtime_error(std::string("invalid factor letter '") + letter + "' for " +
                           (side == Side::Source ? "source" : "target") + " side");
}

struct FactoredWord {
  std::vector<std::string> factors;

  const std::string& form() const { return factors[0]; }
  const std::string& lemma() const { return factors[1]; }
  const std::string& tag() const { return factors[2]; }

  bool operator==(const FactoredWord& o) const { return factors == o.factors; }

  std::string to_string() const { return join(factors, "|"); }

  // The <s>, </s> and OOV padding words set every factor to the same marker.
  static FactoredWord filled(Side side, const std::string& marker) {
    FactoredWord w;
    w.factors.assign(factor_count(side), marker);
    return w;
  }
};

struct Sentence {
  Side side = Side::Source;
  std::vector<FactoredWord> words;

  size_t size() const { return words.size(); }
  bool empty() const { return words.empty(); }
  const FactoredWord& operator[](size_t i) const { return words[i]; }
};

struct AlignmentLink {
  int src = 0;
  int tgt = 0;
  friend bool operator==(const AlignmentLink& a, const AlignmentLink& b) {
    return a.src == b.src && a.tgt == b.tgt;
  }
  friend bool operator<(const AlignmentLink& a, const AlignmentLink& b) {
    return a.src != b.src ? a.src < b.src : a.tgt < b.tgt;
  }
};

// Word alignment links, kept sorted and de-duplicated.
struct AlignmentSet {
  std::vector<AlignmentLink> links;

  void add(int s, int t) {
    AlignmentLink l{s, t};
    auto it = std::lower_bound(links.begin(), links.end(), l);
    if (it == links.end() || !(*it == l)) links.insert(it, l);
  }

  bool empty() const { return links.empty(); }
  size_t size() const { return links.size(); }

  bool operator==(const AlignmentSet& o) const { return links == o.links; }
  bool operator<(const AlignmentSet& o) const { return links < o.links; }
};

struct AlignedSentencePair {
  Sentence source;
  Sentence target;
  AlignmentSet alignment;
};

inline void validate_factor(const std::string& factor, Side side, size_t token_index) {
  if (factor.empty())
    throw std::runtime_error("empty factor at token " + std::to_string(token_index));
  for (char c : factor) {
    if (c == '|' || c == ' ' || c == '\t')
      throw std::runtime_error("factor contains separator or whitespace at token " +
                               std::to_string(token_index));
  }
  (void)side;
}

inline Sentence parse_factored_sentence(std::string_view line, Side side) {
  std::vector<std::string> tokens = split_ws(line);
  if (tokens.empty()) throw std::runtime_error("empty sentence");
  Sentence sent;
  sent.side = side;
  sent.words.reserve(tokens.size());
  const int want = factor_count(side);
  for (size_t i = 0; i < tokens.size(); ++i) {
    std::vector<std::string> factors = split_on(tokens[i], '|');
    if ((int)factors.size() != want)
      throw std::runtime_error("expected " + std::to_string(want) + " factors, got " +
                               std::to_string(factors.size()) + " at token " + std::to_string(i));
    for (const std::string& f : factors) validate_factor(f, side, i);
    sent.words.push_back(FactoredWord{std::move(factors)});
  }
  return sent;
}

inline std::string format_factored_sentence(const Sentence& sent) {
  std::string out;
  for (size_t i = 0; i < sent.words.size(); ++i) {
    if (i) out += ' ';
    out += sent.words[i].to_string();
  }
  return out;
}

inline AlignmentSet parse_alignment(std::string_view line, int src_len, int tgt_len) {
  AlignmentSet set;
  for (const std::string& tok : split_ws(line)) {
    size_t dash = tok.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == tok.size())
      throw std::runtime_error("malformed alignment pair '" + tok + "'");
    long s = parse_long(std::string_view(tok).substr(0, dash), "alignment source index");
    long t = parse_long(std::string_view(tok).substr(dash + 1), "alignment target index");
    if (s < 0 || s >= src_len || t < 0 || t >= tgt_len)
      throw std::runtime_error("alignment link " + tok + " out of range for " +
                               std::to_string(src_len) + "x" + std::to_string(tgt_len) +
                               " sentence pair");
    set.add((int)s, (int)t);
  }
  return set;
}

inline std::string format_alignment(const AlignmentSet& set) {
  std::string out;
  for (size_t i = 0; i < set.links.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(set.links[i].src) + "-" + std::to_string(set.links[i].tgt);
  }
  return out;
}

// Streams line-aligned (source, target, alignment) triples. Line counts are
// checked as the files are consumed; a mismatch reports the first line that
// exists on one side but not the other.
class ParallelCorpusReader {
 public:
  ParallelCorpusReader(const std::string& src_path, const std::string& tgt_path,
                       const std::string& align_path)
      : src_(open_input(src_path)), tgt_(open_input(tgt_path)), align_(open_input(align_path)) {}

  std::optional<AlignedSentencePair> next() {
    std::string src_line, tgt_line, align_line;
    bool got_src = static_cast<bool>(std::getline(src_, src_line));
    bool got_tgt = static_cast<bool>(std::getline(tgt_, tgt_line));
    bool got_align = static_cast<bool>(std::getline(align_, align_line));
    ++line_;
    if (!got_src && !got_tgt && !got_align) return std::nullopt;
    if (!(got_src && got_tgt && got_align))
      throw std::runtime_error("corpus line-count mismatch at line " + std::to_string(line_));
    AlignedSentencePair pair;
    try {
      pair.source = parse_factored_sentence(chomp(src_line), Side::Source);
      pair.target = parse_factored_sentence(chomp(tgt_line), Side::Target);
      pair.alignment =
          parse_alignment(chomp(align_line), (int)pair.source.size(), (int)pair.target.size());
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_) + ": " + e.what());
    }
    return pair;
  }

 private:
  static std::string chomp(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }
  std::ifstream src_, tgt_, align_;
  long line_ = 0;
};

inline std::vector<AlignedSentencePair> load_parallel_corpus(const std::string& src_path,
                                                             const std::string& tgt_path,
                                                             const std::string& align_path) {
  ParallelCorpusReader reader(src_path, tgt_path, align_path);
  std::vector<AlignedSentencePair> pairs;
  while (auto pair = reader.next()) pairs.push_back(std::move(*pair));
  return pairs;
}

}  // namespace pbmt

#endif  // PBMT_CORPUS_HPP
