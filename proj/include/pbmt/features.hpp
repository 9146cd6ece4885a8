#ifndef PBMT_FEATURES_HPP
#define PBMT_FEATURES_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbmt/phrases.hpp"

namespace pbmt {

// Feature namespaces. Shared features are split into a source-dependent and a
// target-dependent half so the classifier score decomposes into a part that
// can be fixed before search and a part that depends on the search state.
// The enum value doubles as the namespace byte mixed into the hash.
enum class FeatureNamespace : char {
  SharedSource = 's',
  SharedTarget = 'g',
  Translation = 't',
};

struct Feature {
  std::string key;
  double value = 1.0;
};

// Pre-hash features: canonical keys within one namespace.
struct FeatureList {
  FeatureNamespace ns = FeatureNamespace::Translation;
  std::vector<Feature> items;
};

struct HashedFeature {
  uint32_t index = 0;
  double value = 1.0;
};

// Hashed features, sorted by index. Colliding indices stay as separate items;
// they accumulate when dotted with the weight vector.
struct FeatureSet {
  FeatureNamespace ns = FeatureNamespace::Translation;
  std::vector<HashedFeature> items;
};

// `template ^ letters ^ offset ^ v1 ~ v2 ~ ...`; the letters and offset parts
// are omitted when absent. Separator characters inside values become '_'.
inline std::string canonical_key(std::string_view template_id, std::string_view factor_letters,
                                 std::optional<int> offset, std::span<const std::string> values) {
  std::string key(template_id);
  if (!factor_letters.empty()) {
    key += '^';
    key += factor_letters;
  }
  if (offset) {
    key += '^';
    key += std::to_string(*offset);
  }
  key += '^';
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) key += '~';
    for (char c : values[i]) key += (c == '^' || c == '~') ? '_' : c;
  }
  return key;
}

inline uint32_t hash_feature(FeatureNamespace ns, std::string_view key, int hash_bits) {
  uint64_t h = fnv1a64_byte((unsigned char)ns);
  h = fnv1a64(key, h);
  return (uint32_t)(h & ((1ull << hash_bits) - 1));
}

inline FeatureSet hash_features(const FeatureList& list, int hash_bits) {
  FeatureSet set;
  set.ns = list.ns;
  set.items.reserve(list.items.size());
  for (const Feature& f : list.items)
    set.items.push_back({hash_feature(list.ns, f.key, hash_bits), f.value});
  std::stable_sort(set.items.begin(), set.items.end(),
                   [](const HashedFeature& a, const HashedFeature& b) { return a.index < b.index; });
  return set;
}

// Cartesian product of a shared namespace with the translation namespace.
// Exactly |shared| x |translation| output features; the pair of indices is
// mixed with the splitmix64 finalizer.
inline FeatureSet cross(const FeatureSet& shared, const FeatureSet& translation, int hash_bits) {
  FeatureSet out;
  out.ns = FeatureNamespace::Translation;
  out.items.reserve(shared.items.size() * translation.items.size());
  for (const HashedFeature& s : shared.items) {
    for (const HashedFeature& t : translation.items) {
      uint64_t mixed = mix64(((uint64_t)s.index << 32) | (uint64_t)t.index);
      out.items.push_back({(uint32_t)(mixed & ((1ull << hash_bits) - 1)), s.value * t.value});
    }
  }
  std::stable_sort(out.items.begin(), out.items.end(),
                   [](const HashedFeature& a, const HashedFeature& b) { return a.index < b.index; });
  return out;
}

// -------------------------------------------------------------------------
// Feature templates

struct FeatureConfig {
  struct Entry {
    std::string combo;  // factor letters, e.g. "lt"
    int size = 0;       // context window where applicable
  };
  struct BilingualEntry {
    std::string target_combo;
    std::string source_combo;
    int size = 2;
  };

  std::vector<Entry> source_indicator;
  std::vector<Entry> source_internal;
  std::vector<Entry> source_context;   // size = window on each side of the phrase
  std::vector<Entry> target_context;   // size = number of preceding words, <= 2
  std::vector<BilingualEntry> bilingual_context;
  std::vector<Entry> target_indicator;
  std::vector<Entry> target_internal;

  bool has_target_side() const { return !target_context.empty() || !bilingual_context.empty(); }

  static FeatureConfig parse(const std::vector<std::string>& lines);
  static FeatureConfig load(const std::string& path) { return parse(read_lines(path)); }

  std::string canonical() const;
  uint64_t fingerprint() const { return fnv1a64(canonical()); }
};

namespace detail {

inline std::string normalize_combo(std::string combo, Side side) {
  std::string out;
  for (char c : combo) {
    if (c == '+') continue;
    factor_index(c, side);  // validates
    out += c;
  }
  if (out.empty()) throw std::runtime_error("empty factor combination");
  return out;
}

// Selected factor values of one word, in combo order.
inline void append_factors(std::vector<std::string>& values, const FactoredWord& word,
                           const std::string& combo, Side side) {
  for (char c : combo) values.push_back(word.factors[factor_index(c, side)]);
}

}  // namespace detail

inline FeatureConfig FeatureConfig::parse(const std::vector<std::string>& lines) {
  FeatureConfig cfg;
  long lineno = 0;
  for (const std::string& raw : lines) {
    ++lineno;
    std::string line = strip(raw);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols = split_ws(line);
    const std::string& tmpl = cols[0];
    auto need = [&](size_t n) {
      if (cols.size() != n)
        throw std::runtime_error("feature config line " + std::to_string(lineno) + ": '" + tmpl +
                                 "' expects " + std::to_string(n - 1) + " arguments");
    };
    if (tmpl == "source_indicator" || tmpl == "source_internal") {
      need(2);
      Entry e{detail::normalize_combo(cols[1], Side::Source), 0};
      (tmpl == "source_indicator" ? cfg.source_indicator : cfg.source_internal).push_back(e);
    } else if (tmpl == "source_context") {
      need(3);
      Entry e{detail::normalize_combo(cols[1], Side::Source),
              (int)parse_long(cols[2], "context size")};
      if (e.size < 1) throw std::runtime_error("source_context size must be >= 1");
      cfg.source_context.push_back(e);
    } else if (tmpl == "target_context") {
      Entry e;
      if (cols.size() == 2) {
        e = {detail::normalize_combo(cols[1], Side::Target), 2};
      } else {
        need(3);
        e = {detail::normalize_combo(cols[1], Side::Target), (int)parse_long(cols[2], "context size")};
      }
      if (e.size < 1 || e.size > 2)
        throw std::runtime_error("target_context size must be 1 or 2");
      cfg.target_context.push_back(e);
    } else if (tmpl == "bilingual_context") {
      BilingualEntry e;
      std::vector<std::string> combos = split_on(cols[1], '/');
      if (combos.size() != 2)
        throw std::runtime_error("bilingual_context combo must look like lt/lt");
      e.target_combo = detail::normalize_combo(combos[0], Side::Target);
      e.source_combo = detail::normalize_combo(combos[1], Side::Source);
      e.size = cols.size() >= 3 ? (int)parse_long(cols[2], "context size") : 2;
      if (e.size < 1 || e.size > 2)
        throw std::runtime_error("bilingual_context size must be 1 or 2");
      cfg.bilingual_context.push_back(e);
    } else if (tmpl == "target_indicator" || tmpl == "target_internal") {
      need(2);
      Entry e{detail::normalize_combo(cols[1], Side::Target), 0};
      (tmpl == "target_indicator" ? cfg.target_indicator : cfg.target_internal).push_back(e);
    } else {
      throw std::runtime_error("unknown feature template '" + tmpl + "'");
    }
  }
  return cfg;
}

inline std::string FeatureConfig::canonical() const {
  std::string out;
  for (const Entry& e : source_indicator) out += "source_indicator " + e.combo + "\n";
  for (const Entry& e : source_internal) out += "source_internal " + e.combo + "\n";
  for (const Entry& e : source_context)
    out += "source_context " + e.combo + " " + std::to_string(e.size) + "\n";
  for (const Entry& e : target_context)
    out += "target_context " + e.combo + " " + std::to_string(e.size) + "\n";
  for (const BilingualEntry& e : bilingual_context)
    out += "bilingual_context " + e.target_combo + "/" + e.source_combo + " " +
           std::to_string(e.size) + "\n";
  for (const Entry& e : target_indicator) out += "target_indicator " + e.combo + "\n";
  for (const Entry& e : target_internal) out += "target_internal " + e.combo + "\n";
  return out;
}

// -------------------------------------------------------------------------
// Shared source features: indicator and internal features of the phrase span
// plus a context window anchored at the span boundaries. Positions beyond the
// sentence use <s> / </s> values.

inline FeatureList extract_source_shared(const Sentence& sentence, Span span,
                                         const FeatureConfig& cfg) {
  FeatureList out;
  out.ns = FeatureNamespace::SharedSource;
  const FactoredWord bos = FactoredWord::filled(Side::Source, kSentStart);
  const FactoredWord eos = FactoredWord::filled(Side::Source, kSentEnd);

  for (const FeatureConfig::Entry& e : cfg.source_indicator) {
    std::vector<std::string> values;
    for (int i = span.start; i <= span.end; ++i)
      detail::append_factors(values, sentence.words[i], e.combo, Side::Source);
    out.items.push_back({canonical_key("sind", e.combo, std::nullopt, values)});
  }
  for (const FeatureConfig::Entry& e : cfg.source_internal) {
    for (int i = span.start; i <= span.end; ++i) {
      std::vector<std::string> values;
      detail::append_factors(values, sentence.words[i], e.combo, Side::Source);
      out.items.push_back({canonical_key("sint", e.combo, std::nullopt, values)});
    }
  }
  for (const FeatureConfig::Entry& e : cfg.source_context) {
    for (int off = -e.size; off <= e.size; ++off) {
      if (off == 0) continue;
      int pos = off < 0 ? span.start + off : span.end + off;
      const FactoredWord& w =
          pos < 0 ? bos : (pos >= (int)sentence.size() ? eos : sentence.words[pos]);
      std::vector<std::string> values;
      detail::append_factors(values, w, e.combo, Side::Source);
      out.items.push_back({canonical_key("sctx", e.combo, off, values)});
    }
  }
  return out;
}

// -------------------------------------------------------------------------
// Shared target features read the two preceding target words and, for the
// bilingual templates, the source words aligned to them.

struct ContextWord {
  FactoredWord word;
  std::vector<FactoredWord> aligned_source;  // in source order; may be empty
  bool operator==(const ContextWord& o) const {
    return word == o.word && aligned_source == o.aligned_source;
  }
};

struct TargetContext {
  // words[0] is the immediately preceding word (offset -1), words[1] is -2.
  std::array<ContextWord, 2> words;

  static TargetContext start() {
    TargetContext ctx;
    ctx.words[0].word = FactoredWord::filled(Side::Target, kSentStart);
    ctx.words[1].word = FactoredWord::filled(Side::Target, kSentStart);
    return ctx;
  }

  // Shift in a newly produced word.
  void push(FactoredWord word, std::vector<FactoredWord> aligned) {
    words[1] = std::move(words[0]);
    words[0] = ContextWord{std::move(word), std::move(aligned)};
  }

  bool operator==(const TargetContext& o) const { return words == o.words; }
};

inline FeatureList extract_target_shared(const TargetContext& ctx, const FeatureConfig& cfg) {
  FeatureList out;
  out.ns = FeatureNamespace::SharedTarget;
  for (const FeatureConfig::Entry& e : cfg.target_context) {
    for (int off = 1; off <= e.size; ++off) {
      std::vector<std::string> values;
      detail::append_factors(values, ctx.words[off - 1].word, e.combo, Side::Target);
      out.items.push_back({canonical_key("tctx", e.combo, -off, values)});
    }
  }
  for (const FeatureConfig::BilingualEntry& e : cfg.bilingual_context) {
    std::string letters = e.target_combo + e.source_combo;
    for (int off = 1; off <= e.size; ++off) {
      const ContextWord& cw = ctx.words[off - 1];
      if (cw.aligned_source.empty()) {
        std::vector<std::string> values;
        detail::append_factors(values, cw.word, e.target_combo, Side::Target);
        values.push_back("NULL");
        out.items.push_back({canonical_key("bctx", letters, -off, values)});
      } else {
        for (const FactoredWord& src : cw.aligned_source) {
          std::vector<std::string> values;
          detail::append_factors(values, cw.word, e.target_combo, Side::Target);
          detail::append_factors(values, src, e.source_combo, Side::Source);
          out.items.push_back({canonical_key("bctx", letters, -off, values)});
        }
      }
    }
  }
  return out;
}

// -------------------------------------------------------------------------
// Translation features describe one candidate target phrase: indicator and
// per-word internal features over its factors, plus one word-pair feature per
// internal alignment link so phrase-internal word translations share weights
// across phrase pairs.

inline FeatureList extract_translation(const TranslationOption& option, const FeatureConfig& cfg) {
  FeatureList out;
  out.ns = FeatureNamespace::Translation;
  for (const FeatureConfig::Entry& e : cfg.target_indicator) {
    std::vector<std::string> values;
    for (const FactoredWord& w : option.target_phrase)
      detail::append_factors(values, w, e.combo, Side::Target);
    out.items.push_back({canonical_key("tind", e.combo, std::nullopt, values)});
  }
  for (const FeatureConfig::Entry& e : cfg.target_internal) {
    for (const FactoredWord& w : option.target_phrase) {
      std::vector<std::string> values;
      detail::append_factors(values, w, e.combo, Side::Target);
      out.items.push_back({canonical_key("tint", e.combo, std::nullopt, values)});
    }
  }
  for (const AlignmentLink& l : option.internal_alignment.links) {
    std::vector<std::string> values{option.source_phrase[l.src].form(),
                                    option.target_phrase[l.tgt].lemma()};
    out.items.push_back({canonical_key("tpair", "", std::nullopt, values)});
  }
  return out;
}

}  // namespace pbmt

#endif  // PBMT_FEATURES_HPP
