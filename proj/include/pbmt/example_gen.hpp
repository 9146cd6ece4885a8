#ifndef PBMT_EXAMPLE_GEN_HPP
#define PBMT_EXAMPLE_GEN_HPP

#include <optional>
#include <ostream>

#include "pbmt/classifier.hpp"

namespace pbmt {

struct GoldTranslation {
  Span target_span;
  TargetContext context;  // the two reference words preceding target_span
};

namespace detail {

// Reference-side context for a target position: the two preceding words with
// the source words aligned to them under the sentence alignment.
inline TargetContext reference_context(const AlignedSentencePair& pair, int target_start) {
  TargetContext ctx = TargetContext::start();
  for (int off = 2; off >= 1; --off) {
    int pos = target_start - off;
    if (pos < 0) continue;
    std::vector<FactoredWord> aligned;
    for (const AlignmentLink& l : pair.alignment.links)
      if (l.tgt == pos) aligned.push_back(pair.source.words[l.src]);
    ctx.push(pair.target.words[pos], std::move(aligned));
  }
  return ctx;
}

}  // namespace detail

// The minimal alignment-consistent target span for a source span, with the
// reference context preceding it. Returns nothing when the span has no links
// or some covered target word is aligned outside the span.
inline std::optional<GoldTranslation> gold_translation(const AlignedSentencePair& pair,
                                                       Span source_span) {
  int tmin = (int)pair.target.size(), tmax = -1;
  for (const AlignmentLink& l : pair.alignment.links) {
    if (l.src >= source_span.start && l.src <= source_span.end) {
      tmin = std::min(tmin, l.tgt);
      tmax = std::max(tmax, l.tgt);
    }
  }
  if (tmax < 0) return std::nullopt;
  for (const AlignmentLink& l : pair.alignment.links)
    if (l.tgt >= tmin && l.tgt <= tmax && (l.src < source_span.start || l.src > source_span.end))
      return std::nullopt;
  GoldTranslation gold;
  gold.target_span = {tmin, tmax};
  gold.context = detail::reference_context(pair, tmin);
  return gold;
}

struct ExampleGenStats {
  long emitted = 0;
  long skipped_no_gold = 0;       // no consistent target span
  long skipped_gold_missing = 0;  // gold phrase not among the candidates
  long skipped_leave_one_out = 0; // a decremented count reached zero
};

namespace detail {

inline bool phrase_equals(const std::vector<FactoredWord>& phrase, const Sentence& sent,
                          Span span) {
  if ((int)phrase.size() != span.length()) return false;
  for (int i = 0; i < span.length(); ++i)
    if (!(phrase[i] == sent.words[span.start + i])) return false;
  return true;
}

// Candidate index of the gold phrase. The minimal span is preferred; when it
// is not in the candidate list, spans grown over unaligned boundary words are
// tried in order of total extension, left extensions first.
inline std::optional<std::pair<int, Span>> match_gold(const AlignedSentencePair& pair,
                                                      Span minimal,
                                                      const std::vector<TranslationOption>& cands) {
  std::vector<char> aligned(pair.target.size(), 0);
  for (const AlignmentLink& l : pair.alignment.links) aligned[l.tgt] = 1;
  std::vector<Span> spans;
  for (int ts = minimal.start; ts >= 0 && (ts == minimal.start || !aligned[ts]); --ts)
    for (int te = minimal.end; te < (int)pair.target.size() && (te == minimal.end || !aligned[te]);
         ++te)
      spans.push_back({ts, te});
  std::stable_sort(spans.begin(), spans.end(), [&](const Span& a, const Span& b) {
    if (a.length() != b.length()) return a.length() < b.length();
    return a.start < b.start;
  });
  for (const Span& span : spans) {
    for (size_t i = 0; i < cands.size(); ++i)
      if (phrase_equals(cands[i].target_phrase, pair.target, span))
        return std::make_pair((int)i, span);
  }
  return std::nullopt;
}

}  // namespace detail

// Training examples for every distinct source span of `pair` whose gold
// translation is among the table candidates. With leave_one_out set, the
// current occurrence is subtracted from the gold source, target and pair
// counts first, and the span is skipped when a count reaches zero; use it
// whenever the table was built from the corpus the examples come from.
inline std::vector<TrainingExample> generate_examples(const AlignedSentencePair& pair,
                                                      const PhraseTable& table,
                                                      const FeatureConfig& cfg, int max_len,
                                                      bool leave_one_out,
                                                      ExampleGenStats* stats = nullptr) {
  std::vector<TrainingExample> out;
  ExampleGenStats local;
  ExampleGenStats& st = stats ? *stats : local;
  const int n = (int)pair.source.size();
  for (int start = 0; start < n; ++start) {
    for (int len = 1; len <= max_len && start + len <= n; ++len) {
      Span span{start, start + len - 1};
      auto gold = gold_translation(pair, span);
      if (!gold) {
        ++st.skipped_no_gold;
        continue;
      }
      const std::vector<TranslationOption>& cands = table.lookup(pair.source, span);
      if (cands.empty()) {
        ++st.skipped_gold_missing;
        continue;
      }
      auto match = detail::match_gold(pair, gold->target_span, cands);
      if (!match) {
        ++st.skipped_gold_missing;
        continue;
      }
      const auto [gold_idx, gold_span] = *match;
      if (leave_one_out) {
        const TranslationOption& gold_opt = cands[gold_idx];
        long src_count = table.source_count(source_phrase_key(pair.source, span));
        long tgt_count = table.target_count(target_phrase_key(gold_opt.target_phrase));
        if (gold_opt.pair_count - 1 <= 0 || src_count - 1 <= 0 || tgt_count - 1 <= 0) {
          ++st.skipped_leave_one_out;
          continue;
        }
      }
      TrainingExample ex;
      ex.shared_src = extract_source_shared(pair.source, span, cfg);
      TargetContext ctx =
          gold_span.start == gold->target_span.start
              ? gold->context
              : detail::reference_context(pair, gold_span.start);
      ex.shared_tgt = extract_target_shared(ctx, cfg);
      ex.gold_index = gold_idx;
      ex.candidates.reserve(cands.size());
      for (size_t i = 0; i < cands.size(); ++i) {
        ex.candidates.push_back(extract_translation(cands[i], cfg));
        ex.losses.push_back((int)i == gold_idx ? 0 : 1);
      }
      out.push_back(std::move(ex));
      ++st.emitted;
    }
  }
  return out;
}

inline long write_examples(const std::vector<TrainingExample>& examples, std::ostream& out) {
  for (const TrainingExample& ex : examples) write_example(out, ex);
  return (long)examples.size();
}

inline long write_examples(const std::vector<TrainingExample>& examples, const std::string& path) {
  std::ofstream out = open_output(path);
  long n = write_examples(examples, out);
  if (!out) throw std::runtime_error("failed writing examples to " + path);
  return n;
}

}  // namespace pbmt

#endif  // PBMT_EXAMPLE_GEN_HPP
