#ifndef PBMT_DECODER_HPP
#define PBMT_DECODER_HPP

#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <unordered_map>

#include "pbmt/classifier.hpp"
#include "pbmt/lm.hpp"

namespace pbmt {

struct DecoderWeights {
  double tm_fwd = 1.0;         // log p(target phrase | source phrase)
  double tm_rev = 1.0;         // log p(source phrase | target phrase)
  double lm = 1.0;             // log10 language model score
  double word_penalty = 1.0;   // feature value -1 per produced word
  double phrase_penalty = 1.0; // feature value +1 per applied option
  double distortion = -1.0;    // feature value |start - end_of_last - 1|
  double classifier = 1.0;     // log of the normalized classifier probability

  static DecoderWeights load(const std::string& path) {
    DecoderWeights w;
    long lineno = 0;
    for (const std::string& line : read_lines(path)) {
      ++lineno;
      if (strip(line).empty()) continue;
      std::vector<std::string> cols = split_on(line, '\t');
      if (cols.size() != 2)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected feature_name<TAB>weight");
      double v = parse_double(cols[1], "weight");
      if (cols[0] == "tm_fwd") w.tm_fwd = v;
      else if (cols[0] == "tm_rev") w.tm_rev = v;
      else if (cols[0] == "lm") w.lm = v;
      else if (cols[0] == "word_penalty") w.word_penalty = v;
      else if (cols[0] == "phrase_penalty") w.phrase_penalty = v;
      else if (cols[0] == "distortion") w.distortion = v;
      else if (cols[0] == "classifier") w.classifier = v;
      else throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                    ": unknown feature '" + cols[0] + "'");
    }
    return w;
  }
};

struct FeatureBreakdown {
  double tm_fwd = 0, tm_rev = 0, lm = 0, word_penalty = 0, phrase_penalty = 0, distortion = 0,
         classifier = 0;

  double dot(const DecoderWeights& w) const {
    return w.tm_fwd * tm_fwd + w.tm_rev * tm_rev + w.lm * lm + w.word_penalty * word_penalty +
           w.phrase_penalty * phrase_penalty + w.distortion * distortion +
           w.classifier * classifier;
  }
};

struct DecoderConfig {
  int beam = 100;
  int distortion_limit = 6;  // negative = unlimited
  bool use_caches = true;
  bool oov_copy = true;      // copy unknown single words through
};

struct CacheStats {
  long result_hits = 0;
  long result_misses = 0;
  long state_hits = 0;
  long state_misses = 0;
  long extraction_calls = 0;  // feature-extraction invocations
  long options_scored = 0;    // per-option dot products
  long evaluate_calls = 0;
};

// -------------------------------------------------------------------------
// Search state: the classifier context (two preceding target words with
// their aligned source words) plus the LM context. Recombination and all
// classifier caches key on this.

struct DecoderState {
  TargetContext context;
  LMState lm;
  uint64_t digest = 0;

  bool operator==(const DecoderState& o) const {
    return digest == o.digest && context == o.context && lm == o.lm;
  }
};

namespace detail {

inline uint64_t state_digest(const TargetContext& ctx, const LMState& lm) {
  uint64_t h = kFnvOffset;
  for (const ContextWord& cw : ctx.words) {
    for (const std::string& f : cw.word.factors) {
      h = fnv1a64(f, h);
      h = fnv1a64_byte(0x1, h);
    }
    for (const FactoredWord& a : cw.aligned_source) {
      for (const std::string& f : a.factors) {
        h = fnv1a64(f, h);
        h = fnv1a64_byte(0x2, h);
      }
      h = fnv1a64_byte(0x3, h);
    }
    h = fnv1a64_byte(0x4, h);
  }
  for (const std::string& w : lm.words) {
    h = fnv1a64(w, h);
    h = fnv1a64_byte(0x5, h);
  }
  return h;
}

}  // namespace detail

inline DecoderState make_state(TargetContext ctx, LMState lm) {
  DecoderState s;
  s.digest = detail::state_digest(ctx, lm);
  s.context = std::move(ctx);
  s.lm = std::move(lm);
  return s;
}

inline DecoderState initial_state(const NGramModel& lm) {
  return make_state(TargetContext::start(), lm_start_state(lm));
}

// -------------------------------------------------------------------------
// Translation options of one sentence, gathered per span.

struct SpanOptions {
  Span span;
  std::vector<const TranslationOption*> options;
};

struct PreparedSentence {
  const Sentence* sentence = nullptr;
  std::vector<SpanOptions> spans;            // spans that have any options
  std::vector<std::vector<int>> span_index;  // [start][len-1] -> index into spans, or -1
  std::deque<TranslationOption> oov_storage;
};

inline PreparedSentence collect_options(const Sentence& sentence, const PhraseTable& table,
                                        bool oov_copy) {
  PreparedSentence prep;
  prep.sentence = &sentence;
  const int n = (int)sentence.size();
  const int max_len = std::max(1, table.max_source_length());
  prep.span_index.assign(n, std::vector<int>(std::min(max_len, n), -1));
  for (int start = 0; start < n; ++start) {
    for (int len = 1; len <= max_len && start + len <= n; ++len) {
      Span span{start, start + len - 1};
      const std::vector<TranslationOption>& found = table.lookup(sentence, span);
      SpanOptions so;
      so.span = span;
      for (const TranslationOption& opt : found) so.options.push_back(&opt);
      if (so.options.empty() && len == 1 && oov_copy) {
        // Unknown word: copy it through with zero cost.
        TranslationOption oov;
        oov.source_phrase = {sentence.words[start]};
        oov.target_phrase = {FactoredWord{{sentence.words[start].factors[0],
                                           sentence.words[start].factors[1],
                                           sentence.words[start].factors[2]}}};
        oov.pair_count = 1;
        prep.oov_storage.push_back(std::move(oov));
        so.options.push_back(&prep.oov_storage.back());
      }
      if (!so.options.empty()) {
        prep.span_index[start][len - 1] = (int)prep.spans.size();
        prep.spans.push_back(std::move(so));
      }
    }
  }
  return prep;
}

// -------------------------------------------------------------------------
// Classifier evaluation during search. In caching mode this implements the
// layered scheme: translation feature hashes and the source-dependent part of
// every option score are fixed up front; target-context feature hashes are
// extracted once per distinct state; normalized distributions are stored per
// (span, state) so every other option of the span, and any revisit of the
// state, is a lookup. Naive mode recomputes everything on every call and
// must produce identical values.

class ClassifierEvaluator {
 public:
  ClassifierEvaluator(const PreparedSentence& prep, const LinearModel& model,
                      const FeatureConfig& cfg, bool use_caches)
      : prep_(prep), model_(model), cfg_(cfg), caching_(use_caches) {
    if (caching_) precompute();
  }

  // log of the normalized probability of option opt_idx within its span.
  double evaluate(int span_idx, int opt_idx, const DecoderState& state) {
    ++stats_.evaluate_calls;
    if ((size_t)span_idx >= prep_.spans.size() ||
        (size_t)opt_idx >= prep_.spans[span_idx].options.size())
      throw std::logic_error("classifier evaluation for unknown span/option");
    if (!caching_) return evaluate_naive(span_idx, state)[opt_idx];
    return distribution(span_idx, state)[opt_idx];
  }

  // Normalized log-probabilities of all options of a span given the state.
  const std::vector<double>& distribution(int span_idx, const DecoderState& state) {
    if (!caching_) {
      naive_scratch_ = evaluate_naive(span_idx, state);
      return naive_scratch_;
    }
    ResultKey key{span_idx, state.digest};
    auto it = results_.find(key);
    if (it != results_.end()) {
      ++stats_.result_hits;
      return it->second;
    }
    ++stats_.result_misses;
    const FeatureSet& s_tgt = state_features(state);
    const SpanData& sd = span_data_[span_idx];
    std::vector<double> scores(sd.t_hashed.size());
    for (size_t o = 0; o < sd.t_hashed.size(); ++o) {
      scores[o] = sd.src_partial[o] +
                  detail::dot(model_.weights,
                              detail::tgt_part_items(s_tgt, sd.t_hashed[o], model_.hash_bits));
      ++stats_.options_scored;
    }
    return results_.emplace(key, log_normalize(std::move(scores))).first->second;
  }

  const CacheStats& stats() const { return stats_; }

 private:
  struct SpanData {
    FeatureSet s_src;
    std::vector<FeatureSet> t_hashed;
    std::vector<double> src_partial;
  };

  struct ResultKey {
    int span = 0;
    uint64_t state_digest = 0;
    bool operator==(const ResultKey& o) const {
      return span == o.span && state_digest == o.state_digest;
    }
  };
  struct ResultKeyHash {
    size_t operator()(const ResultKey& k) const {
      return (size_t)mix64(k.state_digest ^ ((uint64_t)k.span << 1));
    }
  };

  static std::vector<double> log_normalize(std::vector<double> scores) {
    std::vector<double> probs = softmax(scores);
    for (size_t i = 0; i < probs.size(); ++i) scores[i] = std::log(probs[i]);
    return scores;
  }

  void precompute() {
    span_data_.resize(prep_.spans.size());
    for (size_t s = 0; s < prep_.spans.size(); ++s) {
      const SpanOptions& so = prep_.spans[s];
      SpanData& sd = span_data_[s];
      ++stats_.extraction_calls;
      sd.s_src = hash_features(extract_source_shared(*prep_.sentence, so.span, cfg_),
                               model_.hash_bits);
      sd.t_hashed.reserve(so.options.size());
      sd.src_partial.reserve(so.options.size());
      for (const TranslationOption* opt : so.options) {
        ++stats_.extraction_calls;
        FeatureSet t = hash_features(extract_translation(*opt, cfg_), model_.hash_bits);
        sd.src_partial.push_back(detail::dot(
            model_.weights, detail::src_part_items(sd.s_src, t, model_.hash_bits)));
        sd.t_hashed.push_back(std::move(t));
      }
    }
  }

  const FeatureSet& state_features(const DecoderState& state) {
    auto it = state_cache_.find(state.digest);
    if (it != state_cache_.end()) {
      ++stats_.state_hits;
      return it->second;
    }
    ++stats_.state_misses;
    ++stats_.extraction_calls;
    FeatureSet s_tgt = hash_features(extract_target_shared(state.context, cfg_), model_.hash_bits);
    return state_cache_.emplace(state.digest, std::move(s_tgt)).first->second;
  }

  std::vector<double> evaluate_naive(int span_idx, const DecoderState& state) {
    const SpanOptions& so = prep_.spans[span_idx];
    ++stats_.extraction_calls;
    FeatureSet s_tgt = hash_features(extract_target_shared(state.context, cfg_), model_.hash_bits);
    ++stats_.extraction_calls;
    FeatureSet s_src =
        hash_features(extract_source_shared(*prep_.sentence, so.span, cfg_), model_.hash_bits);
    std::vector<double> scores(so.options.size());
    for (size_t o = 0; o < so.options.size(); ++o) {
      ++stats_.extraction_calls;
      FeatureSet t = hash_features(extract_translation(*so.options[o], cfg_), model_.hash_bits);
      scores[o] =
          detail::dot(model_.weights, detail::src_part_items(s_src, t, model_.hash_bits)) +
          detail::dot(model_.weights, detail::tgt_part_items(s_tgt, t, model_.hash_bits));
      ++stats_.options_scored;
    }
    return log_normalize(std::move(scores));
  }

  const PreparedSentence& prep_;
  const LinearModel& model_;
  const FeatureConfig& cfg_;
  bool caching_;
  std::vector<SpanData> span_data_;
  std::unordered_map<uint64_t, FeatureSet> state_cache_;
  std::unordered_map<ResultKey, std::vector<double>, ResultKeyHash> results_;
  std::vector<double> naive_scratch_;
  CacheStats stats_;
};

// -------------------------------------------------------------------------
// Rest-cost table over spans: best option estimate (phrase features plus a
// context-free LM estimate), combined by dynamic programming over partitions.
// The classifier feature and distortion are left out of the estimate.

inline std::vector<std::vector<double>> future_costs(const PreparedSentence& prep,
                                                     const NGramModel& lm,
                                                     const DecoderWeights& weights) {
  const int n = (int)prep.sentence->size();
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> fc(n, std::vector<double>(n, ninf));
  for (const SpanOptions& so : prep.spans) {
    double best = ninf;
    for (const TranslationOption* opt : so.options) {
      std::vector<std::string> forms;
      forms.reserve(opt->target_phrase.size());
      double lm_est = 0.0;
      for (const FactoredWord& w : opt->target_phrase) {
        lm_est += lm_score_with_context(lm, forms, w.form());
        forms.push_back(w.form());
      }
      double est = weights.tm_fwd * opt->logp_tgt_given_src +
                   weights.tm_rev * opt->logp_src_given_tgt + weights.lm * lm_est +
                   weights.word_penalty * -(double)opt->target_phrase.size() +
                   weights.phrase_penalty * 1.0;
      best = std::max(best, est);
    }
    fc[so.span.start][so.span.end] = best;
  }
  for (int len = 2; len <= n; ++len) {
    for (int i = 0; i + len - 1 < n; ++i) {
      int j = i + len - 1;
      double best = fc[i][j];
      for (int k = i; k < j; ++k)
        if (fc[i][k] != ninf && fc[k + 1][j] != ninf)
          best = std::max(best, fc[i][k] + fc[k + 1][j]);
      fc[i][j] = best;
    }
  }
  return fc;
}

// -------------------------------------------------------------------------
// Stack search.

namespace detail {

struct Coverage {
  std::vector<uint64_t> bits;

  explicit Coverage(int n) : bits((n + 63) / 64, 0) {}
  bool test(int i) const { return bits[i / 64] >> (i % 64) & 1; }
  void set(int i) { bits[i / 64] |= (uint64_t(1) << (i % 64)); }
  bool free_range(int s, int e) const {
    for (int i = s; i <= e; ++i)
      if (test(i)) return false;
    return true;
  }
  uint64_t digest() const {
    uint64_t h = kFnvOffset;
    for (uint64_t b : bits) {
      for (int i = 0; i < 8; ++i) h = fnv1a64_byte((unsigned char)(b >> (i * 8)), h);
    }
    return h;
  }
  bool operator==(const Coverage& o) const { return bits == o.bits; }
};

struct Hypothesis {
  Coverage coverage;
  DecoderState state;
  int end_of_last = -1;
  FeatureBreakdown features;
  double score = 0.0;
  const Hypothesis* prev = nullptr;
  int span_idx = -1;
  int opt_idx = -1;
  long id = 0;

  explicit Hypothesis(int n) : coverage(n) {}
};

inline std::vector<const TranslationOption*> derivation_options(const Hypothesis* hyp,
                                                                const PreparedSentence& prep) {
  std::vector<const TranslationOption*> options;
  for (const Hypothesis* h = hyp; h && h->span_idx >= 0; h = h->prev)
    options.push_back(prep.spans[h->span_idx].options[h->opt_idx]);
  std::reverse(options.begin(), options.end());
  return options;
}

inline std::string derivation_text(const Hypothesis* hyp, const PreparedSentence& prep) {
  std::string text;
  for (const TranslationOption* opt : derivation_options(hyp, prep)) {
    for (const FactoredWord& w : opt->target_phrase) {
      if (!text.empty()) text += ' ';
      text += w.form();
    }
  }
  return text;
}

}  // namespace detail

struct TranslationResult {
  std::vector<FactoredWord> words;
  std::string text;
  FeatureBreakdown features;
  double score = 0.0;
  CacheStats stats;
};

inline TranslationResult decode(const Sentence& source, const PhraseTable& table,
                                const NGramModel& lm, const LinearModel& model,
                                const FeatureConfig& feat_cfg, const DecoderWeights& weights,
                                const DecoderConfig& cfg) {
  using detail::Hypothesis;
  const int n = (int)source.size();
  PreparedSentence prep = collect_options(source, table, cfg.oov_copy);
  for (int i = 0; i < n; ++i) {
    bool covered = false;
    for (const SpanOptions& so : prep.spans)
      if (so.span.start <= i && i <= so.span.end) {
        covered = true;
        break;
      }
    if (!covered)
      throw std::runtime_error("no translation option covers token " + std::to_string(i) + " ('" +
                               source.words[i].form() + "')");
  }
  ClassifierEvaluator evaluator(prep, model, feat_cfg, cfg.use_caches);
  const std::vector<std::vector<double>> fc = future_costs(prep, lm, weights);
  auto rest_cost = [&](const detail::Coverage& cov) {
    double total = 0.0;
    int i = 0;
    while (i < n) {
      if (cov.test(i)) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < n && !cov.test(j + 1)) ++j;
      total += fc[i][j];
      i = j + 1;
    }
    return total;
  };

  std::deque<Hypothesis> arena;
  std::vector<std::vector<Hypothesis*>> stacks(n + 1);
  struct KeyHash {
    size_t operator()(const std::pair<uint64_t, uint64_t>& k) const {
      return (size_t)mix64(k.first ^ mix64(k.second));
    }
  };
  // per-stack map (coverage, state) -> position in the stack vector
  std::vector<std::unordered_map<std::pair<uint64_t, uint64_t>, size_t, KeyHash>> recomb(n + 1);

  arena.emplace_back(n);
  Hypothesis* init = &arena.back();
  init->state = initial_state(lm);
  stacks[0].push_back(init);
  long next_id = 1;

  auto insert = [&](Hypothesis&& cand, int stack_idx) {
    auto key = std::make_pair(cand.coverage.digest(), cand.state.digest);
    auto& map = recomb[stack_idx];
    auto it = map.find(key);
    if (it != map.end()) {
      Hypothesis* old = stacks[stack_idx][it->second];
      if (old->coverage == cand.coverage && old->state == cand.state) {
        bool replace = cand.score > old->score;
        if (cand.score == old->score)
          replace = detail::derivation_text(&cand, prep) < detail::derivation_text(old, prep);
        if (replace) {
          arena.push_back(std::move(cand));
          arena.back().id = next_id++;
          stacks[stack_idx][it->second] = &arena.back();
        }
        return;
      }
      // digest collision with different contents: fall through to plain append
    }
    arena.push_back(std::move(cand));
    arena.back().id = next_id++;
    map.emplace(key, stacks[stack_idx].size());
    stacks[stack_idx].push_back(&arena.back());
  };

  for (int covered = 0; covered < n; ++covered) {
    std::vector<Hypothesis*>& stack = stacks[covered];
    if (stack.empty()) continue;
    if ((long)stack.size() > (long)cfg.beam) {
      std::vector<std::pair<double, Hypothesis*>> keyed;
      keyed.reserve(stack.size());
      for (Hypothesis* h : stack) keyed.emplace_back(h->score + rest_cost(h->coverage), h);
      std::stable_sort(keyed.begin(), keyed.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      stack.clear();
      for (int i = 0; i < cfg.beam; ++i) stack.push_back(keyed[i].second);
    }
    for (const Hypothesis* hyp : stack) {
      for (size_t s = 0; s < prep.spans.size(); ++s) {
        const SpanOptions& so = prep.spans[s];
        if (!hyp->coverage.free_range(so.span.start, so.span.end)) continue;
        int jump = std::abs(so.span.start - hyp->end_of_last - 1);
        if (cfg.distortion_limit >= 0 && jump > cfg.distortion_limit) continue;
        for (size_t o = 0; o < so.options.size(); ++o) {
          const TranslationOption* opt = so.options[o];
          Hypothesis cand(n);
          cand.coverage = hyp->coverage;
          for (int i = so.span.start; i <= so.span.end; ++i) cand.coverage.set(i);
          cand.prev = hyp;
          cand.span_idx = (int)s;
          cand.opt_idx = (int)o;
          cand.end_of_last = so.span.end;
          cand.features = hyp->features;
          cand.features.tm_fwd += opt->logp_tgt_given_src;
          cand.features.tm_rev += opt->logp_src_given_tgt;
          cand.features.word_penalty += -(double)opt->target_phrase.size();
          cand.features.phrase_penalty += 1.0;
          cand.features.distortion += (double)jump;
          cand.features.classifier += evaluator.evaluate((int)s, (int)o, hyp->state);
          TargetContext ctx = hyp->state.context;
          LMState lm_state = hyp->state.lm;
          for (size_t k = 0; k < opt->target_phrase.size(); ++k) {
            const FactoredWord& w = opt->target_phrase[k];
            auto [lp, next_state] = lm_score(lm, w.form(), lm_state);
            cand.features.lm += lp;
            lm_state = std::move(next_state);
            std::vector<FactoredWord> aligned;
            for (const AlignmentLink& l : opt->internal_alignment.links)
              if (l.tgt == (int)k) aligned.push_back(source.words[so.span.start + l.src]);
            ctx.push(w, std::move(aligned));
          }
          int new_covered = covered + so.span.length();
          if (new_covered == n) cand.features.lm += lm_end_score(lm, lm_state);
          cand.state = make_state(std::move(ctx), std::move(lm_state));
          cand.score = cand.features.dot(weights);
          insert(std::move(cand), new_covered);
        }
      }
    }
  }

  const std::vector<Hypothesis*>& finals = stacks[n];
  if (finals.empty())
    throw std::runtime_error("no complete hypothesis (distortion limit too tight?)");
  const Hypothesis* best = finals[0];
  std::string best_text = detail::derivation_text(best, prep);
  for (size_t i = 1; i < finals.size(); ++i) {
    const Hypothesis* h = finals[i];
    if (h->score > best->score) {
      best = h;
      best_text = detail::derivation_text(h, prep);
    } else if (h->score == best->score) {
      std::string text = detail::derivation_text(h, prep);
      if (text < best_text) {
        best = h;
        best_text = std::move(text);
      }
    }
  }

  TranslationResult result;
  for (const TranslationOption* opt : detail::derivation_options(best, prep))
    for (const FactoredWord& w : opt->target_phrase) result.words.push_back(w);
  result.text = best_text;
  result.features = best->features;
  result.score = best->score;
  result.stats = evaluator.stats();
  return result;
}

}  // namespace pbmt

#endif  // PBMT_DECODER_HPP
