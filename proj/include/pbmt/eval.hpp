#ifndef PBMT_EVAL_HPP
#define PBMT_EVAL_HPP

#include <chrono>
#include <map>
#include <ostream>

#include "pbmt/decoder.hpp"
#include "pbmt/example_gen.hpp"

namespace pbmt {

// Corpus-level BLEU with a single reference per hypothesis: geometric mean of
// modified n-gram precisions for n = 1..max_n times the brevity penalty. Any
// zero precision gives a zero score.
inline double bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references, int max_n = 4) {
  if (hypotheses.empty()) throw std::runtime_error("BLEU needs a non-empty corpus");
  if (hypotheses.size() != references.size())
    throw std::runtime_error("BLEU: hypothesis/reference counts differ");
  std::vector<long> matched(max_n, 0), total(max_n, 0);
  long hyp_len = 0, ref_len = 0;
  for (size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    hyp_len += (long)hyp.size();
    ref_len += (long)ref.size();
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::string, long> ref_counts;
      for (size_t i = 0; i + n <= ref.size(); ++i) {
        std::string gram = ref[i];
        for (int j = 1; j < n; ++j) gram += ' ' + ref[i + j];
        ref_counts[gram] += 1;
      }
      std::map<std::string, long> hyp_counts;
      for (size_t i = 0; i + n <= hyp.size(); ++i) {
        std::string gram = hyp[i];
        for (int j = 1; j < n; ++j) gram += ' ' + hyp[i + j];
        hyp_counts[gram] += 1;
      }
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_precision = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (matched[n] == 0 || total[n] == 0) return 0.0;
    log_precision += std::log((double)matched[n] / total[n]);
  }
  double brevity = std::exp(std::min(0.0, 1.0 - (double)ref_len / hyp_len));
  return brevity * std::exp(log_precision / max_n);
}

inline std::vector<std::vector<std::string>> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const std::string& line : lines) out.push_back(split_ws(line));
  return out;
}

// -------------------------------------------------------------------------
// Intrinsic classifier accuracy: instances are built from aligned test pairs
// exactly like training examples, with gold context read off the reference
// and no leave-one-out. The baseline always picks the candidate with the
// highest pair count (first after the lookup ordering).

struct IntrinsicResult {
  double model_accuracy = 0.0;
  double baseline_accuracy = 0.0;
  long instances = 0;
  long skipped = 0;
};

inline IntrinsicResult intrinsic_accuracy(const std::vector<AlignedSentencePair>& test,
                                          const PhraseTable& table, const LinearModel& model,
                                          const FeatureConfig& cfg, int max_len) {
  check_fingerprint(model, cfg);
  IntrinsicResult res;
  long model_correct = 0, baseline_correct = 0;
  for (const AlignedSentencePair& pair : test) {
    ExampleGenStats stats;
    std::vector<TrainingExample> examples =
        generate_examples(pair, table, cfg, max_len, /*leave_one_out=*/false, &stats);
    res.skipped += stats.skipped_gold_missing;
    for (const TrainingExample& ex : examples) {
      std::vector<FeatureSet> cands;
      cands.reserve(ex.candidates.size());
      for (const FeatureList& c : ex.candidates) cands.push_back(hash_features(c, model.hash_bits));
      std::vector<double> probs =
          predict_distribution(model, hash_features(ex.shared_src, model.hash_bits),
                               hash_features(ex.shared_tgt, model.hash_bits), cands);
      int best = 0;
      for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = (int)i;
      if (best == ex.gold_index) ++model_correct;
      if (ex.gold_index == 0) ++baseline_correct;  // lookup order puts the most frequent first
      ++res.instances;
    }
  }
  if (res.instances == 0) throw std::runtime_error("intrinsic evaluation produced no instances");
  res.model_accuracy = (double)model_correct / res.instances;
  res.baseline_accuracy = (double)baseline_correct / res.instances;
  return res;
}

// -------------------------------------------------------------------------
// Cached vs naive decoding comparison: output equality, score deltas, timing
// and classifier work, per sentence and aggregated.

struct CacheReport {
  long sentences = 0;
  long equal_outputs = 0;
  double max_score_delta = 0.0;
  double naive_seconds = 0.0;
  double cached_seconds = 0.0;
  long naive_extractions = 0;
  long cached_extractions = 0;

  double speedup() const { return cached_seconds > 0 ? naive_seconds / cached_seconds : 0.0; }
  double extraction_ratio() const {
    return naive_extractions > 0 ? (double)cached_extractions / naive_extractions : 0.0;
  }

  std::map<std::string, std::string> summary() const {
    std::map<std::string, std::string> kv;
    kv["sentences"] = std::to_string(sentences);
    kv["equal_outputs"] = std::to_string(equal_outputs);
    kv["max_score_delta"] = fmt_double(max_score_delta);
    kv["naive_seconds"] = fmt_double(naive_seconds);
    kv["cached_seconds"] = fmt_double(cached_seconds);
    kv["speedup"] = fmt_double(speedup());
    kv["naive_extractions"] = std::to_string(naive_extractions);
    kv["cached_extractions"] = std::to_string(cached_extractions);
    kv["extraction_ratio"] = fmt_double(extraction_ratio());
    return kv;
  }
};

inline CacheReport cache_equivalence_report(const std::vector<Sentence>& sentences,
                                            const PhraseTable& table, const NGramModel& lm,
                                            const LinearModel& model, const FeatureConfig& cfg,
                                            const DecoderWeights& weights,
                                            const DecoderConfig& base_cfg,
                                            std::ostream* report = nullptr) {
  CacheReport rep;
  using clock = std::chrono::steady_clock;
  for (size_t i = 0; i < sentences.size(); ++i) {
    DecoderConfig cached_cfg = base_cfg;
    cached_cfg.use_caches = true;
    DecoderConfig naive_cfg = base_cfg;
    naive_cfg.use_caches = false;

    auto t0 = clock::now();
    TranslationResult cached = decode(sentences[i], table, lm, model, cfg, weights, cached_cfg);
    auto t1 = clock::now();
    TranslationResult naive = decode(sentences[i], table, lm, model, cfg, weights, naive_cfg);
    auto t2 = clock::now();

    double cached_s = std::chrono::duration<double>(t1 - t0).count();
    double naive_s = std::chrono::duration<double>(t2 - t1).count();
    bool equal = cached.text == naive.text;
    double delta = std::abs(cached.score - naive.score);
    rep.sentences += 1;
    rep.equal_outputs += equal ? 1 : 0;
    rep.max_score_delta = std::max(rep.max_score_delta, delta);
    rep.naive_seconds += naive_s;
    rep.cached_seconds += cached_s;
    rep.naive_extractions += naive.stats.extraction_calls;
    rep.cached_extractions += cached.stats.extraction_calls;
    if (report) {
      *report << "sentence " << i << ": equal=" << (equal ? 1 : 0) << " score_delta=" << delta
              << " naive_s=" << naive_s << " cached_s=" << cached_s
              << " naive_extractions=" << naive.stats.extraction_calls
              << " cached_extractions=" << cached.stats.extraction_calls
              << " naive_options_scored=" << naive.stats.options_scored
              << " cached_options_scored=" << cached.stats.options_scored
              << " result_hits=" << cached.stats.result_hits << '\n';
    }
  }
  if (report) {
    *report << "total: sentences=" << rep.sentences << " equal=" << rep.equal_outputs
            << " max_delta=" << rep.max_score_delta << " speedup=" << rep.speedup()
            << " extraction_ratio=" << rep.extraction_ratio() << '\n';
  }
  return rep;
}

inline void write_summary(const std::map<std::string, std::string>& kv, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const auto& [key, value] : kv) out << key << '\t' << value << '\n';
}

}  // namespace pbmt

#endif  // PBMT_EVAL_HPP
