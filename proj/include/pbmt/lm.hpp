#ifndef PBMT_LM_HPP
#define PBMT_LM_HPP

#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pbmt/corpus.hpp"

namespace pbmt {

// Count-based n-gram model over target surface forms, scored with stupid
// backoff: an observed full n-gram scores its relative frequency, otherwise
// back off to the shortened context with a constant log penalty.
struct NGramModel {
  int order = 5;
  double backoff = 0.4;
  std::unordered_map<std::string, long> counts;  // space-joined n-grams, all k <= order
  long unigram_total = 0;                        // excludes <s>
  std::unordered_set<std::string> vocab;

  static constexpr double kUnkProb = 1e-7;

  long count(const std::string& gram) const {
    auto it = counts.find(gram);
    return it == counts.end() ? 0 : it->second;
  }
};

// Scoring context: the last order-1 produced forms, oldest first, padded with
// <s> at the sentence start.
struct LMState {
  std::vector<std::string> words;
  bool operator==(const LMState& o) const { return words == o.words; }
};

inline LMState lm_start_state(const NGramModel& model) {
  LMState s;
  s.words.assign(std::max(0, model.order - 1), kSentStart);
  return s;
}

inline NGramModel train_lm(const std::vector<Sentence>& sentences, int order,
                           double backoff = 0.4) {
  if (sentences.empty()) throw std::runtime_error("cannot train LM on empty corpus");
  if (order < 1) throw std::runtime_error("LM order must be >= 1");
  NGramModel model;
  model.order = order;
  model.backoff = backoff;
  for (const Sentence& sent : sentences) {
    std::vector<std::string> padded;
    padded.reserve(sent.size() + order);
    for (int i = 0; i < order - 1; ++i) padded.push_back(kSentStart);
    for (const FactoredWord& w : sent.words) {
      padded.push_back(w.form());
      model.vocab.insert(w.form());
    }
    padded.push_back(kSentEnd);
    for (int k = 1; k <= order; ++k) {
      for (size_t i = 0; i + k <= padded.size(); ++i) {
        std::string gram = padded[i];
        for (int j = 1; j < k; ++j) {
          gram += ' ';
          gram += padded[i + j];
        }
        model.counts[gram] += 1;
      }
    }
  }
  for (const auto& [gram, count] : model.counts) {
    if (gram.find(' ') == std::string::npos && gram != kSentStart) model.unigram_total += count;
  }
  return model;
}

// log10 stupid-backoff score of `word` after `context` (most recent last,
// length at most order-1).
inline double lm_score_with_context(const NGramModel& model,
                                    std::span<const std::string> context,
                                    const std::string& word) {
  if (context.size() > (size_t)(model.order - 1))
    context = context.subspan(context.size() - (model.order - 1));
  double penalty = 0.0;
  for (size_t drop = 0; drop <= context.size(); ++drop) {
    std::span<const std::string> ctx = context.subspan(drop);
    std::string gram;
    for (const std::string& w : ctx) {
      gram += w;
      gram += ' ';
    }
    std::string prefix = ctx.empty() ? std::string() : join(ctx, " ");
    gram += word;
    long full = model.count(gram);
    if (full > 0) {
      long denom = ctx.empty() ? model.unigram_total : model.count(prefix);
      if (denom > 0) return penalty + std::log10((double)full / denom);
    }
    penalty += std::log10(model.backoff);
  }
  return penalty - std::log10(model.backoff) + std::log10(NGramModel::kUnkProb);
}

inline std::pair<double, LMState> lm_score(const NGramModel& model, const std::string& word,
                                           const LMState& state) {
  double score = lm_score_with_context(model, state.words, word);
  LMState next = state;
  if (model.order > 1) {
    next.words.erase(next.words.begin());
    next.words.push_back(word);
  }
  return {score, next};
}

inline double lm_end_score(const NGramModel& model, const LMState& state) {
  return lm_score_with_context(model, state.words, kSentEnd);
}

inline void save_lm(const NGramModel& model, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "order=" << model.order << " backoff=" << fmt_double(model.backoff) << '\n';
  std::vector<std::pair<int, std::string>> keys;
  keys.reserve(model.counts.size());
  for (const auto& [gram, _] : model.counts) {
    int k = 1;
    for (char c : gram)
      if (c == ' ') ++k;
    keys.emplace_back(k, gram);
  }
  std::sort(keys.begin(), keys.end());
  for (const auto& [k, gram] : keys)
    out << k << '\t' << gram << '\t' << model.counts.at(gram) << '\n';
}

inline NGramModel load_lm(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("empty LM file: " + path);
  NGramModel model;
  std::vector<std::string> header = split_ws(lines[0]);
  for (const std::string& field : header) {
    if (field.rfind("order=", 0) == 0)
      model.order = (int)parse_long(field.substr(6), "LM order");
    else if (field.rfind("backoff=", 0) == 0)
      model.backoff = parse_double(field.substr(8), "LM backoff");
    else
      throw std::runtime_error("unrecognized LM header field: " + field);
  }
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> cols = split_on(lines[i], '\t');
    if (cols.size() != 3)
      throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": expected 3 columns");
    model.counts[cols[1]] = parse_long(cols[2], "LM count");
  }
  for (const auto& [gram, count] : model.counts) {
    if (gram.find(' ') == std::string::npos && gram != kSentStart) {
      model.unigram_total += count;
      if (gram != kSentEnd) model.vocab.insert(gram);
    }
  }
  return model;
}

}  // namespace pbmt

#endif  // PBMT_LM_HPP
