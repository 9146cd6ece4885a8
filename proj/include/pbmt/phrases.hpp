#ifndef PBMT_PHRASES_HPP
#define PBMT_PHRASES_HPP

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pbmt/corpus.hpp"

namespace pbmt {

// Inclusive token index range.
struct Span {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
  bool operator==(const Span& o) const { return start == o.start && end == o.end; }
};

struct PhrasePairInstance {
  Span source_span;
  Span target_span;
  AlignmentSet internal_alignment;  // relative to the span corners
};

struct TranslationOption {
  std::vector<FactoredWord> source_phrase;
  std::vector<FactoredWord> target_phrase;
  AlignmentSet internal_alignment;
  double logp_tgt_given_src = 0.0;
  double logp_src_given_tgt = 0.0;
  long pair_count = 0;

  std::string target_forms() const {
    std::string out;
    for (size_t i = 0; i < target_phrase.size(); ++i) {
      if (i) out += ' ';
      out += target_phrase[i].form();
    }
    return out;
  }
};

// All alignment-consistent phrase pairs of `pair` with both sides at most
// max_len tokens and at least one link inside. Unaligned boundary words on
// the target side extend spans in every consistent way; unaligned source
// boundary words are covered by enumerating every source span.
inline std::vector<PhrasePairInstance> extract_phrase_pairs(const AlignedSentencePair& pair,
                                                            int max_len) {
  std::vector<PhrasePairInstance> out;
  const int slen = (int)pair.source.size();
  const int tlen = (int)pair.target.size();
  std::vector<char> tgt_aligned(tlen, 0);
  for (const AlignmentLink& l : pair.alignment.links) tgt_aligned[l.tgt] = 1;

  for (int i1 = 0; i1 < slen; ++i1) {
    for (int i2 = i1; i2 < slen && i2 - i1 + 1 <= max_len; ++i2) {
      int tmin = tlen, tmax = -1;
      for (const AlignmentLink& l : pair.alignment.links) {
        if (l.src >= i1 && l.src <= i2) {
          tmin = std::min(tmin, l.tgt);
          tmax = std::max(tmax, l.tgt);
        }
      }
      if (tmax < 0) continue;  // no link inside
      bool consistent = true;
      for (const AlignmentLink& l : pair.alignment.links) {
        if (l.tgt >= tmin && l.tgt <= tmax && (l.src < i1 || l.src > i2)) {
          consistent = false;
          break;
        }
      }
      if (!consistent) continue;
      for (int ts = tmin; ts >= 0 && (ts == tmin || !tgt_aligned[ts]); --ts) {
        for (int te = tmax; te < tlen && (te == tmax || !tgt_aligned[te]); ++te) {
          if (te - ts + 1 > max_len) break;
          PhrasePairInstance inst;
          inst.source_span = {i1, i2};
          inst.target_span = {ts, te};
          for (const AlignmentLink& l : pair.alignment.links)
            if (l.src >= i1 && l.src <= i2) inst.internal_alignment.add(l.src - i1, l.tgt - ts);
          out.push_back(std::move(inst));
        }
      }
    }
  }
  return out;
}

inline std::string source_phrase_key(const Sentence& sent, Span span) {
  std::string key;
  for (int i = span.start; i <= span.end; ++i) {
    if (i > span.start) key += ' ';
    key += sent.words[i].form();
  }
  return key;
}

template <typename WordSeq>
std::string source_forms_key(const WordSeq& words) {
  std::string key;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) key += ' ';
    key += words[i].form();
  }
  return key;
}

// Target phrases are identified by all their factors, so two candidates that
// share surface forms but differ in lemma or tag stay distinct.
template <typename WordSeq>
std::string target_phrase_key(const WordSeq& words) {
  std::string key;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) key += ' ';
    key += words[i].to_string();
  }
  return key;
}

class PhraseTable {
 public:
  // Candidates for the exact surface-form sequence, ordered by descending
  // pair count, then ascending target form string, then full target key.
  const std::vector<TranslationOption>* lookup_key(const std::string& src_key) const {
    auto it = entries_.find(src_key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::vector<TranslationOption>& lookup(const Sentence& sent, Span span) const {
    static const std::vector<TranslationOption> kEmpty;
    const auto* opts = lookup_key(source_phrase_key(sent, span));
    return opts ? *opts : kEmpty;
  }

  long source_count(const std::string& src_key) const {
    auto it = source_counts_.find(src_key);
    return it == source_counts_.end() ? 0 : it->second;
  }

  long target_count(const std::string& tgt_key) const {
    auto it = target_counts_.find(tgt_key);
    return it == target_counts_.end() ? 0 : it->second;
  }

  int max_source_length() const { return max_source_length_; }
  size_t size() const { return entries_.size(); }

  static PhraseTable build(const std::vector<AlignedSentencePair>& corpus, int max_len) {
    if (corpus.empty()) throw std::runtime_error("cannot build phrase table from empty corpus");
    PhraseTable table;
    // pair key -> (option skeleton, per-alignment counts)
    struct PairStats {
      TranslationOption option;
      long count = 0;
      std::map<AlignmentSet, long> alignments;
    };
    std::map<std::string, std::map<std::string, PairStats>> stats;  // src key -> tgt key -> stats
    for (const AlignedSentencePair& pair : corpus) {
      for (const PhrasePairInstance& inst : extract_phrase_pairs(pair, max_len)) {
        std::vector<FactoredWord> src(pair.source.words.begin() + inst.source_span.start,
                                      pair.source.words.begin() + inst.source_span.end + 1);
        std::vector<FactoredWord> tgt(pair.target.words.begin() + inst.target_span.start,
                                      pair.target.words.begin() + inst.target_span.end + 1);
        std::string src_key = source_forms_key(src);
        std::string tgt_key = target_phrase_key(tgt);
        PairStats& ps = stats[src_key][tgt_key];
        if (ps.count == 0) {
          ps.option.source_phrase = std::move(src);
          ps.option.target_phrase = std::move(tgt);
        }
        ps.count += 1;
        ps.alignments[inst.internal_alignment] += 1;
        table.source_counts_[src_key] += 1;
        table.target_counts_[tgt_key] += 1;
      }
    }
    for (auto& [src_key, targets] : stats) {
      std::vector<TranslationOption>& options = table.entries_[src_key];
      for (auto& [tgt_key, ps] : targets) {
        TranslationOption opt = std::move(ps.option);
        opt.pair_count = ps.count;
        // Representative internal alignment: most frequent; ties resolved by
        // the lexicographically smallest link set (std::map order).
        long best = -1;
        for (const auto& [alignment, count] : ps.alignments) {
          if (count > best) {
            best = count;
            opt.internal_alignment = alignment;
          }
        }
        opt.logp_tgt_given_src = std::log((double)ps.count / table.source_counts_[src_key]);
        opt.logp_src_given_tgt = std::log((double)ps.count / table.target_counts_[tgt_key]);
        options.push_back(std::move(opt));
      }
      sort_options(options);
      table.max_source_length_ =
          std::max(table.max_source_length_, (int)options.front().source_phrase.size());
    }
    return table;
  }

  void save(const std::string& path) const {
    std::ofstream out = open_output(path);
    std::vector<std::string> keys;
    keys.reserve(entries_.size());
    for (const auto& [key, _] : entries_) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    for (const std::string& key : keys) {
      for (const TranslationOption& opt : entries_.at(key)) {
        std::vector<std::string> forms, lemmas, tags;
        for (const FactoredWord& w : opt.target_phrase) {
          forms.push_back(w.form());
          lemmas.push_back(w.lemma());
          tags.push_back(w.tag());
        }
        out << key << " ||| " << join(forms, " ") << " ||| " << join(lemmas, " ") << " ||| "
            << join(tags, " ") << " ||| " << fmt_double(opt.logp_tgt_given_src) << ' '
            << fmt_double(opt.logp_src_given_tgt) << " ||| " << format_alignment(opt.internal_alignment)
            << " ||| " << opt.pair_count << ' ' << source_counts_.at(key) << ' '
            << target_counts_.at(target_phrase_key(opt.target_phrase)) << '\n';
      }
    }
  }

  static PhraseTable load(const std::string& path) {
    PhraseTable table;
    long lineno = 0;
    for (const std::string& line : read_lines(path)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> fields = split_fields(line, " ||| ");
      if (fields.size() != 7)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 7 fields, got " + std::to_string(fields.size()));
      TranslationOption opt;
      std::vector<std::string> src_forms = split_ws(fields[0]);
      for (const std::string& f : src_forms) {
        FactoredWord w = FactoredWord::filled(Side::Source, f);
        opt.source_phrase.push_back(std::move(w));
      }
      std::vector<std::string> forms = split_ws(fields[1]);
      std::vector<std::string> lemmas = split_ws(fields[2]);
      std::vector<std::string> tags = split_ws(fields[3]);
      if (forms.size() != lemmas.size() || forms.size() != tags.size() || forms.empty())
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": target factor layers disagree in length");
      for (size_t i = 0; i < forms.size(); ++i)
        opt.target_phrase.push_back(FactoredWord{{forms[i], lemmas[i], tags[i]}});
      std::vector<std::string> probs = split_ws(fields[4]);
      if (probs.size() != 2)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected two log-probs");
      opt.logp_tgt_given_src = parse_double(probs[0], "logp_t_given_s");
      opt.logp_src_given_tgt = parse_double(probs[1], "logp_s_given_t");
      if (opt.logp_tgt_given_src > 1e-12 || opt.logp_src_given_tgt > 1e-12)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": positive log-probability");
      opt.internal_alignment = parse_alignment(fields[5], (int)opt.source_phrase.size(),
                                               (int)opt.target_phrase.size());
      std::vector<std::string> counts = split_ws(fields[6]);
      if (counts.size() != 3)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected three counts");
      opt.pair_count = parse_long(counts[0], "pair_count");
      long src_count = parse_long(counts[1], "src_count");
      long tgt_count = parse_long(counts[2], "tgt_count");
      if (opt.pair_count < 1 || opt.pair_count > std::min(src_count, tgt_count))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": inconsistent counts");
      const std::string src_key = join(src_forms, " ");
      table.source_counts_[src_key] = src_count;
      table.target_counts_[target_phrase_key(opt.target_phrase)] = tgt_count;
      table.entries_[src_key].push_back(std::move(opt));
      table.max_source_length_ = std::max(table.max_source_length_, (int)src_forms.size());
    }
    for (auto& [key, options] : table.entries_) {
      sort_options(options);
      double mass = 0;
      for (const TranslationOption& opt : options) mass += std::exp(opt.logp_tgt_given_src);
      if (mass > 1.0 + 1e-6)
        throw std::runtime_error("phrase table probabilities for '" + key + "' sum to " +
                                 std::to_string(mass));
    }
    return table;
  }

  // Used by tests to walk the table deterministically.
  std::vector<std::string> sorted_keys() const {
    std::vector<std::string> keys;
    for (const auto& [key, _] : entries_) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

 private:
  static void sort_options(std::vector<TranslationOption>& options) {
    std::sort(options.begin(), options.end(),
              [](const TranslationOption& a, const TranslationOption& b) {
                if (a.pair_count != b.pair_count) return a.pair_count > b.pair_count;
                std::string af = a.target_forms(), bf = b.target_forms();
                if (af != bf) return af < bf;
                return target_phrase_key(a.target_phrase) < target_phrase_key(b.target_phrase);
              });
  }

  std::unordered_map<std::string, std::vector<TranslationOption>> entries_;
  std::unordered_map<std::string, long> source_counts_;
  std::unordered_map<std::string, long> target_counts_;
  int max_source_length_ = 0;
};

}  // namespace pbmt

#endif  // PBMT_PHRASES_HPP
