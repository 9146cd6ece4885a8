#include <functional>

#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"

using namespace pbmt;
using namespace testutil;

namespace {

DecoderConfig exhaustive_config() {
  DecoderConfig cfg;
  cfg.beam = 1000000;
  cfg.distortion_limit = -1;
  return cfg;
}

}  // namespace

TEST_CASE("single word with a single option") {
  std::vector<AlignedSentencePair> corpus{
      make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0"),
      make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0"),
  };
  PhraseTable table = PhraseTable::build(corpus, 3);
  std::vector<Sentence> targets{corpus[0].target, corpus[1].target};
  NGramModel lm = train_lm(targets, 2);
  FeatureConfig cfg = FeatureConfig::parse({"source_indicator f", "target_indicator f"});
  LinearModel model = LinearModel::zeros(12, cfg.fingerprint());
  DecoderWeights weights;
  TranslationResult r = decode(make_src(plain_src({"a"})), table, lm, model, cfg, weights,
                               exhaustive_config());
  CHECK(r.text == "x");
  CHECK(r.features.classifier == 0.0);  // log 1
  CHECK(r.features.phrase_penalty == 1.0);
  CHECK(r.features.word_penalty == -1.0);
}

TEST_CASE("beam search matches exhaustive enumeration") {
  ToyParams p;
  p.seed = 101;
  p.vocab = 4;
  p.variants = 2;
  p.sentences = 40;
  p.max_len = 3;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(55);
  for (int trial = 0; trial < 25; ++trial) {
    Sentence input = toy_sentence(rng, p, 1 + (int)(rng() % 4));
    TranslationResult got = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights,
                                   exhaustive_config());
    OracleResult want =
        OracleDecoder(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights).best();
    INFO("input: " << format_factored_sentence(input));
    CHECK_THAT(got.score, Catch::Matchers::WithinAbs(want.score, 1e-9));
    CHECK(got.text == want.text);
  }
}

TEST_CASE("cached and naive decoding agree") {
  ToyParams p;
  p.seed = 7;
  p.vocab = 5;
  p.variants = 3;
  p.sentences = 80;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(99);
  DecoderConfig cached;
  cached.beam = 20;
  DecoderConfig naive = cached;
  naive.use_caches = false;
  for (int trial = 0; trial < 20; ++trial) {
    Sentence input = toy_sentence(rng, p, 2 + (int)(rng() % 6));
    TranslationResult a = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, cached);
    TranslationResult b = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, naive);
    CHECK(a.text == b.text);
    CHECK_THAT(a.score, Catch::Matchers::WithinAbs(b.score, 1e-9));
    CHECK(a.stats.extraction_calls < b.stats.extraction_calls);
  }
}

TEST_CASE("decoding is deterministic") {
  ToyParams p;
  p.seed = 31;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(3);
  Sentence input = toy_sentence(rng, p, 5);
  DecoderConfig cfg;
  cfg.beam = 10;
  TranslationResult a = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, cfg);
  TranslationResult b = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, cfg);
  CHECK(a.text == b.text);
  CHECK(a.score == b.score);
}

TEST_CASE("classifier distributions normalize per span and state") {
  ToyParams p;
  p.seed = 77;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(8);
  Sentence input = toy_sentence(rng, p, 4);
  PreparedSentence prep = collect_options(input, sys.table, true);
  ClassifierEvaluator eval(prep, sys.model, sys.cfg, true);

  DecoderState state = initial_state(sys.lm);
  for (size_t s = 0; s < prep.spans.size(); ++s) {
    const std::vector<double>& logprobs = eval.distribution((int)s, state);
    double sum = 0;
    for (double lp : logprobs) sum += std::exp(lp);
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }

  // a non-initial state
  TargetContext ctx = TargetContext::start();
  ctx.push(FactoredWord{{"t0_0", "t0", "T0"}}, {});
  LMState lms = lm_start_state(sys.lm);
  lms = lm_score(sys.lm, "t0_0", lms).second;
  DecoderState state2 = make_state(ctx, lms);
  for (size_t s = 0; s < prep.spans.size(); ++s) {
    const std::vector<double>& logprobs = eval.distribution((int)s, state2);
    double sum = 0;
    for (double lp : logprobs) sum += std::exp(lp);
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("repeat queries hit the result cache") {
  ToyParams p;
  p.seed = 12;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(4);
  Sentence input = toy_sentence(rng, p, 3);
  PreparedSentence prep = collect_options(input, sys.table, true);
  ClassifierEvaluator eval(prep, sys.model, sys.cfg, true);
  DecoderState state = initial_state(sys.lm);
  double first = eval.evaluate(0, 0, state);
  long misses = eval.stats().result_misses;
  long extractions = eval.stats().extraction_calls;
  double second = eval.evaluate(0, 0, state);
  CHECK(first == second);
  CHECK(eval.stats().result_misses == misses);
  CHECK(eval.stats().result_hits >= 1);
  CHECK(eval.stats().extraction_calls == extractions);  // no new extraction work
  CHECK_THROWS_AS(eval.evaluate((int)prep.spans.size(), 0, state), std::logic_error);
}

TEST_CASE("source-side partial scores equal scores with empty target context") {
  // With no target-side templates the span distribution must equal a softmax
  // over raw scores computed with an empty shared-target set.
  ToyParams p;
  p.seed = 21;
  ToySystem sys = make_toy_system(p);
  FeatureConfig source_only = FeatureConfig::parse({
      "source_indicator f", "source_indicator l", "source_internal lt", "source_context l 2",
      "target_indicator f", "target_indicator l", "target_internal t",
  });
  LinearModel model = LinearModel::zeros(p.hash_bits, source_only.fingerprint());
  std::mt19937 rng(66);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (double& w : model.weights) w = unif(rng);

  Sentence input = toy_sentence(rng, p, 4);
  PreparedSentence prep = collect_options(input, sys.table, true);
  ClassifierEvaluator eval(prep, model, source_only, true);
  DecoderState state = initial_state(sys.lm);
  FeatureSet empty_tgt{FeatureNamespace::SharedTarget, {}};
  for (size_t s = 0; s < prep.spans.size(); ++s) {
    const SpanOptions& so = prep.spans[s];
    FeatureSet s_src =
        hash_features(extract_source_shared(input, so.span, source_only), model.hash_bits);
    std::vector<FeatureSet> cands;
    for (const TranslationOption* opt : so.options)
      cands.push_back(hash_features(extract_translation(*opt, source_only), model.hash_bits));
    std::vector<double> want = predict_distribution(model, s_src, empty_tgt, cands);
    const std::vector<double>& got = eval.distribution((int)s, state);
    REQUIRE(got.size() == want.size());
    for (size_t o = 0; o < want.size(); ++o)
      CHECK_THAT(std::exp(got[o]), Catch::Matchers::WithinAbs(want[o], 1e-12));
  }
}

TEST_CASE("future costs match brute-force partition enumeration") {
  ToyParams p;
  p.seed = 41;
  p.vocab = 4;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(14);
  Sentence input = toy_sentence(rng, p, 6);
  PreparedSentence prep = collect_options(input, sys.table, true);
  std::vector<std::vector<double>> fc = future_costs(prep, sys.lm, sys.weights);

  const int n = (int)input.size();
  const double ninf = -std::numeric_limits<double>::infinity();
  // independent estimate of a single span
  auto span_est = [&](int i, int j) {
    double best = ninf;
    for (const SpanOptions& so : prep.spans) {
      if (so.span.start != i || so.span.end != j) continue;
      for (const TranslationOption* opt : so.options) {
        double lm_est = 0;
        std::vector<std::string> prev;
        for (const FactoredWord& w : opt->target_phrase) {
          lm_est += lm_score_with_context(sys.lm, prev, w.form());
          prev.push_back(w.form());
        }
        double est = sys.weights.tm_fwd * opt->logp_tgt_given_src +
                     sys.weights.tm_rev * opt->logp_src_given_tgt + sys.weights.lm * lm_est +
                     sys.weights.word_penalty * -(double)opt->target_phrase.size() +
                     sys.weights.phrase_penalty;
        best = std::max(best, est);
      }
    }
    return best;
  };
  // all partitions of [i, j] into contiguous spans
  std::function<double(int, int)> best_partition = [&](int i, int j) -> double {
    double best = span_est(i, j);
    for (int k = i; k < j; ++k) {
      double left = best_partition(i, k);
      double right = best_partition(k + 1, j);
      if (left != ninf && right != ninf) best = std::max(best, left + right);
    }
    return best;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double want = best_partition(i, j);
      CHECK_THAT(fc[i][j], Catch::Matchers::WithinAbs(want, 1e-9));
      CHECK(fc[i][j] >= want - 1e-9);  // DP never under-estimates a partition
    }
  }
  // single spans have no partitions
  for (int i = 0; i < n; ++i) CHECK(fc[i][i] == span_est(i, i));
}

TEST_CASE("two-token sentence populates at most three spans") {
  std::vector<AlignedSentencePair> corpus{
      make_pair(plain_src({"a", "b"}), plain_tgt({"x", "y"}), "0-0 1-1"),
      make_pair(plain_src({"a", "b"}), plain_tgt({"x", "y"}), "0-0 1-1"),
  };
  PhraseTable table = PhraseTable::build(corpus, 2);
  PreparedSentence prep = collect_options(make_src(plain_src({"a", "b"})), table, true);
  CHECK(prep.spans.size() == 3);
  PreparedSentence partial = collect_options(make_src(plain_src({"a", "q"})), table, true);
  CHECK(partial.spans.size() == 2);  // "a" from the table, "q" as a copy; no two-word span
}

TEST_CASE("zero model gives uniform span distributions") {
  ToyParams p;
  p.seed = 61;
  ToySystem sys = make_toy_system(p);
  LinearModel zero = LinearModel::zeros(p.hash_bits, sys.cfg.fingerprint());
  std::mt19937 rng(6);
  Sentence input = toy_sentence(rng, p, 3);
  PreparedSentence prep = collect_options(input, sys.table, true);
  ClassifierEvaluator eval(prep, zero, sys.cfg, true);
  DecoderState state = initial_state(sys.lm);
  for (size_t s = 0; s < prep.spans.size(); ++s) {
    const std::vector<double>& logprobs = eval.distribution((int)s, state);
    for (double lp : logprobs)
      CHECK_THAT(std::exp(lp), Catch::Matchers::WithinAbs(1.0 / logprobs.size(), 1e-12));
  }
}

TEST_CASE("decode-time context features equal training-time context features") {
  // Training reads the context off the reference alignment; decoding rebuilds
  // it from the applied options' internal alignments. For a gold derivation
  // the two must produce identical feature keys and hashes.
  auto pair = make_pair(plain_src({"a", "b", "c"}), plain_tgt({"x", "y", "z"}), "0-0 1-1 2-2");
  std::vector<AlignedSentencePair> corpus{pair, pair};
  PhraseTable table = PhraseTable::build(corpus, 1);
  FeatureConfig cfg = FeatureConfig::parse(
      {"target_context f 2", "target_context t 2", "bilingual_context lt/lt 2",
       "target_indicator f"});

  // training-time context for source span (2,2)
  auto gold = gold_translation(pair, {2, 2});
  REQUIRE(gold);
  FeatureList train_side = extract_target_shared(gold->context, cfg);

  // decode-time context: apply the gold options for spans (0,0) and (1,1)
  TargetContext ctx = TargetContext::start();
  for (int i = 0; i < 2; ++i) {
    const std::vector<TranslationOption>& opts = table.lookup(pair.source, {i, i});
    REQUIRE(opts.size() == 1);
    const TranslationOption& opt = opts[0];
    for (size_t k = 0; k < opt.target_phrase.size(); ++k) {
      std::vector<FactoredWord> aligned;
      for (const AlignmentLink& l : opt.internal_alignment.links)
        if (l.tgt == (int)k) aligned.push_back(pair.source.words[i + l.src]);
      ctx.push(opt.target_phrase[k], std::move(aligned));
    }
  }
  FeatureList decode_side = extract_target_shared(ctx, cfg);

  CHECK(keys_of(train_side) == keys_of(decode_side));
  FeatureSet h_train = hash_features(train_side, 20);
  FeatureSet h_decode = hash_features(decode_side, 20);
  REQUIRE(h_train.items.size() == h_decode.items.size());
  for (size_t i = 0; i < h_train.items.size(); ++i)
    CHECK(h_train.items[i].index == h_decode.items[i].index);
}

TEST_CASE("unknown words are copied through") {
  ToyParams p;
  p.seed = 9;
  ToySystem sys = make_toy_system(p);
  Sentence input = make_src(toy_src_word(0) + " zzz|zzz|Z|-|-");
  DecoderConfig cfg;
  TranslationResult r = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, cfg);
  CHECK(r.text.find("zzz") != std::string::npos);

  DecoderConfig strict = cfg;
  strict.oov_copy = false;
  CHECK_THROWS_WITH(decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, strict),
                    Catch::Matchers::ContainsSubstring("token 1"));
}

TEST_CASE("distortion limit constrains reordering") {
  ToyParams p;
  p.seed = 90;
  ToySystem sys = make_toy_system(p);
  std::mt19937 rng(2);
  Sentence input = toy_sentence(rng, p, 5);
  DecoderConfig monotone;
  monotone.distortion_limit = 0;
  TranslationResult r = decode(input, sys.table, sys.lm, sys.model, sys.cfg, sys.weights, monotone);
  CHECK(r.features.distortion == 0.0);
}

TEST_CASE("fingerprint mismatch is rejected") {
  ToyParams p;
  ToySystem sys = make_toy_system(p);
  FeatureConfig other = FeatureConfig::parse({"source_indicator f"});
  CHECK_THROWS(check_fingerprint(sys.model, other));
  CHECK_NOTHROW(check_fingerprint(sys.model, sys.cfg));
}
