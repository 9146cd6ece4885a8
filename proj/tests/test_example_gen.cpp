#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"

using namespace pbmt;
using namespace testutil;

namespace {

FeatureConfig basic_config() {
  return FeatureConfig::parse({"source_indicator f", "source_context f 1", "target_context f 2",
                               "target_context t 2", "target_indicator f"});
}

}  // namespace

TEST_CASE("gold translation of monotone pair") {
  auto pair = make_pair(plain_src({"a", "b"}), plain_tgt({"x", "y"}), "0-0 1-1");

  auto g0 = gold_translation(pair, {0, 0});
  REQUIRE(g0);
  CHECK(g0->target_span == Span{0, 0});
  CHECK(g0->context.words[0].word.form() == "<s>");
  CHECK(g0->context.words[1].word.form() == "<s>");

  auto g1 = gold_translation(pair, {1, 1});
  REQUIRE(g1);
  CHECK(g1->target_span == Span{1, 1});
  CHECK(g1->context.words[0].word.form() == "x");
  REQUIRE(g1->context.words[0].aligned_source.size() == 1);
  CHECK(g1->context.words[0].aligned_source[0].form() == "a");
  CHECK(g1->context.words[1].word.form() == "<s>");
}

TEST_CASE("gold translation under crossing links") {
  auto pair = make_pair(plain_src({"a", "b"}), plain_tgt({"x", "y"}), "0-1 1-0");
  auto g = gold_translation(pair, {0, 0});
  REQUIRE(g);
  CHECK(g->target_span == Span{1, 1});
}

TEST_CASE("inconsistent or unaligned spans have no gold") {
  auto pair = make_pair(plain_src({"a", "b"}), plain_tgt({"x"}), "0-0 1-0");
  CHECK_FALSE(gold_translation(pair, {0, 0}));  // x also aligned to b
  auto pair2 = make_pair(plain_src({"a", "b"}), plain_tgt({"x", "y"}), "0-0");
  CHECK_FALSE(gold_translation(pair2, {1, 1}));  // b unaligned
}

TEST_CASE("leave-one-out skips singleton pairs") {
  std::vector<AlignedSentencePair> corpus{
      make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0"),
      make_pair(plain_src({"b"}), plain_tgt({"y"}), "0-0"),
  };
  PhraseTable table = PhraseTable::build(corpus, 7);
  FeatureConfig cfg = basic_config();
  ExampleGenStats stats;
  for (const AlignedSentencePair& pair : corpus) {
    auto examples = generate_examples(pair, table, cfg, 7, true, &stats);
    CHECK(examples.empty());
  }
  CHECK(stats.emitted == 0);
  CHECK(stats.skipped_leave_one_out == 2);
}

TEST_CASE("duplicated corpus emits examples with the gold candidate marked") {
  std::vector<AlignedSentencePair> corpus{
      make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0"),
      make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0"),
      make_pair(plain_src({"a"}), plain_tgt({"y"}), "0-0"),
      make_pair(plain_src({"a"}), plain_tgt({"y"}), "0-0"),
  };
  PhraseTable table = PhraseTable::build(corpus, 7);
  FeatureConfig cfg = basic_config();
  long emitted = 0;
  for (const AlignedSentencePair& pair : corpus) {
    for (const TrainingExample& ex : generate_examples(pair, table, cfg, 7, true)) {
      ++emitted;
      REQUIRE(ex.candidates.size() == 2);
      int zeros = 0;
      for (int loss : ex.losses) zeros += loss == 0 ? 1 : 0;
      CHECK(zeros == 1);
      // gold candidate's indicator feature names the reference form
      const std::string gold_form = pair.target.words[0].form();
      CHECK(has_key(ex.candidates[ex.gold_index], "tind^f^" + gold_form));
    }
  }
  CHECK(emitted == 4);
}

TEST_CASE("held-out extraction keeps counts intact") {
  std::vector<AlignedSentencePair> corpus{make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0")};
  PhraseTable table = PhraseTable::build(corpus, 7);
  FeatureConfig cfg = basic_config();
  auto examples = generate_examples(corpus[0], table, cfg, 7, /*leave_one_out=*/false);
  CHECK(examples.size() == 1);
}

TEST_CASE("gold context features equal direct extraction from the reference") {
  auto pair = make_pair(plain_src({"a", "b", "c"}), plain_tgt({"x", "y", "z"}), "0-0 1-1 2-2");
  std::vector<AlignedSentencePair> corpus{pair, pair};  // duplicate so leave-one-out keeps all
  PhraseTable table = PhraseTable::build(corpus, 7);
  FeatureConfig cfg = basic_config();
  auto examples = generate_examples(pair, table, cfg, 7, true);
  bool checked = false;
  for (const TrainingExample& ex : examples) {
    // find the example for span (2,2): its gold indicator is "z"
    if (ex.candidates.size() >= 1 && has_key(ex.candidates[ex.gold_index], "tind^f^z") &&
        keys_of(ex.candidates[ex.gold_index]).size() == 1 + 1) {  // indicator + pair feature
      TargetContext ctx = TargetContext::start();
      ctx.push(pair.target.words[0], {pair.source.words[0]});
      ctx.push(pair.target.words[1], {pair.source.words[1]});
      FeatureList direct = extract_target_shared(ctx, cfg);
      if (keys_of(ex.shared_tgt) == keys_of(direct)) checked = true;
    }
  }
  CHECK(checked);
}

TEST_CASE("spans whose gold phrase is missing from the table are skipped") {
  auto pair = make_pair(plain_src({"a", "b"}), plain_tgt({"x", "y"}), "0-0 1-1");
  std::vector<AlignedSentencePair> corpus{pair, pair};
  PhraseTable table = PhraseTable::build(corpus, 1);  // no two-word phrases in the table
  FeatureConfig cfg = basic_config();
  ExampleGenStats stats;
  auto examples = generate_examples(pair, table, cfg, 2, true, &stats);
  CHECK(stats.skipped_gold_missing == 1);  // span (0,1)
  CHECK(examples.size() == 2);             // the two single-word spans
}

TEST_CASE("examples write and parse back") {
  auto pair = make_pair(plain_src({"a"}), plain_tgt({"x"}), "0-0");
  std::vector<AlignedSentencePair> corpus{pair, pair};
  PhraseTable table = PhraseTable::build(corpus, 7);
  FeatureConfig cfg = basic_config();
  auto examples = generate_examples(pair, table, cfg, 7, true);
  REQUIRE_FALSE(examples.empty());
  TempDir dir("exgen");
  CHECK(write_examples(examples, dir.file("ex")) == (long)examples.size());
  auto loaded = load_examples(dir.file("ex"));
  REQUIRE(loaded.size() == examples.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(keys_of(loaded[i].shared_src) == keys_of(examples[i].shared_src));
    CHECK(keys_of(loaded[i].shared_tgt) == keys_of(examples[i].shared_tgt));
    CHECK(loaded[i].gold_index == examples[i].gold_index);
    REQUIRE(loaded[i].candidates.size() == examples[i].candidates.size());
    for (size_t c = 0; c < loaded[i].candidates.size(); ++c)
      CHECK(keys_of(loaded[i].candidates[c]) == keys_of(examples[i].candidates[c]));
  }

  CHECK(write_examples({}, dir.file("empty")) == 0);
  CHECK(read_file(dir.file("empty")).empty());
}
