// pbmt: batch pipeline driver. Subcommands cover phrase extraction, LM and
// classifier training, decoding and evaluation; see README.md for a tour.

#include <future>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "pbmt/eval.hpp"

namespace {

using namespace pbmt;

std::vector<Sentence> load_source_sentences(const std::string& path) {
  std::vector<Sentence> sentences;
  long lineno = 0;
  for (const std::string& line : read_lines(path)) {
    ++lineno;
    try {
      sentences.push_back(parse_factored_sentence(line, Side::Source));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (sentences.empty()) throw std::runtime_error("no sentences in " + path);
  return sentences;
}

std::vector<Sentence> load_target_sentences(const std::string& path) {
  std::vector<Sentence> sentences;
  long lineno = 0;
  for (const std::string& line : read_lines(path)) {
    ++lineno;
    try {
      sentences.push_back(parse_factored_sentence(line, Side::Target));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (sentences.empty()) throw std::runtime_error("no sentences in " + path);
  return sentences;
}

template <typename Fn>
void parallel_for(size_t count, int jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int n = std::min<int>(jobs, (int)count);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
}

struct ExtractPhrasesArgs {
  std::string src, tgt, align, out;
  int max_len = 7;
};

void run_extract_phrases(const ExtractPhrasesArgs& a) {
  std::vector<AlignedSentencePair> corpus = load_parallel_corpus(a.src, a.tgt, a.align);
  PhraseTable table = PhraseTable::build(corpus, a.max_len);
  table.save(a.out);
  std::cerr << "wrote " << table.size() << " source phrases to " << a.out << "\n";
}

struct TrainLmArgs {
  std::string tgt, out;
  int order = 5;
  double backoff = 0.4;
};

void run_train_lm(const TrainLmArgs& a) {
  NGramModel model = train_lm(load_target_sentences(a.tgt), a.order, a.backoff);
  save_lm(model, a.out);
  std::cerr << "wrote " << model.counts.size() << " n-gram counts to " << a.out << "\n";
}

struct ExtractExamplesArgs {
  std::string src, tgt, align, table, features, out;
  int max_len = 7;
  int shards = 0;  // 0 = single file in corpus order
  int jobs = 1;
  unsigned long long seed = 1;
  bool no_leave_one_out = false;
};

void run_extract_examples(const ExtractExamplesArgs& a) {
  std::vector<AlignedSentencePair> corpus = load_parallel_corpus(a.src, a.tgt, a.align);
  PhraseTable table = PhraseTable::load(a.table);
  FeatureConfig cfg = FeatureConfig::load(a.features);
  std::vector<std::vector<TrainingExample>> per_sentence(corpus.size());
  std::vector<ExampleGenStats> per_stats(corpus.size());
  parallel_for(corpus.size(), a.jobs, [&](size_t i) {
    per_sentence[i] = generate_examples(corpus[i], table, cfg, a.max_len, !a.no_leave_one_out,
                                        &per_stats[i]);
  });
  std::vector<TrainingExample> examples;
  ExampleGenStats stats;
  for (size_t i = 0; i < corpus.size(); ++i) {
    for (TrainingExample& ex : per_sentence[i]) examples.push_back(std::move(ex));
    stats.emitted += per_stats[i].emitted;
    stats.skipped_no_gold += per_stats[i].skipped_no_gold;
    stats.skipped_gold_missing += per_stats[i].skipped_gold_missing;
    stats.skipped_leave_one_out += per_stats[i].skipped_leave_one_out;
  }
  if (a.shards > 0) {
    std::mt19937_64 rng(a.seed);
    std::shuffle(examples.begin(), examples.end(), rng);
    std::vector<std::vector<TrainingExample>> shards(a.shards);
    for (size_t i = 0; i < examples.size(); ++i)
      shards[i % a.shards].push_back(std::move(examples[i]));
    for (int k = 0; k < a.shards; ++k)
      write_examples(shards[k], a.out + ".shard" + std::to_string(k));
  } else {
    write_examples(examples, a.out);
  }
  std::cerr << "emitted " << stats.emitted << " examples (skipped: " << stats.skipped_no_gold
            << " no-gold, " << stats.skipped_gold_missing << " gold-missing, "
            << stats.skipped_leave_one_out << " leave-one-out)\n";
}

struct TrainArgs {
  std::vector<std::string> examples;
  std::string heldout, out, features;
  int passes = 10;
  double eta0 = 0.5;
  double l2 = 0.0;
  int bits = 22;
  int shards = 0;  // 0 = plain sequential training
  unsigned long long seed = 1;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.passes = a.passes;
  cfg.eta0 = a.eta0;
  cfg.l2 = a.l2;
  cfg.hash_bits = a.bits;
  cfg.seed = a.seed;
  cfg.shards = std::max(1, a.shards);
  if (!a.features.empty()) cfg.config_fingerprint = FeatureConfig::load(a.features).fingerprint();
  std::vector<TrainingExample> heldout = load_examples(a.heldout);
  TrainResult result;
  if (a.shards >= 2) {
    if ((int)a.examples.size() != a.shards)
      throw std::runtime_error("--shards " + std::to_string(a.shards) + " requires exactly " +
                               std::to_string(a.shards) + " example files, got " +
                               std::to_string(a.examples.size()));
    std::vector<std::vector<TrainingExample>> shards;
    shards.reserve(a.examples.size());
    for (const std::string& path : a.examples) shards.push_back(load_examples(path));
    result = train_sharded(shards, heldout, cfg);
  } else if (a.shards == 1) {
    std::vector<TrainingExample> all;
    for (const std::string& path : a.examples)
      for (TrainingExample& ex : load_examples(path)) all.push_back(std::move(ex));
    result = train_sharded({std::move(all)}, heldout, cfg);
  } else {
    std::vector<TrainingExample> all;
    for (const std::string& path : a.examples)
      for (TrainingExample& ex : load_examples(path)) all.push_back(std::move(ex));
    result = train(all, heldout, cfg);
  }
  save_model(result.model, a.out);
  std::cerr << "selected pass " << result.best_pass << " with held-out accuracy "
            << result.pass_accuracy[result.best_pass - 1] << "\n";
  if (result.skipped_empty > 0)
    std::cerr << "warning: skipped " << result.skipped_empty << " empty examples\n";
  if (result.empty_shards > 0)
    std::cerr << "warning: " << result.empty_shards << " empty shards excluded from averaging\n";
}

struct DecodeArgs {
  std::string input, table, lm, model, features, weights, output, trace;
  int beam = 100;
  int distortion = 6;
  bool naive = false;
  bool no_oov = false;
  int jobs = 1;
};

void run_decode(const DecodeArgs& a) {
  std::vector<Sentence> sentences = load_source_sentences(a.input);
  PhraseTable table = PhraseTable::load(a.table);
  NGramModel lm = load_lm(a.lm);
  LinearModel model = load_model(a.model);
  FeatureConfig cfg = FeatureConfig::load(a.features);
  check_fingerprint(model, cfg);
  DecoderWeights weights = a.weights.empty() ? DecoderWeights{} : DecoderWeights::load(a.weights);
  DecoderConfig dcfg;
  dcfg.beam = a.beam;
  dcfg.distortion_limit = a.distortion;
  dcfg.use_caches = !a.naive;
  dcfg.oov_copy = !a.no_oov;

  std::vector<TranslationResult> results(sentences.size());
  parallel_for(sentences.size(), a.jobs, [&](size_t i) {
    results[i] = decode(sentences[i], table, lm, model, cfg, weights, dcfg);
  });

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!a.output.empty()) {
    out_file = open_output(a.output);
    out = &out_file;
  }
  for (const TranslationResult& r : results) *out << r.text << '\n';

  if (!a.trace.empty()) {
    std::ofstream trace = open_output(a.trace);
    for (size_t i = 0; i < results.size(); ++i) {
      const TranslationResult& r = results[i];
      trace << i << '\t' << fmt_double(r.score) << "\ttm_fwd=" << fmt_double(r.features.tm_fwd)
            << " tm_rev=" << fmt_double(r.features.tm_rev) << " lm=" << fmt_double(r.features.lm)
            << " word_penalty=" << fmt_double(r.features.word_penalty)
            << " phrase_penalty=" << fmt_double(r.features.phrase_penalty)
            << " distortion=" << fmt_double(r.features.distortion)
            << " classifier=" << fmt_double(r.features.classifier) << "\tresult_hits="
            << r.stats.result_hits << " result_misses=" << r.stats.result_misses
            << " state_hits=" << r.stats.state_hits << " state_misses=" << r.stats.state_misses
            << " extractions=" << r.stats.extraction_calls
            << " options_scored=" << r.stats.options_scored
            << " evaluate_calls=" << r.stats.evaluate_calls << '\n';
    }
  }
}

struct BleuArgs {
  std::string hyp, ref;
};

void run_bleu(const BleuArgs& a) {
  double score = bleu(tokenize_lines(read_lines(a.hyp)), tokenize_lines(read_lines(a.ref)));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", score);
  std::cout << buf << "\n";
}

struct IntrinsicArgs {
  std::string src, tgt, align, table, model, features;
  int max_len = 7;
};

void run_intrinsic(const IntrinsicArgs& a) {
  std::vector<AlignedSentencePair> test = load_parallel_corpus(a.src, a.tgt, a.align);
  PhraseTable table = PhraseTable::load(a.table);
  LinearModel model = load_model(a.model);
  FeatureConfig cfg = FeatureConfig::load(a.features);
  IntrinsicResult res = intrinsic_accuracy(test, table, model, cfg, a.max_len);
  std::cout << "model_accuracy\t" << fmt_double(res.model_accuracy) << "\n"
            << "baseline_accuracy\t" << fmt_double(res.baseline_accuracy) << "\n"
            << "instances\t" << res.instances << "\n"
            << "skipped\t" << res.skipped << "\n";
}

struct CacheReportArgs {
  std::string input, table, lm, model, features, weights, report, summary;
  int beam = 100;
  int distortion = 6;
};

void run_cache_report(const CacheReportArgs& a) {
  std::vector<Sentence> sentences = load_source_sentences(a.input);
  if (sentences.size() < 10)
    throw std::runtime_error("cache-report needs at least 10 sentences, got " +
                             std::to_string(sentences.size()));
  PhraseTable table = PhraseTable::load(a.table);
  NGramModel lm = load_lm(a.lm);
  LinearModel model = load_model(a.model);
  FeatureConfig cfg = FeatureConfig::load(a.features);
  check_fingerprint(model, cfg);
  DecoderWeights weights = a.weights.empty() ? DecoderWeights{} : DecoderWeights::load(a.weights);
  DecoderConfig dcfg;
  dcfg.beam = a.beam;
  dcfg.distortion_limit = a.distortion;

  std::ofstream report_file;
  std::ostream* report = &std::cout;
  if (!a.report.empty()) {
    report_file = open_output(a.report);
    report = &report_file;
  }
  CacheReport rep =
      cache_equivalence_report(sentences, table, lm, model, cfg, weights, dcfg, report);
  if (!a.summary.empty()) write_summary(rep.summary(), a.summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pbmt: a small phrase-based MT pipeline with a context-aware phrase classifier"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file; command-line flags win");

  ExtractPhrasesArgs ep;
  CLI::App* c = app.add_subcommand("extract-phrases", "build a phrase table from an aligned corpus");
  c->add_option("--src", ep.src, "factored source corpus")->required();
  c->add_option("--tgt", ep.tgt, "factored target corpus")->required();
  c->add_option("--align", ep.align, "word alignment file")->required();
  c->add_option("--out", ep.out, "phrase table output path")->required();
  c->add_option("--max-len", ep.max_len, "maximum phrase length");
  c->callback([&] { run_extract_phrases(ep); });

  TrainLmArgs tl;
  c = app.add_subcommand("train-lm", "train an n-gram language model on target text");
  c->add_option("--tgt", tl.tgt, "factored target corpus")->required();
  c->add_option("--out", tl.out, "model output path")->required();
  c->add_option("--order", tl.order, "n-gram order");
  c->add_option("--backoff", tl.backoff, "backoff penalty factor");
  c->callback([&] { run_train_lm(tl); });

  ExtractExamplesArgs ee;
  c = app.add_subcommand("extract-examples", "write classifier training examples");
  c->add_option("--src", ee.src, "factored source corpus")->required();
  c->add_option("--tgt", ee.tgt, "factored target corpus")->required();
  c->add_option("--align", ee.align, "word alignment file")->required();
  c->add_option("--table", ee.table, "phrase table path")->required();
  c->add_option("--features", ee.features, "feature configuration file")->required();
  c->add_option("--out", ee.out, "output path (with --shards, <out>.shardK)")->required();
  c->add_option("--max-len", ee.max_len, "maximum phrase length");
  c->add_option("--shards", ee.shards, "shuffle and split into this many shard files");
  c->add_option("--jobs", ee.jobs, "worker threads");
  c->add_option("--seed", ee.seed, "shuffle seed");
  c->add_flag("--no-leave-one-out", ee.no_leave_one_out,
              "keep counts intact (held-out or test data)");
  c->callback([&] { run_extract_examples(ee); });

  TrainArgs tr;
  c = app.add_subcommand("train", "train the phrase-translation classifier");
  c->add_option("--examples", tr.examples, "example file(s); repeat for shards")->required();
  c->add_option("--heldout", tr.heldout, "held-out example file")->required();
  c->add_option("--out", tr.out, "model output path")->required();
  c->add_option("--features", tr.features, "feature configuration file (fingerprint)");
  c->add_option("--passes", tr.passes, "passes over the data");
  c->add_option("--eta0", tr.eta0, "initial learning rate");
  c->add_option("--l2", tr.l2, "L2 regularization strength");
  c->add_option("--bits", tr.bits, "hash bits");
  c->add_option("--shards", tr.shards, "train with this many parallel shards");
  c->add_option("--seed", tr.seed, "random seed");
  c->callback([&] { run_train(tr); });

  DecodeArgs de;
  c = app.add_subcommand("decode", "translate a factored source file");
  c->add_option("--input", de.input, "factored source file")->required();
  c->add_option("--table", de.table, "phrase table path")->required();
  c->add_option("--lm", de.lm, "language model path")->required();
  c->add_option("--model", de.model, "classifier model path")->required();
  c->add_option("--features", de.features, "feature configuration file")->required();
  c->add_option("--weights", de.weights, "feature weights file");
  c->add_option("--output", de.output, "write translations here instead of stdout");
  c->add_option("--trace", de.trace, "per-sentence score breakdown and cache counters");
  c->add_option("--beam", de.beam, "stack size");
  c->add_option("--distortion", de.distortion, "distortion limit (negative = unlimited)");
  c->add_option("--jobs", de.jobs, "worker threads");
  c->add_flag("--naive", de.naive, "disable classifier caching");
  c->add_flag("--no-oov", de.no_oov, "fail on unknown words instead of copying them");
  c->callback([&] { run_decode(de); });

  BleuArgs bl;
  c = app.add_subcommand("bleu", "corpus BLEU of a hypothesis file against a reference");
  c->add_option("--hyp", bl.hyp, "hypothesis file, one tokenized sentence per line")->required();
  c->add_option("--ref", bl.ref, "reference file")->required();
  c->callback([&] { run_bleu(bl); });

  IntrinsicArgs in;
  c = app.add_subcommand("intrinsic-eval", "classifier accuracy on aligned test data");
  c->add_option("--src", in.src, "factored source corpus")->required();
  c->add_option("--tgt", in.tgt, "factored target corpus")->required();
  c->add_option("--align", in.align, "word alignment file")->required();
  c->add_option("--table", in.table, "phrase table path")->required();
  c->add_option("--model", in.model, "classifier model path")->required();
  c->add_option("--features", in.features, "feature configuration file")->required();
  c->add_option("--max-len", in.max_len, "maximum phrase length");
  c->callback([&] { run_intrinsic(in); });

  CacheReportArgs cr;
  c = app.add_subcommand("cache-report", "naive vs cached decoding equivalence and timing");
  c->add_option("--input", cr.input, "factored source file (>= 10 sentences)")->required();
  c->add_option("--table", cr.table, "phrase table path")->required();
  c->add_option("--lm", cr.lm, "language model path")->required();
  c->add_option("--model", cr.model, "classifier model path")->required();
  c->add_option("--features", cr.features, "feature configuration file")->required();
  c->add_option("--weights", cr.weights, "feature weights file");
  c->add_option("--report", cr.report, "per-sentence report path (default stdout)");
  c->add_option("--summary", cr.summary, "machine-readable key<TAB>value summary path");
  c->add_option("--beam", cr.beam, "stack size");
  c->add_option("--distortion", cr.distortion, "distortion limit");
  c->callback([&] { run_cache_report(cr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
