#ifndef PBMT_CLASSIFIER_HPP
#define PBMT_CLASSIFIER_HPP

#include <cmath>
#include <istream>
#include <ostream>
#include <thread>
#include <vector>

#include "pbmt/features.hpp"

namespace pbmt {

struct LinearModel {
  int hash_bits = 22;
  uint64_t config_fingerprint = 0;
  std::vector<double> weights;  // dense, length 2^hash_bits
  double eta0 = 0.0;
  int passes_selected = 0;

  static LinearModel zeros(int bits, uint64_t fingerprint) {
    LinearModel m;
    m.hash_bits = bits;
    m.config_fingerprint = fingerprint;
    m.weights.assign(size_t(1) << bits, 0.0);
    return m;
  }
};

inline void check_fingerprint(const LinearModel& model, const FeatureConfig& cfg) {
  if (model.config_fingerprint != 0 && model.config_fingerprint != cfg.fingerprint())
    throw std::runtime_error("model was trained with a different feature configuration");
}

// One multi-candidate training instance. Candidates carry only their
// translation features; shared features are stored once.
struct TrainingExample {
  FeatureList shared_src{FeatureNamespace::SharedSource, {}};
  FeatureList shared_tgt{FeatureNamespace::SharedTarget, {}};
  std::vector<FeatureList> candidates;  // Translation namespace
  std::vector<int> losses;              // 0 for gold, 1 otherwise
  int gold_index = 0;
};

struct TrainConfig {
  int passes = 10;
  double eta0 = 0.5;
  int shards = 1;
  uint64_t seed = 1;
  double l2 = 0.0;
  int hash_bits = 22;
  uint64_t config_fingerprint = 0;
};

namespace detail {

inline double dot(const std::vector<double>& w, const std::vector<HashedFeature>& items) {
  double s = 0.0;
  for (const HashedFeature& f : items) s += w[f.index] * f.value;
  return s;
}

// Candidate score = src part + tgt part. The src part merges the candidate's
// own features with their product against the shared source features; the tgt
// part is the product against the shared target features. Each part is summed
// in sorted index order, so the search-time decomposition reproduces the
// training-time score bit for bit.
inline std::vector<HashedFeature> src_part_items(const FeatureSet& shared_src,
                                                 const FeatureSet& translation, int hash_bits) {
  FeatureSet crossed = cross(shared_src, translation, hash_bits);
  std::vector<HashedFeature> items;
  items.reserve(translation.items.size() + crossed.items.size());
  items.insert(items.end(), translation.items.begin(), translation.items.end());
  items.insert(items.end(), crossed.items.begin(), crossed.items.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const HashedFeature& a, const HashedFeature& b) { return a.index < b.index; });
  return items;
}

inline std::vector<HashedFeature> tgt_part_items(const FeatureSet& shared_tgt,
                                                 const FeatureSet& translation, int hash_bits) {
  return cross(shared_tgt, translation, hash_bits).items;
}

struct HashedCandidate {
  std::vector<HashedFeature> src_part;
  std::vector<HashedFeature> tgt_part;
  int loss = 1;
};

struct HashedExample {
  std::vector<HashedCandidate> candidates;
  int gold_index = 0;
};

inline HashedExample hash_example(const TrainingExample& ex, int bits) {
  HashedExample out;
  out.gold_index = ex.gold_index;
  FeatureSet s_src = hash_features(ex.shared_src, bits);
  FeatureSet s_tgt = hash_features(ex.shared_tgt, bits);
  out.candidates.reserve(ex.candidates.size());
  for (size_t i = 0; i < ex.candidates.size(); ++i) {
    FeatureSet t = hash_features(ex.candidates[i], bits);
    out.candidates.push_back(
        {src_part_items(s_src, t, bits), tgt_part_items(s_tgt, t, bits), ex.losses[i]});
  }
  return out;
}

inline double candidate_score(const std::vector<double>& w, const HashedCandidate& c) {
  return dot(w, c.src_part) + dot(w, c.tgt_part);
}

inline int argmax_lowest(const std::vector<double>& scores) {
  int best = 0;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = (int)i;
  return best;
}

// One sequential pass of one-against-all logistic SGD. `t` is the caller's
// persistent update counter; the step size is eta0/sqrt(t).
inline long run_pass(std::vector<double>& w, const std::vector<HashedExample>& examples,
                     uint64_t& t, const TrainConfig& cfg) {
  long skipped = 0;
  for (const HashedExample& ex : examples) {
    if (ex.candidates.empty()) {
      ++skipped;
      continue;
    }
    for (const HashedCandidate& c : ex.candidates) {
      double s = candidate_score(w, c);
      double y = c.loss == 0 ? 1.0 : -1.0;
      double g = y / (1.0 + std::exp(y * s));
      ++t;
      double eta = cfg.eta0 / std::sqrt((double)t);
      for (const HashedFeature& f : c.src_part) w[f.index] += eta * (g * f.value - cfg.l2 * w[f.index]);
      for (const HashedFeature& f : c.tgt_part) w[f.index] += eta * (g * f.value - cfg.l2 * w[f.index]);
    }
  }
  return skipped;
}

inline double heldout_accuracy_hashed(const std::vector<double>& w,
                                      const std::vector<HashedExample>& examples) {
  long correct = 0, total = 0;
  for (const HashedExample& ex : examples) {
    if (ex.candidates.empty()) continue;
    std::vector<double> scores;
    scores.reserve(ex.candidates.size());
    for (const HashedCandidate& c : ex.candidates) scores.push_back(candidate_score(w, c));
    if (argmax_lowest(scores) == ex.gold_index) ++correct;
    ++total;
  }
  if (total == 0) throw std::runtime_error("held-out accuracy needs at least one example");
  return (double)correct / total;
}

}  // namespace detail

// w . [T u cross(S_src,T) u cross(S_tgt,T)]; colliding indices accumulate.
inline double raw_score(const LinearModel& model, const FeatureSet& shared_src,
                        const FeatureSet& shared_tgt, const FeatureSet& translation) {
  return detail::dot(model.weights,
                     detail::src_part_items(shared_src, translation, model.hash_bits)) +
         detail::dot(model.weights,
                     detail::tgt_part_items(shared_tgt, translation, model.hash_bits));
}

inline std::vector<double> softmax(std::vector<double> scores) {
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : scores) s /= z;
  return scores;
}

inline std::vector<double> predict_distribution(const LinearModel& model,
                                                const FeatureSet& shared_src,
                                                const FeatureSet& shared_tgt,
                                                const std::vector<FeatureSet>& candidates) {
  if (candidates.empty()) throw std::runtime_error("predict_distribution needs >= 1 candidate");
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const FeatureSet& t : candidates)
    scores.push_back(raw_score(model, shared_src, shared_tgt, t));
  return softmax(std::move(scores));
}

inline double heldout_accuracy(const LinearModel& model,
                               const std::vector<TrainingExample>& examples) {
  std::vector<detail::HashedExample> hashed;
  hashed.reserve(examples.size());
  for (const TrainingExample& ex : examples)
    hashed.push_back(detail::hash_example(ex, model.hash_bits));
  return detail::heldout_accuracy_hashed(model.weights, hashed);
}

struct TrainResult {
  LinearModel model;
  std::vector<double> pass_accuracy;  // held-out accuracy after each pass
  int best_pass = 0;                  // 1-based
  long skipped_empty = 0;
  long empty_shards = 0;
};

inline void check_hash_bits(int bits) {
  if (bits < 1 || bits > 31)
    throw std::runtime_error("hash bits must be in [1, 31], got " + std::to_string(bits));
}

inline TrainResult train(const std::vector<TrainingExample>& examples,
                         const std::vector<TrainingExample>& heldout, const TrainConfig& cfg) {
  check_hash_bits(cfg.hash_bits);
  if (examples.empty()) throw std::runtime_error("no training examples");
  if (heldout.empty()) throw std::runtime_error("no held-out examples");
  std::vector<detail::HashedExample> train_h, held_h;
  train_h.reserve(examples.size());
  for (const TrainingExample& ex : examples) train_h.push_back(detail::hash_example(ex, cfg.hash_bits));
  held_h.reserve(heldout.size());
  for (const TrainingExample& ex : heldout) held_h.push_back(detail::hash_example(ex, cfg.hash_bits));

  TrainResult result;
  result.model = LinearModel::zeros(cfg.hash_bits, cfg.config_fingerprint);
  result.model.eta0 = cfg.eta0;
  std::vector<double> w = result.model.weights;
  std::vector<double> best_w = w;
  double best_acc = -1.0;
  uint64_t t = 0;
  for (int pass = 1; pass <= cfg.passes; ++pass) {
    result.skipped_empty += detail::run_pass(w, train_h, t, cfg);
    double acc = detail::heldout_accuracy_hashed(w, held_h);
    result.pass_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best_w = w;
      result.best_pass = pass;
    }
  }
  result.model.weights = std::move(best_w);
  result.model.passes_selected = result.best_pass;
  return result;
}

// Shard-parallel training: every pass runs one SGD sweep per shard from the
// shared starting point, then the shard weight vectors are averaged at the
// pass-end barrier. One shard reproduces sequential training bit for bit.
inline TrainResult train_sharded(const std::vector<std::vector<TrainingExample>>& shards,
                                 const std::vector<TrainingExample>& heldout,
                                 const TrainConfig& cfg) {
  check_hash_bits(cfg.hash_bits);
  if (shards.empty()) throw std::runtime_error("no training shards");
  if (heldout.empty()) throw std::runtime_error("no held-out examples");
  std::vector<std::vector<detail::HashedExample>> shard_h(shards.size());
  for (size_t k = 0; k < shards.size(); ++k) {
    shard_h[k].reserve(shards[k].size());
    for (const TrainingExample& ex : shards[k])
      shard_h[k].push_back(detail::hash_example(ex, cfg.hash_bits));
  }
  std::vector<detail::HashedExample> held_h;
  held_h.reserve(heldout.size());
  for (const TrainingExample& ex : heldout) held_h.push_back(detail::hash_example(ex, cfg.hash_bits));

  TrainResult result;
  result.model = LinearModel::zeros(cfg.hash_bits, cfg.config_fingerprint);
  result.model.eta0 = cfg.eta0;
  const size_t dim = result.model.weights.size();
  std::vector<double> avg = result.model.weights;
  std::vector<double> best_w = avg;
  double best_acc = -1.0;
  std::vector<uint64_t> counters(shards.size(), 0);
  std::vector<long> skipped(shards.size(), 0);
  long nonempty = 0;
  for (const auto& shard : shard_h)
    if (!shard.empty()) ++nonempty;
  result.empty_shards = (long)shard_h.size() - nonempty;
  if (nonempty == 0) throw std::runtime_error("all training shards are empty");

  for (int pass = 1; pass <= cfg.passes; ++pass) {
    std::vector<std::vector<double>> worker_w(shards.size(), avg);
    std::vector<std::thread> workers;
    workers.reserve(shards.size());
    for (size_t k = 0; k < shards.size(); ++k) {
      workers.emplace_back([&, k] {
        skipped[k] += detail::run_pass(worker_w[k], shard_h[k], counters[k], cfg);
      });
    }
    for (std::thread& th : workers) th.join();
    std::fill(avg.begin(), avg.end(), 0.0);
    for (size_t k = 0; k < shards.size(); ++k) {
      if (shard_h[k].empty()) continue;  // excluded from the average
      for (size_t i = 0; i < dim; ++i) avg[i] += worker_w[k][i];
    }
    for (size_t i = 0; i < dim; ++i) avg[i] /= (double)nonempty;
    double acc = detail::heldout_accuracy_hashed(avg, held_h);
    result.pass_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best_w = avg;
      result.best_pass = pass;
    }
  }
  for (long s : skipped) result.skipped_empty += s;
  result.model.weights = std::move(best_w);
  result.model.passes_selected = result.best_pass;
  return result;
}

// -------------------------------------------------------------------------
// Model file: header line, then sparse index<TAB>weight rows.

inline void save_model(const LinearModel& model, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "bits=" << model.hash_bits << " config=" << model.config_fingerprint
      << " eta0=" << fmt_double(model.eta0) << " passes_selected=" << model.passes_selected
      << '\n';
  for (size_t i = 0; i < model.weights.size(); ++i)
    if (model.weights[i] != 0.0) out << i << '\t' << fmt_double(model.weights[i]) << '\n';
}

inline LinearModel load_model(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("empty model file: " + path);
  LinearModel model;
  for (const std::string& field : split_ws(lines[0])) {
    if (field.rfind("bits=", 0) == 0)
      model.hash_bits = (int)parse_long(field.substr(5), "model bits");
    else if (field.rfind("config=", 0) == 0)
      model.config_fingerprint = (uint64_t)std::stoull(field.substr(7));
    else if (field.rfind("eta0=", 0) == 0)
      model.eta0 = parse_double(field.substr(5), "eta0");
    else if (field.rfind("passes_selected=", 0) == 0)
      model.passes_selected = (int)parse_long(field.substr(16), "passes_selected");
    else
      throw std::runtime_error("unrecognized model header field: " + field);
  }
  check_hash_bits(model.hash_bits);
  model.weights.assign(size_t(1) << model.hash_bits, 0.0);
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> cols = split_on(lines[i], '\t');
    if (cols.size() != 2)
      throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": expected index<TAB>weight");
    size_t idx = (size_t)parse_long(cols[0], "weight index");
    if (idx >= model.weights.size())
      throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": index out of range");
    model.weights[idx] = parse_double(cols[1], "weight");
  }
  return model;
}

// -------------------------------------------------------------------------
// Training example file. One block per example:
//   shared |s <key> ...
//   shared_t |g <key> ...
//   <loss> |t <key> ...     (one line per candidate)
// Blocks are separated by a blank line.

inline void write_example(std::ostream& out, const TrainingExample& ex) {
  out << "shared |s";
  for (const Feature& f : ex.shared_src.items) out << ' ' << f.key;
  out << "\nshared_t |g";
  for (const Feature& f : ex.shared_tgt.items) out << ' ' << f.key;
  out << '\n';
  for (size_t i = 0; i < ex.candidates.size(); ++i) {
    out << ex.losses[i] << " |t";
    for (const Feature& f : ex.candidates[i].items) out << ' ' << f.key;
    out << '\n';
  }
  out << '\n';
}

inline std::vector<TrainingExample> parse_examples(const std::vector<std::string>& lines) {
  std::vector<TrainingExample> out;
  size_t i = 0;
  auto keys_after = [](const std::vector<std::string>& cols, size_t from) {
    std::vector<Feature> items;
    for (size_t k = from; k < cols.size(); ++k) items.push_back({cols[k], 1.0});
    return items;
  };
  while (i < lines.size()) {
    while (i < lines.size() && strip(lines[i]).empty()) ++i;
    if (i >= lines.size()) break;
    TrainingExample ex;
    std::vector<std::string> cols = split_ws(lines[i]);
    if (cols.size() < 2 || cols[0] != "shared" || cols[1] != "|s")
      throw std::runtime_error("example line " + std::to_string(i + 1) + ": expected 'shared |s ...'");
    ex.shared_src.items = keys_after(cols, 2);
    ++i;
    if (i >= lines.size()) throw std::runtime_error("truncated example block");
    cols = split_ws(lines[i]);
    if (cols.size() < 2 || cols[0] != "shared_t" || cols[1] != "|g")
      throw std::runtime_error("example line " + std::to_string(i + 1) +
                               ": expected 'shared_t |g ...'");
    ex.shared_tgt.items = keys_after(cols, 2);
    ++i;
    int gold_count = 0;
    while (i < lines.size() && !strip(lines[i]).empty()) {
      cols = split_ws(lines[i]);
      if (cols.size() < 2 || cols[1] != "|t")
        throw std::runtime_error("example line " + std::to_string(i + 1) +
                                 ": expected '<loss> |t ...'");
      int loss = (int)parse_long(cols[0], "candidate loss");
      if (loss != 0 && loss != 1)
        throw std::runtime_error("example line " + std::to_string(i + 1) + ": loss must be 0 or 1");
      FeatureList cand{FeatureNamespace::Translation, keys_after(cols, 2)};
      if (loss == 0) {
        ex.gold_index = (int)ex.candidates.size();
        ++gold_count;
      }
      ex.candidates.push_back(std::move(cand));
      ex.losses.push_back(loss);
      ++i;
    }
    if (ex.candidates.empty())
      throw std::runtime_error("example block ending at line " + std::to_string(i) +
                               " has no candidates");
    if (gold_count != 1)
      throw std::runtime_error("example block ending at line " + std::to_string(i) +
                               " must have exactly one loss-0 candidate");
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<TrainingExample> load_examples(const std::string& path) {
  return parse_examples(read_lines(path));
}

}  // namespace pbmt

#endif  // PBMT_CLASSIFIER_HPP
