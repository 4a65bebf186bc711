// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "sopa/classifier.hpp"
#include "sopa/interpret.hpp"
#include "sopa/reference.hpp"

using namespace sopa;
using sopa::testing::PlantedTask;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double rel_dev(double a, double b) {
  if (a == b) return 0.0;
  if (!std::isfinite(a) || !std::isfinite(b)) return std::numeric_limits<double>::infinity();
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  char timing[32];
  std::snprintf(timing, sizeof timing, "%.2fs", seconds_since(start));
  std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << o.detail << " ("
            << timing << ")" << std::endl;
  if (!o.pass) ++failures;
}

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// 1 -------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  const SemiringKind semirings[] = {SemiringKind::kMaxProduct, SemiringKind::kMaxSum, SemiringKind::kSumProduct};
  const Encoder encoders[] = {Encoder::kSigmoid, Encoder::kIdentity};
  int instances = 0, exact_fail = 0;
  double worst_sum = 0.0;
  std::map<std::string, int> per_combo;
  for (int i = 0; i < 240; ++i) {
    PatternSetConfig cfg;
    cfg.semiring = semirings[i % 3];
    cfg.encoder = encoders[(i / 3) % 2];
    cfg.self_loops = (i / 6) % 4 != 1;
    cfg.epsilons = (i / 6) % 4 != 2;
    const int L = 1 + static_cast<int>(rng() % 6);
    const int n = 1 + static_cast<int>(rng() % 8);
    const int e = 2 + static_cast<int>(rng() % 4);
    // max-product is only a semiring over non-negative scores: with the
    // identity encoder, draw non-negative inputs and parameters.
    const bool nonneg = cfg.semiring == SemiringKind::kMaxProduct && cfg.encoder == Encoder::kIdentity;
    const auto pattern = nonneg ? sopa::testing::uniform_pattern(L, e, rng, 0.0, 0.6)
                                : sopa::testing::random_pattern(L, e, rng, 1.0);
    const auto doc = sopa::testing::random_doc(n, e, rng, nonneg ? 0.0 : -1.0, 1.0);
    const double fast = score_document(pattern, doc.view, cfg).total;
    const double oracle = reference::brute_force_doc_score(pattern, doc.view, cfg);
    if (cfg.semiring == SemiringKind::kSumProduct) {
      worst_sum = std::max(worst_sum, rel_dev(fast, oracle));
    } else if (!(fast == oracle)) {
      ++exact_fail;
    }
    ++instances;
    ++per_combo[std::string(to_string(cfg.semiring)) + "/" + std::string(to_string(cfg.encoder))];
  }
  const double t = seconds_since(start);
  const bool pass = instances >= 200 && exact_fail == 0 && worst_sum <= 1e-10 && t < 30.0 &&
                    per_combo.size() == 6;
  return {pass, std::to_string(instances) + " instances over " + std::to_string(per_combo.size()) +
                    " semiring/encoder combos, max-semiring mismatches " + std::to_string(exact_fail) +
                    ", sum-product worst rel " + num(worst_sum) + " (tol 1e-10), " + num(t) + "s (limit 30s)"};
}

// 2 -------------------------------------------------------------------------

Outcome cnn_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  int instances = 0;
  double worst = 0.0;
  for (int i = 0; i < 120; ++i) {
    const int L = 1 + static_cast<int>(rng() % 6);
    const int e = 2 + static_cast<int>(rng() % 4);
    const int n = std::max(1, L - 1 + static_cast<int>(rng() % 10));
    PatternSetConfig cfg = PatternSetConfig::cnn_mode(parse_pattern_spec(std::to_string(L) + ":1"));
    const auto pattern = sopa::testing::random_pattern(L, e, rng, 1.0);
    const auto doc = sopa::testing::random_doc(n, e, rng);
    const double fast = score_document(pattern, doc.view, cfg).total;
    const double cnn =
        reference::explicit_cnn_score(reference::cnn_filter(pattern), reference::cnn_biases(pattern), doc.view);
    worst = std::max(worst, rel_dev(fast, cnn));
    ++instances;
  }

  // Constructed instance: L = 3 on a 2-token document. With epsilon the
  // middle main step can be skipped; CNN mode cannot match at all.
  PatternParams p(3, 2);
  p.main_weight(0)[0] = 1.0;
  p.main_weight(2)[1] = 1.0;
  p.eps_bias(1) = -0.5;
  const auto doc = sopa::testing::random_doc(2, 2, rng, 0.0, 1.0);
  PatternSetConfig cnn = PatternSetConfig::cnn_mode(parse_pattern_spec("3:1"));
  PatternSetConfig with_eps = cnn;
  with_eps.epsilons = true;
  const double cnn_score = score_document(p, doc.view, cnn).total;
  const double eps_score = score_document(p, doc.view, with_eps).total;
  const double zero = Semiring(SemiringKind::kMaxSum).zero();
  const bool shorter = eps_score > zero && cnn_score == zero;

  const double t = seconds_since(start);
  return {instances >= 100 && worst <= 1e-10 && shorter && t < 10.0,
          std::to_string(instances) + " instances, worst rel " + num(worst) +
              " (tol 1e-10); L=3 on 2 tokens: with epsilon " + num(eps_score) + ", CNN mode " + num(cnn_score) +
              ", " + num(t) + "s (limit 10s)"};
}

// 3 -------------------------------------------------------------------------

Outcome gradient_checks() {
  const auto start = Clock::now();
  std::mt19937_64 rng(303);
  const Embeddings emb = sopa::testing::random_embeddings(30, 4, rng);
  std::string summary;
  bool pass = true;
  int configs = 0;
  for (auto semiring : {SemiringKind::kMaxProduct, SemiringKind::kMaxSum}) {
    for (auto encoder : {Encoder::kSigmoid, Encoder::kIdentity}) {
      double worst = 0.0;
      int models = 0;
      for (int m = 0; m < 20; ++m) {
        PatternSetConfig cfg;
        cfg.spec = parse_pattern_spec("1:1,2:1,3:2");
        cfg.semiring = semiring;
        cfg.encoder = encoder;
        Rng model_rng(rng());
        ModelBundle model = init_model(cfg, 5, 3, emb.vocab, model_rng, 0.5);
        std::vector<TokenizedDocument> docs;
        for (int d = 0; d < 4; ++d) {
          const int n = 3 + static_cast<int>(rng() % 6);
          std::string text;
          for (int k = 0; k < n; ++k) text += "w" + std::to_string(rng() % 30) + " ";
          auto doc = tokenize_and_encode(text, emb.vocab, false);
          doc.label = static_cast<int>(rng() % 3);
          docs.push_back(std::move(doc));
        }
        const auto r = check_gradients(model, docs, emb, model_rng);
        worst = std::max(worst, r.fd.max_rel_error);
        ++models;
      }
      const bool ok = worst < 1e-4 && models >= 20;
      pass = pass && ok;
      ++configs;
      summary += std::string(to_string(semiring)) + "/" + std::string(to_string(encoder)) + " " +
                 std::to_string(models) + " models worst " + num(worst) + "; ";
    }
  }
  const double t = seconds_since(start);
  return {pass && configs == 4 && t < 120.0, summary + "tol 1e-4, " + num(t) + "s (limit 120s)"};
}

// 4 -------------------------------------------------------------------------

Outcome parameter_accounting() {
  Rng rng(404);
  PatternSetConfig cfg;
  cfg.spec = parse_pattern_spec("5:10");
  const ModelBundle big = init_model(cfg, 10, 2, Vocabulary(300), rng);
  const auto count = count_parameters(big);
  bool registered = count.total() == trainable_count(big) && count.total() == flatten_parameters(big).size();
  for (const char* spec : {"1:1", "6:10,5:10,4:10", "3:5", "7:2,1:3"}) {
    PatternSetConfig c;
    c.spec = parse_pattern_spec(spec);
    const ModelBundle m = init_model(c, 7, 3, Vocabulary(2 + static_cast<int>(rng() % 20)), rng);
    const autodiff::AdamState optimizer(flatten_parameters(m).size());
    registered = registered && count_parameters(m).total() == optimizer.m.size();
  }
  return {count.sopa == 30150 && registered,
          "e=300 spec 5:10 sopa count " + std::to_string(count.sopa) + " (expected 30150); counts match " +
              "registered optimizer scalars: " + (registered ? "yes" : "no")};
}

// 5 -------------------------------------------------------------------------

Outcome sigmoid_bound() {
  std::mt19937_64 rng(505);
  const Embeddings emb = sopa::testing::random_embeddings(100, 8, rng);
  PatternSetConfig cfg;
  cfg.spec = parse_pattern_spec("1:2,3:2,6:2");
  Rng model_rng(rng());
  const ModelBundle model = init_model(cfg, 4, 2, emb.vocab, model_rng, 1.0);
  double lo = 1.0, hi = 0.0;
  int docs = 0;
  for (; docs < 1000; ++docs) {
    // At least as long as the longest pattern, so that END is reachable;
    // an unreachable END scores exactly zero.
    const int n = 6 + static_cast<int>(rng() % 35);
    std::string text;
    for (int k = 0; k < n; ++k) text += "w" + std::to_string(rng() % 100) + " ";
    const auto doc = tokenize_and_encode(text, emb.vocab, false);
    for (const auto& p : model.patterns) {
      const double s = score_document(p, doc, emb, cfg).total;
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  return {lo > 0.0 && hi < 1.0,
          std::to_string(docs) + " documents x 6 patterns, scores in [" + num(lo) + ", " + num(hi) + "]"};
}

// 6 -------------------------------------------------------------------------

Outcome linear_scaling() {
  std::mt19937_64 rng(606);
  std::vector<PatternParams> patterns;
  for (int L : {2, 4, 6}) patterns.push_back(sopa::testing::random_pattern(L, 5, rng));
  std::string detail;
  bool pass = true;
  std::uint64_t previous = 0;
  for (const auto& kind : {SemiringKind::kMaxProduct, SemiringKind::kMaxSum, SemiringKind::kSumProduct}) {
    PatternSetConfig cfg;
    cfg.semiring = kind;
    previous = 0;
    detail += std::string(to_string(kind)) + " ratios";
    for (int n : {16, 32, 64}) {
      const auto doc = sopa::testing::random_doc(n, 5, rng);
      CountingSemiring counter(kind);
      for (const auto& p : patterns) score_document_counted(p, doc.view, cfg, counter);
      if (previous > 0) {
        const double ratio = static_cast<double>(counter.total()) / static_cast<double>(previous);
        pass = pass && ratio <= 2.2;
        detail += " " + num(ratio);
      }
      previous = counter.total();
    }
    detail += "; ";
  }
  return {pass, detail + "limit 2.2"};
}

// 7-10 ---------------------------------------------------------------------

PatternSetConfig planted_patterns() {
  PatternSetConfig cfg;
  cfg.spec = parse_pattern_spec("3:5");
  cfg.semiring = SemiringKind::kMaxProduct;
  cfg.encoder = Encoder::kSigmoid;
  return cfg;
}

struct PlantedRun {
  TrainResult result;
  double seconds = 0.0;
};

const PlantedTask& planted_task() {
  static const PlantedTask task = sopa::testing::make_planted_task();
  return task;
}

const PlantedRun& planted_run() {
  static const PlantedRun run = [] {
    const auto start = Clock::now();
    const auto& task = planted_task();
    PlantedRun r;
    r.result = train(task.train, task.dev, task.embeddings,
                     sopa::testing::planted_train_config(planted_patterns()));
    r.seconds = seconds_since(start);
    return r;
  }();
  return run;
}

Outcome planted_end_to_end() {
  const auto start = Clock::now();
  const auto& run = planted_run();
  const auto& task = planted_task();
  const auto eval = evaluate(run.result.model, task.test, task.embeddings);
  const double total = seconds_since(start);
  const int epochs = static_cast<int>(run.result.log.size());
  return {eval.accuracy >= 0.95 && epochs <= 250 && total < 120.0,
          "test accuracy " + num(eval.accuracy) + " (need 0.95), dev accuracy " +
              num(run.result.best_dev_accuracy) + ", " + std::to_string(epochs) + " epochs (best " +
              std::to_string(run.result.best_epoch) + "), " + num(total) + "s (limit 120s)"};
}

std::vector<std::string> main_tokens(const PhraseMatch& phrase) {
  std::vector<std::string> out;
  for (const auto& t : phrase.tokens) {
    if (t.kind == TransitionKind::kMain) out.push_back(t.text);
  }
  return out;
}

Outcome interpretability() {
  const auto& task = planted_task();
  ModelBundle model = planted_run().result.model;
  const int k = static_cast<int>(model.patterns.size());

  // The best-contributing pattern: most often the top contributor on
  // positive test documents.
  std::vector<const TokenizedDocument*> positives;
  for (const auto& d : task.test) {
    if (d.label == 1) positives.push_back(&d);
  }
  std::vector<int> top_count(static_cast<std::size_t>(k), 0);
  std::vector<ContributionReport> reports;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    reports.push_back(pattern_contributions(model, *positives[i], task.embeddings, static_cast<int>(i)));
    const auto& c = reports.back().contributions.front();
    if (c.value > 0.0) ++top_count[static_cast<std::size_t>(c.pattern)];
  }
  const int best = static_cast<int>(std::max_element(top_count.begin(), top_count.end()) - top_count.begin());
  const double top_share = static_cast<double>(top_count[static_cast<std::size_t>(best)]) /
                           static_cast<double>(positives.size());

  const auto phrases = top_k_phrases(model, task.train, task.embeddings, best, 5);
  const bool trigram_first = !phrases.phrases.empty() && main_tokens(phrases.phrases.front()) == task.trigram;

  // Zero the hidden-layer column of another pattern.
  const int other = (best + 1) % k;
  for (int j = 0; j < model.mlp.hidden; ++j) {
    model.mlp.hidden_weight[static_cast<std::size_t>(other * model.mlp.hidden + j)] = 0.0;
  }
  bool zero_exact = true;
  for (std::size_t i = 0; i < 20 && i < positives.size(); ++i) {
    const auto r = pattern_contributions(model, *positives[i], task.embeddings);
    for (const auto& c : r.contributions) {
      if (c.pattern == other) zero_exact = zero_exact && c.value == 0.0;
    }
  }

  std::string top_text;
  if (!phrases.phrases.empty()) {
    for (const auto& t : phrases.phrases.front().tokens) {
      top_text += (top_text.empty() ? "" : " ") + (t.kind == TransitionKind::kEpsilon ? std::string("eps")
                                                   : t.kind == TransitionKind::kSelfLoop ? t.text + "_SL"
                                                                                         : t.text);
    }
  }
  return {trigram_first && top_share >= 0.9 && zero_exact,
          "pattern " + std::to_string(best) + " is the largest positive contributor on " +
              num(100.0 * top_share) + "% of " + std::to_string(positives.size()) +
              " positive test docs (need 90%); its top phrase '" + top_text + "' " +
              (trigram_first ? "is" : "is NOT") + " the planted trigram; zeroed-column contribution " +
              (zero_exact ? "exactly 0" : "NONZERO")};
}

Outcome ablation() {
  const auto& task = planted_task();
  struct Variant {
    const char* name;
    bool self_loops;
    bool epsilons;
  };
  const Variant variants[] = {{"max-sum+identity", true, true},
                              {"minus self-loops", false, true},
                              {"minus epsilon", true, false},
                              {"minus both", false, false}};
  std::string detail;
  bool pass = true;
  for (const auto& v : variants) {
    PatternSetConfig cfg = planted_patterns();
    cfg.semiring = SemiringKind::kMaxSum;
    cfg.encoder = Encoder::kIdentity;
    cfg.self_loops = v.self_loops;
    cfg.epsilons = v.epsilons;
    TrainConfig tc = sopa::testing::planted_train_config(cfg);
    tc.max_epochs = 60;
    const auto result = train(task.train, task.dev, task.embeddings, tc);
    const auto eval = evaluate(result.model, task.test, task.embeddings);
    detail += std::string(v.name) + " acc " + num(eval.accuracy);
    if (cfg.is_cnn_mode()) {
      double worst = 0.0;
      int checked = 0;
      for (const auto& doc : task.test) {
        const auto tokens = token_vectors(doc, task.embeddings);
        for (const auto& p : result.model.patterns) {
          const double fast = score_document(p, tokens, cfg).total;
          const double cnn =
              reference::explicit_cnn_score(reference::cnn_filter(p), reference::cnn_biases(p), tokens);
          worst = std::max(worst, rel_dev(fast, cnn));
          ++checked;
        }
      }
      pass = pass && worst <= 1e-10;
      detail += ", CNN oracle on " + std::to_string(checked) + " doc scores worst rel " + num(worst);
    }
    detail += "; ";
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

Outcome determinism() {
  const auto& task = planted_task();
  const auto& first = planted_run().result;
  const auto second = train(task.train, task.dev, task.embeddings,
                            sopa::testing::planted_train_config(planted_patterns()));
  const auto a = flatten_parameters(first.model);
  const auto b = flatten_parameters(second.model);
  bool same_log = first.log.size() == second.log.size();
  for (std::size_t i = 0; same_log && i < first.log.size(); ++i) {
    same_log = first.log[i].train_loss == second.log[i].train_loss && first.log[i].dev_loss == second.log[i].dev_loss;
  }
  const bool identical = a == b && same_log;

  const std::string dir = sopa::testing::scratch_dir("acceptance");
  const std::string path = dir + "/model.json";
  save_model(first.model, path);
  ModelIntegrity integrity;
  const ModelBundle loaded = load_model(path, &integrity);
  const auto before = evaluate(first.model, task.test, task.embeddings);
  const auto after = evaluate(loaded, task.test, task.embeddings);
  bool same_probs = true;
  for (const auto& doc : task.test) {
    same_probs = same_probs && forward_probabilities(first.model, doc, task.embeddings) ==
                                   forward_probabilities(loaded, doc, task.embeddings);
  }
  const bool round_trip = flatten_parameters(loaded) == a && before.predictions == after.predictions &&
                          before.accuracy == after.accuracy && before.mean_loss == after.mean_loss &&
                          same_probs && integrity.digest_matches;
  std::filesystem::remove_all(dir);
  return {identical && round_trip,
          std::string("retrain bit-identical: ") + (identical ? "yes" : "no") +
              "; save/load preserves parameters, probabilities and evaluation: " + (round_trip ? "yes" : "no")};
}

}  // namespace

int main() {
  report(1, "oracle equivalence", oracle_equivalence);
  report(2, "CNN equivalence", cnn_equivalence);
  report(3, "gradient checks", gradient_checks);
  report(4, "parameter accounting", parameter_accounting);
  report(5, "sigmoid bound", sigmoid_bound);
  report(6, "linear scaling", linear_scaling);
  report(7, "planted pattern end-to-end", planted_end_to_end);
  report(8, "interpretability", interpretability);
  report(9, "ablation harness", ablation);
  report(10, "determinism and serialization", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
