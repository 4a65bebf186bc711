#include "sopa/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sopa/classifier.hpp"
#include "sopa/error.hpp"
#include "sopa/interpret.hpp"
#include "sopa/reference.hpp"

namespace sopa::cli {

namespace {

using nlohmann::json;

struct ModelFlags {
  std::string semiring = "max-product";
  std::string encoder = "sigmoid";
  std::string patterns = "5:10,4:10,3:10,2:10";
  bool no_self_loops = false;
  bool no_epsilon = false;
  int max_length = kDefaultMaxPatternLength;
};

struct TrainFlags {
  std::string train_path;
  std::string dev_path;
  std::string embeddings;
  std::uint64_t seed = 1;
  ModelFlags model;
  double lr = 0.01;
  double dropout = 0.0;
  int mlp_hidden = 10;
  int batch_size = 150;
  int max_epochs = 250;
  int patience = 30;
  bool lowercase = false;
  bool no_normalize = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--semiring", f.semiring, "max-product | max-sum | sum-product")->capture_default_str();
  cmd->add_option("--encoder", f.encoder, "sigmoid | identity")->capture_default_str();
  cmd->add_option("--patterns", f.patterns, "pattern spec, e.g. 6:10,5:10,4:10")->capture_default_str();
  cmd->add_flag("--no-self-loops", f.no_self_loops, "disable self-loop transitions");
  cmd->add_flag("--no-epsilon", f.no_epsilon, "disable epsilon transitions");
  cmd->add_option("--max-pattern-length", f.max_length, "upper bound on pattern length")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool require_data) {
  auto* train = cmd->add_option("--train", f.train_path, "training set (label<TAB>text)");
  auto* dev = cmd->add_option("--dev", f.dev_path, "development set (label<TAB>text)");
  auto* emb = cmd->add_option("--embeddings", f.embeddings, "word vectors (word v1 ... ve)");
  if (require_data) {
    train->required();
    dev->required();
    emb->required();
  }
  cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
  add_model_flags(cmd, f.model);
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "dropout rate")->capture_default_str();
  cmd->add_option("--mlp-hidden", f.mlp_hidden, "MLP hidden dimension")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "minibatch size")->capture_default_str();
  cmd->add_option("--max-epochs", f.max_epochs, "epoch cap")->capture_default_str();
  cmd->add_option("--patience", f.patience, "early-stopping patience in epochs")->capture_default_str();
  cmd->add_flag("--lowercase", f.lowercase, "lowercase tokens before lookup");
  cmd->add_flag("--no-normalize", f.no_normalize, "keep embeddings at their stored length");
}

PatternSetConfig pattern_config(const ModelFlags& f) {
  PatternSetConfig c;
  c.spec = parse_pattern_spec(f.patterns, f.max_length);
  c.semiring = parse_semiring_kind(f.semiring);
  c.encoder = parse_encoder(f.encoder);
  c.self_loops = !f.no_self_loops;
  c.epsilons = !f.no_epsilon;
  return c;
}

TrainConfig train_config(const TrainFlags& f) {
  TrainConfig c;
  c.learning_rate = f.lr;
  c.dropout = f.dropout;
  c.batch_size = f.batch_size;
  c.max_epochs = f.max_epochs;
  c.patience = f.patience;
  c.seed = f.seed;
  c.patterns = pattern_config(f.model);
  c.mlp_hidden = f.mlp_hidden;
  c.lowercase = f.lowercase;
  c.validate();
  return c;
}

Embeddings read_vectors(const std::string& path, bool normalize, std::ostream& err) {
  std::vector<std::string> warnings;
  Embeddings e = load_embeddings(path, normalize, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return e;
}

std::vector<TokenizedDocument> read_docs(const std::string& path, const Vocabulary& vocab, bool lowercase) {
  return encode_dataset(load_dataset(path), vocab, lowercase);
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string epoch_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"dev_loss", r.dev_loss},
              {"dev_accuracy", r.dev_accuracy},
              {"improved", r.improved}}
      .dump();
}

void log_resolved(const CLI::App* cmd, std::ostream& err) {
  err << "# resolved " << cmd->get_name() << " config\n";
  std::istringstream lines(cmd->config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) err << "#   " << line << '\n';
  }
}

// --------------------------------------------------------------------------

int cmd_train(const TrainFlags& f, const std::string& out_path, std::string log_path,
              std::ostream& out, std::ostream& err) {
  const TrainConfig config = train_config(f);
  const Embeddings emb = read_vectors(f.embeddings, !f.no_normalize, err);
  const auto train_docs = read_docs(f.train_path, emb.vocab, f.lowercase);
  const auto dev_docs = read_docs(f.dev_path, emb.vocab, f.lowercase);
  if (log_path.empty()) log_path = out_path + ".log.jsonl";

  std::string log_text;
  auto result = train(train_docs, dev_docs, emb, config, [&](const EpochRecord& r) {
    log_text += epoch_json(r) + "\n";
  });
  result.model.normalized_embeddings = !f.no_normalize;
  save_model(result.model, out_path);
  write_file_atomic(log_path, log_text);
  const auto count = count_parameters(result.model);
  out << "epochs " << result.log.size() << ", best epoch " << result.best_epoch << ", dev loss "
      << fmt(result.best_dev_loss, 6) << ", dev accuracy " << fmt(result.best_dev_accuracy, 4) << '\n';
  out << "parameters: sopa " << count.sopa << ", mlp " << count.mlp << '\n';
  out << "model written to " << out_path << '\n';
  return 0;
}

struct EvalFlags {
  std::string model;
  std::string data;
  std::string embeddings;
  std::string metrics;
};

ModelBundle load_checked(const std::string& path, std::ostream& err, ModelIntegrity* integrity = nullptr) {
  ModelIntegrity local;
  ModelBundle model = load_model(path, &local);
  if (!local.digest_matches) err << "warning: parameter digest of " << path << " does not match\n";
  if (integrity) *integrity = std::move(local);
  return model;
}

int cmd_eval(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  const ModelBundle model = load_checked(f.model, err);
  const Embeddings emb = read_vectors(f.embeddings, model.normalized_embeddings, err);
  require_matching_vocab(model, emb);
  const auto docs = read_docs(f.data, emb.vocab, model.lowercase);
  const EvalResult r = evaluate(model, docs, emb);
  out << "accuracy " << fmt(r.accuracy, 4) << " (" << r.correct << "/" << r.total << ")\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    out << "class " << c << ": support " << r.per_class[c].support << ", predicted "
        << r.per_class[c].predicted << ", correct " << r.per_class[c].correct << '\n';
  }
  if (!f.metrics.empty()) {
    json classes = json::array();
    for (const auto& pc : r.per_class) {
      classes.push_back({{"support", pc.support}, {"predicted", pc.predicted}, {"correct", pc.correct}});
    }
    write_file_atomic(f.metrics, json{{"accuracy", r.accuracy},
                                      {"correct", r.correct},
                                      {"total", r.total},
                                      {"mean_loss", r.mean_loss},
                                      {"per_class", classes}}
                                         .dump(1) +
                                     "\n");
  }
  return 0;
}

struct ExplainFlags {
  EvalFlags io;
  std::string mode = "patterns";
  int k = 5;
  int doc_id = 0;
  int top = 3;
  std::string out_prefix;
};

int cmd_explain(const ExplainFlags& f, std::ostream& out, std::ostream& err) {
  const ModelBundle model = load_checked(f.io.model, err);
  const Embeddings emb = read_vectors(f.io.embeddings, model.normalized_embeddings, err);
  require_matching_vocab(model, emb);
  const auto docs = read_docs(f.io.data, emb.vocab, model.lowercase);

  std::string plain, structured;
  if (f.mode == "patterns") {
    for (int p = 0; p < static_cast<int>(model.patterns.size()); ++p) {
      const auto report = top_k_phrases(model, docs, emb, p, f.k);
      plain += render_report(report, ReportFormat::kPlainText);
      structured += render_report(report, ReportFormat::kStructured);
    }
  } else if (f.mode == "doc") {
    if (f.doc_id < 0 || f.doc_id >= static_cast<int>(docs.size())) {
      throw Error("--doc-id " + std::to_string(f.doc_id) + " out of range (dataset has " +
                  std::to_string(docs.size()) + " documents)");
    }
    const auto report = pattern_contributions(model, docs[static_cast<std::size_t>(f.doc_id)], emb, f.doc_id);
    plain = render_report(report, ReportFormat::kPlainText, f.top);
    structured = render_report(report, ReportFormat::kStructured);
  } else {
    throw Error("--mode must be 'patterns' or 'doc'");
  }
  out << plain;
  if (!f.out_prefix.empty()) {
    write_file_atomic(f.out_prefix + ".txt", plain);
    write_file_atomic(f.out_prefix + ".jsonl", structured);
  }
  return 0;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string config_line(const std::string& key, const std::string& value) { return key + "=" + value + "\n"; }

int cmd_search(const TrainFlags& f, const std::string& space_path, int iterations,
               const std::string& results_path, const std::string& best_path, std::ostream& out,
               std::ostream& err) {
  const TrainConfig base = train_config(f);
  const SearchSpace space = space_path.empty() ? SearchSpace::standard() : parse_search_space(read_text(space_path));
  const Embeddings emb = read_vectors(f.embeddings, !f.no_normalize, err);
  const auto train_docs = read_docs(f.train_path, emb.vocab, f.lowercase);
  const auto dev_docs = read_docs(f.dev_path, emb.vocab, f.lowercase);
  const auto result = random_search(space, iterations, train_docs, dev_docs, emb, base, f.seed);

  std::ostringstream table;
  table << "iteration\tpatterns\tlr\tdropout\tmlp_hidden\tseed\tepochs\tdev_loss\tdev_accuracy\n";
  for (const auto& row : result.rows) {
    table << row.iteration << '\t' << row.config.patterns.spec.to_string() << '\t' << row.config.learning_rate
          << '\t' << row.config.dropout << '\t' << row.config.mlp_hidden << '\t' << row.config.seed << '\t'
          << row.epochs << '\t' << fmt(row.dev_loss, 6) << '\t' << fmt(row.dev_accuracy, 4) << '\n';
  }
  out << table.str();
  const auto& best = result.rows[static_cast<std::size_t>(result.best_row)];
  out << "best iteration " << best.iteration << ", dev accuracy " << fmt(best.dev_accuracy, 4) << '\n';
  if (!results_path.empty()) write_file_atomic(results_path, table.str());
  if (!best_path.empty()) {
    // Loadable with `sopa --config <file> train ...`.
    std::ostringstream cfg;
    cfg << "[train]\n";
    cfg << config_line("patterns", "\"" + result.best.patterns.spec.to_string() + "\"");
    cfg << config_line("lr", json(result.best.learning_rate).dump());
    cfg << config_line("dropout", json(result.best.dropout).dump());
    cfg << config_line("mlp-hidden", std::to_string(result.best.mlp_hidden));
    cfg << config_line("seed", std::to_string(result.best.seed));
    cfg << config_line("semiring", "\"" + f.model.semiring + "\"");
    cfg << config_line("encoder", "\"" + f.model.encoder + "\"");
    if (f.model.no_self_loops) cfg << config_line("no-self-loops", "true");
    if (f.model.no_epsilon) cfg << config_line("no-epsilon", "true");
    write_file_atomic(best_path, cfg.str());
  }
  return 0;
}

struct OracleFlags {
  std::string model;
  std::string docs;
  std::string embeddings;
  std::uint64_t seed = 1;
};

int cmd_oracle_check(const OracleFlags& f, std::ostream& out, std::ostream& err) {
  ModelIntegrity integrity;
  ModelBundle model = load_checked(f.model, err, &integrity);
  const Embeddings emb = read_vectors(f.embeddings, model.normalized_embeddings, err);
  require_matching_vocab(model, emb);
  const auto docs = read_docs(f.docs, emb.vocab, model.lowercase);

  const bool exact = Semiring(model.config.semiring).idempotent_plus();
  const double score_tol = exact ? 0.0 : 1e-10;
  bool pass = true;
  auto deviation = [&](double a, double b) {
    if (a == b) return 0.0;  // also covers matching infinities
    if (!std::isfinite(a) || !std::isfinite(b)) return std::numeric_limits<double>::infinity();
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
  };

  // Stored probe scores against the brute-force oracle.
  {
    const auto probe = probe_document(model.vocab.dim);
    std::vector<std::span<const double>> tokens(probe.begin(), probe.end());
    double worst = 0.0;
    bool ok = integrity.probe_scores.size() == model.patterns.size();
    for (std::size_t p = 0; ok && p < model.patterns.size(); ++p) {
      const double oracle = reference::brute_force_doc_score(model.patterns[p], tokens, model.config);
      const double stored = integrity.probe_scores[p];
      const double dev = std::isnan(stored) ? (std::isfinite(oracle) ? INFINITY : 0.0) : deviation(stored, oracle);
      worst = std::max(worst, dev);
    }
    ok = ok && worst <= score_tol && integrity.digest_matches;
    out << "stored probe vs oracle: worst deviation " << worst << (integrity.digest_matches ? "" : ", digest MISMATCH")
        << (ok ? "  PASS" : "  FAIL") << '\n';
    pass = pass && ok;
  }

  // Recurrence against brute force (and the explicit CNN in CNN mode).
  std::vector<TokenizedDocument> usable;
  int skipped = 0;
  for (const auto& d : docs) {
    if (d.size() > reference::kMaxBruteForceDoc) {
      ++skipped;
      continue;
    }
    usable.push_back(d);
  }
  if (skipped > 0) {
    err << "warning: skipped " << skipped << " document(s) longer than " << reference::kMaxBruteForceDoc
        << " tokens\n";
  }
  if (usable.empty()) throw Error("no documents within oracle bounds");

  double worst_doc = 0.0, worst_cnn = 0.0;
  for (const auto& d : usable) {
    const auto tokens = token_vectors(d, emb);
    for (const auto& p : model.patterns) {
      const double fast = score_document(p, tokens, model.config).total;
      worst_doc = std::max(worst_doc, deviation(fast, reference::brute_force_doc_score(p, tokens, model.config)));
      if (model.config.is_cnn_mode()) {
        const double cnn = reference::explicit_cnn_score(reference::cnn_filter(p), reference::cnn_biases(p), tokens);
        worst_cnn = std::max(worst_cnn, deviation(fast, cnn));
      }
    }
  }
  const bool doc_ok = worst_doc <= score_tol;
  out << "recurrence vs brute force: " << usable.size() << " docs, worst deviation " << worst_doc
      << (doc_ok ? "  PASS" : "  FAIL") << '\n';
  pass = pass && doc_ok;
  if (model.config.is_cnn_mode()) {
    const bool cnn_ok = worst_cnn <= 1e-10;
    out << "CNN mode vs explicit convolution: worst deviation " << worst_cnn << (cnn_ok ? "  PASS" : "  FAIL") << '\n';
    pass = pass && cnn_ok;
  }

  Rng rng(f.seed);
  const auto grad = check_gradients(model, usable, emb, rng);
  const bool grad_ok = grad.fd.max_rel_error < 1e-4;
  out << "gradients vs finite differences: " << grad.parameters << " parameters, worst relative error "
      << grad.fd.max_rel_error << (grad_ok ? "  PASS" : "  FAIL") << '\n';
  for (const auto& o : grad.fd.worst) {
    out << "    " << o.name << ": analytic " << o.analytic << ", numeric " << o.numeric << '\n';
  }
  pass = pass && grad_ok;
  out << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft patterns: weighted finite-state pattern classifiers"};
  app.name("sopa");
  app.set_config("--config", "", "INI/TOML file with per-command sections, e.g. [train]");
  app.require_subcommand(1);
  app.fallthrough();
  // A repeated flag overrides earlier ones.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  TrainFlags train_flags;
  std::string train_out, train_log;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_train_flags(train_cmd, train_flags, true);
  train_cmd->add_option("--out", train_out, "model file to write")->required();
  train_cmd->add_option("--log", train_log, "per-epoch log (JSON lines); default <out>.log.jsonl");

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model");
  eval_cmd->add_option("--model", eval_flags.model)->required();
  eval_cmd->add_option("--data", eval_flags.data)->required();
  eval_cmd->add_option("--embeddings", eval_flags.embeddings)->required();
  eval_cmd->add_option("--metrics", eval_flags.metrics, "write metrics JSON here");

  ExplainFlags explain_flags;
  auto* explain_cmd = app.add_subcommand("explain", "pattern and document reports");
  explain_cmd->add_option("--model", explain_flags.io.model)->required();
  explain_cmd->add_option("--data", explain_flags.io.data)->required();
  explain_cmd->add_option("--embeddings", explain_flags.io.embeddings)->required();
  explain_cmd->add_option("--mode", explain_flags.mode, "patterns | doc")->capture_default_str();
  explain_cmd->add_option("--k", explain_flags.k, "phrases per pattern")->capture_default_str();
  explain_cmd->add_option("--doc-id", explain_flags.doc_id, "document index for --mode doc")->capture_default_str();
  explain_cmd->add_option("--top", explain_flags.top, "contributors shown per sign")->capture_default_str();
  explain_cmd->add_option("--out", explain_flags.out_prefix, "write <out>.txt and <out>.jsonl");

  TrainFlags search_flags;
  std::string space_path, results_path, best_path;
  int iterations = 30;
  auto* search_cmd = app.add_subcommand("search", "random hyperparameter search");
  add_train_flags(search_cmd, search_flags, true);
  search_cmd->add_option("--space", space_path, "search space JSON; default is the standard grid");
  search_cmd->add_option("--iterations", iterations, "candidates to train")->capture_default_str();
  search_cmd->add_option("--results", results_path, "write the results table (TSV)");
  search_cmd->add_option("--best-config", best_path, "write the winning config (INI)");

  OracleFlags oracle_flags;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "certify a model against the reference oracles");
  oracle_cmd->add_option("--model", oracle_flags.model)->required();
  oracle_cmd->add_option("--docs", oracle_flags.docs, "short labeled documents")->required();
  oracle_cmd->add_option("--embeddings", oracle_flags.embeddings)->required();
  oracle_cmd->add_option("--seed", oracle_flags.seed, "jitter seed for gradient checks")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) {
      log_resolved(train_cmd, err);
      return cmd_train(train_flags, train_out, train_log, out, err);
    }
    if (*eval_cmd) {
      log_resolved(eval_cmd, err);
      return cmd_eval(eval_flags, out, err);
    }
    if (*explain_cmd) {
      log_resolved(explain_cmd, err);
      return cmd_explain(explain_flags, out, err);
    }
    if (*search_cmd) {
      log_resolved(search_cmd, err);
      return cmd_search(search_flags, space_path, iterations, results_path, best_path, out, err);
    }
    if (*oracle_cmd) {
      log_resolved(oracle_cmd, err);
      return cmd_oracle_check(oracle_flags, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace sopa::cli
