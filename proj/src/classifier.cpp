#include "sopa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sopa/error.hpp"
#include "sopa/recurrence.hpp"

namespace sopa {

using autodiff::Tape;
using autodiff::Var;

namespace {

// Semiring arithmetic recorded on a tape. The shared zero/one constants
// short-circuit, which keeps disabled transitions off the tape.
struct TapeOps {
  using Value = Var;
  Tape& tape;
  SemiringKind kind;
  Var zero_;
  Var one_;

  TapeOps(Tape& t, SemiringKind k)
      : tape(t), kind(k), zero_(t.constant(Semiring(k).zero())), one_(t.constant(Semiring(k).one())) {}

  Value zero() const { return zero_; }
  Value one() const { return one_; }
  double value(Var v) const { return tape.value(v); }
  bool idempotent() const { return kind != SemiringKind::kSumProduct; }
  void note_plus() const {}

  Value times(Var a, Var b) {
    if (a == zero_ || b == zero_) return zero_;
    if (a == one_) return b;
    if (b == one_) return a;
    return kind == SemiringKind::kMaxSum ? tape.add(a, b) : tape.mul(a, b);
  }
  Value plus(Var a, Var b) {
    if (a == zero_) return b;
    if (b == zero_) return a;
    return tape.add(a, b);
  }
};

struct Offsets {
  std::vector<std::size_t> pattern;  // start of each pattern block
  std::size_t hidden_weight = 0;
  std::size_t hidden_bias = 0;
  std::size_t output_weight = 0;
  std::size_t output_bias = 0;
  std::size_t total = 0;
};

Offsets offsets_of(const ModelBundle& model) {
  Offsets o;
  std::size_t at = 0;
  for (const auto& p : model.patterns) {
    o.pattern.push_back(at);
    at += p.values().size();
  }
  o.hidden_weight = at;
  at += model.mlp.hidden_weight.size();
  o.hidden_bias = at;
  at += model.mlp.hidden_bias.size();
  o.output_weight = at;
  at += model.mlp.output_weight.size();
  o.output_bias = at;
  at += model.mlp.output_bias.size();
  o.total = at;
  return o;
}

bool keep_unit(const DropoutSource* dropout, double& scale) {
  scale = 1.0;
  if (!dropout || dropout->rate <= 0.0) return true;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(*dropout->rng) < dropout->rate) {
    scale = 0.0;
    return false;
  }
  scale = 1.0 / (1.0 - dropout->rate);
  return true;
}

std::vector<double> mlp_logits(const MlpParams& mlp, std::span<const double> z_in,
                               const DropoutSource* dropout) {
  if (static_cast<int>(z_in.size()) != mlp.inputs) throw Error("MLP input size mismatch");
  std::vector<double> z(z_in.begin(), z_in.end());
  for (double& zi : z) {
    zi = mlp_input(zi);
    double s;
    keep_unit(dropout, s);
    if (s != 1.0) zi *= s;
  }
  std::vector<double> hidden(static_cast<std::size_t>(mlp.hidden));
  for (int j = 0; j < mlp.hidden; ++j) {
    double s = 0.0;
    for (int i = 0; i < mlp.inputs; ++i) s += mlp.hidden_weight[static_cast<std::size_t>(i * mlp.hidden + j)] * z[i];
    s += mlp.hidden_bias[j];
    s = s > 0.0 ? s : 0.0;
    double keep;
    keep_unit(dropout, keep);
    if (keep != 1.0) s *= keep;
    hidden[j] = s;
  }
  std::vector<double> logits(static_cast<std::size_t>(mlp.classes));
  for (int c = 0; c < mlp.classes; ++c) {
    double s = 0.0;
    for (int j = 0; j < mlp.hidden; ++j) s += mlp.output_weight[static_cast<std::size_t>(j * mlp.classes + c)] * hidden[j];
    logits[c] = s + mlp.output_bias[c];
  }
  return logits;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    z += p[i];
  }
  for (double& pi : p) pi /= z;
  return p;
}

double cross_entropy(std::span<const double> logits, int label) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - top);
  return -(logits[static_cast<std::size_t>(label)] - top - std::log(z));
}

std::vector<Score> doc_z(const ModelBundle& model, std::span<const std::span<const double>> tokens) {
  return encode_document(model.patterns, tokens, model.config);
}

struct DocLoss {
  double loss;
  int prediction;
};

DocLoss doc_loss(const ModelBundle& model, std::span<const std::span<const double>> tokens,
                 int label) {
  const auto z = doc_z(model, tokens);
  const auto logits = mlp_logits(model.mlp, z, nullptr);
  return {cross_entropy(logits, label), predict(softmax(logits))};
}

void check_labels(const std::vector<TokenizedDocument>& docs, int classes, const char* which) {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].label) throw Error(std::string(which) + " document " + std::to_string(i) + " has no label");
    if (*docs[i].label < 0 || *docs[i].label >= classes) {
      throw Error(std::string(which) + " document " + std::to_string(i) + " has label " +
                  std::to_string(*docs[i].label) + " outside 0.." + std::to_string(classes - 1));
    }
  }
}

}  // namespace

MlpParams::MlpParams(int in, int hid, int cls)
    : inputs(in),
      hidden(hid),
      classes(cls),
      hidden_weight(static_cast<std::size_t>(in * hid), 0.0),
      hidden_bias(static_cast<std::size_t>(hid), 0.0),
      output_weight(static_cast<std::size_t>(hid * cls), 0.0),
      output_bias(static_cast<std::size_t>(cls), 0.0) {
  if (in < 1 || hid < 1 || cls < 1) throw Error("MLP dimensions must be positive");
}

std::size_t trainable_count(const ModelBundle& model) { return offsets_of(model).total; }

std::vector<double> flatten_parameters(const ModelBundle& model) {
  std::vector<double> flat;
  flat.reserve(trainable_count(model));
  for (const auto& p : model.patterns) flat.insert(flat.end(), p.values().begin(), p.values().end());
  for (const auto* block : {&model.mlp.hidden_weight, &model.mlp.hidden_bias,
                            &model.mlp.output_weight, &model.mlp.output_bias}) {
    flat.insert(flat.end(), block->begin(), block->end());
  }
  return flat;
}

void assign_parameters(ModelBundle& model, std::span<const double> flat) {
  if (flat.size() != trainable_count(model)) throw Error("assign_parameters: size mismatch");
  auto it = flat.begin();
  for (auto& p : model.patterns) {
    std::copy_n(it, p.values().size(), p.values().begin());
    it += static_cast<std::ptrdiff_t>(p.values().size());
  }
  for (auto* block : {&model.mlp.hidden_weight, &model.mlp.hidden_bias,
                      &model.mlp.output_weight, &model.mlp.output_bias}) {
    std::copy_n(it, block->size(), block->begin());
    it += static_cast<std::ptrdiff_t>(block->size());
  }
}

std::string parameter_name(const ModelBundle& model, std::size_t index) {
  const Offsets o = offsets_of(model);
  for (std::size_t p = 0; p < model.patterns.size(); ++p) {
    const auto& pat = model.patterns[p];
    if (index >= o.pattern[p] + pat.values().size()) continue;
    const std::size_t local = index - o.pattern[p];
    const std::string base = "pattern[" + std::to_string(p) + "].";
    const auto L = static_cast<std::size_t>(pat.length());
    const auto e = static_cast<std::size_t>(pat.dim());
    if (local < L * e) return base + "u[" + std::to_string(local / e) + "][" + std::to_string(local % e) + "]";
    if (local < L * e + L) return base + "a[" + std::to_string(local - L * e) + "]";
    if (local < 2 * L * e + L) {
      const auto k = local - L * e - L;
      return base + "w[" + std::to_string(k / e) + "][" + std::to_string(k % e) + "]";
    }
    if (local < 2 * L * e + 2 * L) return base + "b[" + std::to_string(local - 2 * L * e - L) + "]";
    return base + "c[" + std::to_string(local - 2 * L * e - 2 * L) + "]";
  }
  if (index < o.hidden_bias) return "mlp.hidden_weight[" + std::to_string(index - o.hidden_weight) + "]";
  if (index < o.output_weight) return "mlp.hidden_bias[" + std::to_string(index - o.hidden_bias) + "]";
  if (index < o.output_bias) return "mlp.output_weight[" + std::to_string(index - o.output_weight) + "]";
  if (index < o.total) return "mlp.output_bias[" + std::to_string(index - o.output_bias) + "]";
  return "param[" + std::to_string(index) + "]";
}

ParameterCount count_parameters(const ModelBundle& model) {
  ParameterCount count;
  const auto e = static_cast<std::size_t>(model.vocab.dim);
  for (int length : model.config.spec.lengths()) count.sopa += (2 * e + 3) * static_cast<std::size_t>(length);
  const auto k = static_cast<std::size_t>(model.config.spec.total_patterns());
  const auto h = static_cast<std::size_t>(model.mlp.hidden);
  const auto c = static_cast<std::size_t>(model.num_classes);
  count.mlp = (k + 1) * h + (h + 1) * c;
  return count;
}

ModelBundle init_model(const PatternSetConfig& config, int mlp_hidden, int num_classes,
                       const Vocabulary& vocab, Rng& rng, double stddev) {
  if (num_classes < 2) throw Error("need at least two classes");
  ModelBundle model;
  model.config = config;
  model.vocab = vocab.fingerprint();
  model.num_classes = num_classes;
  for (int length : config.spec.lengths()) model.patterns.emplace_back(length, vocab.dim());
  model.mlp = MlpParams(config.spec.total_patterns(), mlp_hidden, num_classes);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> flat(trainable_count(model));
  for (double& v : flat) v = normal(rng);
  assign_parameters(model, flat);
  return model;
}

double mlp_input(Score s) { return std::isfinite(s) ? s : 0.0; }

std::vector<double> mlp_probabilities(const MlpParams& mlp, std::span<const double> z,
                                      const DropoutSource* dropout) {
  return softmax(mlp_logits(mlp, z, dropout));
}

std::vector<double> forward_probabilities(const ModelBundle& model,
                                          std::span<const std::span<const double>> tokens,
                                          const DropoutSource* dropout) {
  return mlp_probabilities(model.mlp, doc_z(model, tokens), dropout);
}

void require_matching_vocab(const ModelBundle& model, const Embeddings& embeddings) {
  if (!(embeddings.vocab.fingerprint() == model.vocab)) {
    throw Error("embeddings do not match the model's vocabulary fingerprint");
  }
}

std::vector<double> forward_probabilities(const ModelBundle& model, const TokenizedDocument& doc,
                                          const Embeddings& embeddings,
                                          const DropoutSource* dropout) {
  require_matching_vocab(model, embeddings);
  const auto tokens = token_vectors(doc, embeddings);
  return forward_probabilities(model, tokens, dropout);
}

Var record_pattern_score(Tape& tape, const PatternParams& pat,
                         std::span<const std::span<const double>> tokens, const PatternSetConfig& config,
                         std::size_t base) {
  if (tokens.empty()) throw Error("cannot score an empty document");
  const int n = static_cast<int>(tokens.size());
  const int L = pat.length();
  TapeOps ops(tape, config.semiring);
  auto squash = [&](Var pre) { return config.encoder == Encoder::kSigmoid ? tape.sigmoid(pre) : pre; };

  std::vector<Var> self, main, eps;
  self.reserve(static_cast<std::size_t>(n * L));
  main.reserve(static_cast<std::size_t>(n * L));
  for (const auto& v : tokens) {
    if (static_cast<int>(v.size()) != pat.dim()) throw Error("token vector dimension mismatch");
    for (int i = 0; i < L; ++i) {
      self.push_back(config.self_loops
                         ? squash(tape.dot_affine(pat.self_weight(i), base + pat.self_weight_offset(i), v,
                                                  pat.self_bias(i), base + pat.self_bias_offset(i)))
                         : ops.zero());
      main.push_back(squash(tape.dot_affine(pat.main_weight(i), base + pat.main_weight_offset(i), v,
                                            pat.main_bias(i), base + pat.main_bias_offset(i))));
    }
  }
  for (int i = 0; i < L; ++i) {
    eps.push_back(config.epsilons ? squash(tape.parameter(pat.eps_bias(i), base + pat.eps_bias_offset(i)))
                                  : ops.zero());
  }
  return detail::run_recurrence(ops, L, n, std::span<const Var>(self), std::span<const Var>(main),
                                std::span<const Var>(eps))
      .total;
}

Var record_loss(Tape& tape, const ModelBundle& model,
                std::span<const std::span<const double>> tokens, int label,
                const DropoutSource* dropout, std::vector<double>* probabilities) {
  if (tokens.empty()) throw Error("cannot score an empty document");
  const Offsets o = offsets_of(model);
  const auto& config = model.config;

  std::vector<Var> z;
  z.reserve(model.patterns.size());
  for (std::size_t p = 0; p < model.patterns.size(); ++p) {
    const Var score = record_pattern_score(tape, model.patterns[p], tokens, config, o.pattern[p]);
    const double s = tape.value(score);
    z.push_back(std::isfinite(s) ? score : tape.constant(mlp_input(s)));
  }

  double scale;
  for (Var& zi : z) {
    keep_unit(dropout, scale);
    if (scale != 1.0) zi = tape.scale(zi, scale);
  }

  const auto& mlp = model.mlp;
  std::vector<Var> hidden;
  hidden.reserve(static_cast<std::size_t>(mlp.hidden));
  for (int j = 0; j < mlp.hidden; ++j) {
    Var h = tape.relu(tape.linear(z, std::span<const double>(mlp.hidden_weight).subspan(static_cast<std::size_t>(j)),
                                  o.hidden_weight + static_cast<std::size_t>(j), static_cast<std::size_t>(mlp.hidden),
                                  mlp.hidden_bias[j], o.hidden_bias + static_cast<std::size_t>(j)));
    keep_unit(dropout, scale);
    if (scale != 1.0) h = tape.scale(h, scale);
    hidden.push_back(h);
  }
  std::vector<Var> logits;
  logits.reserve(static_cast<std::size_t>(mlp.classes));
  for (int c = 0; c < mlp.classes; ++c) {
    logits.push_back(tape.linear(hidden, std::span<const double>(mlp.output_weight).subspan(static_cast<std::size_t>(c)),
                                 o.output_weight + static_cast<std::size_t>(c), static_cast<std::size_t>(mlp.classes),
                                 mlp.output_bias[c], o.output_bias + static_cast<std::size_t>(c)));
  }
  return tape.softmax_cross_entropy(logits, label, probabilities);
}

double batch_loss_and_gradient(const ModelBundle& model, std::span<const TokenizedDocument> docs,
                               const Embeddings& embeddings, std::vector<double>* gradient) {
  if (docs.empty()) throw Error("empty batch");
  if (gradient) gradient->assign(trainable_count(model), 0.0);
  Tape tape;
  double total = 0.0;
  for (const auto& doc : docs) {
    const auto tokens = token_vectors(doc, embeddings);
    tape.clear();
    Var loss = record_loss(tape, model, tokens, doc.label.value());
    total += tape.value(loss);
    if (gradient) tape.backward(loss, *gradient);
  }
  const double inv = 1.0 / static_cast<double>(docs.size());
  if (gradient) {
    for (double& g : *gradient) g *= inv;
  }
  return total * inv;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0 && learning_rate < 1.0)) throw Error("learning rate must be in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must be in [0, 1)");
  if (batch_size < 1) throw Error("batch size must be positive");
  if (max_epochs < 1) throw Error("max epochs must be positive");
  if (patience < 1) throw Error("patience must be positive");
  if (mlp_hidden < 1) throw Error("MLP hidden dimension must be positive");
  if (patterns.spec.total_patterns() < 1) throw Error("pattern spec has no patterns");
}

TrainResult train(const std::vector<TokenizedDocument>& train_set,
                  const std::vector<TokenizedDocument>& dev_set, const Embeddings& embeddings,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty() || dev_set.empty()) throw Error("train and dev sets must be non-empty");
  int classes = 0;
  for (const auto& d : train_set) {
    if (!d.label) throw Error("training document without label");
    classes = std::max(classes, *d.label + 1);
  }
  classes = std::max(classes, 2);
  check_labels(train_set, classes, "train");
  check_labels(dev_set, classes, "dev");

  Rng rng(config.seed);
  ModelBundle model = init_model(config.patterns, config.mlp_hidden, classes, embeddings.vocab, rng);
  model.lowercase = config.lowercase;

  std::vector<std::vector<std::span<const double>>> train_tokens, dev_tokens;
  for (const auto& d : train_set) train_tokens.push_back(token_vectors(d, embeddings));
  for (const auto& d : dev_set) dev_tokens.push_back(token_vectors(d, embeddings));

  std::vector<double> flat = flatten_parameters(model);
  std::vector<double> grads(flat.size(), 0.0);
  autodiff::AdamState adam(flat.size());
  auto name_of = [&](std::size_t i) { return parameter_name(model, i); };

  TrainResult result;
  result.best_dev_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  DropoutSource dropout{&rng, config.dropout};
  Tape tape;
  int since_improvement = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        tape.clear();
        Var loss = record_loss(tape, model, train_tokens[i], *train_set[i].label, &dropout);
        const double value = tape.value(loss);
        if (!std::isfinite(value)) {
          throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", document " +
                      std::to_string(i));
        }
        train_loss += value;
        tape.backward(loss, grads);
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (double& g : grads) g *= inv;
      autodiff::adam_step(adam, flat, grads, config.learning_rate, name_of);
      assign_parameters(model, flat);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = train_loss / static_cast<double>(train_set.size());
    int correct = 0;
    double dev_loss = 0.0;
    for (std::size_t i = 0; i < dev_set.size(); ++i) {
      const auto r = doc_loss(model, dev_tokens[i], *dev_set[i].label);
      dev_loss += r.loss;
      correct += r.prediction == *dev_set[i].label ? 1 : 0;
    }
    record.dev_loss = dev_loss / static_cast<double>(dev_set.size());
    record.dev_accuracy = static_cast<double>(correct) / static_cast<double>(dev_set.size());
    if (!std::isfinite(record.dev_loss)) {
      throw Error("non-finite dev loss at epoch " + std::to_string(epoch));
    }
    record.improved = record.dev_loss < result.best_dev_loss;
    if (record.improved) {
      result.best_dev_loss = record.dev_loss;
      result.best_dev_accuracy = record.dev_accuracy;
      result.best_epoch = epoch;
      result.model = model;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
    if (since_improvement >= config.patience) break;
  }
  return result;
}

int predict(std::span<const double> probabilities) {
  return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) -
                          probabilities.begin());
}

EvalResult evaluate(const ModelBundle& model, const std::vector<TokenizedDocument>& docs,
                    const Embeddings& embeddings) {
  require_matching_vocab(model, embeddings);
  EvalResult out;
  out.per_class.assign(static_cast<std::size_t>(model.num_classes), {});
  double loss = 0.0;
  for (const auto& doc : docs) {
    const auto tokens = token_vectors(doc, embeddings);
    const auto logits = mlp_logits(model.mlp, doc_z(model, tokens), nullptr);
    const int guess = predict(softmax(logits));
    out.predictions.push_back(guess);
    out.per_class[static_cast<std::size_t>(guess)].predicted += 1;
    if (doc.label) {
      const int gold = *doc.label;
      if (gold < 0 || gold >= model.num_classes) {
        throw Error("label " + std::to_string(gold) + " outside the model's classes");
      }
      out.per_class[static_cast<std::size_t>(gold)].support += 1;
      loss += cross_entropy(logits, gold);
      if (gold == guess) {
        ++out.correct;
        out.per_class[static_cast<std::size_t>(gold)].correct += 1;
      }
      ++out.total;
    }
  }
  if (out.total > 0) {
    out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.total);
    out.mean_loss = loss / static_cast<double>(out.total);
  }
  return out;
}

GradientCheckReport check_gradients(ModelBundle& model, std::span<const TokenizedDocument> docs,
                                    const Embeddings& embeddings, Rng& rng, double jitter) {
  const std::vector<double> original = flatten_parameters(model);
  std::vector<double> flat = original;
  std::normal_distribution<double> normal(0.0, jitter);
  for (double& v : flat) v += normal(rng);
  assign_parameters(model, flat);

  std::vector<double> analytic;
  batch_loss_and_gradient(model, docs, embeddings, &analytic);
  auto loss = [&]() {
    assign_parameters(model, flat);
    return batch_loss_and_gradient(model, docs, embeddings, nullptr);
  };
  GradientCheckReport report;
  report.fd = autodiff::finite_difference_check(loss, flat, analytic, 1e-5, 5,
                                                [&](std::size_t i) { return parameter_name(model, i); });
  report.parameters = flat.size();
  assign_parameters(model, original);
  return report;
}

}  // namespace sopa
