#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sopa/automata.hpp"
#include "sopa/autodiff.hpp"
#include "sopa/embeddings.hpp"

namespace sopa {

using Rng = std::mt19937_64;

/// Two-layer perceptron over the z vector: rectifier hidden layer, softmax
/// output. Weights are row-major with the input index major:
/// hidden_weight[i * hidden + j], output_weight[j * classes + c].
struct MlpParams {
  int inputs = 0;
  int hidden = 0;
  int classes = 0;
  std::vector<double> hidden_weight;
  std::vector<double> hidden_bias;
  std::vector<double> output_weight;
  std::vector<double> output_bias;

  MlpParams() = default;
  MlpParams(int inputs, int hidden, int classes);
  std::size_t parameter_count() const {
    return hidden_weight.size() + hidden_bias.size() + output_weight.size() + output_bias.size();
  }
};

struct ModelBundle {
  PatternSetConfig config;
  std::vector<PatternParams> patterns;
  MlpParams mlp;
  VocabFingerprint vocab;
  int num_classes = 0;
  bool lowercase = false;
  // Whether the embeddings were unit-normalized when the model was trained.
  bool normalized_embeddings = true;
};

/// Flat view of every trainable scalar: all patterns in order, then the MLP
/// (hidden weights, hidden biases, output weights, output biases).
std::size_t trainable_count(const ModelBundle& model);
std::vector<double> flatten_parameters(const ModelBundle& model);
void assign_parameters(ModelBundle& model, std::span<const double> flat);
std::string parameter_name(const ModelBundle& model, std::size_t index);

struct ParameterCount {
  std::size_t sopa = 0;  // sum over patterns of (2e + 3) L
  std::size_t mlp = 0;   // (k + 1) h + (h + 1) C
  std::size_t total() const { return sopa + mlp; }
};

/// From the architecture formulas, not from the stored arrays.
ParameterCount count_parameters(const ModelBundle& model);

/// Every trainable scalar drawn from N(0, stddev^2).
ModelBundle init_model(const PatternSetConfig& config, int mlp_hidden, int num_classes,
                       const Vocabulary& vocab, Rng& rng, double stddev = 0.1);

struct DropoutSource {
  Rng* rng = nullptr;
  double rate = 0.0;
};

/// MLP input for a pattern score: unmatched documents (-inf under max-sum)
/// feed 0.0.
double mlp_input(Score s);

/// Softmax class distribution for a z vector. With `dropout` (train mode),
/// inverted dropout is applied to z and to the hidden layer.
std::vector<double> mlp_probabilities(const MlpParams& mlp, std::span<const double> z,
                                      const DropoutSource* dropout = nullptr);

std::vector<double> forward_probabilities(const ModelBundle& model,
                                          std::span<const std::span<const double>> tokens,
                                          const DropoutSource* dropout = nullptr);
/// Checks the vocabulary fingerprint first.
std::vector<double> forward_probabilities(const ModelBundle& model, const TokenizedDocument& doc,
                                          const Embeddings& embeddings,
                                          const DropoutSource* dropout = nullptr);
void require_matching_vocab(const ModelBundle& model, const Embeddings& embeddings);

/// Records the document score of one pattern on `tape`. Its parameters are
/// addressed as base + the pattern's own offsets.
autodiff::Var record_pattern_score(autodiff::Tape& tape, const PatternParams& pattern,
                                   std::span<const std::span<const double>> tokens,
                                   const PatternSetConfig& config, std::size_t base = 0);

/// Records the full forward pass for one labeled document on `tape` and
/// returns the cross-entropy node. Parameter indices follow
/// flatten_parameters().
autodiff::Var record_loss(autodiff::Tape& tape, const ModelBundle& model,
                          std::span<const std::span<const double>> tokens, int label,
                          const DropoutSource* dropout = nullptr,
                          std::vector<double>* probabilities = nullptr);

/// Mean cross-entropy of a batch and its gradient (no dropout).
double batch_loss_and_gradient(const ModelBundle& model,
                               std::span<const TokenizedDocument> docs,
                               const Embeddings& embeddings, std::vector<double>* gradient);

struct TrainConfig {
  double learning_rate = 0.01;
  double dropout = 0.0;
  int batch_size = 150;
  int max_epochs = 250;
  int patience = 30;
  std::uint64_t seed = 1;
  PatternSetConfig patterns;
  int mlp_hidden = 10;
  bool lowercase = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_accuracy = 0.0;
  bool improved = false;
};

struct TrainResult {
  ModelBundle model;  // best dev-loss snapshot
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_dev_loss = 0.0;
  double best_dev_accuracy = 0.0;
};

/// Minibatch Adam on cross-entropy with epoch-level early stopping on dev
/// loss (strict improvement resets patience).
TrainResult train(const std::vector<TokenizedDocument>& train_set,
                  const std::vector<TokenizedDocument>& dev_set, const Embeddings& embeddings,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

struct ClassCounts {
  int support = 0;    // gold label
  int predicted = 0;
  int correct = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  int correct = 0;
  int total = 0;
  std::vector<ClassCounts> per_class;
  std::vector<int> predictions;
};

/// Argmax prediction; ties go to the lowest class index.
int predict(std::span<const double> probabilities);
EvalResult evaluate(const ModelBundle& model, const std::vector<TokenizedDocument>& docs,
                    const Embeddings& embeddings);

struct GradientCheckReport {
  autodiff::FdReport fd;
  std::size_t parameters = 0;
};

/// Backward pass against central differences on the mean batch loss.
/// Parameters are jittered by `jitter` (relative) first so that max ties
/// and rectifier kinks are avoided; the model is restored afterwards.
GradientCheckReport check_gradients(ModelBundle& model, std::span<const TokenizedDocument> docs,
                                    const Embeddings& embeddings, Rng& rng,
                                    double jitter = 1e-6);

// Model files ---------------------------------------------------------------

inline constexpr const char* kModelVersion = "sopa-model-v1";
inline constexpr int kProbeLength = 8;

struct ModelIntegrity {
  bool digest_matches = true;
  std::vector<double> probe_scores;  // as stored; NaN where the file has null
};

/// Deterministic pseudo-document used to certify stored scores.
std::vector<std::vector<double>> probe_document(int dim);
std::uint64_t parameter_digest(const ModelBundle& model);

std::string model_to_json(const ModelBundle& model);
ModelBundle model_from_json(const std::string& text, ModelIntegrity* integrity = nullptr);
void save_model(const ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path, ModelIntegrity* integrity = nullptr);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

// Random search ---------------------------------------------------------------

struct SearchSpace {
  std::vector<double> learning_rates;
  std::vector<double> dropouts;
  std::vector<int> mlp_hidden;
  std::vector<PatternSpec> pattern_specs;

  /// The grid used for the published experiments.
  static SearchSpace standard();
};

/// JSON object with optional keys "learning_rate", "dropout", "mlp_hidden"
/// and "patterns" (spec strings); absent keys keep the standard grid.
SearchSpace parse_search_space(const std::string& json_text);

struct SearchRow {
  int iteration = 0;
  TrainConfig config;
  double dev_accuracy = 0.0;
  double dev_loss = 0.0;
  int epochs = 0;
};

struct SearchResult {
  TrainConfig best;
  int best_row = 0;
  std::vector<SearchRow> rows;
};

/// Samples each hyperparameter uniformly and independently, trains each
/// candidate from `base` and ranks by dev accuracy of the best snapshot
/// (earlier iteration wins ties).
SearchResult random_search(const SearchSpace& space, int iterations,
                           const std::vector<TokenizedDocument>& train_set,
                           const std::vector<TokenizedDocument>& dev_set,
                           const Embeddings& embeddings, const TrainConfig& base,
                           std::uint64_t seed);

}  // namespace sopa
