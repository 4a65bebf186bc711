#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sopa/embeddings.hpp"
#include "sopa/semiring.hpp"

namespace sopa {

enum class Encoder { kSigmoid, kIdentity };

std::string_view to_string(Encoder encoder);
Encoder parse_encoder(std::string_view name);
double encode(Encoder encoder, double pre_activation);

/// Learnable parameters of one soft pattern with `length` main-path
/// transitions, i.e. states 0 (START) .. length (END).
///
/// Slot i (0 <= i < length) owns the transitions leaving state i:
///   self-loop  E(u_i . v + a_i)   (i -> i, consumes a token)
///   main path  E(w_i . v + b_i)   (i -> i+1, consumes a token)
///   epsilon    E(c_i)             (i -> i+1, consumes nothing)
/// END has no outgoing transitions. The start and final weight vectors are
/// fixed to the unit vectors of START and END and are not stored.
///
/// All values live in one flat array laid out as [u | a | w | b | c] so the
/// optimizer can treat a pattern as a single parameter block.
class PatternParams {
 public:
  PatternParams() = default;
  PatternParams(int length, int dim);

  int length() const { return length_; }
  int dim() const { return dim_; }
  // (2e + 3) * L
  static std::size_t parameter_count(int length, int dim) {
    return static_cast<std::size_t>(2 * dim + 3) * static_cast<std::size_t>(length);
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<const double> self_weight(int slot) const { return vec(self_weight_offset(slot)); }
  std::span<const double> main_weight(int slot) const { return vec(main_weight_offset(slot)); }
  std::span<double> self_weight(int slot) { return vec(self_weight_offset(slot)); }
  std::span<double> main_weight(int slot) { return vec(main_weight_offset(slot)); }
  double& self_bias(int slot) { return values_[self_bias_offset(slot)]; }
  double& main_bias(int slot) { return values_[main_bias_offset(slot)]; }
  double& eps_bias(int slot) { return values_[eps_bias_offset(slot)]; }
  double self_bias(int slot) const { return values_[self_bias_offset(slot)]; }
  double main_bias(int slot) const { return values_[main_bias_offset(slot)]; }
  double eps_bias(int slot) const { return values_[eps_bias_offset(slot)]; }

  // Offsets into values(); used to address gradients.
  std::size_t self_weight_offset(int slot) const { return static_cast<std::size_t>(slot) * dim_; }
  std::size_t self_bias_offset(int slot) const { return l() * dim_ + slot; }
  std::size_t main_weight_offset(int slot) const { return l() * dim_ + l() + slot * dim_; }
  std::size_t main_bias_offset(int slot) const { return 2 * l() * dim_ + l() + slot; }
  std::size_t eps_bias_offset(int slot) const { return 2 * l() * dim_ + 2 * l() + slot; }

 private:
  std::size_t l() const { return static_cast<std::size_t>(length_); }
  std::span<const double> vec(std::size_t offset) const {
    return std::span<const double>(values_).subspan(offset, static_cast<std::size_t>(dim_));
  }
  std::span<double> vec(std::size_t offset) {
    return std::span<double>(values_).subspan(offset, static_cast<std::size_t>(dim_));
  }

  int length_ = 0;
  int dim_ = 0;
  std::vector<double> values_;
};

/// Pattern lengths and counts, e.g. "6:10,5:10,4:10".
struct PatternSpec {
  std::vector<std::pair<int, int>> entries;  // (length, count), in spec order

  int total_patterns() const;
  // Expands to one length per pattern, in spec order.
  std::vector<int> lengths() const;
  std::string to_string() const;
};

inline constexpr int kDefaultMaxPatternLength = 7;

/// Throws on malformed text, a length outside 1..max_length, a negative
/// count or a spec with zero patterns in total.
PatternSpec parse_pattern_spec(std::string_view text,
                               int max_length = kDefaultMaxPatternLength);

struct PatternSetConfig {
  PatternSpec spec;
  SemiringKind semiring = SemiringKind::kMaxProduct;
  Encoder encoder = Encoder::kSigmoid;
  bool self_loops = true;
  bool epsilons = true;

  // Identity encoder, max-sum, no self-loops, no epsilons: a max-pooled
  // one-layer convolution.
  bool is_cnn_mode() const {
    return encoder == Encoder::kIdentity && semiring == SemiringKind::kMaxSum &&
           !self_loops && !epsilons;
  }
  static PatternSetConfig cnn_mode(PatternSpec spec);
};

struct TransitionScores {
  std::vector<Score> self_loop;  // L entries
  std::vector<Score> main_path;  // L entries
};

/// Encoded self-loop and main-path scores for one token. These are the only
/// nonzero entries of the token's transition matrix.
TransitionScores transition_scores(const PatternParams& pattern,
                                   std::span<const double> token_vector, Encoder encoder);

/// Epsilon scores E(c_i); token independent.
std::vector<Score> epsilon_scores(const PatternParams& pattern, Encoder encoder);

/// Band scores after applying the ablation switches: disabled transitions
/// score semiring zero.
TransitionScores transition_scores(const PatternParams& pattern,
                                   std::span<const double> token_vector,
                                   const PatternSetConfig& config);
std::vector<Score> epsilon_scores(const PatternParams& pattern, const PatternSetConfig& config);

/// One first-order epsilon step: h'_0 = h_0, h'_j = h_j + h_{j-1} * eps_{j-1}.
std::vector<Score> eps_step(std::span<const Score> h, std::span<const Score> eps,
                            const Semiring& semiring);

struct DocumentScore {
  Score total = 0.0;              // s_doc
  std::vector<Score> per_token;   // s_1 .. s_n
  // Filled when requested: hidden[t] is the restart-merged state row after
  // t tokens (hidden[0] is the initial row).
  std::vector<std::vector<Score>> hidden;
};

/// Scores every subspan of the document in one pass: O(L n) semiring
/// operations. Under max semirings the total is the best match score; under
/// sum-product it is the summed score of all matches (expected count).
DocumentScore score_document(const PatternParams& pattern,
                             std::span<const std::span<const double>> tokens,
                             const PatternSetConfig& config, bool record_hidden = false);
DocumentScore score_document(const PatternParams& pattern, const TokenizedDocument& doc,
                             const Embeddings& embeddings, const PatternSetConfig& config);

/// Same recurrence over an instrumented semiring, for operation counting.
Score score_document_counted(const PatternParams& pattern,
                             std::span<const std::span<const double>> tokens,
                             const PatternSetConfig& config, const CountingSemiring& semiring);

/// z vector: one document score per pattern.
std::vector<Score> encode_document(std::span<const PatternParams> patterns,
                                   std::span<const std::span<const double>> tokens,
                                   const PatternSetConfig& config);
std::vector<Score> encode_document(std::span<const PatternParams> patterns,
                                   const TokenizedDocument& doc, const Embeddings& embeddings,
                                   const PatternSetConfig& config);

enum class TransitionKind { kMain, kEpsilon, kSelfLoop };
std::string_view to_string(TransitionKind kind);

struct TraceStep {
  TransitionKind kind = TransitionKind::kMain;
  std::optional<int> token;  // 0-based position; empty for epsilon
  int from_state = 0;
  int to_state = 0;

  bool operator==(const TraceStep&) const = default;
};

struct MatchTrace {
  int pattern = 0;
  int span_start = 0;  // 0-based, inclusive
  int span_end = 0;    // 0-based, inclusive
  Score score = 0.0;
  std::vector<TraceStep> path;
  // False when no span reaches END (score is semiring zero); path is empty.
  bool matched = false;
};

/// Best-scoring path realizing the document score, via backpointers.
/// Ties go to the earliest span start, then main > epsilon > self-loop.
/// Throws under sum-product.
MatchTrace trace_best_match(const PatternParams& pattern,
                            std::span<const std::span<const double>> tokens,
                            const PatternSetConfig& config, int pattern_index = 0);
MatchTrace trace_best_match(const PatternParams& pattern, const TokenizedDocument& doc,
                            const Embeddings& embeddings, const PatternSetConfig& config,
                            int pattern_index = 0);

/// Replays a trace: the ordered semiring product of the scores of its
/// transitions, starting from one.
Score replay_trace(const PatternParams& pattern, const MatchTrace& trace,
                   std::span<const std::span<const double>> tokens,
                   const PatternSetConfig& config);

}  // namespace sopa
